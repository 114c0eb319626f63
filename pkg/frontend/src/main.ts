/** Bootstrap: populate the model selector from /v1/models, wire the query
 * form, stream answers into message cards, post feedback. */

import { fetchModels, modelOptions, runStream, sendFeedback } from "./api.js";
import { applyEvent, markDropped, newMessage, setFeedback } from "./state.js";
import { createMessageCard, renderMessage } from "./ui.js";

// served at /ui/, the API lives one level up
const BASE_URL = window.location.pathname.startsWith("/ui") ? "" : "";
const SESSION_ID = `web-${Math.random().toString(36).slice(2, 10)}`;

async function bootstrap(): Promise<void> {
  const select = byId<HTMLSelectElement>("model-select");
  const form = byId<HTMLFormElement>("query-form");
  const input = byId<HTMLTextAreaElement>("query-input");
  const messages = byId<HTMLElement>("messages");

  try {
    const models = await fetchModels(BASE_URL);
    select.replaceChildren(
      ...modelOptions(models).map(({ value, label }) => {
        const option = document.createElement("option");
        option.value = value;
        option.textContent = label;
        return option;
      })
    );
  } catch (error) {
    showBanner(`Could not load models: ${String(error)}`);
  }

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const text = input.value.trim();
    if (!text) return;
    input.value = "";
    void submitQuery(messages, text, select.value);
  });
}

async function submitQuery(container: HTMLElement, text: string, model: string): Promise<void> {
  const card = createMessageCard();
  container.prepend(card);

  let message = newMessage(text, model);

  const onFeedback = (rating: "up" | "down", comment: string) => {
    const final = message.final;
    if (!final) return;
    const previous = message.feedback;
    message = setFeedback(message, "pending");
    draw();
    sendFeedback(BASE_URL, {
      session_id: final.session_id,
      message_id: final.message_id,
      rating,
      comment: comment || undefined,
    })
      .then(() => {
        message = setFeedback(message, rating);
        draw();
      })
      .catch((error) => {
        // optimistic UI rollback on rejection
        message = setFeedback(message, previous);
        draw();
        showBanner(`Feedback failed: ${String(error)}`);
      });
  };

  const onRetry = () => void submitQuery(container, text, model);
  const draw = () => renderMessage(card, message, onFeedback, onRetry);
  draw();

  try {
    for await (const event of runStream(BASE_URL, {
      query: text,
      model,
      session_id: SESSION_ID,
    })) {
      message = applyEvent(message, event.event, JSON.parse(event.data));
      draw();
    }
    if (message.status === "streaming") {
      message = markDropped(message);
      draw();
    }
  } catch (error) {
    message = markDropped(message);
    draw();
    showBanner(String(error));
  }
}

function showBanner(text: string): void {
  const banner = byId<HTMLElement>("banner");
  banner.textContent = text;
  banner.hidden = false;
  setTimeout(() => {
    banner.hidden = true;
  }, 6000);
}

function byId<T extends HTMLElement>(id: string): T {
  const element = document.getElementById(id);
  if (!element) throw new Error(`missing #${id}`);
  return element as T;
}

void bootstrap();
