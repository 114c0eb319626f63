/** DOM rendering for message cards: routing badge, stage timeline, streamed
 * answer, citation links, sources, feedback row. */

import { splitCitations } from "./citations.js";
import { feedbackEnabled, MessageState } from "./state.js";

export interface FeedbackHandler {
  (rating: "up" | "down", comment: string): void;
}

export interface RetryHandler {
  (): void;
}

export function createMessageCard(): HTMLElement {
  const card = document.createElement("article");
  card.className = "message";
  card.innerHTML = `
    <header class="message-header">
      <span class="query"></span>
      <span class="badges">
        <span class="badge model"></span>
        <span class="badge routing" hidden></span>
      </span>
    </header>
    <details class="stages">
      <summary>Stages</summary>
      <ol class="stage-list"></ol>
    </details>
    <div class="answer" aria-live="polite"></div>
    <div class="status-line" hidden></div>
    <ul class="sources" hidden></ul>
    <div class="feedback">
      <button class="thumb up" disabled aria-label="thumbs up">&#128077;</button>
      <button class="thumb down" disabled aria-label="thumbs down">&#128078;</button>
      <input class="comment" type="text" placeholder="optional comment" disabled />
      <button class="retry" hidden>Retry</button>
    </div>
  `;
  return card;
}

export function renderMessage(
  card: HTMLElement,
  message: MessageState,
  onFeedback: FeedbackHandler,
  onRetry: RetryHandler
): void {
  query(card, ".query").textContent = message.query;
  query(card, ".badge.model").textContent = message.model;

  const routingBadge = query(card, ".badge.routing");
  if (message.routing) {
    routingBadge.hidden = false;
    routingBadge.textContent = `${message.routing.label} (${message.routing.method})`;
    routingBadge.classList.toggle("complex", message.routing.label === "complex");
  }

  // complex runs expand the timeline by default; simple runs stay collapsed
  const stages = query(card, ".stages") as HTMLDetailsElement;
  if (message.routing?.label === "complex" && !stages.dataset.userToggled) {
    stages.open = true;
  }
  const stageList = query(card, ".stage-list");
  stageList.replaceChildren(
    ...message.stages.map((stage) => {
      const item = document.createElement("li");
      const flags = stage.flags.length ? ` [${stage.flags.join(", ")}]` : "";
      item.textContent = `${stage.stage} (${stage.duration_s}s) ${stage.summary}${flags}`;
      return item;
    })
  );

  renderAnswer(card, message);
  renderStatus(card, message);
  renderSources(card, message);
  renderFeedback(card, message, onFeedback, onRetry);
}

function renderAnswer(card: HTMLElement, message: MessageState): void {
  const answer = query(card, ".answer");
  if (message.status === "streaming" || !message.final) {
    // plain text while streaming: rendered text equals concatenated deltas
    answer.textContent = message.text;
    return;
  }
  const segments = splitCitations(message.text, message.final.sources);
  answer.replaceChildren(
    ...segments.map((segment) => {
      if (segment.kind === "citation" && segment.url) {
        const anchor = document.createElement("a");
        anchor.href = segment.url;
        anchor.target = "_blank";
        anchor.rel = "noreferrer";
        anchor.textContent = segment.text;
        return anchor as Node;
      }
      return document.createTextNode(segment.text);
    })
  );
}

function renderStatus(card: HTMLElement, message: MessageState): void {
  const line = query(card, ".status-line");
  if (message.status === "timeout") {
    line.hidden = false;
    line.textContent = "Request hit its deadline; this answer is partial.";
  } else if (message.status === "error") {
    line.hidden = false;
    line.textContent = message.connectionDropped
      ? "Connection dropped; partial answer kept."
      : `Request failed${message.final?.error ? `: ${message.final.error}` : ""}.`;
  } else {
    line.hidden = true;
  }
}

function renderSources(card: HTMLElement, message: MessageState): void {
  const list = query(card, ".sources") as HTMLUListElement;
  const sources = message.final?.sources ?? [];
  list.hidden = sources.length === 0;
  list.replaceChildren(
    ...sources.map((source) => {
      const item = document.createElement("li");
      const anchor = document.createElement("a");
      anchor.href = source.url;
      anchor.target = "_blank";
      anchor.rel = "noreferrer";
      anchor.textContent = `[${source.position}] ${source.url}`;
      item.append(anchor);
      if (source.date) item.append(` (${source.date})`);
      return item;
    })
  );
}

function renderFeedback(
  card: HTMLElement,
  message: MessageState,
  onFeedback: FeedbackHandler,
  onRetry: RetryHandler
): void {
  const up = query(card, ".thumb.up") as HTMLButtonElement;
  const down = query(card, ".thumb.down") as HTMLButtonElement;
  const comment = query(card, ".comment") as HTMLInputElement;
  const retry = query(card, ".retry") as HTMLButtonElement;

  const enabled = feedbackEnabled(message) && message.feedback === "none";
  up.disabled = !enabled;
  down.disabled = !enabled;
  comment.disabled = !feedbackEnabled(message) || message.feedback !== "none";
  up.classList.toggle("latched", message.feedback === "up");
  down.classList.toggle("latched", message.feedback === "down");

  up.onclick = () => onFeedback("up", comment.value);
  down.onclick = () => onFeedback("down", comment.value);

  retry.hidden = !(message.status === "error" && message.connectionDropped);
  retry.onclick = () => onRetry();
}

function query(root: HTMLElement, selector: string): HTMLElement {
  const found = root.querySelector(selector);
  if (!found) throw new Error(`missing element ${selector}`);
  return found as HTMLElement;
}
