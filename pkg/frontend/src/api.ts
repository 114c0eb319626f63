/** Client for the server's public endpoints: /v1/models, /run, /feedback.
 *
 * Talks only to the documented public surface, so the UI doubles as a
 * conformance client.
 */

import { readSseStream, SseEvent } from "./sse.js";

export interface ModelInfo {
  id: string;
  description: string;
}

export async function fetchModels(baseUrl: string): Promise<ModelInfo[]> {
  const response = await fetch(`${baseUrl}/v1/models`);
  if (!response.ok) throw new Error(`models endpoint answered ${response.status}`);
  const body = (await response.json()) as { data: { id: string; description?: string }[] };
  return body.data.map((m) => ({ id: m.id, description: m.description ?? "" }));
}

/** Selector options are exactly the model listing, in listing order. */
export function modelOptions(models: ModelInfo[]): { value: string; label: string }[] {
  return models.map((m) => ({ value: m.id, label: m.id }));
}

export interface RunRequest {
  query: string;
  model: string;
  session_id?: string;
}

export async function* runStream(
  baseUrl: string,
  request: RunRequest,
  signal?: AbortSignal
): AsyncGenerator<SseEvent> {
  const response = await fetch(`${baseUrl}/run`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(request),
    signal,
  });
  if (!response.ok) {
    const detail = await safeErrorMessage(response);
    throw new Error(detail);
  }
  if (!response.body) throw new Error("run endpoint returned no body");
  yield* readSseStream(response.body);
}

export interface FeedbackRequest {
  session_id: string;
  message_id: string;
  rating: "up" | "down";
  comment?: string;
}

export interface FeedbackAck {
  ok: boolean;
  orphan: boolean;
}

export async function sendFeedback(baseUrl: string, request: FeedbackRequest): Promise<FeedbackAck> {
  const response = await fetch(`${baseUrl}/feedback`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(request),
  });
  if (!response.ok) {
    throw new Error(await safeErrorMessage(response));
  }
  return (await response.json()) as FeedbackAck;
}

async function safeErrorMessage(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { error?: { message?: string } };
    return body.error?.message ?? `server answered ${response.status}`;
  } catch {
    return `server answered ${response.status}`;
  }
}
