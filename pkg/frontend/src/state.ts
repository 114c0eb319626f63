/** Message state and the pure reducer that folds stream events into it.
 *
 * The answer text is exactly the concatenation of token deltas; the final
 * event never rewrites it, so what the user watched stream in is what stays
 * on screen.
 */

export type MessageStatus = "streaming" | "final" | "timeout" | "error";

export interface RoutingInfo {
  label: string;
  method: string;
  confidence: number | null;
  raw_evidence: string;
}

export interface StageInfo {
  stage: string;
  started_at: string;
  duration_s: number;
  summary: string;
  flags: string[];
}

export interface SourceInfo {
  position: number;
  doc_id: number;
  url: string;
  date: string | null;
}

export interface FinalPayload {
  status: string;
  session_id: string;
  message_id: string;
  text: string;
  pipeline: string;
  sources: SourceInfo[];
  citation_report: {
    total_citations: number;
    valid: number;
    dangling: number[];
    uncited_docs: number[];
  };
  stop_reasons: string[];
  error?: string;
}

export type FeedbackState = "none" | "pending" | "up" | "down";

export interface MessageState {
  query: string;
  model: string;
  status: MessageStatus;
  text: string;
  routing: RoutingInfo | null;
  stages: StageInfo[];
  final: FinalPayload | null;
  feedback: FeedbackState;
  connectionDropped: boolean;
}

export function newMessage(query: string, model: string): MessageState {
  return {
    query,
    model,
    status: "streaming",
    text: "",
    routing: null,
    stages: [],
    final: null,
    feedback: "none",
    connectionDropped: false,
  };
}

export function applyEvent(message: MessageState, event: string, data: unknown): MessageState {
  switch (event) {
    case "routing":
      return { ...message, routing: data as RoutingInfo };
    case "stage":
      return { ...message, stages: [...message.stages, data as StageInfo] };
    case "token": {
      const delta = (data as { delta: string }).delta ?? "";
      return { ...message, text: message.text + delta };
    }
    case "final": {
      const final = data as FinalPayload;
      const status: MessageStatus =
        final.status === "ok" ? "final" : final.status === "timeout" ? "timeout" : "error";
      return { ...message, final, status };
    }
    default:
      return message;
  }
}

export function markDropped(message: MessageState): MessageState {
  if (message.status !== "streaming") return message;
  return { ...message, status: "error", connectionDropped: true };
}

/** Feedback buttons stay disabled until a final event arrives. */
export function feedbackEnabled(message: MessageState): boolean {
  return message.final !== null && message.status === "final";
}

export function setFeedback(message: MessageState, state: FeedbackState): MessageState {
  return { ...message, feedback: state };
}
