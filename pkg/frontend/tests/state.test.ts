import { describe, expect, it } from "vitest";

import {
  applyEvent,
  feedbackEnabled,
  markDropped,
  newMessage,
  setFeedback,
} from "../src/state.js";

const FINAL = {
  status: "ok",
  session_id: "s",
  message_id: "m",
  text: "Solar [1]. Wind [2].",
  pipeline: "vanilla-rag",
  sources: [],
  citation_report: { total_citations: 2, valid: 2, dangling: [], uncited_docs: [] },
  stop_reasons: [],
};

describe("applyEvent", () => {
  it("accumulates token deltas byte-for-byte", () => {
    let message = newMessage("q", "r2rag");
    for (const delta of ["Solar ", "[1]. ", "Wind ", "[2]."]) {
      message = applyEvent(message, "token", { delta });
    }
    expect(message.text).toBe("Solar [1]. Wind [2].");
  });

  it("final event never rewrites streamed text", () => {
    let message = newMessage("q", "r2rag");
    message = applyEvent(message, "token", { delta: "streamed text" });
    message = applyEvent(message, "final", { ...FINAL, text: "SOMETHING ELSE" });
    expect(message.text).toBe("streamed text");
    expect(message.status).toBe("final");
  });

  it("collects routing and stages", () => {
    let message = newMessage("q", "r2rag");
    message = applyEvent(message, "routing", {
      label: "complex",
      method: "llm-judge",
      confidence: null,
      raw_evidence: "yes",
    });
    message = applyEvent(message, "stage", {
      stage: "iter1:search",
      started_at: "t",
      duration_s: 0.1,
      summary: "3 new documents",
      flags: [],
    });
    expect(message.routing?.label).toBe("complex");
    expect(message.stages).toHaveLength(1);
  });

  it("timeout final sets timeout status", () => {
    let message = newMessage("q", "r2rag");
    message = applyEvent(message, "final", { ...FINAL, status: "timeout" });
    expect(message.status).toBe("timeout");
  });
});

describe("feedback gating", () => {
  it("disabled until final arrives", () => {
    let message = newMessage("q", "r2rag");
    expect(feedbackEnabled(message)).toBe(false);
    message = applyEvent(message, "final", FINAL);
    expect(feedbackEnabled(message)).toBe(true);
  });

  it("disabled for timeout finals", () => {
    let message = newMessage("q", "r2rag");
    message = applyEvent(message, "final", { ...FINAL, status: "timeout" });
    expect(feedbackEnabled(message)).toBe(false);
  });

  it("latch and rollback transitions", () => {
    let message = newMessage("q", "r2rag");
    message = applyEvent(message, "final", FINAL);
    const before = message.feedback;
    message = setFeedback(message, "pending");
    expect(message.feedback).toBe("pending");
    message = setFeedback(message, before); // rollback on server rejection
    expect(message.feedback).toBe("none");
    message = setFeedback(message, "up");
    expect(message.feedback).toBe("up");
  });
});

describe("markDropped", () => {
  it("keeps partial text and flags the drop", () => {
    let message = newMessage("q", "r2rag");
    message = applyEvent(message, "token", { delta: "partial " });
    message = markDropped(message);
    expect(message.status).toBe("error");
    expect(message.connectionDropped).toBe(true);
    expect(message.text).toBe("partial ");
  });

  it("does not touch finalized messages", () => {
    let message = newMessage("q", "r2rag");
    message = applyEvent(message, "final", FINAL);
    expect(markDropped(message).status).toBe("final");
  });
});
