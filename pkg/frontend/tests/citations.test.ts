import { describe, expect, it } from "vitest";

import { segmentsText, splitCitations } from "../src/citations.js";
import type { SourceInfo } from "../src/state.js";

const SOURCES: SourceInfo[] = [
  { position: 1, doc_id: 11, url: "https://a.example/one", date: "2024-01-01" },
  { position: 2, doc_id: 12, url: "https://b.example/two", date: null },
];

describe("splitCitations", () => {
  it("links known positions to their source urls", () => {
    const segments = splitCitations("Solar [1]. Wind [2].", SOURCES);
    const citations = segments.filter((s) => s.kind === "citation");
    expect(citations).toHaveLength(2);
    expect(citations[0]).toMatchObject({ text: "[1]", url: "https://a.example/one", docId: 11 });
    expect(citations[1]).toMatchObject({ text: "[2]", url: "https://b.example/two", docId: 12 });
  });

  it("concatenated segment text reproduces the input exactly", () => {
    const text = "A [1], then [9] dangling, comma [1, 2] group, done [2].";
    expect(segmentsText(splitCitations(text, SOURCES))).toBe(text);
  });

  it("leaves dangling citations as plain text", () => {
    const segments = splitCitations("Claim [9].", SOURCES);
    expect(segments.every((s) => s.kind === "text")).toBe(true);
  });

  it("handles text without citations", () => {
    const segments = splitCitations("no brackets here", SOURCES);
    expect(segments).toEqual([{ kind: "text", text: "no brackets here" }]);
  });

  it("handles empty text", () => {
    expect(splitCitations("", SOURCES)).toEqual([]);
  });
});
