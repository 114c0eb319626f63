/** Split answer text into plain and citation segments.
 *
 * A [k] span whose position exists in the sources becomes a link segment;
 * everything else (including dangling ids and comma groups) stays plain
 * text. Concatenating segment texts reproduces the input byte-for-byte.
 */

import type { SourceInfo } from "./state.js";

export interface CitationSegment {
  kind: "text" | "citation";
  text: string;
  url?: string;
  docId?: number;
}

const SINGLE_CITATION = /\[(\d+)\]/g;

export function splitCitations(text: string, sources: SourceInfo[]): CitationSegment[] {
  const byPosition = new Map(sources.map((s) => [s.position, s]));
  const segments: CitationSegment[] = [];
  let cursor = 0;
  for (const match of text.matchAll(SINGLE_CITATION)) {
    const index = match.index ?? 0;
    const source = byPosition.get(Number(match[1]));
    if (!source) continue; // dangling or unknown: leave as plain text
    if (index > cursor) {
      segments.push({ kind: "text", text: text.slice(cursor, index) });
    }
    segments.push({
      kind: "citation",
      text: match[0],
      url: source.url,
      docId: source.doc_id,
    });
    cursor = index + match[0].length;
  }
  if (cursor < text.length) {
    segments.push({ kind: "text", text: text.slice(cursor) });
  }
  if (segments.length === 0 && text.length === 0) return [];
  return segments;
}

export function segmentsText(segments: CitationSegment[]): string {
  return segments.map((s) => s.text).join("");
}
