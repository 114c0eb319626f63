/** Incremental server-sent-events frame parser.
 *
 * Frames may arrive split across arbitrary chunk boundaries; the parser
 * buffers until a blank line completes a frame. CRLF and LF are both
 * accepted.
 */

export interface SseEvent {
  event: string;
  data: string;
}

const FRAME_BOUNDARY = /\r?\n\r?\n/;

export class SseFrameParser {
  private buffer = "";

  /** Feed a decoded chunk; returns every event completed by it. */
  push(chunk: string): SseEvent[] {
    this.buffer += chunk;
    const frames = this.buffer.split(FRAME_BOUNDARY);
    this.buffer = frames.pop() ?? "";
    return frames.map(parseFrame).filter((e): e is SseEvent => e !== null);
  }

  /** Drain a trailing unterminated frame at end of stream. */
  flush(): SseEvent[] {
    const rest = this.buffer;
    this.buffer = "";
    if (!rest.trim()) return [];
    const event = parseFrame(rest);
    return event ? [event] : [];
  }
}

function parseFrame(frame: string): SseEvent | null {
  let event = "message";
  const dataLines: string[] = [];
  for (const rawLine of frame.split(/\r?\n/)) {
    const line = rawLine.replace(/\r$/, "");
    if (line.startsWith("event:")) {
      event = line.slice("event:".length).trim();
    } else if (line.startsWith("data:")) {
      let value = line.slice("data:".length);
      if (value.startsWith(" ")) value = value.slice(1);
      dataLines.push(value);
    }
  }
  if (dataLines.length === 0) return null;
  return { event, data: dataLines.join("\n") };
}

/** Read a fetch response body as a stream of SSE events. */
export async function* readSseStream(
  body: ReadableStream<Uint8Array>
): AsyncGenerator<SseEvent> {
  const reader = body.getReader();
  const decoder = new TextDecoder("utf-8");
  const parser = new SseFrameParser();
  try {
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      for (const event of parser.push(decoder.decode(value, { stream: true }))) {
        yield event;
      }
    }
    for (const event of parser.flush()) {
      yield event;
    }
  } finally {
    reader.releaseLock();
  }
}
