/** Minimal incremental server-sent-events parser.
 *
 * Chunks arrive split at arbitrary byte boundaries; feed() buffers and
 * emits only complete events (blocks terminated by a blank line).
 */

export interface SseEvent {
  id?: string;
  event?: string;
  data: string;
}

export class SseParser {
  private buffer = "";

  feed(chunk: string): SseEvent[] {
    this.buffer += chunk;
    const events: SseEvent[] = [];
    for (;;) {
      const cut = this.buffer.indexOf("\n\n");
      if (cut < 0) break;
      const block = this.buffer.slice(0, cut);
      this.buffer = this.buffer.slice(cut + 2);
      const parsed = parseBlock(block);
      if (parsed !== null) events.push(parsed);
    }
    return events;
  }
}

function parseBlock(block: string): SseEvent | null {
  const out: SseEvent = { data: "" };
  const data: string[] = [];
  for (const line of block.split("\n")) {
    if (line === "" || line.startsWith(":")) continue;
    const colon = line.indexOf(":");
    const field = colon < 0 ? line : line.slice(0, colon);
    let value = colon < 0 ? "" : line.slice(colon + 1);
    if (value.startsWith(" ")) value = value.slice(1);
    if (field === "data") data.push(value);
    else if (field === "event") out.event = value;
    else if (field === "id") out.id = value;
  }
  if (data.length === 0 && out.event === undefined && out.id === undefined) return null;
  out.data = data.join("\n");
  return out;
}
