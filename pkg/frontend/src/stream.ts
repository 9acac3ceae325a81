/** Resumable live-frame stream.
 *
 * Wraps the service's event-stream endpoint with resume-by-sequence:
 * on any connection loss before the end event, it reconnects with
 * from_seq set to the next frame it has not yet delivered, and drops
 * whatever the server replays below that. Consumers therefore see
 * every sequence number exactly once, in order, no matter how many
 * times the transport fails underneath.
 */

import { SseParser } from "./sse.js";
import type { AcquisitionSnapshot, LiveStreamMessage } from "./types.js";

/** One physical connection attempt; yields decoded text chunks. */
export interface StreamTransport {
  open(url: string): AsyncIterable<string>;
}

export type StreamItem =
  | { type: "frame"; message: LiveStreamMessage }
  | { type: "end"; snapshot: AcquisitionSnapshot }
  | { type: "disconnected"; error: string }
  | { type: "reconnected"; fromSeq: number };

export interface LiveStreamOptions {
  maxReconnects?: number;
  retryDelayMs?: number;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export function streamUrl(baseUrl: string, acquisitionId: string, fromSeq: number): string {
  return `${baseUrl}/v1/stream?acquisition=${encodeURIComponent(acquisitionId)}&from_seq=${fromSeq}`;
}

export async function* liveStream(
  baseUrl: string,
  acquisitionId: string,
  transport: StreamTransport,
  options: LiveStreamOptions = {},
): AsyncGenerator<StreamItem> {
  const maxReconnects = options.maxReconnects ?? 20;
  const retryDelayMs = options.retryDelayMs ?? 500;
  const sleep = options.sleep ?? defaultSleep;

  let lastSeq = -1;
  let failures = 0;
  for (;;) {
    const parser = new SseParser();
    try {
      for await (const chunk of transport.open(streamUrl(baseUrl, acquisitionId, lastSeq + 1))) {
        for (const event of parser.feed(chunk)) {
          if (event.event === "end") {
            yield { type: "end", snapshot: JSON.parse(event.data) as AcquisitionSnapshot };
            return;
          }
          const message = JSON.parse(event.data) as LiveStreamMessage;
          const seq = message.frame.seq;
          if (seq <= lastSeq) continue; // replay overlap after a resume
          if (seq !== lastSeq + 1) {
            throw new Error(`frame gap: got seq ${seq} after ${lastSeq}`);
          }
          lastSeq = seq;
          yield { type: "frame", message };
        }
      }
      // orderly close without an end event still means we missed something
      throw new Error("stream closed before the end event");
    } catch (err) {
      failures += 1;
      const message = err instanceof Error ? err.message : String(err);
      if (failures > maxReconnects) {
        throw new Error(`stream gave up after ${maxReconnects} reconnects: ${message}`);
      }
      yield { type: "disconnected", error: message };
      await sleep(retryDelayMs);
      yield { type: "reconnected", fromSeq: lastSeq + 1 };
    }
  }
}

/** Transport over fetch + ReadableStream; works in browsers and node. */
export function fetchTransport(fetchImpl: typeof fetch = fetch): StreamTransport {
  return {
    open(url: string): AsyncIterable<string> {
      return (async function* () {
        const response = await fetchImpl(url, { headers: { accept: "text/event-stream" } });
        if (!response.ok || response.body === null) {
          throw new Error(`stream request failed with status ${response.status}`);
        }
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        try {
          for (;;) {
            const { done, value } = await reader.read();
            if (done) return;
            yield decoder.decode(value, { stream: true });
          }
        } finally {
          reader.releaseLock();
        }
      })();
    },
  };
}
