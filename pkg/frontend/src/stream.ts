import type { TranscriptEvent } from "./types.js";

export type StreamStatus = "live" | "disconnected" | "ended";

export interface StreamOptions {
  /* seconds the server holds an empty poll open */
  wait?: number;
  /* pause between polls when nothing new arrived, ms */
  pollDelayMs?: number;
  /* pause before reconnecting after an error, ms */
  retryDelayMs?: number;
  fetchImpl?: typeof fetch;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

/**
 * Long-poll consumer of the NDJSON transcript stream.
 *
 * Keeps the last seen sequence number and always resumes from it, so a
 * dropped connection or a server that resends old lines never produces a
 * duplicate event downstream. One instance per tab and session.
 */
export class EventStream {
  lastSeq = 0;
  private stopped = false;

  constructor(
    private readonly baseUrl: string,
    private readonly sessionId: string,
    private readonly options: StreamOptions = {},
  ) {}

  stop(): void {
    this.stopped = true;
  }

  async run(
    onEvent: (event: TranscriptEvent) => void,
    onStatus?: (status: StreamStatus) => void,
  ): Promise<void> {
    const fetchImpl = this.options.fetchImpl ?? fetch;
    const sleep = this.options.sleep ?? defaultSleep;
    const wait = this.options.wait ?? 25;

    while (!this.stopped) {
      let text: string;
      try {
        const url =
          `${this.baseUrl}/sessions/${this.sessionId}/events` +
          `?from=${this.lastSeq}&wait=${wait}`;
        const response = await fetchImpl(url);
        if (!response.ok) {
          throw new Error(`stream returned HTTP ${response.status}`);
        }
        text = await response.text();
        onStatus?.("live");
      } catch {
        if (this.stopped) return;
        onStatus?.("disconnected");
        await sleep(this.options.retryDelayMs ?? 1000);
        continue;
      }

      let advanced = false;
      let terminal = false;
      for (const line of text.split("\n")) {
        if (!line.trim()) continue;
        const event = JSON.parse(line) as TranscriptEvent;
        if (event.seq <= this.lastSeq) continue;
        this.lastSeq = event.seq;
        advanced = true;
        onEvent(event);
        if (event.kind === "SessionTerminated") terminal = true;
      }
      if (terminal) {
        onStatus?.("ended");
        return;
      }
      if (!advanced && !this.stopped) {
        await sleep(this.options.pollDelayMs ?? 250);
      }
    }
  }
}
