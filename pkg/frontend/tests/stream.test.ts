import { describe, expect, it } from "vitest";

import { EventStream, type StreamStatus } from "../src/stream.js";
import type { TranscriptEvent } from "../src/types.js";

function line(seq: number, kind = "PromptSent"): string {
  return JSON.stringify({ seq, kind, payload: {}, at: "t" });
}

function ndjson(...lines: string[]): Response {
  return new Response(lines.join("\n") + (lines.length ? "\n" : ""), { status: 200 });
}

/* each call shifts the next step; a step is a Response or an Error to throw */
function scriptedFetch(steps: Array<Response | Error>, urls: string[] = []): typeof fetch {
  return async (input) => {
    urls.push(String(input));
    const step = steps.shift();
    if (!step) throw new Error("fetch script exhausted");
    if (step instanceof Error) throw step;
    return step;
  };
}

const instant = () => Promise.resolve();

async function collect(
  stream: EventStream,
): Promise<{ events: TranscriptEvent[]; statuses: StreamStatus[] }> {
  const events: TranscriptEvent[] = [];
  const statuses: StreamStatus[] = [];
  await stream.run(
    (event) => events.push(event),
    (status) => statuses.push(status),
  );
  return { events, statuses };
}

describe("EventStream", () => {
  it("emits each event once and stops at termination", async () => {
    const fetchImpl = scriptedFetch([
      ndjson(line(1), line(2)),
      ndjson(line(3), line(4, "SessionTerminated")),
    ]);
    const stream = new EventStream("http://x", "s-1", { fetchImpl, sleep: instant });
    const { events, statuses } = await collect(stream);
    expect(events.map((e) => e.seq)).toEqual([1, 2, 3, 4]);
    expect(statuses.at(-1)).toBe("ended");
  });

  it("drops lines the server resends", async () => {
    // second poll replays the whole log from the start
    const fetchImpl = scriptedFetch([
      ndjson(line(1), line(2)),
      ndjson(line(1), line(2), line(3, "SessionTerminated")),
    ]);
    const stream = new EventStream("http://x", "s-1", { fetchImpl, sleep: instant });
    const { events } = await collect(stream);
    expect(events.map((e) => e.seq)).toEqual([1, 2, 3]);
  });

  it("reconnects after a drop and resumes from the last seen sequence", async () => {
    const urls: string[] = [];
    const fetchImpl = scriptedFetch(
      [
        ndjson(line(1), line(2)),
        new Error("connection reset"),
        ndjson(line(1), line(2), line(3), line(4, "SessionTerminated")),
      ],
      urls,
    );
    const stream = new EventStream("http://x", "s-1", { fetchImpl, sleep: instant });
    const { events, statuses } = await collect(stream);
    expect(events.map((e) => e.seq)).toEqual([1, 2, 3, 4]);
    expect(statuses).toContain("disconnected");
    expect(statuses.at(-1)).toBe("ended");
    expect(urls[0]).toContain("from=0");
    expect(urls[1]).toContain("from=2");
    expect(urls[2]).toContain("from=2");
  });

  it("treats HTTP errors as drops, not data", async () => {
    const fetchImpl = scriptedFetch([
      new Response('{"error":"not-found"}', { status: 404 }),
      ndjson(line(1, "SessionTerminated")),
    ]);
    const stream = new EventStream("http://x", "s-1", { fetchImpl, sleep: instant });
    const { events, statuses } = await collect(stream);
    expect(statuses[0]).toBe("disconnected");
    expect(events.map((e) => e.seq)).toEqual([1]);
  });

  it("waits between empty polls", async () => {
    let naps = 0;
    const sleep = () => {
      naps += 1;
      return Promise.resolve();
    };
    const fetchImpl = scriptedFetch([
      ndjson(),
      ndjson(),
      ndjson(line(1, "SessionTerminated")),
    ]);
    const stream = new EventStream("http://x", "s-1", { fetchImpl, sleep });
    await collect(stream);
    expect(naps).toBe(2);
  });

  it("stop() ends the loop without a terminal event", async () => {
    const stream = new EventStream("http://x", "s-1", {
      fetchImpl: scriptedFetch([ndjson(line(1)), ndjson(), ndjson(), ndjson()]),
      sleep: instant,
    });
    const events: TranscriptEvent[] = [];
    const run = stream.run((event) => {
      events.push(event);
      stream.stop();
    });
    await run;
    expect(events.map((e) => e.seq)).toEqual([1]);
  });
});
