/** Thin client for the session service endpoints.
 *
 * Uses global fetch (browser or node 20). The event subscription speaks
 * server-sent events over fetch streaming so the same code is testable
 * against a plain node http stub, and reconnects with backoff resuming from
 * the last delivered event index.
 */

import { Report, SessionEvent } from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function checkJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    throw new ApiError(response.status, `${response.status} ${await response.text()}`);
  }
  return (await response.json()) as T;
}

export async function createSession(
  base: string,
  body: { query: string; auto_confirm?: boolean; mode?: string | null },
): Promise<string> {
  const response = await fetch(`${base}/sessions`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
  });
  const payload = await checkJson<{ session_id: string }>(response);
  return payload.session_id;
}

export async function fetchEvents(
  base: string,
  sessionId: string,
  since = 0,
): Promise<SessionEvent[]> {
  const response = await fetch(`${base}/sessions/${sessionId}/events?since=${since}`);
  return checkJson<SessionEvent[]>(response);
}

export async function postConfirmation(
  base: string,
  sessionId: string,
  substitutionIndex: number,
  accepted: boolean,
): Promise<void> {
  const response = await fetch(`${base}/sessions/${sessionId}/confirmations`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ substitution_index: substitutionIndex, accepted }),
  });
  await checkJson<{ ok: boolean }>(response);
}

export async function fetchReport(
  base: string,
  sessionId: string,
): Promise<{ report: Report; markdown: string }> {
  const response = await fetch(`${base}/sessions/${sessionId}/report`);
  return checkJson<{ report: Report; markdown: string }>(response);
}

export interface Subscription {
  close(): void;
  /** Resolves when the stream ends cleanly or the subscription is closed. */
  done: Promise<void>;
}

export interface SubscribeOptions {
  since?: number;
  onEvent(event: SessionEvent): void;
  onError?(error: unknown): void;
  /** Base reconnect delay in ms; doubles per consecutive failure. */
  retryDelayMs?: number;
  maxRetries?: number;
}

function* parseSseChunk(buffer: { text: string }): Generator<SessionEvent> {
  let at: number;
  while ((at = buffer.text.indexOf("\n\n")) >= 0) {
    const frame = buffer.text.slice(0, at);
    buffer.text = buffer.text.slice(at + 2);
    const dataLines = frame
      .split("\n")
      .filter((line) => line.startsWith("data: "))
      .map((line) => line.slice("data: ".length));
    if (dataLines.length) {
      yield JSON.parse(dataLines.join("\n")) as SessionEvent;
    }
  }
}

/** Subscribe to the live event stream, resuming after drops. */
export function subscribeEvents(
  base: string,
  sessionId: string,
  options: SubscribeOptions,
): Subscription {
  let cursor = options.since ?? 0;
  let closed = false;
  const controller = { current: new AbortController() };
  const retryDelay = options.retryDelayMs ?? 500;
  const maxRetries = options.maxRetries ?? 5;

  const done = (async () => {
    let failures = 0;
    while (!closed) {
      try {
        controller.current = new AbortController();
        const response = await fetch(
          `${base}/sessions/${sessionId}/events?since=${cursor}`,
          {
            headers: { accept: "text/event-stream" },
            signal: controller.current.signal,
          },
        );
        if (response.status === 404) {
          throw new ApiError(404, "session not found");
        }
        if (!response.ok || !response.body) {
          throw new ApiError(response.status, "stream unavailable");
        }
        failures = 0;
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        const buffer = { text: "" };
        for (;;) {
          const { value, done: finished } = await reader.read();
          if (finished) break;
          buffer.text += decoder.decode(value, { stream: true });
          for (const event of parseSseChunk(buffer)) {
            cursor = event.index + 1;
            options.onEvent(event);
          }
        }
        return; // clean end of stream: the session is terminal
      } catch (error) {
        if (closed) return;
        if (error instanceof ApiError && error.status === 404) {
          options.onError?.(error);
          return; // unknown session: retrying cannot help
        }
        failures += 1;
        options.onError?.(error);
        if (failures > maxRetries) return;
        await new Promise((resolve) =>
          setTimeout(resolve, retryDelay * 2 ** (failures - 1)),
        );
      }
    }
  })();

  return {
    close() {
      closed = true;
      controller.current.abort();
    },
    done,
  };
}
