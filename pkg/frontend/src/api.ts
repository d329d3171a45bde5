/** Thin client over the session service HTTP API (the UI's only backend). */

import type { UiEvent } from "./types.js";

export async function createSession(
  base: string,
  options: { scenario?: string; model?: string; system_prompt?: string } = {},
): Promise<string> {
  const resp = await fetch(`${base}/sessions`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(options),
  });
  if (!resp.ok) throw new Error(`create session failed: ${resp.status}`);
  const body = (await resp.json()) as { id: string };
  return body.id;
}

/** Send a chat message; pasted images ride along as multipart file parts. */
export async function sendMessage(
  base: string,
  sessionId: string,
  text: string,
  images: File[] = [],
): Promise<Response> {
  const form = new FormData();
  form.append("text", text);
  for (const file of images) {
    form.append("images", file, file.name);
  }
  return fetch(`${base}/sessions/${sessionId}/messages`, { method: "POST", body: form });
}

export async function decideApproval(
  base: string,
  sessionId: string,
  callId: string,
  approved: boolean,
): Promise<Response> {
  return fetch(`${base}/sessions/${sessionId}/approvals/${callId}`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ approved }),
  });
}

export async function startWorkflow(
  base: string,
  sessionId: string,
  kind: "focusing" | "feature-search",
  params: Record<string, unknown> = {},
): Promise<Response> {
  return fetch(`${base}/sessions/${sessionId}/workflows/${kind}`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(params),
  });
}

export async function fetchTranscript(base: string, sessionId: string): Promise<string> {
  const resp = await fetch(`${base}/sessions/${sessionId}/transcript`);
  if (!resp.ok) throw new Error(`transcript fetch failed: ${resp.status}`);
  return resp.text();
}

/**
 * Consume the server-push event stream, invoking onEvent per frame.
 * Returns when the stream ends; callers reconnect if they want more.
 */
export async function consumeEvents(
  base: string,
  sessionId: string,
  onEvent: (event: UiEvent) => void,
  limit?: number,
): Promise<void> {
  const query = limit ? `?limit=${limit}` : "";
  const resp = await fetch(`${base}/sessions/${sessionId}/events${query}`);
  if (!resp.ok || !resp.body) throw new Error(`event stream failed: ${resp.status}`);
  const reader = resp.body.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  for (;;) {
    const { done, value } = await reader.read();
    if (done) break;
    buffer += decoder.decode(value, { stream: true });
    let idx;
    while ((idx = buffer.indexOf("\n\n")) >= 0) {
      const frame = buffer.slice(0, idx);
      buffer = buffer.slice(idx + 2);
      for (const line of frame.split("\n")) {
        if (line.startsWith("data: ")) {
          onEvent(JSON.parse(line.slice(6)) as UiEvent);
        }
      }
    }
  }
}
