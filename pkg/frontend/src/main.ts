/** Page wiring: session bootstrap, composer, event stream, workflow launcher. */

import { consumeEvents, createSession, sendMessage, startWorkflow } from "./api.js";
import { ApprovalQueue } from "./approvals.js";
import { ChatView } from "./chat.js";
import { AttachmentTray } from "./paste.js";
import type { UiEvent } from "./types.js";

const BASE = "";

async function boot(): Promise<void> {
  const messages = document.getElementById("messages")!;
  const gallery = document.getElementById("gallery")!;
  const status = document.getElementById("status")!;
  const composer = document.getElementById("composer") as HTMLFormElement;
  const input = document.getElementById("input") as HTMLTextAreaElement;
  const preview = document.getElementById("attachments")!;
  const sendButton = document.getElementById("send") as HTMLButtonElement;

  const sessionId = await createSession(BASE, {});
  (document.getElementById("session-id")!).textContent = sessionId;

  const view = new ChatView(messages, gallery, status);
  const tray = new AttachmentTray(preview);
  const approvals = new ApprovalQueue(
    document.getElementById("modals")!,
    BASE,
    sessionId,
    (blocked) => {
      sendButton.disabled = blocked;
    },
  );

  const onEvent = (event: UiEvent) => {
    view.handleEvent(event);
    approvals.handleEvent(event);
  };

  // keep one stream open; reconnect when the server ends it
  void (async () => {
    for (;;) {
      try {
        await consumeEvents(BASE, sessionId, onEvent);
      } catch {
        await new Promise((r) => setTimeout(r, 1000));
      }
    }
  })();

  input.addEventListener("paste", (e) => tray.handlePaste(e as ClipboardEvent));
  composer.addEventListener("submit", (e) => {
    e.preventDefault();
    const text = input.value.trim();
    const files = tray.drain();
    if (!text && files.length === 0) return;
    input.value = "";
    void sendMessage(BASE, sessionId, text, files);
  });

  for (const kind of ["focusing", "feature-search"] as const) {
    document.getElementById(`launch-${kind}`)?.addEventListener("click", () => {
      void startWorkflow(BASE, sessionId, kind).then((resp) => {
        if (resp.status === 409) status.textContent = "a workflow is already running";
      });
    });
  }
}

if (typeof document !== "undefined" && document.getElementById("messages")) {
  void boot();
}
