/** Approval dialogs: queued FIFO, one modal at a time, decisions POSTed back. */

import { decideApproval } from "./api.js";
import type { UiEvent } from "./types.js";

interface PendingApproval {
  callId: string;
  toolName: string;
  argumentsText: string;
}

export class ApprovalQueue {
  private queue: PendingApproval[] = [];
  private modal: HTMLElement | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly base: string,
    private readonly sessionId: string,
    private readonly onBlockedChange: (blocked: boolean) => void = () => {},
  ) {}

  handleEvent(event: UiEvent): void {
    if (event.type !== "approval_requested") return;
    this.queue.push({
      callId: String(event.payload.call_id),
      toolName: String(event.payload.tool_name),
      argumentsText: JSON.stringify(event.payload.arguments ?? {}, null, 2),
    });
    this.showNext();
  }

  get pending(): number {
    return this.queue.length + (this.modal ? 1 : 0);
  }

  private showNext(): void {
    if (this.modal || this.queue.length === 0) return;
    const item = this.queue.shift()!;
    this.onBlockedChange(true);

    const modal = document.createElement("div");
    modal.className = "approval-modal";
    modal.dataset.callId = item.callId;

    const title = document.createElement("h3");
    title.textContent = `Approve tool call: ${item.toolName}`;
    const args = document.createElement("pre");
    args.textContent = item.argumentsText;
    const error = document.createElement("div");
    error.className = "approval-error";

    const decide = async (approved: boolean) => {
      const resp = await decideApproval(this.base, this.sessionId, item.callId, approved);
      if (!resp.ok) {
        error.textContent = `decision failed (${resp.status}); try again`;
        return; // dialog persists on failure
      }
      modal.remove();
      this.modal = null;
      this.onBlockedChange(this.pending > 0);
      this.showNext();
    };

    const approve = document.createElement("button");
    approve.className = "approve";
    approve.textContent = "Approve";
    approve.onclick = () => void decide(true);
    const deny = document.createElement("button");
    deny.className = "deny";
    deny.textContent = "Deny";
    deny.onclick = () => void decide(false);

    modal.append(title, args, error, approve, deny);
    this.root.appendChild(modal);
    this.modal = modal;
  }
}
