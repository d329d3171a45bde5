/** Chat transcript rendering: messages by role, inline images, side gallery.
 *
 * Events are rendered strictly in the order received; each message element
 * carries its transcript seq so ordering is checkable from the DOM.
 */

import type { MessageShape, UiEvent } from "./types.js";

export class ChatView {
  readonly messages: HTMLElement;
  readonly gallery: HTMLElement;
  readonly status: HTMLElement;

  constructor(container: HTMLElement, gallery: HTMLElement, status: HTMLElement) {
    this.messages = container;
    this.gallery = gallery;
    this.status = status;
  }

  handleEvent(event: UiEvent): void {
    switch (event.type) {
      case "message_appended":
        if (event.payload.message) this.renderMessage(event.payload.message);
        break;
      case "tool_started":
        this.renderActivity(`running ${event.payload.tool_name}...`);
        break;
      case "tool_finished":
        this.renderActivity(
          `${event.payload.tool_name} ${event.payload.is_error ? "failed" : "finished"}`,
        );
        break;
      case "status_changed":
        this.status.textContent = String(event.payload.status ?? "");
        break;
      default:
        break;
    }
  }

  renderMessage(message: MessageShape): void {
    const el = document.createElement("div");
    el.className = `message role-${message.role}`;
    el.dataset.seq = String(message.seq);

    const badge = document.createElement("span");
    badge.className = "role-badge";
    badge.textContent = message.role;
    el.appendChild(badge);

    for (const part of message.parts) {
      if (part.kind === "text" && part.text) {
        const p = document.createElement("p");
        p.textContent = part.text;
        el.appendChild(p);
      } else if (part.kind === "image_ref") {
        el.appendChild(this.imageThumb(part.url ?? "", part.path ?? ""));
      }
    }

    if (message.tool_result) {
      const pre = document.createElement("pre");
      pre.className = message.tool_result.is_error ? "tool-result error" : "tool-result";
      if (message.tool_result.denied) pre.classList.add("denied");
      pre.textContent = message.tool_result.text;
      el.appendChild(pre);
    }
    for (const call of message.tool_calls) {
      const div = document.createElement("div");
      div.className = "tool-call";
      div.textContent = `-> ${call.tool_name}(${call.arguments_json})`;
      el.appendChild(div);
    }
    this.messages.appendChild(el);
    el.scrollIntoView?.({ block: "end" });
  }

  private imageThumb(url: string, alt: string): HTMLElement {
    const wrap = document.createElement("span");
    const img = document.createElement("img");
    img.className = "inline-image";
    img.src = url;
    img.alt = alt;
    img.onerror = () => {
      // broken image id: placeholder with a retry control
      const placeholder = document.createElement("button");
      placeholder.className = "image-retry";
      placeholder.textContent = "image unavailable - retry";
      placeholder.onclick = () => {
        img.onerror = null;
        img.src = url;
        placeholder.replaceWith(img);
      };
      img.replaceWith(placeholder);
    };
    wrap.appendChild(img);

    const panelImg = img.cloneNode() as HTMLImageElement;
    panelImg.className = "gallery-image";
    panelImg.onclick = () => panelImg.classList.toggle("zoomed");
    this.gallery.appendChild(panelImg);
    return wrap;
  }

  private renderActivity(text: string): void {
    const el = document.createElement("div");
    el.className = "activity";
    el.textContent = text;
    this.messages.appendChild(el);
  }
}
