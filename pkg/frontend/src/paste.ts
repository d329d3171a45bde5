/** Clipboard capture: screenshots pasted into the composer become attachments. */

export interface Attachment {
  file: File;
  previewUrl: string;
}

/**
 * Extract an image from a paste event, if any. Non-image clipboards are a
 * no-op (return null) so normal text pasting is untouched.
 */
export function imageFromClipboard(e: ClipboardEvent): File | null {
  const data = e.clipboardData;
  if (!data) return null;
  for (const item of Array.from(data.items)) {
    if (item.type.startsWith("image/")) {
      const file = item.getAsFile();
      if (file) return file;
    }
  }
  return null;
}

/** Pending composer attachments, in paste order. */
export class AttachmentTray {
  readonly attachments: Attachment[] = [];

  constructor(private readonly preview: HTMLElement) {}

  handlePaste(e: ClipboardEvent): boolean {
    const file = imageFromClipboard(e);
    if (!file) return false;
    e.preventDefault?.();
    const previewUrl = URL.createObjectURL?.(file) ?? "";
    this.attachments.push({ file, previewUrl });
    const img = document.createElement("img");
    img.className = "attachment-preview";
    if (previewUrl) img.src = previewUrl;
    img.title = file.name || "pasted image";
    this.preview.appendChild(img);
    return true;
  }

  /** Hand over the files for sending and clear the tray. */
  drain(): File[] {
    const files = this.attachments.map((a) => a.file);
    for (const a of this.attachments) {
      if (a.previewUrl) URL.revokeObjectURL?.(a.previewUrl);
    }
    this.attachments.length = 0;
    this.preview.replaceChildren();
    return files;
  }
}
