/** Shapes mirrored from the session service's event frames and transcript. */

export type Role = "user" | "assistant" | "tool" | "system" | "auto";

export interface ContentPart {
  kind: "text" | "image_ref";
  text?: string;
  path?: string;
  media_type?: string;
  origin?: string;
  image_id?: string;
  url?: string;
}

export interface ToolCallShape {
  id: string;
  tool_name: string;
  arguments_json: string;
}

export interface ToolResultShape {
  call_id: string;
  text: string;
  image_paths: string[];
  is_error: boolean;
  denied: boolean;
}

export interface MessageShape {
  seq: number;
  role: Role;
  parts: ContentPart[];
  tool_calls: ToolCallShape[];
  tool_result: ToolResultShape | null;
  timestamp: string | null;
}

export type EventType =
  | "message_appended"
  | "tool_started"
  | "tool_finished"
  | "approval_requested"
  | "status_changed"
  | "workflow_finished";

export interface UiEvent {
  event_seq: number;
  type: EventType;
  session: string;
  payload: Record<string, unknown> & {
    message?: MessageShape;
    call_id?: string;
    tool_name?: string;
    arguments?: Record<string, unknown>;
    status?: string;
    report?: Record<string, unknown>;
  };
}
