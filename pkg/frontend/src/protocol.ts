/** Wire protocol: one JSON object per WebSocket text frame, both directions. */

export type Vec3 = [number, number, number];

/** Streamed every tick by the service. */
export interface StateMessage {
  type: "state";
  tick: number;
  handler: Vec3;
  /** position (3) + wxyz orientation (4) of the moving pipe */
  inner_pose: [number, number, number, number, number, number, number];
  depth: number;
  distance: number;
  f_normal: Vec3;
  f_friction: Vec3;
  collided: 0 | 1;
  recording: boolean;
}

export interface ErrorMessage {
  type: "error";
  detail: string;
}

export interface SavedMessage {
  type: "saved";
  path: string;
}

export type ServerMessage = StateMessage | ErrorMessage | SavedMessage;

export type Condition = "fixed" | "1" | "2";
export type DemoGroup = "force" | "visual";

export type ClientMessage =
  | { type: "set_target"; pos: Vec3 }
  | { type: "reset"; condition: Condition; seed: number }
  | { type: "record_start" }
  | { type: "record_stop" }
  | { type: "save_demo"; group: DemoGroup };

function isVec3(v: unknown): v is Vec3 {
  return (
    Array.isArray(v) &&
    v.length === 3 &&
    v.every((x) => typeof x === "number" && Number.isFinite(x))
  );
}

/**
 * Parse one inbound frame. Returns null for frames that are not valid
 * server messages (the client surfaces those as protocol errors rather
 * than crashing the render loop).
 */
export function parseServerMessage(raw: string): ServerMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const msg = data as Record<string, unknown>;
  switch (msg.type) {
    case "state": {
      if (
        typeof msg.tick !== "number" ||
        !isVec3(msg.handler) ||
        !Array.isArray(msg.inner_pose) ||
        msg.inner_pose.length !== 7 ||
        typeof msg.depth !== "number" ||
        typeof msg.distance !== "number" ||
        !isVec3(msg.f_normal) ||
        !isVec3(msg.f_friction) ||
        (msg.collided !== 0 && msg.collided !== 1) ||
        typeof msg.recording !== "boolean"
      ) {
        return null;
      }
      return msg as unknown as StateMessage;
    }
    case "error":
      return typeof msg.detail === "string" ? (msg as unknown as ErrorMessage) : null;
    case "saved":
      return typeof msg.path === "string" ? (msg as unknown as SavedMessage) : null;
    default:
      return null;
  }
}

export function encodeClientMessage(msg: ClientMessage): string {
  return JSON.stringify(msg);
}
