/** Frame parsing: accept exactly the documented shapes, null for the rest. */
import { describe, expect, it } from "vitest";

import {
  ClientMessage,
  encodeClientMessage,
  parseServerMessage,
} from "../src/protocol.js";

const goodState = {
  type: "state",
  tick: 12,
  handler: [-0.4, 0.01, 0],
  inner_pose: [-0.4, 0.01, 0, 1, 0, 0, 0],
  depth: 0.1,
  distance: 0.6,
  f_normal: [0, 1.5, 0],
  f_friction: [0.2, 0, 0],
  collided: 1,
  recording: true,
};

describe("parseServerMessage", () => {
  it("accepts a complete state frame", () => {
    const msg = parseServerMessage(JSON.stringify(goodState));
    expect(msg?.type).toBe("state");
    if (msg?.type === "state") {
      expect(msg.tick).toBe(12);
      expect(msg.f_normal).toEqual([0, 1.5, 0]);
      expect(msg.recording).toBe(true);
    }
  });

  it("accepts error and saved frames", () => {
    expect(parseServerMessage('{"type":"error","detail":"busy"}')).toEqual({
      type: "error",
      detail: "busy",
    });
    expect(parseServerMessage('{"type":"saved","path":"x.jsonl"}')).toEqual({
      type: "saved",
      path: "x.jsonl",
    });
  });

  it.each([
    ["truncated json", '{"type":"state"'],
    ["non-object", "42"],
    ["array", "[1,2,3]"],
    ["unknown type", '{"type":"telemetry"}'],
    ["error without detail", '{"type":"error"}'],
    ["saved without path", '{"type":"saved"}'],
  ])("rejects %s", (_name, raw) => {
    expect(parseServerMessage(raw)).toBeNull();
  });

  it.each([
    ["missing forces", { ...goodState, f_normal: undefined }],
    ["short handler", { ...goodState, handler: [1, 2] }],
    ["non-finite force", { ...goodState, f_friction: [0, null, 0] }],
    ["bad collided", { ...goodState, collided: 2 }],
    ["short pose", { ...goodState, inner_pose: [0, 0, 0, 1] }],
    ["string tick", { ...goodState, tick: "12" }],
  ])("rejects state frame with %s", (_name, frame) => {
    expect(parseServerMessage(JSON.stringify(frame))).toBeNull();
  });
});

describe("encodeClientMessage", () => {
  it("round-trips every message kind", () => {
    const messages: ClientMessage[] = [
      { type: "set_target", pos: [0.1, -0.2, 0.3] },
      { type: "reset", condition: "2", seed: 7 },
      { type: "record_start" },
      { type: "record_stop" },
      { type: "save_demo", group: "visual" },
    ];
    for (const msg of messages) {
      expect(JSON.parse(encodeClientMessage(msg))).toEqual(msg);
    }
  });
});
