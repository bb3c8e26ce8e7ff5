import { describe, expect, it } from "vitest";

import { SseParser } from "../src/sse.js";

describe("SSE parser", () => {
  it("parses a complete message", () => {
    const parser = new SseParser();
    const messages = parser.feed(
      'id: 3\nevent: task_started\ndata: {"task": 1}\n\n',
    );
    expect(messages).toEqual([
      { id: "3", event: "task_started", data: '{"task": 1}' },
    ]);
  });

  it("handles chunks split mid-line", () => {
    const parser = new SseParser();
    expect(parser.feed("id: 0\neve")).toEqual([]);
    expect(parser.feed("nt: turn_done\nda")).toEqual([]);
    const messages = parser.feed('ta: {"ok": true}\n\n');
    expect(messages).toEqual([{ id: "0", event: "turn_done", data: '{"ok": true}' }]);
  });

  it("ignores keepalive comments", () => {
    const parser = new SseParser();
    expect(parser.feed(": keepalive\n\n")).toEqual([]);
    const messages = parser.feed("id: 1\nevent: x\ndata: {}\n\n");
    expect(messages).toHaveLength(1);
  });

  it("parses several messages in one chunk and tolerates CRLF", () => {
    const parser = new SseParser();
    const messages = parser.feed(
      "id: 0\r\nevent: a\r\ndata: 1\r\n\r\nid: 1\r\nevent: b\r\ndata: 2\r\n\r\n",
    );
    expect(messages.map((m) => m.event)).toEqual(["a", "b"]);
    expect(messages.map((m) => m.data)).toEqual(["1", "2"]);
  });

  it("joins multi-line data fields", () => {
    const parser = new SseParser();
    const messages = parser.feed("event: x\ndata: line1\ndata: line2\n\n");
    expect(messages[0].data).toBe("line1\nline2");
  });
});
