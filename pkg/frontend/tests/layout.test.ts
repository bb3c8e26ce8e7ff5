import { describe, expect, it } from "vitest";

import { layerAssignment, layeredLayout } from "../src/layout.js";
import { renderDag } from "../src/render.js";
import type { DagWire } from "../src/types.js";

const fanin: DagWire = {
  nodes: [
    { index: 1, function: "get_email_address", args: 'name="Sid"' },
    { index: 2, function: "get_email_address", args: 'name="Lutfi"' },
    { index: 3, function: "create_calendar_event", args: 'title="Meeting"' },
  ],
  edges: [
    [1, 3],
    [2, 3],
  ],
};

describe("layered layout", () => {
  it("puts fan-in sources left of the sink", () => {
    const layout = layeredLayout(fanin);
    expect(layout.layers).toEqual([[1, 2], [3]]);
    const byIndex = new Map(layout.nodes.map((n) => [n.index, n]));
    expect(byIndex.get(1)!.x).toBeLessThan(byIndex.get(3)!.x);
    expect(byIndex.get(2)!.x).toBe(byIndex.get(1)!.x);
  });

  it("lays a chain out as one column per node", () => {
    const chain: DagWire = {
      nodes: [
        { index: 1, function: "read_file", args: "" },
        { index: 2, function: "create_note", args: "" },
        { index: 3, function: "append_note_content", args: "" },
      ],
      edges: [
        [1, 2],
        [2, 3],
      ],
    };
    expect(layeredLayout(chain).layers).toEqual([[1], [2], [3]]);
  });

  it("assigns isolated nodes to layer zero", () => {
    const dag: DagWire = {
      nodes: [
        { index: 1, function: "a", args: "" },
        { index: 2, function: "b", args: "" },
      ],
      edges: [],
    };
    const layers = layerAssignment(dag);
    expect(layers.get(1)).toBe(0);
    expect(layers.get(2)).toBe(0);
  });

  it("rejects cyclic wire data", () => {
    const bad: DagWire = {
      nodes: [
        { index: 1, function: "a", args: "" },
        { index: 2, function: "b", args: "" },
      ],
      edges: [
        [1, 2],
        [2, 1],
      ],
    };
    expect(() => layeredLayout(bad)).toThrow();
  });
});

describe("DAG rendering fidelity", () => {
  it("renders exactly the served node and edge sets", () => {
    const html = renderDag(fanin, { 1: "done", 2: "running", 3: "pending" }, {});
    const nodeMatches = [...html.matchAll(/data-task="(\d+)"/g)].map((m) =>
      Number(m[1]),
    );
    expect(nodeMatches.sort()).toEqual([1, 2, 3]);
    const edgeMatches = [...html.matchAll(/data-edge="(\d+)-(\d+)"/g)].map((m) => [
      Number(m[1]),
      Number(m[2]),
    ]);
    expect(edgeMatches).toEqual(fanin.edges);
    expect(html).toContain("status-done");
    expect(html).toContain("status-running");
    expect(html).toContain("status-pending");
  });
});
