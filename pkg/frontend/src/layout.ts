// Layered left-to-right DAG layout: a node's column is one past its deepest
// predecessor, rows within a column sort by task index.

import type { DagWire } from "./types.js";

export interface LaidOutNode {
  index: number;
  fn: string;
  args: string;
  layer: number;
  row: number;
  x: number;
  y: number;
}

export interface Layout {
  nodes: LaidOutNode[];
  layers: number[][];
  edges: [number, number][];
  width: number;
  height: number;
}

export const NODE_W = 150;
export const NODE_H = 44;
const GAP_X = 60;
const GAP_Y = 18;
const MARGIN = 12;

export function layerAssignment(dag: DagWire): Map<number, number> {
  const preds = new Map<number, number[]>();
  for (const node of dag.nodes) preds.set(node.index, []);
  for (const [a, b] of dag.edges) preds.get(b)?.push(a);
  const layer = new Map<number, number>();
  const pending = dag.nodes.map((n) => n.index).sort((a, b) => a - b);
  while (pending.length) {
    let progressed = false;
    for (let i = 0; i < pending.length; i++) {
      const idx = pending[i];
      const ps = preds.get(idx) ?? [];
      if (ps.every((p) => layer.has(p))) {
        layer.set(idx, ps.length ? Math.max(...ps.map((p) => layer.get(p)!)) + 1 : 0);
        pending.splice(i, 1);
        progressed = true;
        break;
      }
    }
    if (!progressed) throw new Error("cycle in served DAG");
  }
  return layer;
}

export function layeredLayout(dag: DagWire): Layout {
  const layerOf = layerAssignment(dag);
  const byLayer = new Map<number, number[]>();
  for (const node of dag.nodes) {
    const l = layerOf.get(node.index)!;
    if (!byLayer.has(l)) byLayer.set(l, []);
    byLayer.get(l)!.push(node.index);
  }
  const layers: number[][] = [];
  for (const l of [...byLayer.keys()].sort((a, b) => a - b)) {
    layers.push(byLayer.get(l)!.sort((a, b) => a - b));
  }
  const nodes: LaidOutNode[] = [];
  for (const node of dag.nodes) {
    const l = layerOf.get(node.index)!;
    const row = layers[l].indexOf(node.index);
    nodes.push({
      index: node.index,
      fn: node.function,
      args: node.args,
      layer: l,
      row,
      x: MARGIN + l * (NODE_W + GAP_X),
      y: MARGIN + row * (NODE_H + GAP_Y),
    });
  }
  const maxRows = Math.max(1, ...layers.map((l) => l.length));
  return {
    nodes,
    layers,
    edges: dag.edges,
    width: MARGIN * 2 + layers.length * NODE_W + (layers.length - 1) * GAP_X,
    height: MARGIN * 2 + maxRows * NODE_H + (maxRows - 1) * GAP_Y,
  };
}
