// Deterministic HTML rendering of the view state. Pure string builders so
// that a replayed event log snapshots byte-for-byte.

import { layeredLayout, NODE_H, NODE_W } from "./layout.js";
import type { DagWire, RetrievalInfo, ToolInfo } from "./types.js";
import type { TaskStatus, TurnView, ViewState } from "./viewmodel.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function renderCatalog(tools: ToolInfo[]): string {
  const rows = tools
    .map(
      (t) =>
        `<li class="tool"><code>${escapeHtml(t.name)}</code>` +
        `<span class="tool-desc">${escapeHtml(t.description)}</span></li>`,
    )
    .join("");
  return `<ul class="catalog" data-count="${tools.length}">${rows}</ul>`;
}

export function renderRetrievalBars(retrieval: RetrievalInfo): string {
  const names = Object.keys(retrieval.probabilities);
  const selected = new Set(retrieval.selected);
  const rows = names
    .map((name) => {
      const p = retrieval.probabilities[name];
      const pct = Math.round(p * 1000) / 10;
      const cls = selected.has(name) ? "bar selected" : "bar";
      return (
        `<div class="${cls}" data-tool="${escapeHtml(name)}">` +
        `<span class="bar-label">${escapeHtml(name)}</span>` +
        `<span class="bar-track"><span class="bar-fill" style="width:${pct}%"></span></span>` +
        `<span class="bar-value">${p.toFixed(2)}</span></div>`
      );
    })
    .join("");
  const note = retrieval.fallback_used ? `<p class="fallback">fell back to top-1</p>` : "";
  return `<div class="retrieval" data-method="${escapeHtml(retrieval.method)}">${rows}${note}</div>`;
}

function nodeClass(status: TaskStatus | undefined): string {
  return `dag-node status-${status ?? "pending"}`;
}

export function renderDag(
  dag: DagWire,
  taskStatus: Record<number, TaskStatus>,
  failureReasons: Record<number, string>,
): string {
  const layout = layeredLayout(dag);
  const byIndex = new Map(layout.nodes.map((n) => [n.index, n]));
  const edges = layout.edges
    .map(([a, b]) => {
      const from = byIndex.get(a)!;
      const to = byIndex.get(b)!;
      const x1 = from.x + NODE_W;
      const y1 = from.y + NODE_H / 2;
      const x2 = to.x;
      const y2 = to.y + NODE_H / 2;
      return `<line class="dag-edge" data-edge="${a}-${b}" x1="${x1}" y1="${y1}" x2="${x2}" y2="${y2}" marker-end="url(#arrow)"/>`;
    })
    .join("");
  const nodes = layout.nodes
    .map((n) => {
      const reason = failureReasons[n.index];
      const title = reason ? `<title>${escapeHtml(reason)}</title>` : "";
      return (
        `<g class="${nodeClass(taskStatus[n.index])}" data-task="${n.index}" transform="translate(${n.x},${n.y})">` +
        title +
        `<rect width="${NODE_W}" height="${NODE_H}" rx="6"/>` +
        `<text class="dag-index" x="10" y="18">$${n.index}</text>` +
        `<text class="dag-fn" x="10" y="34">${escapeHtml(n.fn)}</text>` +
        `</g>`
      );
    })
    .join("");
  return (
    `<svg class="dag" viewBox="0 0 ${layout.width} ${layout.height}" width="${layout.width}" height="${layout.height}">` +
    `<defs><marker id="arrow" viewBox="0 0 8 8" refX="7" refY="4" markerWidth="7" markerHeight="7" orient="auto"><path d="M0,0 L8,4 L0,8 z"/></marker></defs>` +
    edges +
    nodes +
    `</svg>`
  );
}

export function renderTurn(turn: TurnView): string {
  const parts: string[] = [];
  parts.push(`<p class="query">${escapeHtml(turn.query)}</p>`);
  if (turn.retrieval) parts.push(renderRetrievalBars(turn.retrieval));
  if (turn.planText !== null) {
    parts.push(`<pre class="plan">${escapeHtml(turn.planText)}</pre>`);
  }
  if (turn.parseErrors.length) {
    const items = turn.parseErrors
      .map((e) => `<li>${escapeHtml(e)}</li>`)
      .join("");
    parts.push(`<ul class="issues parse-errors">${items}</ul>`);
  }
  if (turn.issues.length) {
    const items = turn.issues
      .map(
        (i) =>
          `<li>task ${i.task_index}: ${escapeHtml(i.kind)} - ${escapeHtml(i.detail)}</li>`,
      )
      .join("");
    parts.push(`<ul class="issues">${items}</ul>`);
  }
  if (turn.dag) parts.push(renderDag(turn.dag, turn.taskStatus, turn.failureReasons));
  if (turn.status === "awaiting_approval") {
    parts.push(
      `<div class="approval">` +
        `<button class="approve" data-action="approve" data-turn="${escapeHtml(turn.turnId)}">Approve</button>` +
        `<button class="decline" data-action="decline" data-turn="${escapeHtml(turn.turnId)}">Decline</button>` +
        `</div>`,
    );
  }
  if (turn.timings) {
    parts.push(
      `<p class="timings">retrieval ${turn.timings.retrieval_ms.toFixed(1)}ms / ` +
        `planner ${turn.timings.backend_ms.toFixed(1)}ms / ` +
        `exec ${turn.timings.exec_ms.toFixed(1)}ms</p>`,
    );
  }
  return (
    `<article class="turn status-${turn.status}" data-turn="${escapeHtml(turn.turnId)}">` +
    parts.join("") +
    `<footer class="turn-status">${escapeHtml(turn.status)}</footer>` +
    `</article>`
  );
}

export function renderTranscript(state: ViewState): string {
  const turns = state.turns.map(renderTurn).join("");
  const digest = state.stateDigest
    ? `<p class="digest">device state <code>${escapeHtml(state.stateDigest.slice(0, 12))}</code></p>`
    : "";
  return `<section class="transcript" data-turns="${state.turns.length}">${turns}${digest}</section>`;
}
