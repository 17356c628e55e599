// DOM construction for chat turns and the source side panel. Pure
// build-and-return functions so tests can assert on detached elements.

import type { SourceResponse } from "./api.js";
import type { ChatTurn, SessionState } from "./state.js";
import { formatLatency, formatScore } from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export function renderTurn(
  turn: ChatTurn,
  onSource: (nodeId: string) => void,
): HTMLElement {
  const root = el("article", `turn turn-${turn.kind}`);
  root.appendChild(el("p", "turn-query", turn.query));

  if (turn.kind === "error") {
    root.appendChild(el("p", "turn-error-message", turn.message));
    return root;
  }

  const response = turn.response;
  const meta = el("div", "answer-meta");
  meta.appendChild(
    el("span", `mode-badge mode-${response.mode}`, response.mode.toUpperCase()),
  );
  meta.appendChild(el("span", "top-score", `score ${formatScore(response.top_score)}`));
  meta.appendChild(el("span", "latency", formatLatency(response.latency_ms)));
  root.appendChild(meta);

  root.appendChild(el("p", "answer-text", response.answer));

  const chips = el("div", "source-chips");
  for (const hit of response.sources) {
    const chip = el("button", "source-chip", hit.node_id);
    chip.type = "button";
    chip.dataset.nodeId = hit.node_id;
    chip.title = `${hit.qa_id} · score ${formatScore(hit.score)}`;
    chip.addEventListener("click", () => onSource(hit.node_id));
    chips.appendChild(chip);
  }
  root.appendChild(chips);
  return root;
}

export function renderTurns(
  container: HTMLElement,
  state: SessionState,
  onSource: (nodeId: string) => void,
): void {
  container.replaceChildren(
    ...state.turns.map((turn) => renderTurn(turn, onSource)),
  );
}

export function renderSourcePanel(source: SourceResponse): HTMLElement {
  const root = el("section", "source-detail");
  root.appendChild(el("h3", "source-title", source.node_id));
  const shape = source.is_leaf ? "leaf" : `summary, level ${source.level}`;
  root.appendChild(
    el(
      "p",
      "source-meta",
      `${source.doc_id} · ${shape} · ${source.token_count} tokens`,
    ),
  );
  root.appendChild(el("pre", "source-text", source.text));

  const list = el("ul", "source-elements");
  for (const element of source.elements) {
    const parts = [element.element_id];
    if (element.kind !== undefined) {
      parts.push(element.kind);
    }
    if (element.provenance !== undefined) {
      parts.push(element.provenance);
    }
    if (element.page !== undefined) {
      parts.push(`page ${element.page}`);
    }
    list.appendChild(el("li", "source-element", parts.join(" · ")));
  }
  root.appendChild(list);
  return root;
}

export function renderPanelError(message: string): HTMLElement {
  return el("p", "source-error", message);
}
