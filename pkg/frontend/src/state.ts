// Session state lives entirely in the browser tab: it survives re-renders
// because rendering only reads it, and it deliberately dies on page reload.

import type { QueryResponse } from "./api.js";

export interface AnswerTurn {
  kind: "answer";
  query: string;
  response: QueryResponse;
  timestamp: number;
}

export interface ErrorTurn {
  kind: "error";
  query: string;
  message: string;
  timestamp: number;
}

export type ChatTurn = AnswerTurn | ErrorTurn;

export interface SessionState {
  readonly turns: readonly ChatTurn[];
  readonly inFlight: boolean;
}

export function newSession(): SessionState {
  return { turns: [], inFlight: false };
}

/** One query in flight per session: the send control must stay disabled
 *  until the previous request settles. */
export function beginQuery(state: SessionState): SessionState {
  if (state.inFlight) {
    throw new Error("a query is already in flight");
  }
  return { ...state, inFlight: true };
}

export function recordAnswer(
  state: SessionState,
  query: string,
  response: QueryResponse,
  timestamp: number = Date.now(),
): SessionState {
  return {
    turns: [...state.turns, { kind: "answer", query, response, timestamp }],
    inFlight: false,
  };
}

/** Failed requests become visible turns; they are never silently dropped. */
export function recordError(
  state: SessionState,
  query: string,
  message: string,
  timestamp: number = Date.now(),
): SessionState {
  return {
    turns: [...state.turns, { kind: "error", query, message, timestamp }],
    inFlight: false,
  };
}

export interface DirectRatio {
  direct: number;
  answered: number;
}

export function directRatio(state: SessionState): DirectRatio {
  let direct = 0;
  let answered = 0;
  for (const turn of state.turns) {
    if (turn.kind !== "answer") {
      continue;
    }
    answered += 1;
    if (turn.response.mode === "direct") {
      direct += 1;
    }
  }
  return { direct, answered };
}

export function formatRatio(ratio: DirectRatio): string {
  if (ratio.answered === 0) {
    return "—";
  }
  const percent = Math.round((100 * ratio.direct) / ratio.answered);
  return `${ratio.direct}/${ratio.answered} direct (${percent}%)`;
}

export function formatScore(score: number): string {
  return score.toFixed(3);
}

export function formatLatency(ms: number): string {
  return ms >= 100 ? `${Math.round(ms)} ms` : `${ms.toFixed(1)} ms`;
}
