/** View state, derived purely from API responses.
 *
 * Everything here is computable from a session transcript alone, so a page
 * reload that refetches GET /sessions/{id} rebuilds the exact same view.
 */

import type { SelectionTrace, SessionTranscript, TurnRecord } from "./api.js";

export const MAX_TURNS = 12;

export interface ViewTurn {
  question: string;
  answer: string;
  charSpan: [number, number] | null;
  cannotAnswer: boolean;
  selection: SelectionTrace;
}

export interface ViewSession {
  sessionId: string;
  title: string;
  passage: string;
  turns: ViewTurn[];
}

export interface AppState {
  session: ViewSession | null;
  pending: boolean;
  capped: boolean;
  error: string | null;
}

export function initialState(): AppState {
  return { session: null, pending: false, capped: false, error: null };
}

/** Highlight ranges must stay inside the passage no matter what the wire says. */
export function clampSpan(
  span: [number, number] | null,
  passageLength: number,
): [number, number] | null {
  if (span === null) {
    return null;
  }
  const start = Math.max(0, Math.min(span[0], passageLength));
  const end = Math.max(start, Math.min(span[1], passageLength));
  return [start, end];
}

function toViewTurn(turn: TurnRecord, passageLength: number): ViewTurn {
  return {
    question: turn.question,
    answer: turn.answer,
    charSpan: turn.cannot_answer ? null : clampSpan(turn.char_span, passageLength),
    cannotAnswer: turn.cannot_answer,
    selection: turn.selection,
  };
}

export function newSession(sessionId: string, passage: string, title: string): ViewSession {
  return { sessionId, title, passage, turns: [] };
}

export function fromTranscript(view: SessionTranscript): ViewSession {
  const ordered = [...view.turns].sort((a, b) => a.turn_index - b.turn_index);
  return {
    sessionId: view.session_id,
    title: view.title,
    passage: view.passage,
    turns: ordered.map((t) => toViewTurn(t, view.passage.length)),
  };
}

export function appendTurn(session: ViewSession, turn: TurnRecord): ViewSession {
  return { ...session, turns: [...session.turns, toViewTurn(turn, session.passage.length)] };
}

/** The passage highlight tracks the most recent answer; a refusal clears it. */
export function highlightRange(session: ViewSession): [number, number] | null {
  const last = session.turns[session.turns.length - 1];
  if (last === undefined || last.cannotAnswer) {
    return null;
  }
  return last.charSpan;
}

export function atCap(session: ViewSession | null): boolean {
  return session !== null && session.turns.length >= MAX_TURNS;
}

export function keptSet(selection: SelectionTrace): Set<number> {
  return new Set(selection.selected);
}
