/** HTML builders. Pure string assembly; listeners are attached by the controller. */

import type { AppState, ViewSession, ViewTurn } from "./state.js";
import { atCap, highlightRange, keptSet, MAX_TURNS } from "./state.js";

const ESCAPES: Record<string, string> = {
  "&": "&amp;",
  "<": "&lt;",
  ">": "&gt;",
  '"': "&quot;",
  "'": "&#39;",
};

export function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (ch) => ESCAPES[ch] as string);
}

/** Map a cosine score on [-1, 1] to a bar percentage. */
function barPercent(score: number): number {
  const clamped = Math.max(-1, Math.min(1, score));
  return ((clamped + 1) / 2) * 100;
}

export function passageHtml(session: ViewSession): string {
  const range = highlightRange(session);
  const text = session.passage;
  if (range === null || range[0] >= range[1]) {
    return escapeHtml(text);
  }
  const [start, end] = range;
  return (
    escapeHtml(text.slice(0, start)) +
    `<mark class="answer-highlight">${escapeHtml(text.slice(start, end))}</mark>` +
    escapeHtml(text.slice(end))
  );
}

function bubblePair(turn: ViewTurn): string {
  const question = `<div class="bubble user">${escapeHtml(turn.question)}</div>`;
  const answer = turn.cannotAnswer
    ? `<div class="bubble no-answer">No answer found in the passage</div>`
    : `<div class="bubble answer">${escapeHtml(turn.answer)}</div>`;
  return `<div class="exchange">${question}${answer}</div>`;
}

export function conversationHtml(session: ViewSession): string {
  return session.turns.map(bubblePair).join("");
}

/**
 * Selection trace of the latest turn: one row per history turn with its raw
 * cosine score, the 0.5 threshold tick, a kept/filtered badge, and the
 * softmax probability as a tooltip.
 */
export function inspectorHtml(session: ViewSession): string {
  const last = session.turns[session.turns.length - 1];
  if (last === undefined) {
    return `<p class="inspector-empty">Ask a question to see the selection trace.</p>`;
  }
  const sel = last.selection;
  if (sel.scores.length === 0) {
    return `<p class="inspector-empty">First turn: no history to select from.</p>`;
  }
  const kept = keptSet(sel);
  const thresholdPct = barPercent(sel.threshold).toFixed(1);
  const rows = sel.scores.map((score, i) => {
    const badge = kept.has(i)
      ? `<span class="badge kept">kept</span>`
      : `<span class="badge filtered">filtered</span>`;
    const probability = sel.probabilities[i] ?? 0;
    const question = session.turns[i]?.question ?? "";
    return `<div class="inspector-row" data-turn="${i}" title="p = ${probability.toFixed(4)}">
  <span class="row-question">${i + 1}. ${escapeHtml(question)}</span>
  <span class="score-bar">
    <span class="score-fill" style="width: ${barPercent(score).toFixed(1)}%"></span>
    <span class="threshold-tick" style="left: ${thresholdPct}%"></span>
  </span>
  <span class="score-value">${score.toFixed(2)}</span>
  ${badge}
</div>`;
  });
  return rows.join("\n");
}

function startPanelHtml(): string {
  return `<section class="start-panel">
  <h2>Start a session</h2>
  <label for="title-input">Title</label>
  <input id="title-input" type="text" placeholder="optional" />
  <label for="passage-input">Passage</label>
  <textarea id="passage-input" rows="8" placeholder="Paste the passage to ask about"></textarea>
  <div class="start-actions">
    <button id="sample-btn" type="button">Use sample passage</button>
    <button id="start-btn" type="button" disabled>Start</button>
  </div>
</section>`;
}

function chatPanelHtml(state: AppState): string {
  const session = state.session as ViewSession;
  const capped = state.capped || atCap(session);
  const askDisabled = state.pending || capped ? " disabled" : "";
  const capNote = capped
    ? `<p class="cap-note">This session reached the ${MAX_TURNS}-turn cap. Start a new session to keep going.</p>`
    : "";
  const pendingNote = state.pending ? `<p class="pending-note">Thinking&hellip;</p>` : "";
  return `<section class="chat-panel">
  <div class="chat-column">
    <div class="conversation">${conversationHtml(session)}</div>
    ${pendingNote}
    ${capNote}
    <form id="ask-form">
      <input id="question-input" type="text" placeholder="Ask a question" autocomplete="off"${askDisabled} />
      <button id="ask-btn" type="submit"${askDisabled}>Ask</button>
    </form>
  </div>
  <aside class="side-column">
    <h3>${session.title ? escapeHtml(session.title) : "Passage"}</h3>
    <p class="passage-pane">${passageHtml(session)}</p>
    <h3>History selection</h3>
    <div class="inspector">${inspectorHtml(session)}</div>
    <button id="end-btn" type="button">End session</button>
  </aside>
</section>`;
}

export function appHtml(state: AppState): string {
  const banner = state.error
    ? `<div class="error-banner" role="alert">${escapeHtml(state.error)} <button id="retry-btn" type="button">Retry</button></div>`
    : "";
  const body = state.session === null ? startPanelHtml() : chatPanelHtml(state);
  return banner + body;
}

export function render(state: AppState, root: HTMLElement): void {
  root.innerHTML = appHtml(state);
}
