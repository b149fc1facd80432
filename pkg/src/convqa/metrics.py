"""Span decoding and evaluation: word-overlap F1, human-equivalence rates.

Answers are normalized before scoring: lowercased, punctuation removed,
whitespace collapsed. Every surviving token counts toward the bag-of-words
overlap (articles included; "a b c" vs "b c d" is exactly 2/3). F1 is the max
over reference answers, and the unanswerable sentinel only matches itself. A
prediction beats the human bar on a question when its F1 reaches the
leave-one-out human F1.
"""

from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .encoding import EncodedWindow, InputConfig, build_instance
from .errors import UsageError
from .model import ModelConfig, forward_window
from .quac import UNANSWERABLE, Corpus, Dialogue
from .selector import SelectionResult
from .tokenizer import Vocabulary


def normalize_answer(text: str) -> str:
    text = text.lower()
    text = "".join(ch for ch in text if ch not in string.punctuation)
    return " ".join(text.split())


def _pair_f1(prediction: str, reference: str) -> float:
    if prediction == UNANSWERABLE or reference == UNANSWERABLE:
        return 1.0 if prediction == reference else 0.0
    pred_tokens = normalize_answer(prediction).split()
    ref_tokens = normalize_answer(reference).split()
    if not pred_tokens and not ref_tokens:
        return 1.0
    if not pred_tokens or not ref_tokens:
        return 0.0
    overlap = sum((Counter(pred_tokens) & Counter(ref_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(ref_tokens)
    return 2 * precision * recall / (precision + recall)


def word_f1(prediction: str, references: Sequence[str]) -> float:
    """Max word-overlap F1 of the prediction against any reference."""
    if not references:
        raise UsageError("word_f1 needs at least one reference")
    return max(_pair_f1(prediction, ref) for ref in references)


def human_f1(references: Sequence[str]) -> float:
    """Leave-one-out agreement between references; 1.0 with fewer than two."""
    if len(references) < 2:
        return 1.0
    scores = []
    for i, ref in enumerate(references):
        rest = [r for j, r in enumerate(references) if j != i]
        scores.append(word_f1(ref, rest))
    return sum(scores) / len(scores)


def heq(
    f1s: Sequence[float], human_f1s: Sequence[float], dialogue_ids: Sequence[str]
) -> tuple[float, float]:
    """Percent of questions, and of whole dialogues, at or above the human bar."""
    if not (len(f1s) == len(human_f1s) == len(dialogue_ids)):
        raise UsageError("heq needs one f1, one human bar, and one dialogue id per question")
    if not f1s:
        raise UsageError("heq needs at least one question")
    met = [f >= h for f, h in zip(f1s, human_f1s)]
    per_dialogue: dict[str, bool] = {}
    for ok, did in zip(met, dialogue_ids):
        per_dialogue[did] = per_dialogue.get(did, True) and ok
    heq_q = 100.0 * sum(met) / len(met)
    heq_d = 100.0 * sum(per_dialogue.values()) / len(per_dialogue)
    return heq_q, heq_d


@dataclass(frozen=True)
class SpanPrediction:
    text: str
    char_span: tuple[int, int] | None  # half-open passage offsets
    window_index: int
    token_start: int
    token_end: int
    span_score: float
    cls_score: float
    cannot_answer: bool
    per_window_scores: tuple[tuple[float, float], ...]  # (best span, cls) per window

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "char_span": list(self.char_span) if self.char_span else None,
            "window_index": self.window_index,
            "token_start": self.token_start,
            "token_end": self.token_end,
            "span_score": self.span_score,
            "cls_score": self.cls_score,
            "cannot_answer": self.cannot_answer,
            "per_window_scores": [list(p) for p in self.per_window_scores],
        }


def decode_span(
    windows: Sequence[EncodedWindow],
    start_scores: Sequence[np.ndarray],
    end_scores: Sequence[np.ndarray],
    passage: str,
    max_answer_len: int,
) -> SpanPrediction:
    """Best answer across a question's windows.

    Maximizes start[i] + end[j] over i <= j, j - i + 1 <= max_answer_len, with
    both endpoints inside the window's passage slice. Ties break toward the
    earlier window, then the smaller start, then the smaller end. Position 0
    wins only when its score strictly exceeds every span's.
    """
    if len(windows) != len(start_scores) or len(windows) != len(end_scores):
        raise UsageError("one score vector per window is required")
    if not windows:
        raise UsageError("decode_span needs at least one window")

    best: tuple[float, int, int, int] | None = None  # score, window, i, j
    best_cls = -np.inf
    per_window: list[tuple[float, float]] = []
    for w_idx, (window, starts, ends) in enumerate(zip(windows, start_scores, end_scores)):
        cls_score = float(starts[0] + ends[0])
        best_cls = max(best_cls, cls_score)
        first, last = window.passage_token_range
        window_best = -np.inf
        for i in range(first, last + 1):
            j_hi = min(last, i + max_answer_len - 1)
            for j in range(i, j_hi + 1):
                score = float(starts[i] + ends[j])
                window_best = max(window_best, score)
                if best is None or score > best[0]:
                    best = (score, w_idx, i, j)
        per_window.append((window_best, cls_score))

    if best is None or best_cls > best[0]:
        win = int(np.argmax([c for _, c in per_window]))
        return SpanPrediction(
            text=UNANSWERABLE,
            char_span=None,
            window_index=win,
            token_start=0,
            token_end=0,
            span_score=-np.inf if best is None else best[0],
            cls_score=best_cls,
            cannot_answer=True,
            per_window_scores=tuple(per_window),
        )

    score, w_idx, i, j = best
    window = windows[w_idx]
    char_start = window.char_spans[i][0]
    char_end = window.char_spans[j][1]
    return SpanPrediction(
        text=passage[char_start:char_end],
        char_span=(char_start, char_end),
        window_index=w_idx,
        token_start=i,
        token_end=j,
        span_score=score,
        cls_score=best_cls,
        cannot_answer=False,
        per_window_scores=tuple(per_window),
    )


@dataclass(frozen=True)
class QuestionResult:
    dialogue_id: str
    turn_index: int
    question: str
    predicted_text: str
    char_span: tuple[int, int] | None
    gold_texts: tuple[str, ...]
    f1: float
    human_f1: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "dialogue_id": self.dialogue_id,
            "turn_index": self.turn_index,
            "question": self.question,
            "predicted_text": self.predicted_text,
            "char_span": list(self.char_span) if self.char_span else None,
            "gold_texts": list(self.gold_texts),
            "f1": self.f1,
            "human_f1": self.human_f1,
        }


@dataclass(frozen=True)
class EvalReport:
    f1: float  # percent
    heq_q: float  # percent
    heq_d: float  # percent
    n_questions: int
    n_dialogues: int
    results: tuple[QuestionResult, ...]

    def summary_dict(self) -> dict[str, Any]:
        return {
            "f1": self.f1,
            "heq_q": self.heq_q,
            "heq_d": self.heq_d,
            "n_questions": self.n_questions,
            "n_dialogues": self.n_dialogues,
        }


SelectionFn = Callable[[Dialogue, int], SelectionResult]


def predict_turn(
    params: dict,
    model_cfg: ModelConfig,
    input_cfg: InputConfig,
    vocab: Vocabulary,
    dialogue: Dialogue,
    turn_index: int,
    selection: SelectionResult,
) -> SpanPrediction:
    """Run the model on one turn and decode the answer."""
    windows = build_instance(dialogue, turn_index, selection, vocab, input_cfg, labeled=False)
    starts, ends = [], []
    for window in windows:
        s, e = forward_window(params, model_cfg, window)
        starts.append(s.data)
        ends.append(e.data)
    return decode_span(windows, starts, ends, dialogue.passage, input_cfg.max_answer_len)


def evaluate_corpus(
    params: dict,
    model_cfg: ModelConfig,
    input_cfg: InputConfig,
    vocab: Vocabulary,
    corpus: Corpus,
    selection_fn: SelectionFn,
) -> EvalReport:
    results: list[QuestionResult] = []
    for dialogue in corpus.dialogues:
        for turn in dialogue.turns:
            selection = selection_fn(dialogue, turn.turn_index)
            pred = predict_turn(
                params, model_cfg, input_cfg, vocab, dialogue, turn.turn_index, selection
            )
            gold_texts = tuple(a.text for a in turn.gold_answers)
            score = word_f1(pred.text, gold_texts)
            bar = human_f1(gold_texts)
            results.append(
                QuestionResult(
                    dialogue_id=dialogue.id,
                    turn_index=turn.turn_index,
                    question=turn.question,
                    predicted_text=pred.text,
                    char_span=pred.char_span,
                    gold_texts=gold_texts,
                    f1=score,
                    human_f1=bar,
                )
            )

    n_q = len(results)
    n_d = len(corpus.dialogues)
    mean_f1 = 100.0 * sum(r.f1 for r in results) / n_q if n_q else 0.0
    if n_q:
        heq_q, heq_d = heq(
            [r.f1 for r in results],
            [r.human_f1 for r in results],
            [r.dialogue_id for r in results],
        )
    else:
        heq_q = heq_d = 0.0
    return EvalReport(
        f1=mean_f1,
        heq_q=heq_q,
        heq_d=heq_d,
        n_questions=n_q,
        n_dialogues=n_d,
        results=tuple(results),
    )


def write_predictions_jsonl(report: EvalReport, path: str | Path) -> None:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for r in report.results:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
