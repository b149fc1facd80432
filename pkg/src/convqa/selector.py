"""Relevance-based selection of dialogue history turns.

Each history turn (question + answer text) and the current question are
represented as mean-pooled token embeddings; turns are scored against the
question with cosine similarity, the scores are softmax-normalized for
reporting, and turns at or above the threshold are kept (capped at the
max_k most recent qualifying turns).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import UsageError
from .tokenizer import UNK, Vocabulary, tokenize

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5
DEFAULT_MAX_K = 11


@dataclass(frozen=True)
class TurnRepresentation:
    vector: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.vector)):
            raise UsageError("turn representation must be finite")


@dataclass(frozen=True)
class SelectionResult:
    """Per-turn relevance scores and the retained turn set (oldest -> newest)."""

    scores: tuple[float, ...]
    probabilities: tuple[float, ...]
    selected: tuple[int, ...]
    threshold: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "scores": list(self.scores),
            "probabilities": list(self.probabilities),
            "selected": list(self.selected),
            "threshold": self.threshold,
        }


def embed_turn(text: str, vocab: Vocabulary, embeddings: np.ndarray) -> TurnRepresentation:
    """Mean of token-embedding rows, excluding specials; falls back to the [UNK] row."""
    if embeddings.shape[0] != len(vocab):
        raise UsageError(
            f"embedding table has {embeddings.shape[0]} rows but vocabulary has {len(vocab)} entries"
        )
    tokenized = tokenize(vocab, text)
    rows = [vocab.token_to_id[t] for t in tokenized.tokens if t != UNK]
    if not rows:
        return TurnRepresentation(vector=embeddings[vocab.unk_id].copy())
    return TurnRepresentation(vector=embeddings[rows].mean(axis=0))


def relevance_score(h: TurnRepresentation, q: TurnRepresentation) -> float:
    """Cosine similarity in [-1, 1]; zero vectors score 0."""
    if h.vector.shape != q.vector.shape:
        raise UsageError(f"dimension mismatch: {h.vector.shape} vs {q.vector.shape}")
    nh = float(np.linalg.norm(h.vector))
    nq = float(np.linalg.norm(q.vector))
    if nh == 0.0 or nq == 0.0:
        logger.debug("zero vector in relevance_score; returning 0")
        return 0.0
    cos = float(np.dot(h.vector, q.vector) / (nh * nq))
    # floating point can nudge past the bound; the contract is [-1, 1]
    return max(-1.0, min(1.0, cos))


def normalize_scores(scores: Sequence[float]) -> list[float]:
    """Softmax with max-subtraction; output sums to 1."""
    if len(scores) == 0:
        raise UsageError("normalize_scores requires at least one score")
    arr = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise UsageError("scores must be finite")
    shifted = arr - arr.max()
    exp = np.exp(shifted)
    return list(exp / exp.sum())


def select_turns(
    history: Sequence[tuple[str, str]],
    current_q: str,
    vocab: Vocabulary,
    embeddings: np.ndarray,
    threshold: float = DEFAULT_THRESHOLD,
    max_k: int = DEFAULT_MAX_K,
) -> SelectionResult:
    """Score every (question, answer) history turn against the current question.

    A turn is represented as the concatenation "question answer". Raw cosine
    scores are compared against the threshold; qualifying turns are capped at
    the max_k most recent, preserving chronological order. Probabilities are
    softmax over all turns, reported for inspection.
    """
    if max_k < 0:
        raise UsageError(f"max_k must be >= 0, got {max_k}")
    if not -1.0 <= threshold <= 1.0:
        raise UsageError(f"threshold must be in [-1, 1], got {threshold}")
    if not history:
        return SelectionResult(scores=(), probabilities=(), selected=(), threshold=threshold)

    q_repr = embed_turn(current_q, vocab, embeddings)
    scores = []
    for question, answer in history:
        text = f"{question} {answer}".strip()
        scores.append(relevance_score(embed_turn(text, vocab, embeddings), q_repr))
    probabilities = normalize_scores(scores)
    qualifying = [i for i, s in enumerate(scores) if s >= threshold]
    selected = tuple(qualifying[-max_k:]) if max_k else ()
    return SelectionResult(
        scores=tuple(scores),
        probabilities=tuple(probabilities),
        selected=selected,
        threshold=threshold,
    )


def most_recent_turns(history_len: int, k: int) -> SelectionResult:
    """Selector-off baseline: keep the k most recent turns unconditionally."""
    selected = tuple(range(max(0, history_len - k), history_len))
    uniform = 1.0 / history_len if history_len else 0.0
    return SelectionResult(
        scores=tuple(0.0 for _ in range(history_len)),
        probabilities=tuple(uniform for _ in range(history_len)),
        selected=selected,
        threshold=-1.0,
    )
