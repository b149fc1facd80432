"""Model input assembly: question block + passage with lanes, sliding windows, labels.

Layout of one sequence:

    [CLS] current-question [SEP] history-questions (oldest->newest) [SEP] passage-slice [SEP]

Segment ids are 0 up to and including the second [SEP], 1 after. The
history-answer lane marks passage tokens whose character span intersects a
selected history answer span (1 = inside, 0 = outside). Long passages are
split into overlapping windows that all repeat the question block.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .errors import BuildError, ConfigError
from .quac import Dialogue
from .selector import (
    DEFAULT_MAX_K,
    DEFAULT_THRESHOLD,
    SelectionResult,
    most_recent_turns,
    select_turns,
)
from .tokenizer import NO_SPAN, TokenizedText, Vocabulary, tokenize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InputConfig:
    max_seq_len: int = 384
    doc_stride: int = 128
    max_answer_len: int = 40
    max_history_k: int = 11

    def __post_init__(self):
        if not 0 < self.doc_stride < self.max_seq_len:
            raise ConfigError(f"doc_stride must be in (0, max_seq_len), got {self.doc_stride}")
        if self.max_answer_len < 1:
            raise ConfigError(f"max_answer_len must be >= 1, got {self.max_answer_len}")

    def to_dict(self) -> dict[str, int]:
        return {
            "max_seq_len": self.max_seq_len,
            "doc_stride": self.doc_stride,
            "max_answer_len": self.max_answer_len,
            "max_history_k": self.max_history_k,
        }


@dataclass(frozen=True)
class PreWindowSequence:
    """Question block plus the full tokenized passage, before window splitting."""

    prefix_ids: tuple[int, ...]  # [CLS] question [SEP] history questions [SEP]
    passage_ids: tuple[int, ...]
    passage_hae: tuple[int, ...]
    passage_char_spans: tuple[tuple[int, int], ...]
    sep_id: int


@dataclass(frozen=True)
class EncodedWindow:
    token_ids: tuple[int, ...]
    segment_ids: tuple[int, ...]
    hae_ids: tuple[int, ...]
    position_ids: tuple[int, ...]
    passage_token_range: tuple[int, int]  # window-local (first, last), inclusive
    window_passage_offset: int  # index of this window's first passage token in the full passage
    start_label: int
    end_label: int
    char_spans: tuple[tuple[int, int], ...]  # per window position; NO_SPAN outside the passage

    def __len__(self) -> int:
        return len(self.token_ids)

    def to_dict(self) -> dict[str, Any]:
        return {
            "token_ids": list(self.token_ids),
            "segment_ids": list(self.segment_ids),
            "hae_ids": list(self.hae_ids),
            "position_ids": list(self.position_ids),
            "passage_token_range": list(self.passage_token_range),
            "window_passage_offset": self.window_passage_offset,
            "start_label": self.start_label,
            "end_label": self.end_label,
            "char_spans": [list(s) for s in self.char_spans],
        }


def window_to_json(window: EncodedWindow) -> str:
    return json.dumps(window.to_dict())


def window_from_dict(d: dict[str, Any]) -> EncodedWindow:
    return EncodedWindow(
        token_ids=tuple(d["token_ids"]),
        segment_ids=tuple(d["segment_ids"]),
        hae_ids=tuple(d["hae_ids"]),
        position_ids=tuple(d["position_ids"]),
        passage_token_range=tuple(d["passage_token_range"]),
        window_passage_offset=d["window_passage_offset"],
        start_label=d["start_label"],
        end_label=d["end_label"],
        char_spans=tuple(tuple(s) for s in d["char_spans"]),
    )


def _spans_intersect(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] < b[1] and b[0] < a[1]


def build_sequence(
    current_q: str,
    history_qs: Sequence[str],
    passage: str,
    history_answer_spans: Sequence[tuple[int, int]],
    vocab: Vocabulary,
    cfg: InputConfig,
) -> PreWindowSequence:
    """Assemble the pre-window sequence with segment and history-answer lanes.

    history_qs are ordered oldest->newest. When the question block leaves no
    room for passage tokens, history questions are dropped oldest-first (the
    drop is logged); the current question itself is never truncated here.
    """
    q_tok = tokenize(vocab, current_q)
    history_toks = [tokenize(vocab, hq) for hq in history_qs]

    def prefix_len(n_hist: int) -> int:
        hist = sum(len(t) for t in history_toks[len(history_toks) - n_hist :])
        return 1 + len(q_tok) + 1 + hist + 1  # CLS + q + SEP + history + SEP

    keep = len(history_toks)
    # need room for at least one passage token and the final [SEP]
    while keep > 0 and prefix_len(keep) + 2 > cfg.max_seq_len:
        keep -= 1
    if keep < len(history_toks):
        logger.info(
            "question block over budget: dropped %d oldest history question(s)",
            len(history_toks) - keep,
        )
    kept_toks = history_toks[len(history_toks) - keep :]

    prefix_ids: list[int] = [vocab.cls_id]
    prefix_ids.extend(q_tok.ids)
    prefix_ids.append(vocab.sep_id)
    for t in kept_toks:
        prefix_ids.extend(t.ids)
    prefix_ids.append(vocab.sep_id)

    passage_tok = tokenize(vocab, passage)
    hae = [0] * len(passage_tok)
    for i, span in enumerate(passage_tok.char_spans):
        if any(_spans_intersect(span, ans) for ans in history_answer_spans):
            hae[i] = 1

    return PreWindowSequence(
        prefix_ids=tuple(prefix_ids),
        passage_ids=passage_tok.ids,
        passage_hae=tuple(hae),
        passage_char_spans=passage_tok.char_spans,
        sep_id=vocab.sep_id,
    )


def window_offsets(n_passage: int, capacity: int, doc_stride: int) -> list[int]:
    """Start offsets of the passage slices; every passage token is covered.

    The stride is reduced to the window capacity when the capacity is smaller,
    so coverage holds even for very long question blocks.
    """
    stride = min(doc_stride, capacity)
    offsets = [0]
    while offsets[-1] + capacity < n_passage:
        offsets.append(offsets[-1] + stride)
    return offsets


def windowize(seq: PreWindowSequence, cfg: InputConfig) -> list[EncodedWindow]:
    """Split a pre-window sequence into overlapping EncodedWindows (unlabeled)."""
    capacity = cfg.max_seq_len - len(seq.prefix_ids) - 1
    if capacity < 1:
        raise BuildError(
            f"question block too long: prefix {len(seq.prefix_ids)} + final [SEP] leaves "
            f"no passage capacity within max_seq_len {cfg.max_seq_len}"
        )
    n = len(seq.passage_ids)
    windows: list[EncodedWindow] = []
    for offset in window_offsets(n, capacity, cfg.doc_stride):
        hi = min(offset + capacity, n)
        slice_ids = seq.passage_ids[offset:hi]
        slice_hae = seq.passage_hae[offset:hi]
        slice_spans = seq.passage_char_spans[offset:hi]
        p = len(seq.prefix_ids)
        token_ids = seq.prefix_ids + slice_ids + (seq.sep_id,)
        length = len(token_ids)
        first = p
        last = p + len(slice_ids) - 1  # inclusive; last < first iff the slice is empty
        windows.append(
            EncodedWindow(
                token_ids=token_ids,
                segment_ids=tuple([0] * p + [1] * (len(slice_ids) + 1)),
                hae_ids=tuple([0] * p + list(slice_hae) + [0]),
                position_ids=tuple(range(length)),
                passage_token_range=(first, last),
                window_passage_offset=offset,
                start_label=0,
                end_label=0,
                char_spans=tuple([NO_SPAN] * p + list(slice_spans) + [NO_SPAN]),
            )
        )
    return windows


def label_window(
    window: EncodedWindow,
    gold_char_span: tuple[int, int] | None,
    passage_char_spans: Sequence[tuple[int, int]],
) -> EncodedWindow:
    """Attach start/end labels; (0, 0) = CLS when the answer is absent or split.

    gold_char_span is (char_start, char_end) in passage coordinates, or None
    for unanswerable turns. Labels are set only when the answer's full token
    range lies inside this window.
    """
    if gold_char_span is None:
        return window
    touching = [
        i
        for i, span in enumerate(passage_char_spans)
        if _spans_intersect(span, gold_char_span)
    ]
    if not touching:
        return window
    tok_start, tok_end = touching[0], touching[-1]
    offset = window.window_passage_offset
    first, last = window.passage_token_range
    n_slice = last - first + 1
    if tok_start < offset or tok_end >= offset + n_slice:
        return window
    return EncodedWindow(
        token_ids=window.token_ids,
        segment_ids=window.segment_ids,
        hae_ids=window.hae_ids,
        position_ids=window.position_ids,
        passage_token_range=window.passage_token_range,
        window_passage_offset=window.window_passage_offset,
        start_label=first + (tok_start - offset),
        end_label=first + (tok_end - offset),
        char_spans=window.char_spans,
    )


def build_instance(
    dialogue: Dialogue,
    turn_index: int,
    selection: SelectionResult,
    vocab: Vocabulary,
    cfg: InputConfig,
    labeled: bool = True,
) -> list[EncodedWindow]:
    """Compose selection -> sequence -> windows -> labels for one dialogue turn.

    Selected history turns contribute their question text (prepended) and the
    character span of their first gold answer (marked in the history-answer
    lane). Training labels come from the turn's first gold answer.
    """
    turn = dialogue.turns[turn_index]
    history_qs = [dialogue.turns[i].question for i in selection.selected]
    hae_spans = []
    for i in selection.selected:
        first_gold = dialogue.turns[i].gold_answers[0]
        if not first_gold.is_unanswerable:
            hae_spans.append((first_gold.char_start, first_gold.char_end))
    seq = build_sequence(turn.question, history_qs, dialogue.passage, hae_spans, vocab, cfg)
    windows = windowize(seq, cfg)
    if not labeled:
        return windows
    gold = turn.gold_answers[0]
    gold_span = None if gold.is_unanswerable else (gold.char_start, gold.char_end)
    return [label_window(w, gold_span, seq.passage_char_spans) for w in windows]


def history_pairs(dialogue: Dialogue, turn_index: int) -> list[tuple[str, str]]:
    """(question, first gold answer text) for every turn before turn_index."""
    return [
        (t.question, t.gold_answers[0].text) for t in dialogue.turns[:turn_index]
    ]


def make_selection_fn(
    mode: str,
    vocab: Vocabulary,
    embeddings: np.ndarray | None = None,
    threshold: float = DEFAULT_THRESHOLD,
    max_k: int = DEFAULT_MAX_K,
):
    """History-selection strategy keyed by name.

    "relevance" scores history turns against the current question and needs an
    embedding table; "recent" keeps the max_k most recent turns unconditionally.
    """
    if mode == "relevance":
        if embeddings is None:
            raise ConfigError("relevance selection requires an embedding table")

        def by_relevance(dialogue: Dialogue, turn_index: int) -> SelectionResult:
            return select_turns(
                history_pairs(dialogue, turn_index),
                dialogue.turns[turn_index].question,
                vocab,
                embeddings,
                threshold=threshold,
                max_k=max_k,
            )

        return by_relevance
    if mode == "recent":

        def by_recency(dialogue: Dialogue, turn_index: int) -> SelectionResult:
            return most_recent_turns(turn_index, max_k)

        return by_recency
    raise ConfigError(f"unknown selection mode {mode!r} (expected relevance or recent)")
