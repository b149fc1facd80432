"""QuAC-format corpus parsing, validation, stats, and serialization.

The external input format is QuAC v0.2 JSON (top-level "data" array with
nested paragraphs/qas). Internally a corpus is an immutable tree of frozen
dataclasses; unanswerable questions are represented by the CANNOTANSWER
sentinel with char_start = -1. Passages are kept exactly as given; no
sentinel token is appended or stripped.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Any

from .errors import CorpusValidationError, ParseError

logger = logging.getLogger(__name__)

UNANSWERABLE = "CANNOTANSWER"

# QuAC convention; the loader warns rather than fails on longer dialogues.
MAX_TURNS = 12

CANONICAL_FORMAT = "convqa-corpus"
CANONICAL_VERSION = 1


@dataclass(frozen=True)
class AnswerSpan:
    """One reference answer: a passage substring or the unanswerable sentinel."""

    text: str
    char_start: int  # 0-based character offset into the passage; -1 iff unanswerable

    @property
    def is_unanswerable(self) -> bool:
        return self.char_start == -1

    @property
    def char_end(self) -> int:
        return self.char_start + len(self.text)


@dataclass(frozen=True)
class Turn:
    turn_index: int
    question: str
    gold_answers: tuple[AnswerSpan, ...]
    is_unanswerable: bool


@dataclass(frozen=True)
class Dialogue:
    id: str
    title: str
    section_title: str
    passage: str
    turns: tuple[Turn, ...]


@dataclass(frozen=True)
class Corpus:
    dialogues: tuple[Dialogue, ...]
    split_name: str


@dataclass(frozen=True)
class CorpusStats:
    dialogue_count: int
    question_count: int
    max_turns: int
    unanswerable_fraction: float


def _byte_offset(text: str, char_pos: int) -> int:
    return len(text[:char_pos].encode("utf-8"))


def parse_corpus(raw: bytes | str, split_name: str) -> Corpus:
    """Parse QuAC v0.2 JSON bytes into a validated Corpus.

    Raises ParseError (with a byte offset where possible) for undecodable or
    structurally wrong input, CorpusValidationError for content that violates
    corpus invariants.
    """
    if isinstance(raw, bytes):
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError(f"input is not valid UTF-8: {e}", byte_offset=e.start) from e
    else:
        text = raw
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        offset = _byte_offset(text, e.pos)
        raise ParseError(f"malformed JSON at byte {offset}: {e.msg}", byte_offset=offset) from e

    if isinstance(payload, dict) and payload.get("format") == CANONICAL_FORMAT:
        return _from_canonical(payload, split_name)

    if not isinstance(payload, dict) or not isinstance(payload.get("data"), list):
        raise ParseError('expected a JSON object with a top-level "data" array')

    dialogues: list[Dialogue] = []
    for item in payload["data"]:
        title = str(item.get("title", ""))
        section_title = str(item.get("section_title", ""))
        for para in item.get("paragraphs", []):
            dialogues.append(_parse_paragraph(para, title, section_title))
    corpus = Corpus(dialogues=tuple(dialogues), split_name=split_name)
    _validate(corpus)
    return corpus


def _parse_paragraph(para: dict[str, Any], title: str, section_title: str) -> Dialogue:
    dialogue_id = str(para.get("id", ""))
    passage = para.get("context", "")
    turns: list[Turn] = []
    for idx, qa in enumerate(para.get("qas", [])):
        raw_answers = qa.get("answers") or []
        if not raw_answers and "orig_answer" in qa:
            raw_answers = [qa["orig_answer"]]
        answers: list[AnswerSpan] = []
        for ans in raw_answers:
            ans_text = ans.get("text", "")
            if ans_text == UNANSWERABLE:
                answers.append(AnswerSpan(text=UNANSWERABLE, char_start=-1))
            else:
                answers.append(AnswerSpan(text=ans_text, char_start=int(ans.get("answer_start", -1))))
        turns.append(
            Turn(
                turn_index=idx,
                question=str(qa.get("question", "")),
                gold_answers=tuple(answers),
                is_unanswerable=bool(answers) and answers[0].is_unanswerable,
            )
        )
    return Dialogue(
        id=dialogue_id,
        title=title,
        section_title=section_title,
        passage=passage,
        turns=tuple(turns),
    )


def _validate(corpus: Corpus) -> None:
    seen_ids: set[str] = set()
    for dlg in corpus.dialogues:
        if dlg.id in seen_ids:
            raise CorpusValidationError(f"duplicate dialogue id {dlg.id!r}", dialogue_id=dlg.id)
        seen_ids.add(dlg.id)
        if not dlg.passage:
            raise CorpusValidationError(f"dialogue {dlg.id!r} has an empty passage", dialogue_id=dlg.id)
        if not dlg.turns:
            raise CorpusValidationError(f"dialogue {dlg.id!r} has no turns", dialogue_id=dlg.id)
        if len(dlg.turns) > MAX_TURNS:
            logger.warning("dialogue %s has %d turns (> %d)", dlg.id, len(dlg.turns), MAX_TURNS)
        for pos, turn in enumerate(dlg.turns):
            if turn.turn_index != pos:
                raise CorpusValidationError(
                    f"dialogue {dlg.id!r} turn indices not contiguous at position {pos}",
                    dialogue_id=dlg.id,
                    turn_index=pos,
                )
            if not turn.gold_answers:
                raise CorpusValidationError(
                    f"dialogue {dlg.id!r} turn {pos} has no answers",
                    dialogue_id=dlg.id,
                    turn_index=pos,
                )
            for span in turn.gold_answers:
                if span.char_start < -1:
                    raise CorpusValidationError(
                        f"dialogue {dlg.id!r} turn {pos} has char_start < -1",
                        dialogue_id=dlg.id,
                        turn_index=pos,
                    )
                if span.is_unanswerable:
                    continue
                got = dlg.passage[span.char_start : span.char_start + len(span.text)]
                if got != span.text:
                    raise CorpusValidationError(
                        f"dialogue {dlg.id!r} turn {pos}: answer text does not match passage "
                        f"at offset {span.char_start} ({got!r} != {span.text!r})",
                        dialogue_id=dlg.id,
                        turn_index=pos,
                    )


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Exact counts over a corpus; deterministic."""
    question_count = sum(len(d.turns) for d in corpus.dialogues)
    unanswerable = sum(1 for d in corpus.dialogues for t in d.turns if t.is_unanswerable)
    return CorpusStats(
        dialogue_count=len(corpus.dialogues),
        question_count=question_count,
        max_turns=max((len(d.turns) for d in corpus.dialogues), default=0),
        unanswerable_fraction=(unanswerable / question_count) if question_count else 0.0,
    )


def to_quac_dict(corpus: Corpus) -> dict[str, Any]:
    """Serialize back to the external QuAC layout (one paragraph per dialogue)."""
    data = []
    for dlg in corpus.dialogues:
        qas = []
        for turn in dlg.turns:
            answers = [
                {"text": span.text, "answer_start": span.char_start}
                for span in turn.gold_answers
            ]
            qas.append({"id": f"{dlg.id}_q#{turn.turn_index}", "question": turn.question, "answers": answers})
        data.append(
            {
                "title": dlg.title,
                "section_title": dlg.section_title,
                "paragraphs": [{"id": dlg.id, "context": dlg.passage, "qas": qas}],
            }
        )
    return {"data": data}


def to_quac_json(corpus: Corpus) -> str:
    return json.dumps(to_quac_dict(corpus), ensure_ascii=False, indent=1)


def to_canonical_dict(corpus: Corpus) -> dict[str, Any]:
    """Internal dump format: stable key order, used for fixtures."""
    return {
        "format": CANONICAL_FORMAT,
        "version": CANONICAL_VERSION,
        "split": corpus.split_name,
        "dialogues": [
            {
                "id": d.id,
                "title": d.title,
                "section_title": d.section_title,
                "passage": d.passage,
                "turns": [
                    {
                        "turn_index": t.turn_index,
                        "question": t.question,
                        "answers": [{"text": a.text, "char_start": a.char_start} for a in t.gold_answers],
                        "is_unanswerable": t.is_unanswerable,
                    }
                    for t in d.turns
                ],
            }
            for d in corpus.dialogues
        ],
    }


def to_canonical_json(corpus: Corpus) -> str:
    return json.dumps(to_canonical_dict(corpus), ensure_ascii=False, indent=1)


def _from_canonical(payload: dict[str, Any], split_name: str) -> Corpus:
    if payload.get("version") != CANONICAL_VERSION:
        raise ParseError(f"unsupported corpus dump version {payload.get('version')!r}")
    dialogues = []
    for d in payload.get("dialogues", []):
        turns = tuple(
            Turn(
                turn_index=t["turn_index"],
                question=t["question"],
                gold_answers=tuple(AnswerSpan(text=a["text"], char_start=a["char_start"]) for a in t["answers"]),
                is_unanswerable=t["is_unanswerable"],
            )
            for t in d.get("turns", [])
        )
        dialogues.append(
            Dialogue(
                id=d["id"],
                title=d.get("title", ""),
                section_title=d.get("section_title", ""),
                passage=d["passage"],
                turns=turns,
            )
        )
    corpus = Corpus(dialogues=tuple(dialogues), split_name=split_name or payload.get("split", ""))
    _validate(corpus)
    return corpus


def load_corpus(path: str, split_name: str = "") -> Corpus:
    """Load a corpus from a QuAC v0.2 file or a canonical internal dump."""
    with open(path, "rb") as fh:
        return parse_corpus(fh.read(), split_name=split_name)
