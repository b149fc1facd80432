"""Deterministic lookup-style dialogue generator.

Each dialogue carries a passage of "key value ." facts and two turns per fact:
a setup turn whose question names the key (answerable straight from the
passage) and a later probe turn whose question repeats only the setup's topic
word. Both turns share the fact's "key value" span as their answer, but a
probe is answerable only by recalling which fact its topic was paired with, so
models that track the right history turn separate cleanly from models that do
not. Topic words never appear in passages, and every dialogue pairs topics,
keys, and values by its own permutation, so the mapping cannot be memorized
from the question text alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .quac import UNANSWERABLE, AnswerSpan, Corpus, Dialogue, Turn

PROBE_WORD = "recall"


@dataclass(frozen=True)
class SynthConfig:
    n_dialogues: int = 20
    n_facts: int = 4
    pool_size: int = 0  # 0 means 2 * n_facts
    seed: int = 0
    unanswerable_rate: float = 0.0

    def __post_init__(self):
        if self.n_dialogues < 1:
            raise ConfigError(f"n_dialogues must be >= 1, got {self.n_dialogues}")
        if self.n_facts < 1:
            raise ConfigError(f"n_facts must be >= 1, got {self.n_facts}")
        if 2 * self.n_facts + 1 > 12:
            raise ConfigError(
                f"n_facts {self.n_facts} would exceed 12 turns per dialogue"
            )
        if self.pool_size and self.pool_size < self.n_facts:
            raise ConfigError("pool_size must be 0 or >= n_facts")
        if not 0.0 <= self.unanswerable_rate <= 1.0:
            raise ConfigError("unanswerable_rate must be in [0, 1]")

    @property
    def effective_pool(self) -> int:
        return self.pool_size or 2 * self.n_facts

    def to_dict(self) -> dict:
        return {
            "n_dialogues": self.n_dialogues,
            "n_facts": self.n_facts,
            "pool_size": self.pool_size,
            "seed": self.seed,
            "unanswerable_rate": self.unanswerable_rate,
        }


def _topic_question(topic: str, tail: str) -> str:
    return f"{topic} {topic} {topic} {tail}"


def build_synthetic_corpus(cfg: SynthConfig) -> Corpus:
    rng = np.random.default_rng(cfg.seed)
    pool = cfg.effective_pool
    topics = [f"case{i}" for i in range(pool)]
    keys = [f"item{i}" for i in range(pool)]
    vals = [f"code{i}" for i in range(pool)]

    dialogues: list[Dialogue] = []
    for d in range(cfg.n_dialogues):
        t_idx = rng.choice(pool, size=cfg.n_facts, replace=False)
        k_idx = rng.choice(pool, size=cfg.n_facts, replace=False)
        v_idx = rng.choice(pool, size=cfg.n_facts, replace=False)
        fact_topics = [topics[i] for i in t_idx]
        fact_keys = [keys[i] for i in k_idx]
        fact_vals = [vals[i] for i in v_idx]

        pieces: list[str] = []
        key_offsets: list[int] = []
        pos = 0
        for key, val in zip(fact_keys, fact_vals):
            key_offsets.append(pos)
            piece = f"{key} {val} ."
            pieces.append(piece)
            pos += len(piece) + 1
        passage = " ".join(pieces)

        turns: list[Turn] = []
        for i in range(cfg.n_facts):
            answer = f"{fact_keys[i]} {fact_vals[i]}"
            turns.append(
                Turn(
                    turn_index=len(turns),
                    question=_topic_question(fact_topics[i], fact_keys[i]),
                    gold_answers=(AnswerSpan(answer, key_offsets[i]),),
                    is_unanswerable=False,
                )
            )
        for i in rng.permutation(cfg.n_facts):
            answer = f"{fact_keys[i]} {fact_vals[i]}"
            turns.append(
                Turn(
                    turn_index=len(turns),
                    question=_topic_question(fact_topics[i], PROBE_WORD),
                    gold_answers=(AnswerSpan(answer, key_offsets[i]),),
                    is_unanswerable=False,
                )
            )
        if cfg.unanswerable_rate > 0 and rng.random() < cfg.unanswerable_rate:
            unused = [t for t in range(pool) if t not in set(t_idx)]
            if unused:
                topic = topics[unused[int(rng.integers(len(unused)))]]
                turns.append(
                    Turn(
                        turn_index=len(turns),
                        question=_topic_question(topic, PROBE_WORD),
                        gold_answers=(AnswerSpan(UNANSWERABLE, -1),),
                        is_unanswerable=True,
                    )
                )

        dialogues.append(
            Dialogue(
                id=f"synth-{cfg.seed}-{d:03d}",
                title="lookup drills",
                section_title=f"drill {d}",
                passage=passage,
                turns=tuple(turns),
            )
        )
    return Corpus(dialogues=tuple(dialogues), split_name=f"synth-seed{cfg.seed}")
