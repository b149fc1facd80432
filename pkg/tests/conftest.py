import json

import numpy as np
import pytest

from convqa.quac import Corpus, parse_corpus
from convqa.synthetic import SynthConfig, build_synthetic_corpus
from convqa.tokenizer import Vocabulary, build_vocab

PASSAGE = (
    "Verghese Kurien was an Indian social entrepreneur. He was born on "
    "26 November, 1921 at Calicut, Madras Presidency (now Kozhikode, Kerala) "
    "in a Syrian Christian family. His family later moved north."
)
ANSWER_BORN = "He was born on 26 November, 1921"
ANSWER_WHERE = "Calicut, Madras Presidency (now Kozhikode, Kerala) in a Syrian Christian family."
Q_BORN = "When was Kurien born?"
Q_WHERE = "Where was he born?"


def dialogue_raw_dict() -> dict:
    return {
        "data": [
            {
                "title": "Verghese Kurien",
                "section_title": "Early life",
                "paragraphs": [
                    {
                        "id": "kurien#0",
                        "context": PASSAGE,
                        "qas": [
                            {
                                "id": "kurien#0_q#0",
                                "question": Q_BORN,
                                "answers": [
                                    {
                                        "text": ANSWER_BORN,
                                        "answer_start": PASSAGE.index(ANSWER_BORN),
                                    }
                                ],
                            },
                            {
                                "id": "kurien#0_q#1",
                                "question": Q_WHERE,
                                "answers": [
                                    {
                                        "text": ANSWER_WHERE,
                                        "answer_start": PASSAGE.index(ANSWER_WHERE),
                                    }
                                ],
                            },
                            {
                                "id": "kurien#0_q#2",
                                "question": "Did he have siblings?",
                                "answers": [{"text": "CANNOTANSWER", "answer_start": -1}],
                            },
                        ],
                    }
                ],
            }
        ]
    }


@pytest.fixture
def dialogue_corpus() -> Corpus:
    return parse_corpus(json.dumps(dialogue_raw_dict()), split_name="fixture")


@pytest.fixture
def dialogue_vocab(dialogue_corpus) -> Vocabulary:
    return build_vocab(dialogue_corpus, max_size=512)


@pytest.fixture(scope="session")
def lookup_corpus() -> Corpus:
    return build_synthetic_corpus(SynthConfig(n_dialogues=4, n_facts=3, seed=7))


@pytest.fixture(scope="session")
def lookup_vocab(lookup_corpus) -> Vocabulary:
    return build_vocab(lookup_corpus, max_size=512)


def toy_vocab(words: list[str]) -> Vocabulary:
    """Vocabulary of whole words only (plus specials), ids in listed order."""
    tokens = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"] + list(words)
    return Vocabulary(
        token_to_id={t: i for i, t in enumerate(tokens)},
        id_to_token=tuple(tokens),
    )


def one_hot_embeddings(vocab: Vocabulary, dim: int, placements: dict[str, int]) -> np.ndarray:
    """Embedding table of zeros; each word in placements gets a one-hot row."""
    table = np.zeros((len(vocab), dim))
    for word, axis in placements.items():
        table[vocab.token_to_id[word], axis] = 1.0
    return table
