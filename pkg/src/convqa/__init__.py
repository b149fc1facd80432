"""Conversational span-extraction QA with learned history selection."""

from .encoding import EncodedWindow, InputConfig, build_instance, make_selection_fn
from .errors import (
    BuildError,
    CheckpointError,
    ConfigError,
    ConvqaError,
    CorpusValidationError,
    ParseError,
    UsageError,
)
from .metrics import EvalReport, decode_span, evaluate_corpus, word_f1
from .model import ModelConfig, init_params
from .quac import Corpus, Dialogue, Turn, load_corpus, parse_corpus
from .selector import SelectionResult, select_turns
from .tokenizer import Vocabulary, build_vocab, load_vocab, save_vocab, tokenize
from .training import TrainConfig, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "BuildError",
    "CheckpointError",
    "ConfigError",
    "ConvqaError",
    "Corpus",
    "CorpusValidationError",
    "Dialogue",
    "EncodedWindow",
    "EvalReport",
    "InputConfig",
    "ModelConfig",
    "ParseError",
    "SelectionResult",
    "TrainConfig",
    "TrainResult",
    "Turn",
    "UsageError",
    "Vocabulary",
    "build_instance",
    "build_vocab",
    "decode_span",
    "evaluate_corpus",
    "init_params",
    "load_corpus",
    "load_vocab",
    "make_selection_fn",
    "parse_corpus",
    "save_vocab",
    "select_turns",
    "tokenize",
    "train",
    "word_f1",
    "__version__",
]
