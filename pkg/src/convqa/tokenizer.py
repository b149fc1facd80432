"""Subword tokenizer with character-offset tracking.

A trainable wordpiece-style vocabulary: lowercase, split on whitespace and
punctuation (punctuation always becomes single-character tokens), then greedy
longest-match against the vocabulary with "##" continuation pieces. Every
non-special token keeps the (start, end) character span of its source slice,
so model spans can be mapped back to passage text exactly.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .errors import ConfigError, UsageError
from .quac import Corpus

CLS = "[CLS]"
SEP = "[SEP]"
PAD = "[PAD]"
UNK = "[UNK]"
SPECIALS = (PAD, UNK, CLS, SEP)
CONTINUATION = "##"

NO_SPAN = (-1, -1)  # char span used for special tokens


@dataclass(frozen=True)
class Vocabulary:
    token_to_id: dict[str, int]
    id_to_token: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK]

    @property
    def cls_id(self) -> int:
        return self.token_to_id[CLS]

    @property
    def sep_id(self) -> int:
        return self.token_to_id[SEP]


@dataclass(frozen=True)
class TokenizedText:
    tokens: tuple[str, ...]
    ids: tuple[int, ...]
    char_spans: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.tokens)


def _make_vocab(tokens: list[str]) -> Vocabulary:
    token_to_id = {tok: i for i, tok in enumerate(tokens)}
    if len(token_to_id) != len(tokens):
        raise ConfigError("vocabulary contains duplicate tokens")
    for special in SPECIALS:
        if special not in token_to_id:
            raise ConfigError(f"vocabulary is missing special token {special}")
    return Vocabulary(token_to_id=token_to_id, id_to_token=tuple(tokens))


def _lower_char(ch: str) -> str:
    low = ch.lower()
    # a few unicode characters lowercase to multiple chars; keep offsets 1:1
    return low if len(low) == 1 else ch


def _is_word_char(ch: str) -> bool:
    return ch.isalnum()


def _pretokenize(text: str) -> list[tuple[str, int, int]]:
    """Split into (piece, start, end) word/punctuation units, lowercased."""
    units: list[tuple[str, int, int]] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if _is_word_char(ch):
            j = i
            while j < n and _is_word_char(text[j]):
                j += 1
            units.append(("".join(_lower_char(c) for c in text[i:j]), i, j))
            i = j
        else:
            # punctuation: always a single-character unit
            units.append((_lower_char(ch), i, i + 1))
            i += 1
    return units


def build_vocab(corpus: Corpus, max_size: int) -> Vocabulary:
    """Build a deterministic vocabulary from corpus text.

    Order: the four specials, then every single character seen, then whole
    words by descending frequency, then "##" suffix pieces by descending
    frequency, until max_size is reached.
    """
    word_counts: Counter[str] = Counter()
    for dlg in corpus.dialogues:
        texts = [dlg.passage]
        for turn in dlg.turns:
            texts.append(turn.question)
            texts.extend(a.text for a in turn.gold_answers if not a.is_unanswerable)
        for text in texts:
            word_counts.update(piece for piece, _, _ in _pretokenize(text))

    alphabet = sorted({ch for word in word_counts for ch in word})
    if max_size < len(SPECIALS) + len(alphabet):
        raise ConfigError(
            f"max_size {max_size} is too small: need {len(SPECIALS) + len(alphabet)} "
            f"for specials plus the {len(alphabet)}-character alphabet"
        )

    tokens: list[str] = list(SPECIALS)
    tokens.extend(alphabet)
    present = set(tokens)

    for word, _ in sorted(word_counts.items(), key=lambda kv: (-kv[1], kv[0])):
        if len(tokens) >= max_size:
            break
        if word not in present:
            tokens.append(word)
            present.add(word)

    suffix_counts: Counter[str] = Counter()
    for word, count in word_counts.items():
        for start in range(1, len(word)):
            suffix_counts[CONTINUATION + word[start:]] += count
    for piece, _ in sorted(suffix_counts.items(), key=lambda kv: (-kv[1], kv[0])):
        if len(tokens) >= max_size:
            break
        if piece not in present:
            tokens.append(piece)
            present.add(piece)

    return _make_vocab(tokens)


def tokenize(vocab: Vocabulary, text: str) -> TokenizedText:
    """Tokenize text; total function, unmatched pieces become [UNK].

    Greedy longest-match within each pretokenized unit; continuation matches
    must carry the "##" prefix. When no match exists at some position the
    remainder of the unit becomes a single [UNK] token that still carries the
    correct character span.
    """
    tokens: list[str] = []
    spans: list[tuple[int, int]] = []
    for piece, start, end in _pretokenize(text):
        pos = 0
        while pos < len(piece):
            best = None
            for stop in range(len(piece), pos, -1):
                candidate = piece[pos:stop]
                if pos > 0:
                    candidate = CONTINUATION + candidate
                if candidate in vocab.token_to_id:
                    best = (candidate, stop)
                    break
            if best is None:
                tokens.append(UNK)
                spans.append((start + pos, end))
                break
            tokens.append(best[0])
            spans.append((start + pos, start + best[1]))
            pos = best[1]
    ids = tuple(vocab.token_to_id[t] for t in tokens)
    return TokenizedText(tokens=tuple(tokens), ids=ids, char_spans=tuple(spans))


def span_to_chars(tokenized: TokenizedText, tok_start: int, tok_end: int) -> tuple[int, int]:
    """Map an inclusive token range back to a character range."""
    if tok_start > tok_end:
        raise UsageError(f"tok_start {tok_start} > tok_end {tok_end}")
    if tok_start < 0 or tok_end >= len(tokenized):
        raise UsageError(f"token range [{tok_start}, {tok_end}] out of bounds for {len(tokenized)} tokens")
    start_span = tokenized.char_spans[tok_start]
    end_span = tokenized.char_spans[tok_end]
    if start_span == NO_SPAN or end_span == NO_SPAN:
        raise UsageError("token range endpoints must not be special tokens")
    return (start_span[0], end_span[1])


def detokenize(tokenized: TokenizedText, text: str) -> str:
    """Rebuild the lowercased surface of a tokenization from its char spans."""
    parts: list[str] = []
    prev_end = None
    for span in tokenized.char_spans:
        if span == NO_SPAN:
            continue
        start, end = span
        if prev_end is not None and start > prev_end:
            parts.append(" ")
        parts.append("".join(_lower_char(c) for c in text[start:end]))
        prev_end = max(prev_end, end) if prev_end is not None else end
    return "".join(parts)


def save_vocab(vocab: Vocabulary, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for token in vocab.id_to_token:
            fh.write(token + "\n")


def load_vocab(path: str) -> Vocabulary:
    """Read a newline-delimited vocab file (line number = id)."""
    with open(path, encoding="utf-8") as fh:
        tokens = [line.rstrip("\n") for line in fh]
    while tokens and tokens[-1] == "":
        tokens.pop()
    return _make_vocab(tokens)
