"""Span-extraction encoder: four summed embedding lanes, pre-norm blocks, span head.

Each window is encoded independently (no cross-window padding), so sequence
lengths may vary freely. Start/end scores are masked so that only position 0
and the window's passage positions can win; position 0 doubles as the
"cannot answer" target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoding import EncodedWindow
from .errors import ConfigError, UsageError

MASK_VALUE = -1e30


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    layers: int = 2
    d_model: int = 64
    heads: int = 4
    d_ffn: int = 256
    max_positions: int = 512
    dropout_p: float = 0.0

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ConfigError(f"vocab_size must be >= 1, got {self.vocab_size}")
        if self.layers < 0:
            raise ConfigError(f"layers must be >= 0, got {self.layers}")
        if self.d_model < 1 or self.heads < 1 or self.d_ffn < 1:
            raise ConfigError("d_model, heads, d_ffn must all be >= 1")
        if self.d_model % self.heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by heads {self.heads}"
            )
        if self.max_positions < 1:
            raise ConfigError(f"max_positions must be >= 1, got {self.max_positions}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "vocab_size": self.vocab_size,
            "layers": self.layers,
            "d_model": self.d_model,
            "heads": self.heads,
            "d_ffn": self.d_ffn,
            "max_positions": self.max_positions,
            "dropout_p": self.dropout_p,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelConfig":
        return cls(**d)


INIT_STD = 0.02


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """Fresh trainable parameters keyed by stable dotted names."""

    def w(name: str, *shape: int) -> None:
        params[name] = ad.parameter(rng.normal(0.0, INIT_STD, size=shape), name)

    def zeros(name: str, *shape: int) -> None:
        params[name] = ad.parameter(np.zeros(shape), name)

    def ones(name: str, *shape: int) -> None:
        params[name] = ad.parameter(np.ones(shape), name)

    params: dict[str, Tensor] = {}
    w("token_emb", cfg.vocab_size, cfg.d_model)
    # history scoring uses its own table, untouched by training, so that the
    # relevance margins present when instances were built survive to eval time
    params["selector_emb"] = ad.parameter(params["token_emb"].data.copy(), "selector_emb")
    w("pos_emb", cfg.max_positions, cfg.d_model)
    w("seg_emb", 2, cfg.d_model)
    w("hae_emb", 2, cfg.d_model)
    for i in range(cfg.layers):
        b = f"block{i}"
        ones(f"{b}.ln1.gain", cfg.d_model)
        zeros(f"{b}.ln1.bias", cfg.d_model)
        for proj in ("wq", "wk", "wv", "wo"):
            w(f"{b}.attn.{proj}", cfg.d_model, cfg.d_model)
        for bias in ("bq", "bk", "bv", "bo"):
            zeros(f"{b}.attn.{bias}", cfg.d_model)
        ones(f"{b}.ln2.gain", cfg.d_model)
        zeros(f"{b}.ln2.bias", cfg.d_model)
        w(f"{b}.ffn.w1", cfg.d_model, cfg.d_ffn)
        zeros(f"{b}.ffn.b1", cfg.d_ffn)
        w(f"{b}.ffn.w2", cfg.d_ffn, cfg.d_model)
        zeros(f"{b}.ffn.b2", cfg.d_model)
    ones("final_ln.gain", cfg.d_model)
    zeros("final_ln.bias", cfg.d_model)
    w("span.start", cfg.d_model)
    w("span.end", cfg.d_model)
    return params


def n_parameters(params: dict[str, Tensor]) -> int:
    return sum(int(t.data.size) for t in params.values())


def _attention(
    h: Tensor,
    params: dict[str, Tensor],
    cfg: ModelConfig,
    block: int,
    attention_mask: np.ndarray | None,
) -> Tensor:
    b = f"block{block}.attn"
    seq_len = h.data.shape[0]
    dk = cfg.d_model // cfg.heads
    q = ad.add(ad.matmul(h, params[f"{b}.wq"]), params[f"{b}.bq"])
    k = ad.add(ad.matmul(h, params[f"{b}.wk"]), params[f"{b}.bk"])
    v = ad.add(ad.matmul(h, params[f"{b}.wv"]), params[f"{b}.bv"])
    qh = ad.transpose(ad.reshape(q, (seq_len, cfg.heads, dk)), (1, 0, 2))
    kh = ad.transpose(ad.reshape(k, (seq_len, cfg.heads, dk)), (1, 0, 2))
    vh = ad.transpose(ad.reshape(v, (seq_len, cfg.heads, dk)), (1, 0, 2))
    scores = ad.scale(ad.matmul(qh, ad.transpose(kh, (0, 2, 1))), 1.0 / math.sqrt(dk))
    if attention_mask is not None:
        scores = ad.add(scores, ad.constant(attention_mask.reshape(1, 1, -1)))
    ctx = ad.matmul(ad.softmax(scores), vh)
    merged = ad.reshape(ad.transpose(ctx, (1, 0, 2)), (seq_len, cfg.d_model))
    return ad.add(ad.matmul(merged, params[f"{b}.wo"]), params[f"{b}.bo"])


def encode(
    params: dict[str, Tensor],
    cfg: ModelConfig,
    window: EncodedWindow,
    dropout_rng: np.random.Generator | None = None,
    attention_mask: np.ndarray | None = None,
) -> Tensor:
    """Hidden states (seq_len, d_model) for one window."""
    seq_len = len(window)
    if seq_len > cfg.max_positions:
        raise UsageError(
            f"window length {seq_len} exceeds max_positions {cfg.max_positions}"
        )
    ids = np.asarray(window.token_ids, dtype=np.int64)
    pos = np.asarray(window.position_ids, dtype=np.int64)
    seg = np.asarray(window.segment_ids, dtype=np.int64)
    hae = np.asarray(window.hae_ids, dtype=np.int64)
    x = ad.add(
        ad.add(
            ad.embedding_lookup(params["token_emb"], ids),
            ad.embedding_lookup(params["pos_emb"], pos),
        ),
        ad.add(
            ad.embedding_lookup(params["seg_emb"], seg),
            ad.embedding_lookup(params["hae_emb"], hae),
        ),
    )

    def maybe_drop(t: Tensor) -> Tensor:
        if cfg.dropout_p > 0.0 and dropout_rng is not None:
            return ad.dropout(t, cfg.dropout_p, dropout_rng)
        return t

    x = maybe_drop(x)
    for i in range(cfg.layers):
        h = ad.layer_norm(x, params[f"block{i}.ln1.gain"], params[f"block{i}.ln1.bias"])
        x = ad.add(x, maybe_drop(_attention(h, params, cfg, i, attention_mask)))
        h = ad.layer_norm(x, params[f"block{i}.ln2.gain"], params[f"block{i}.ln2.bias"])
        inner = ad.gelu(ad.add(ad.matmul(h, params[f"block{i}.ffn.w1"]), params[f"block{i}.ffn.b1"]))
        ffn_out = ad.add(ad.matmul(inner, params[f"block{i}.ffn.w2"]), params[f"block{i}.ffn.b2"])
        x = ad.add(x, maybe_drop(ffn_out))
    return ad.layer_norm(x, params["final_ln.gain"], params["final_ln.bias"])


def span_mask(window: EncodedWindow) -> np.ndarray:
    """Additive mask over window positions: 0 where a span endpoint may land."""
    mask = np.full(len(window), MASK_VALUE)
    mask[0] = 0.0
    first, last = window.passage_token_range
    if first <= last:
        mask[first : last + 1] = 0.0
    return mask


def span_scores(
    hidden: Tensor, params: dict[str, Tensor], window: EncodedWindow
) -> tuple[Tensor, Tensor]:
    """Masked start and end logits, each of shape (seq_len,)."""
    mask = ad.constant(span_mask(window))
    start = ad.add(ad.matmul(hidden, params["span.start"]), mask)
    end = ad.add(ad.matmul(hidden, params["span.end"]), mask)
    return start, end


def forward_window(
    params: dict[str, Tensor],
    cfg: ModelConfig,
    window: EncodedWindow,
    dropout_rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    hidden = encode(params, cfg, window, dropout_rng=dropout_rng)
    return span_scores(hidden, params, window)


def span_loss(start_logits: Tensor, end_logits: Tensor, window: EncodedWindow) -> Tensor:
    """Mean of the start and end cross-entropies for one labeled window."""
    mask = span_mask(window)
    for label in (window.start_label, window.end_label):
        if not 0 <= label < len(window) or mask[label] != 0.0:
            raise UsageError(f"label {label} is outside the allowed span positions")
    ce_start = ad.cross_entropy(start_logits, window.start_label)
    ce_end = ad.cross_entropy(end_logits, window.end_label)
    return ad.scale(ad.add(ce_start, ce_end), 0.5)


def window_loss(
    params: dict[str, Tensor],
    cfg: ModelConfig,
    window: EncodedWindow,
    dropout_rng: np.random.Generator | None = None,
) -> Tensor:
    start, end = forward_window(params, cfg, window, dropout_rng=dropout_rng)
    return span_loss(start, end, window)


def _np_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def span_probabilities(start_logits: Tensor, end_logits: Tensor) -> tuple[np.ndarray, np.ndarray]:
    """Plain-array softmax over already masked logits (no gradient)."""
    return _np_softmax(start_logits.data), _np_softmax(end_logits.data)
