"""Training loop: instance building, epoch shuffling, Adam with gradient clipping.

History selection runs once per turn when instances are built, using the
freshly initialized embedding table; the windows it produces are fixed for the
whole run. Shuffling draws from a per-epoch child of the run seed, so a run is
reproducible from (corpus, configs, seed) alone.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tensor
from .encoding import EncodedWindow, InputConfig, build_instance, make_selection_fn
from .errors import ConfigError
from .model import ModelConfig, init_params, window_loss
from .quac import Corpus
from .tokenizer import Vocabulary


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 8
    learning_rate: float = 1e-3
    clip_norm: float = 1.0
    seed: int = 0
    selection_mode: str = "relevance"
    threshold: float = 0.5
    max_k: int = 11

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be > 0, got {self.clip_norm}")
        if self.selection_mode not in ("relevance", "recent"):
            raise ConfigError(
                f"selection_mode must be relevance or recent, got {self.selection_mode!r}"
            )

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "clip_norm": self.clip_norm,
            "seed": self.seed,
            "selection_mode": self.selection_mode,
            "threshold": self.threshold,
            "max_k": self.max_k,
        }


@dataclass
class TrainResult:
    params: dict[str, Tensor]
    epoch_losses: list[float]
    n_instances: int
    n_steps: int
    wall_time_s: float
    epochs_run: int
    stopped_early: bool


def build_instances(
    corpus: Corpus,
    vocab: Vocabulary,
    input_cfg: InputConfig,
    train_cfg: TrainConfig,
    embeddings: np.ndarray,
) -> list[EncodedWindow]:
    select = make_selection_fn(
        train_cfg.selection_mode,
        vocab,
        embeddings,
        threshold=train_cfg.threshold,
        max_k=train_cfg.max_k,
    )
    windows: list[EncodedWindow] = []
    for dialogue in corpus.dialogues:
        for turn in dialogue.turns:
            selection = select(dialogue, turn.turn_index)
            windows.extend(
                build_instance(dialogue, turn.turn_index, selection, vocab, input_cfg)
            )
    return windows


def train(
    corpus: Corpus,
    vocab: Vocabulary,
    model_cfg: ModelConfig,
    input_cfg: InputConfig,
    train_cfg: TrainConfig,
    loss_log_path: str | Path | None = None,
    eval_hook: Callable[[int, dict[str, Tensor]], bool] | None = None,
    eval_every: int = 10,
) -> TrainResult:
    """Train a fresh model on the corpus.

    eval_hook, when given, runs every eval_every epochs and stops training
    early when it returns True.
    """
    t0 = time.perf_counter()
    init_rng = np.random.default_rng(np.random.SeedSequence(train_cfg.seed))
    params = init_params(model_cfg, init_rng)

    instances = build_instances(
        corpus, vocab, input_cfg, train_cfg, params["selector_emb"].data
    )
    if not instances:
        raise ConfigError("no training instances were produced from the corpus")

    param_list = list(params.values())
    adam = AdamState.for_params(param_list, lr=train_cfg.learning_rate)

    log_fh = None
    if loss_log_path is not None:
        path = Path(loss_log_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        log_fh = open(path, "w", encoding="utf-8")

    epoch_losses: list[float] = []
    step = 0
    epochs_run = 0
    stopped_early = False
    try:
        for epoch in range(train_cfg.epochs):
            order_rng = np.random.default_rng(
                np.random.SeedSequence(train_cfg.seed, spawn_key=(epoch,))
            )
            dropout_rng = None
            if model_cfg.dropout_p > 0.0:
                dropout_rng = np.random.default_rng(
                    np.random.SeedSequence(train_cfg.seed, spawn_key=(epoch, 7))
                )
            order = order_rng.permutation(len(instances))
            running = 0.0
            for lo in range(0, len(order), train_cfg.batch_size):
                batch = [instances[i] for i in order[lo : lo + train_cfg.batch_size]]
                losses = [
                    window_loss(params, model_cfg, w, dropout_rng=dropout_rng)
                    for w in batch
                ]
                loss = ad.mean_of(losses)
                ad.zero_grads(param_list)
                ad.backward(loss)
                grads = [
                    t.grad if t.grad is not None else np.zeros_like(t.data)
                    for t in param_list
                ]
                ad.clip_global_norm(grads, train_cfg.clip_norm)
                ad.adam_step(param_list, grads, adam)
                step += 1
                running += float(loss.data) * len(batch)
                if log_fh is not None:
                    log_fh.write(
                        json.dumps(
                            {
                                "step": step,
                                "epoch": epoch,
                                "loss": float(loss.data),
                                "lr": train_cfg.learning_rate,
                                "wall_time_s": time.perf_counter() - t0,
                            }
                        )
                        + "\n"
                    )
            epoch_losses.append(running / len(instances))
            epochs_run = epoch + 1
            if eval_hook is not None and (epoch + 1) % eval_every == 0:
                if eval_hook(epoch + 1, params):
                    stopped_early = True
                    break
    finally:
        if log_fh is not None:
            log_fh.close()

    return TrainResult(
        params=params,
        epoch_losses=epoch_losses,
        n_instances=len(instances),
        n_steps=step,
        wall_time_s=time.perf_counter() - t0,
        epochs_run=epochs_run,
        stopped_early=stopped_early,
    )
