"""Experiment harness: history-size sweep and selection-strategy comparison.

Every row retrains from scratch with the same seed, so reruns of the sweep are
reproducible down to the bytes of the TSV (the comparison table also records
wall-clock training time, which is expected to vary). If a row fails mid-run,
the rows finished so far are still written, with the failure recorded in the
JSON report, before the error propagates.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from .encoding import InputConfig, make_selection_fn
from .errors import UsageError
from .metrics import EvalReport, evaluate_corpus
from .model import ModelConfig
from .quac import Corpus
from .reporting import (
    fmt_pct,
    format_table,
    save_comparison_figure,
    save_sweep_figure,
)
from .tokenizer import Vocabulary
from .training import TrainConfig, train

SWEEP_HEADERS = ("k", "F1", "HEQ-Q", "HEQ-D")
COMPARISON_HEADERS = ("strategy", "F1", "HEQ-Q", "HEQ-D", "train_time_s")


@dataclass(frozen=True)
class SweepRow:
    k: int
    f1: float
    heq_q: float
    heq_d: float

    def to_dict(self) -> dict[str, Any]:
        return {"k": self.k, "f1": self.f1, "heq_q": self.heq_q, "heq_d": self.heq_d}

    def cells(self) -> tuple[str, ...]:
        return (str(self.k), fmt_pct(self.f1), fmt_pct(self.heq_q), fmt_pct(self.heq_d))


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    best_k: int


@dataclass(frozen=True)
class ComparisonRow:
    strategy: str
    f1: float
    heq_q: float
    heq_d: float
    train_time_s: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "strategy": self.strategy,
            "f1": self.f1,
            "heq_q": self.heq_q,
            "heq_d": self.heq_d,
            "train_time_s": self.train_time_s,
        }

    def cells(self) -> tuple[str, ...]:
        return (
            self.strategy,
            fmt_pct(self.f1),
            fmt_pct(self.heq_q),
            fmt_pct(self.heq_d),
            f"{self.train_time_s:.1f}",
        )


def _train_and_eval(
    mode: str,
    max_k: int,
    train_corpus: Corpus,
    eval_corpus: Corpus,
    vocab: Vocabulary,
    model_cfg: ModelConfig,
    input_cfg: InputConfig,
    train_cfg: TrainConfig,
) -> tuple[EvalReport, float]:
    cfg = dataclasses.replace(train_cfg, selection_mode=mode, max_k=max_k)
    result = train(train_corpus, vocab, model_cfg, input_cfg, cfg)
    embeddings = result.params["selector_emb"].data if mode == "relevance" else None
    select = make_selection_fn(
        mode, vocab, embeddings, threshold=cfg.threshold, max_k=max_k
    )
    report = evaluate_corpus(
        result.params, model_cfg, input_cfg, vocab, eval_corpus, select
    )
    return report, result.wall_time_s


def _write_tables(
    out_dir: Path,
    stem: str,
    headers: Sequence[str],
    cell_rows: list[tuple[str, ...]],
    report: dict[str, Any],
    bold_row: int | None,
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{stem}.tsv").write_text(
        format_table(headers, cell_rows, style="tsv"), encoding="utf-8"
    )
    (out_dir / f"{stem}.md").write_text(
        format_table(headers, cell_rows, style="markdown", bold_row=bold_row),
        encoding="utf-8",
    )
    (out_dir / f"{stem}.txt").write_text(
        format_table(headers, cell_rows, style="text"), encoding="utf-8"
    )
    (out_dir / f"{stem}.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def run_sweep(
    train_corpus: Corpus,
    eval_corpus: Corpus,
    vocab: Vocabulary,
    model_cfg: ModelConfig,
    input_cfg: InputConfig,
    train_cfg: TrainConfig,
    ks: Sequence[int] = tuple(range(1, 12)),
    out_dir: str | Path | None = None,
) -> SweepResult:
    """Retrain with the recency strategy at each history size and evaluate."""
    if not ks:
        raise UsageError("run_sweep needs at least one history size")
    rows: list[SweepRow] = []
    failure: dict[str, Any] | None = None
    try:
        for k in ks:
            report, _ = _train_and_eval(
                "recent", k, train_corpus, eval_corpus, vocab,
                model_cfg, input_cfg, train_cfg,
            )
            rows.append(SweepRow(k=k, f1=report.f1, heq_q=report.heq_q, heq_d=report.heq_d))
    except Exception as e:
        failure = {"failed_at_k": k, "error": str(e)}
        raise
    finally:
        if out_dir is not None and (rows or failure):
            best = _best_row(rows)
            payload: dict[str, Any] = {
                "rows": [r.to_dict() for r in rows],
                "best_k": rows[best].k if rows else None,
            }
            if failure:
                payload["failure"] = failure
            _write_tables(
                Path(out_dir), "sweep", SWEEP_HEADERS,
                [r.cells() for r in rows], payload, best if rows else None,
            )
            if rows:
                save_sweep_figure(
                    [r.k for r in rows],
                    [r.f1 for r in rows],
                    [r.heq_q for r in rows],
                    [r.heq_d for r in rows],
                    Path(out_dir) / "sweep.png",
                )
    return SweepResult(rows=tuple(rows), best_k=rows[_best_row(rows)].k)


def _best_row(rows: Sequence[SweepRow]) -> int | None:
    if not rows:
        return None
    best = 0
    for i, row in enumerate(rows):
        if row.f1 > rows[best].f1:
            best = i
    return best


@dataclass(frozen=True)
class ComparisonResult:
    rows: tuple[ComparisonRow, ...]
    gap_f1: float  # relevance minus recent


def run_comparison(
    train_corpus: Corpus,
    eval_corpus: Corpus,
    vocab: Vocabulary,
    model_cfg: ModelConfig,
    input_cfg: InputConfig,
    train_cfg: TrainConfig,
    out_dir: str | Path | None = None,
) -> ComparisonResult:
    """Train and evaluate both selection strategies at the same history cap."""
    rows: list[ComparisonRow] = []
    for mode in ("relevance", "recent"):
        report, seconds = _train_and_eval(
            mode, train_cfg.max_k, train_corpus, eval_corpus, vocab,
            model_cfg, input_cfg, train_cfg,
        )
        rows.append(
            ComparisonRow(
                strategy=mode,
                f1=report.f1,
                heq_q=report.heq_q,
                heq_d=report.heq_d,
                train_time_s=seconds,
            )
        )
    gap = rows[0].f1 - rows[1].f1
    if out_dir is not None:
        payload = {"rows": [r.to_dict() for r in rows], "gap_f1": gap}
        _write_tables(
            Path(out_dir), "comparison", COMPARISON_HEADERS,
            [r.cells() for r in rows], payload, None,
        )
        save_comparison_figure(
            [r.strategy for r in rows],
            [r.f1 for r in rows],
            [r.heq_q for r in rows],
            [r.heq_d for r in rows],
            Path(out_dir) / "comparison.png",
        )
    return ComparisonResult(rows=tuple(rows), gap_f1=gap)
