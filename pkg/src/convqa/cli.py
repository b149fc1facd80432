"""Command line front door.

Verbs: ingest, synth, build-vocab, train, eval, ablate, compare, serve.
Settings come from defaults, then an optional --config JSON file with
"model", "input", and "train" sections, then explicit flags, later wins.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from .checkpoint import load_checkpoint, save_checkpoint
from .encoding import InputConfig, make_selection_fn
from .errors import ConvqaError
from .harness import run_comparison, run_sweep
from .metrics import evaluate_corpus, write_predictions_jsonl
from .model import ModelConfig, n_parameters
from .quac import corpus_stats, load_corpus, to_canonical_json
from .reporting import fmt_pct, format_table
from .synthetic import SynthConfig, build_synthetic_corpus
from .tokenizer import build_vocab, load_vocab, save_vocab
from .training import TrainConfig, train


def _read_config(path: str | None) -> dict[str, dict[str, Any]]:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ConvqaError(f"{path}: config must be a JSON object")
    return cfg


def _merge(section: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    merged = dict(section)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


def _model_config(args, vocab_size: int) -> ModelConfig:
    section = _read_config(args.config).get("model", {})
    section = _merge(section, {"dropout_p": getattr(args, "dropout", None)})
    section["vocab_size"] = vocab_size
    return ModelConfig.from_dict(section)


def _input_config(args) -> InputConfig:
    section = _read_config(args.config).get("input", {})
    overrides = {
        "max_seq_len": getattr(args, "max_seq_len", None),
        "doc_stride": getattr(args, "doc_stride", None),
        "max_answer_len": getattr(args, "max_answer_len", None),
    }
    return InputConfig(**_merge(section, overrides))


def _train_config(args) -> TrainConfig:
    section = _read_config(args.config).get("train", {})
    overrides = {
        "epochs": getattr(args, "epochs", None),
        "batch_size": getattr(args, "batch_size", None),
        "learning_rate": getattr(args, "lr", None),
        "seed": getattr(args, "seed", None),
        "selection_mode": getattr(args, "selection", None),
        "threshold": getattr(args, "threshold", None),
        "max_k": getattr(args, "max_k", None),
    }
    return TrainConfig(**_merge(section, overrides))


def _add_config_flags(p: argparse.ArgumentParser, with_train: bool = True) -> None:
    p.add_argument("--config", help="JSON file with model/input/train sections")
    p.add_argument("--max-seq-len", type=int, dest="max_seq_len")
    p.add_argument("--doc-stride", type=int, dest="doc_stride")
    p.add_argument("--max-answer-len", type=int, dest="max_answer_len")
    if with_train:
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--lr", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--dropout", type=float)
        p.add_argument("--selection", choices=["relevance", "recent"])
        p.add_argument("--threshold", type=float)
        p.add_argument("--max-k", type=int, dest="max_k")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convqa", description="conversational span-extraction QA toolkit"
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("ingest", help="parse, validate, and re-emit a dialogue corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--split", default="")
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="generate a synthetic lookup corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-dialogues", type=int, default=20, dest="n_dialogues")
    p.add_argument("--n-facts", type=int, default=4, dest="n_facts")
    p.add_argument("--pool-size", type=int, default=0, dest="pool_size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--unanswerable-rate", type=float, default=0.0, dest="unanswerable_rate"
    )

    p = sub.add_parser("build-vocab", help="learn a subword vocabulary from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-size", type=int, default=8000, dest="max_size")

    p = sub.add_parser("train", help="train a model and save a checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    _add_config_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--selection", choices=["relevance", "recent"], default="relevance")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--max-k", type=int, default=11, dest="max_k")

    p = sub.add_parser("ablate", help="sweep history size with the recency strategy")
    p.add_argument("--train-corpus", required=True, dest="train_corpus")
    p.add_argument("--eval-corpus", required=True, dest="eval_corpus")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--ks", default="1,2,3,4,5,6,7,8,9,10,11")
    _add_config_flags(p)

    p = sub.add_parser("compare", help="relevance vs recency selection, same budget")
    p.add_argument("--train-corpus", required=True, dest="train_corpus")
    p.add_argument("--eval-corpus", required=True, dest="eval_corpus")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    _add_config_flags(p)

    p = sub.add_parser("serve", help="serve a checkpoint over HTTP")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--selection", choices=["relevance", "recent"], default="relevance")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--max-k", type=int, default=11, dest="max_k")
    p.add_argument("--persist", help="JSON file for saving sessions on shutdown")

    return parser


def _cmd_ingest(args) -> int:
    corpus = load_corpus(args.input, split_name=args.split)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(to_canonical_json(corpus), encoding="utf-8")
    stats = corpus_stats(corpus)
    print(
        format_table(
            ("dialogues", "questions", "max turns", "unanswerable"),
            [
                (
                    str(stats.dialogue_count),
                    str(stats.question_count),
                    str(stats.max_turns),
                    fmt_pct(100.0 * stats.unanswerable_fraction),
                )
            ],
        ),
        end="",
    )
    return 0


def _cmd_synth(args) -> int:
    cfg = SynthConfig(
        n_dialogues=args.n_dialogues,
        n_facts=args.n_facts,
        pool_size=args.pool_size,
        seed=args.seed,
        unanswerable_rate=args.unanswerable_rate,
    )
    corpus = build_synthetic_corpus(cfg)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(to_canonical_json(corpus), encoding="utf-8")
    print(f"wrote {len(corpus.dialogues)} dialogues to {args.out}")
    return 0


def _cmd_build_vocab(args) -> int:
    corpus = load_corpus(args.corpus)
    vocab = build_vocab(corpus, max_size=args.max_size)
    save_vocab(vocab, args.out)
    print(f"wrote {len(vocab)} tokens to {args.out}")
    return 0


def _cmd_train(args) -> int:
    corpus = load_corpus(args.corpus)
    vocab = load_vocab(args.vocab)
    model_cfg = _model_config(args, vocab_size=len(vocab))
    input_cfg = _input_config(args)
    train_cfg = _train_config(args)
    out_dir = Path(args.out_dir)
    result = train(
        corpus, vocab, model_cfg, input_cfg, train_cfg,
        loss_log_path=out_dir / "loss_log.jsonl",
    )
    save_checkpoint(
        out_dir / "checkpoint.bin",
        result.params,
        model_cfg,
        input_cfg,
        meta={
            "train_config": train_cfg.to_dict(),
            "epochs_run": result.epochs_run,
            "final_loss": result.epoch_losses[-1],
            "n_instances": result.n_instances,
        },
    )
    (out_dir / "train_meta.json").write_text(
        json.dumps(
            {
                "model": model_cfg.to_dict(),
                "input": input_cfg.to_dict(),
                "train": train_cfg.to_dict(),
                "n_parameters": n_parameters(result.params),
                "n_instances": result.n_instances,
                "n_steps": result.n_steps,
                "epochs_run": result.epochs_run,
                "epoch_losses": result.epoch_losses,
                "wall_time_s": result.wall_time_s,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    print(
        f"trained {result.epochs_run} epochs, final loss "
        f"{result.epoch_losses[-1]:.4f}, checkpoint at {out_dir / 'checkpoint.bin'}"
    )
    return 0


def _cmd_eval(args) -> int:
    corpus = load_corpus(args.corpus)
    vocab = load_vocab(args.vocab)
    params, model_cfg, input_cfg, _ = load_checkpoint(args.checkpoint)
    embeddings = params["selector_emb"].data if args.selection == "relevance" else None
    select = make_selection_fn(
        args.selection, vocab, embeddings, threshold=args.threshold, max_k=args.max_k
    )
    report = evaluate_corpus(params, model_cfg, input_cfg, vocab, corpus, select)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "eval.json").write_text(
        json.dumps(report.summary_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    write_predictions_jsonl(report, out_dir / "predictions.jsonl")
    print(
        format_table(
            ("F1", "HEQ-Q", "HEQ-D", "questions"),
            [(fmt_pct(report.f1), fmt_pct(report.heq_q), fmt_pct(report.heq_d), str(report.n_questions))],
        ),
        end="",
    )
    return 0


def _parse_ks(raw: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError as e:
        raise ConvqaError(f"--ks must be comma-separated integers: {e}") from e
    if not ks:
        raise ConvqaError("--ks must name at least one history size")
    return ks


def _cmd_ablate(args) -> int:
    train_corpus = load_corpus(args.train_corpus)
    eval_corpus = load_corpus(args.eval_corpus)
    vocab = load_vocab(args.vocab)
    model_cfg = _model_config(args, vocab_size=len(vocab))
    input_cfg = _input_config(args)
    train_cfg = _train_config(args)
    result = run_sweep(
        train_corpus, eval_corpus, vocab, model_cfg, input_cfg, train_cfg,
        ks=_parse_ks(args.ks), out_dir=args.out_dir,
    )
    print((Path(args.out_dir) / "sweep.txt").read_text(encoding="utf-8"), end="")
    print(f"best k: {result.best_k}")
    return 0


def _cmd_compare(args) -> int:
    train_corpus = load_corpus(args.train_corpus)
    eval_corpus = load_corpus(args.eval_corpus)
    vocab = load_vocab(args.vocab)
    model_cfg = _model_config(args, vocab_size=len(vocab))
    input_cfg = _input_config(args)
    train_cfg = _train_config(args)
    result = run_comparison(
        train_corpus, eval_corpus, vocab, model_cfg, input_cfg, train_cfg,
        out_dir=args.out_dir,
    )
    print((Path(args.out_dir) / "comparison.txt").read_text(encoding="utf-8"), end="")
    print(f"F1 gap (relevance - recent): {result.gap_f1:.2f}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import QAEngine, create_app

    engine = QAEngine.from_checkpoint(
        args.checkpoint,
        args.vocab,
        threshold=args.threshold,
        max_k=args.max_k,
        selection_mode=args.selection,
    )
    uvicorn.run(
        create_app(engine, persist_path=args.persist), host=args.host, port=args.port
    )
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "synth": _cmd_synth,
    "build-vocab": _cmd_build_vocab,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "compare": _cmd_compare,
    "serve": _cmd_serve,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.verb](args)
    except ConvqaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
