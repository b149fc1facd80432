"""Result tables in text, markdown, and TSV form, plus saved figures.

TSV output is byte-stable for identical inputs: cells are written exactly as
formatted, tab-delimited, newline-terminated, no padding. The text and
markdown styles are for humans; only markdown supports bolding a row.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import UsageError


def fmt_pct(value: float) -> str:
    return f"{value:.2f}"


def format_table(
    headers: Sequence[str],
    rows: Sequence[Sequence[str]],
    style: str = "text",
    bold_row: int | None = None,
) -> str:
    for r, row in enumerate(rows):
        if len(row) != len(headers):
            raise UsageError(f"row {r} has {len(row)} cells, expected {len(headers)}")
    cells = [[str(c) for c in row] for row in rows]

    if style == "tsv":
        lines = ["\t".join(headers)]
        lines.extend("\t".join(row) for row in cells)
        return "\n".join(lines) + "\n"

    if style == "markdown":
        if bold_row is not None:
            cells = [
                [f"**{c}**" for c in row] if r == bold_row else row
                for r, row in enumerate(cells)
            ]
        lines = ["| " + " | ".join(headers) + " |"]
        lines.append("|" + "|".join(" --- " for _ in headers) + "|")
        lines.extend("| " + " | ".join(row) + " |" for row in cells)
        return "\n".join(lines) + "\n"

    if style == "text":
        widths = [len(h) for h in headers]
        for row in cells:
            widths = [max(w, len(c)) for w, c in zip(widths, row)]
        lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
        lines.append("  ".join("-" * w for w in widths))
        lines.extend(
            "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells
        )
        return "\n".join(lines) + "\n"

    raise UsageError(f"unknown table style {style!r}")


def save_sweep_figure(
    ks: Sequence[int],
    f1: Sequence[float],
    heq_q: Sequence[float],
    heq_d: Sequence[float],
    path: str | Path,
) -> None:
    """Line chart of the history-size sweep."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(ks, f1, marker="o", label="F1")
    ax.plot(ks, heq_q, marker="s", label="HEQ-Q")
    ax.plot(ks, heq_d, marker="^", label="HEQ-D")
    ax.set_xlabel("history turns kept")
    ax.set_ylabel("percent")
    ax.set_title("history size sweep")
    ax.set_xticks(list(ks))
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120)
    plt.close(fig)


def save_comparison_figure(
    labels: Sequence[str],
    f1: Sequence[float],
    heq_q: Sequence[float],
    heq_d: Sequence[float],
    path: str | Path,
) -> None:
    """Grouped bars comparing selection strategies."""
    metrics = [("F1", f1), ("HEQ-Q", heq_q), ("HEQ-D", heq_d)]
    x = range(len(labels))
    width = 0.25
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for m, (name, values) in enumerate(metrics):
        offsets = [i + (m - 1) * width for i in x]
        ax.bar(offsets, values, width=width, label=name)
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels)
    ax.set_ylabel("percent")
    ax.set_title("selection strategy comparison")
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120)
    plt.close(fig)
