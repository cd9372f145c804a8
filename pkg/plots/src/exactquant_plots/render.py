"""Render figures from experiment CSVs.

Pure rendering: every statistic is taken from the CSV as-is.  Output is a
static raster image (format inferred from the output suffix, PNG by
default).
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .schemas import BITS_COLUMNS, ENTROPY_COLUMNS, MSE_COLUMNS, read_rows

_KINDS = ("entropy", "bits", "mse")


@dataclass(frozen=True)
class FigureSpec:
    """What to render: input CSV, figure kind and output image path."""

    input_csv: str
    kind: str
    output_image: str
    title: str | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")


def plot_entropy(spec: FigureSpec) -> str:
    """Conditional-entropy curves vs the input support length.

    One series per (scheme, sigma) with its lower/upper bound band; the
    support axis is log-scaled (the grid is powers of two).
    """
    rows = read_rows(spec.input_csv, ENTROPY_COLUMNS)
    series = defaultdict(list)
    for r in rows:
        key = (r["scheme"], float(r["sigma"]))
        series[key].append((float(r["t"]), float(r["measured"]),
                            float(r["lower"]), float(r["upper"])))
    fig, ax = plt.subplots(figsize=(7, 5))
    for (scheme, sigma), pts in sorted(series.items()):
        pts.sort()
        ts = [p[0] for p in pts]
        ax.plot(ts, [p[1] for p in pts], marker="o", markersize=3,
                label=f"{scheme}, sigma={sigma:g}")
        ax.fill_between(ts, [p[2] for p in pts], [p[3] for p in pts],
                        alpha=0.12)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("input support length t")
    ax.set_ylabel("conditional message entropy [bits]")
    ax.set_title(spec.title or "Message entropy of the layered quantizers")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(spec.output_image)
    plt.close(fig)
    return spec.output_image


def plot_bits(spec: FigureSpec) -> str:
    """Bits per client against the client count, one series per mechanism."""
    rows = read_rows(spec.input_csv, BITS_COLUMNS)
    series = defaultdict(list)
    for r in rows:
        key = (r["mechanism"], float(r["t"]))
        series[key].append((int(float(r["n"])), float(r["mean_bits"]),
                            float(r["bound"])))
    fig, ax = plt.subplots(figsize=(7, 5))
    for (mech, t), pts in sorted(series.items()):
        pts.sort()
        ns = [p[0] for p in pts]
        ax.plot(ns, [p[1] for p in pts], marker="o", markersize=3,
                label=f"{mech}, t={t:g}")
        bounds = [p[2] for p in pts]
        if all(b == b for b in bounds):  # skip all-nan bound series
            ax.plot(ns, bounds, linestyle="--", alpha=0.5)
    if len({p[0] for pts in series.values() for p in pts}) > 1:
        ax.set_xscale("log")
    ax.set_xlabel("number of clients n")
    ax.set_ylabel("bits per client")
    ax.set_title(spec.title or "Communication cost of aggregate mechanisms")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(spec.output_image)
    plt.close(fig)
    return spec.output_image


def plot_mse(spec: FigureSpec) -> str:
    """Mean squared error against the privacy budget, log-scaled error axis.

    Per-trial rows are averaged per (mechanism, gamma, eps); an arithmetic
    mean of the published trial values, not a recomputation.
    """
    rows = read_rows(spec.input_csv, MSE_COLUMNS)
    acc = defaultdict(list)
    for r in rows:
        acc[(r["mechanism"], float(r["gamma"]), float(r["eps"]))].append(
            float(r["mse"]))
    series = defaultdict(list)
    for (mech, gamma, eps), vals in acc.items():
        series[(mech, gamma)].append((eps, sum(vals) / len(vals)))
    fig, ax = plt.subplots(figsize=(7, 5))
    for (mech, gamma), pts in sorted(series.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                markersize=3, label=f"{mech}, gamma={gamma:g}")
    ax.set_yscale("log")
    ax.set_xlabel("privacy budget epsilon")
    ax.set_ylabel("mean squared error")
    ax.set_title(spec.title or "MSE against the privacy budget")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(spec.output_image)
    plt.close(fig)
    return spec.output_image


RENDERERS = {"entropy": plot_entropy, "bits": plot_bits, "mse": plot_mse}
