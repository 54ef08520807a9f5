"""Figures written next to the CSV/JSON outputs of the CLI.

Everything renders through the Agg backend with fixed sizes and without
the software/date metadata, so identical data gives byte-identical PNGs.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .structure import FRAME_SHIFT_MS  # noqa: E402

_PNG_META = {"Software": None}


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def plot_contours(path: str | Path, series: Sequence[tuple[str, np.ndarray]], title: str = "",
                  boundaries_ms: Sequence[float] = ()) -> None:
    """log-F0 contours against time; ``series`` is ``[(label, log_f0), ...]``."""
    fig, ax = plt.subplots(figsize=(8, 3.5))
    for label, lf0 in series:
        lf0 = np.asarray(lf0)
        ax.plot(np.arange(lf0.shape[0]) * FRAME_SHIFT_MS, lf0, lw=1.2, label=label)
    for b in boundaries_ms:
        ax.axvline(b, color="0.85", lw=0.6, zorder=0)
    ax.set_xlabel("time (ms)")
    ax.set_ylabel("log F0")
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend(fontsize=7, loc="best")
    fig.tight_layout()
    _save(fig, path)


def plot_transfer(path: str | Path, reference: np.ndarray, transferred: np.ndarray, zero: np.ndarray) -> None:
    """Reference contour above, target decoded with and without the reference embedding below."""
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(8, 5))
    top.plot(np.arange(len(reference)) * FRAME_SHIFT_MS, reference, color="k", lw=1.2)
    top.set_title("reference")
    top.set_ylabel("log F0")
    t = np.arange(len(transferred)) * FRAME_SHIFT_MS
    bottom.plot(t, transferred, lw=1.2, label="reference embedding")
    bottom.plot(np.arange(len(zero)) * FRAME_SHIFT_MS, zero, lw=1.0, ls="--", label="zero embedding")
    bottom.set_title("target")
    bottom.set_xlabel("time (ms)")
    bottom.set_ylabel("log F0")
    bottom.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def plot_metrics(path: str | Path, rows: Sequence[dict]) -> None:
    """Training loss terms and, where present, eval log-F0 RMSE per mode."""
    fig, (left, right) = plt.subplots(1, 2, figsize=(10, 3.5))
    steps = np.array([r["step"] for r in rows])
    for key in ("total", "dur_l2", "f0c0_l2", "kl"):
        vals = np.array([r[key] for r in rows], dtype=float)
        # running mean over a window keeps the curves legible
        w = max(1, len(vals) // 200)
        if w > 1:
            vals = np.convolve(vals, np.ones(w) / w, mode="valid")
        left.plot(steps[len(steps) - len(vals):], vals, lw=1.0, label=key)
    left.set_yscale("symlog", linthresh=1.0)
    left.set_xlabel("step")
    left.set_title("training loss")
    left.legend(fontsize=7)
    evals = [r for r in rows if "eval_encoded_logf0_rmse" in r]
    for mode in ("encoded", "zero", "random"):
        if evals:
            right.plot([r["step"] for r in evals], [r[f"eval_{mode}_logf0_rmse"] for r in evals],
                       marker="o", ms=3, label=mode)
    right.set_xlabel("step")
    right.set_title("eval log-F0 RMSE")
    if evals:
        right.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def plot_transfer_scatter(path: str | Path, expected: np.ndarray, shift: np.ndarray, r: float) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.scatter(expected, shift, s=8, alpha=0.7)
    lo = float(min(np.min(expected), np.min(shift)))
    hi = float(max(np.max(expected), np.max(shift)))
    ax.plot([lo, hi], [lo, hi], color="0.6", lw=0.8)
    ax.set_xlabel("reference pitch offset (log F0)")
    ax.set_ylabel("induced shift (log F0)")
    ax.set_title(f"r = {r:.3f}")
    fig.tight_layout()
    _save(fig, path)


def plot_ordering(path: str | Path, rmse: dict[str, float], se: dict[str, float]) -> None:
    """Bar chart of eval log-F0 RMSE per inference mode."""
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    names = list(rmse)
    ax.bar(names, [rmse[n] for n in names], yerr=[se.get(n, 0.0) for n in names], capsize=4,
           color=["C0", "C1", "C2"][: len(names)])
    ax.set_ylabel("log-F0 RMSE")
    fig.tight_layout()
    _save(fig, path)
