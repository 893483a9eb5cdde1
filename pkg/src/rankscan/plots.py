"""Figure rendering for the report paths (power curves and identification)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .intervals import Interval
from .pipeline import MINIMAX_BOUNDARY_T, IdentificationReport, PowerCell

__all__ = ["power_figure", "identification_figure"]

_COLORS = {"oracle": "black", "perm": "tab:blue", "rank": "tab:red"}


def power_figure(cells: list[PowerCell], alpha: float, path) -> None:
    """Power vs signal amplitude, one curve per test, with 95% error bars.

    Dashed vertical line: the amplitude boundary below which no test can beat
    random guessing asymptotically.  Dashed horizontal line: the level.
    """
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    tests = sorted({c.test for c in cells}, key=lambda t: ["oracle", "perm", "rank"].index(t) if t in _COLORS else 99)
    for test in tests:
        pts = sorted((c for c in cells if c.test == test), key=lambda c: c.t)
        ts = [c.t for c in pts]
        ax.errorbar(
            ts,
            [c.power for c in pts],
            yerr=[c.moe for c in pts],
            marker="o",
            markersize=3,
            capsize=2,
            label=test,
            color=_COLORS.get(test),
        )
    ax.axvline(MINIMAX_BOUNDARY_T, color="black", linestyle="--", linewidth=0.8)
    ax.axhline(alpha, color="black", linestyle="--", linewidth=0.8)
    ax.set_xlabel("signal amplitude t")
    ax.set_ylabel("power")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def identification_figure(
    data,
    report: IdentificationReport,
    path,
    truth: list[Interval] | None = None,
) -> None:
    """Data trace with selected intervals shaded and true intervals marked."""
    x = np.asarray(data, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(8.0, 3.6))
    ax.plot(np.arange(1, x.size + 1), x, linewidth=0.4, color="0.55")
    for iv in report.selected:
        ax.axvspan(iv.a, iv.b, color="tab:red", alpha=0.35, linewidth=0)
    if truth:
        for iv in truth:
            ax.axvspan(iv.a, iv.b, ymin=0.0, ymax=0.05, color="tab:green", linewidth=0)
    ax.set_xlabel("position")
    ax.set_ylabel("value")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
