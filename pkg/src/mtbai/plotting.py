"""SVG line charts of logged per-run series."""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from .errors import UsageError
from .harness import SERIES_COLUMNS, read_series_csv

PLOTTABLE = SERIES_COLUMNS[2:]


def moving_average(y: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average; the window shrinks at the edges, NaNs are skipped."""
    if window < 1:
        raise UsageError(f"window must be >= 1, got {window}")
    if window == 1 or y.size == 0:
        return y.copy()
    half = window // 2
    out = np.empty_like(y)
    for i in range(y.size):
        seg = y[max(0, i - half):i + half + 1]
        seg = seg[np.isfinite(seg)]
        out[i] = seg.mean() if seg.size else np.nan
    return out


def band_by_round(points, column: str):
    """Per round ``t``: mean and central 97.5% empirical band across runs."""
    if column not in PLOTTABLE:
        raise UsageError(f"unknown column {column!r}; choose from {PLOTTABLE}")
    by_t = {}
    for p in points:
        v = getattr(p, column)
        if np.isfinite(v):
            by_t.setdefault(p.t, []).append(v)
    ts = np.array(sorted(by_t), dtype=float)
    mean = np.array([np.mean(by_t[t]) for t in sorted(by_t)])
    lo = np.array([np.quantile(by_t[t], 0.0125) for t in sorted(by_t)])
    hi = np.array([np.quantile(by_t[t], 0.9875) for t in sorted(by_t)])
    return ts, mean, lo, hi


def plot_series(series_csv, out_svg, column: str = "c_sigma_inv", window: int = 51,
                reference: Optional[float] = None) -> Path:
    """Mean of ``column`` across runs vs ``t`` with its 97.5% band, written as SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if column not in PLOTTABLE:
        raise UsageError(f"unknown column {column!r}; choose from {PLOTTABLE}")
    ts, mean, lo, hi = band_by_round(read_series_csv(series_csv), column)
    mean, lo, hi = (moving_average(a, window) for a in (mean, lo, hi))
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if ts.size:
        ax.fill_between(ts, lo, hi, alpha=0.25, linewidth=0, label="97.5% band")
        ax.plot(ts, mean, linewidth=1.2, label="mean")
    if reference is not None:
        ax.axhline(reference, color="k", linestyle="--", linewidth=0.8, label="oracle")
    ax.set_xlabel("t")
    ax.set_ylabel(column)
    if ts.size or reference is not None:
        ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    out = Path(out_svg)
    fig.savefig(out, format="svg")
    plt.close(fig)
    return out
