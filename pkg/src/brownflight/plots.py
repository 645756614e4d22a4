"""Figure rendering for the report path.

Figures are written next to the delimited outputs; the CSV/JSON files
remain the machine-readable contract.  PNG metadata carries the run
configuration for provenance.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["save_survival_figure", "save_layer_counts_figure", "save_displacement_figure"]


def _metadata(config: dict | None) -> dict:
    if config is None:
        return {}
    return {"Description": json.dumps(config, sort_keys=True)}


def save_survival_figure(path: Path, curve, fits: list[dict], target_alpha: float,
                         diagnostic: dict | None = None, config: dict | None = None) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.loglog(curve.grid, np.maximum(curve.survival, 1e-12), "k.", ms=4, label="empirical")
    t = curve.grid
    for i, f in enumerate(fits):
        lo, hi = f["window"]
        m = (t >= lo) & (t <= hi)
        if m.sum() >= 2:
            y = np.exp(f["intercept"] - 0.5 * f["exponent"] * np.log(t[m]))
            ax.loglog(t[m], y, lw=1.2, alpha=0.8,
                      label=f"fit w{i}: alpha={f['exponent']:.3f}")
    mid = len(t) // 2
    anchor = max(curve.survival[mid], 1e-12)
    guide = anchor * (t[mid] / t) ** (target_alpha / 2.0)
    ax.loglog(t, guide, "--", color="gray", lw=1.0, label=f"slope alpha={target_alpha:.3f}")
    if diagnostic is not None:
        prof = np.asarray(diagnostic["upper_bound_profile"])
        scale = anchor / max(prof[mid], 1e-300)
        ax.loglog(diagnostic["t"], np.maximum(prof * scale, 1e-12), ":", color="tab:red",
                  lw=1.0, label="layer-count bound (scaled)")
    ax.set_xlabel("t")
    ax.set_ylabel("P(tau > t)")
    ax.set_title("flight duration tail")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_metadata(config))
    plt.close(fig)


def save_layer_counts_figure(path: Path, counts: dict[int, int], fitted_dimension: float,
                             config: dict | None = None) -> None:
    ks = np.array(sorted(counts))
    w = np.array([counts[int(k)] for k in ks], dtype=float)
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.plot(-ks, np.log2(w), "o", ms=5, label="log2 counts")
    j = -ks.astype(float)
    coef = np.polyfit(j, np.log2(w), 1)
    ax.plot(j, np.polyval(coef, j), "-", lw=1.2,
            label=f"slope = {coef[0]:.3f} (fit d = {fitted_dimension:.3f})")
    ax.set_xlabel("j = -generation")
    ax.set_ylabel("log2 W_j")
    ax.set_title("Whitney layer counts")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_metadata(config))
    plt.close(fig)


def save_displacement_figure(path: Path, records, epsilon: float, fit: dict | None,
                             target_beta: float, config: dict | None = None) -> None:
    disp = np.array([r.displacement for r in records if not r.censored])
    disp = disp[disp > 0]
    grid = np.geomspace(max(disp.min(), epsilon / 4.0), disp.max(), 60)
    tail = 1.0 - np.searchsorted(np.sort(disp), grid, side="right") / disp.size
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.loglog(grid, np.maximum(tail, 1e-12), "k.", ms=4, label="empirical")
    if fit is not None:
        lo, hi = fit["window"]
        m = (grid >= lo) & (grid <= hi)
        if m.sum() >= 2:
            y = np.exp(fit["intercept"] - fit["exponent"] * np.log(grid[m]))
            ax.loglog(grid[m], y, lw=1.2, label=f"fit: beta={fit['exponent']:.3f}")
    mid = len(grid) // 2
    anchor = max(tail[mid], 1e-12)
    ax.loglog(grid, anchor * (grid[mid] / grid) ** target_beta, "--", color="gray",
              lw=1.0, label=f"slope beta={target_beta:.3f}")
    ax.set_xlabel("r")
    ax.set_ylabel("P(|exit - start| > r)")
    ax.set_title("hitting-distance tail")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_metadata(config))
    plt.close(fig)
