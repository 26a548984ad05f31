"""Line charts for ratio curves and DP sweeps (matplotlib, headless)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analytics import RatioCurve  # noqa: E402


def curve_rows(curve: RatioCurve, alpha_max: float, points: int = 2000):
    """Rows (alpha, piece, c, c_0..c_k) on a grid over (0, alpha_max].

    ``c`` is the ratio itself; ``c_j`` is interval j's expression evaluated on
    the whole grid, which is how the piecewise bounds are usually drawn.
    """
    grid = np.unique(np.concatenate([np.linspace(alpha_max / points, alpha_max, points), curve.alphas]))
    grid = grid[grid <= alpha_max]
    c = np.asarray(curve(grid))
    pieces = [np.asarray(curve.piece(j, grid)) for j in range(curve.k + 1)]
    rows = []
    for i, a in enumerate(grid):
        rows.append([float(a), curve.piece_index(a), float(c[i])] + [float(p[i]) for p in pieces])
    return rows


def curve_header(k: int):
    return ["alpha", "piece", "c"] + [f"c_{j}" for j in range(k + 1)]


def plot_curve(rows, k: int, path: str, title: str = "") -> None:
    data = np.asarray(rows, dtype=float)
    alpha, piece, c = data[:, 0], data[:, 1], data[:, 2]
    fig, ax = plt.subplots(figsize=(6, 4))
    for j in range(k + 1):
        ax.plot(alpha, data[:, 3 + j], lw=0.8, ls="--", alpha=0.6, label=f"$c_{j}$")
        mask = piece == j
        ax.plot(alpha[mask], c[mask], lw=2.0, color=f"C{j}")
    lo = np.min(c)
    ax.axhline(lo, color="k", lw=0.6, ls=":")
    ax.set_ylim(max(0.0, lo - 0.05), min(1.02, np.max(c) + 0.05))
    ax.set_xlabel(r"$\alpha$")
    ax.set_ylabel(r"$c(\alpha)$")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_sweep(rows, path: str, title: str = "") -> None:
    data = np.asarray(rows, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(data[:, 0], data[:, 1], lw=1.5)
    ax.set_xlabel("n")
    ax.set_ylabel("optimal ratio")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
