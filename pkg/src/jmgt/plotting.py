"""Static figures written next to the CSV/JSON outputs (Agg backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_abscissa(curve, path) -> Path:
    rho, a = curve.rho, curve.abscissa
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.loglog(rho, np.abs(a), ".-", label="|max Re lambda|")
    ax.set_xlabel("rho")
    ax.set_ylabel("|abscissa|")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return _save(fig, Path(path))


def plot_series(times, named: dict, path, ylabel="norm", fits: dict | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, y in named.items():
        label = name
        if fits and name in fits:
            label += f" (slope {fits[name].exponent:.3f})"
        ax.loglog(1 + np.asarray(times), np.abs(y), label=label)
    ax.set_xlabel("1 + t")
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, Path(path))


def plot_trajectory(traj, keys, path) -> Path:
    t = np.asarray(traj.times)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for k in keys:
        if k in traj.records[0]:
            ax.semilogy(t, np.abs(traj.column(k)), label=k)
    ax.set_xlabel("t")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, Path(path))
