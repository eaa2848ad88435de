"""Figure rendering for solve reports (optional, headless backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def render_trajectory_figure(traj, path, n: int, title: str = "") -> str:
    """Two-panel figure: state components and consistency residuals over t."""
    ts = np.asarray(traj.times)
    X = traj.state_array()
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 7), sharex=True)
    for i in range(n):
        ax1.plot(ts, X[:, i], label=f"x{i + 1}")
    ax1.set_ylabel("state components")
    ax1.legend(loc="best", fontsize=9)
    if title:
        ax1.set_title(title)
    r1 = np.maximum(np.asarray(traj.res_ae1), 1e-300)
    r2 = np.maximum(np.asarray(traj.res_ae2), 1e-300)
    ax2.semilogy(ts, r1, label="algebraic residual")
    if np.any(np.asarray(traj.res_ae2) > 0):
        ax2.semilogy(ts, r2, label="overdetermined residual")
    ax2.set_xlabel("t")
    ax2.set_ylabel("residual")
    ax2.legend(loc="best", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return str(path)
