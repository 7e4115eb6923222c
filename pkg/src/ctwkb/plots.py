"""Static SVG figures: densities, branch loci, Im(S) curves and trajectories."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed ids and no timestamp, so identical data gives identical files
plt.rcParams["svg.hashsalt"] = "ctwkb"
_META = {"Date": None, "Creator": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def density_plot(path, t_f, targets, ctm: dict, exact=None, real_only=None, region=None) -> Path:
    """|psi|^2 per order, with the exact density and the real branch alone when given."""
    fig, ax = plt.subplots(figsize=(7, 4))
    if exact is not None:
        ax.plot(exact[0], exact[1], color="k", lw=2.0, label="exact")
    for N, dens in sorted(ctm.items()):
        ax.plot(targets, dens, lw=1.2, ls="--", label=f"CTM N={N}")
    if real_only is not None:
        ax.plot(targets, real_only, lw=1.0, ls=":", label="real branch only")
    if region is not None and np.isfinite(region[1]):
        ax.axvline(region[1], color="0.6", lw=0.8)
    ax.set_xlim(targets[0], targets[-1])
    ax.set_xlabel("x")
    ax.set_ylabel(r"$|\psi|^2$")
    ax.set_title(f"t = {t_f:g}")
    ax.legend(fontsize=8)
    return _save(fig, path)


def loci_plot(path, t_f, curves) -> Path:
    """Initial positions of every branch in the complex plane."""
    fig, ax = plt.subplots(figsize=(5, 5))
    for c in curves:
        if c.points:
            z = c.x0
            ax.plot(z.real, z.imag, ".", ms=2, label=f"{c.branch_id} ({c.kind})")
    ax.axhline(0, color="0.7", lw=0.6)
    ax.set_xlabel(r"Re $x_0$")
    ax.set_ylabel(r"Im $x_0$")
    ax.set_title(f"branches, t = {t_f:g}")
    ax.legend(fontsize=8)
    return _save(fig, path)


def imS_plot(path, t_f, series: dict) -> Path:
    """Im(S) against target for each branch; `series` maps label -> (targets, im_S)."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, (x, y) in series.items():
        ax.plot(x, y, lw=1.2, label=label)
    ax.set_yscale("symlog", linthresh=1.0)
    ax.set_xlabel("x")
    ax.set_ylabel("Im S")
    ax.set_title(f"t = {t_f:g}")
    ax.legend(fontsize=8)
    return _save(fig, path)


def trajectory_plot(path, t_f, paths: dict) -> Path:
    """Complex trajectories x(t); `paths` maps branch label -> list of complex arrays."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, (label, group) in enumerate(paths.items()):
        color = f"C{i}"
        for k, z in enumerate(group):
            ax.plot(z.real, z.imag, color=color, lw=0.6, label=label if k == 0 else None)
    ax.axhline(0, color="0.7", lw=0.6)
    ax.set_xlabel("Re x")
    ax.set_ylabel("Im x")
    ax.set_title(f"trajectories, t_f = {t_f:g}")
    ax.legend(fontsize=8)
    return _save(fig, path)
