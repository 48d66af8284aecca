"""Figure rendering for example runs.

Renders the plots that accompany each example's CSV output: the MMS
convergence curves, centerline stress/strain profiles, quasi-static
energy and tip histories, and damage field snapshots. Uses the Agg
backend so runs work headless.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.collections import PolyCollection


def _finish(fig, path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def convergence_figure(hs, error_sets, path):
    """log-log error curves against a second-order guide line.

    error_sets maps curve labels to per-cycle error lists.
    """
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    for label, errors in error_sets.items():
        ax.loglog(hs, errors, "o-", label=label)
    hs = np.asarray(hs, dtype=float)
    anchor = max(max(e) for e in error_sets.values())
    ax.loglog(hs, anchor * (hs / hs[0]) ** 2, "k--", lw=0.8, label="h^2")
    ax.set_xlabel("h")
    ax.set_ylabel("L2 error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    _finish(fig, path)


def centerline_figure(curves, quantity, path):
    """Overlaid centerline profiles; curves maps labels to (arc, value)."""
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    for label, (arc, values) in curves.items():
        ax.plot(arc, values, label=label)
    ax.set_xlabel("arc length")
    ax.set_ylabel(quantity)
    ax.grid(True, alpha=0.3)
    ax.legend()
    _finish(fig, path)


def series_figure(series, path):
    """Energy and tip histories; series maps labels to RunResult."""
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    for label, result in series.items():
        axes[0].plot(result.times, result.bulk, label=label)
        axes[1].plot(result.times, result.crack, label=label)
        axes[2].plot(result.times, result.tip, label=label)
    for ax, name in zip(axes, ("bulk energy", "crack energy", "tip position")):
        ax.set_xlabel("time")
        ax.set_ylabel(name)
        ax.grid(True, alpha=0.3)
        ax.legend()
    _finish(fig, path)


def field_figure(mesh, values, path, label="value", vmin=None, vmax=None):
    """Cell-shaded rendering of a nodal field on the quad mesh."""
    polys = mesh.nodes[mesh.cells]
    cell_vals = values[mesh.cells].mean(axis=1)
    fig, ax = plt.subplots(figsize=(5.2, 4.6))
    coll = PolyCollection(polys, array=cell_vals, edgecolor="none",
                          cmap="viridis")
    if vmin is not None or vmax is not None:
        coll.set_clim(vmin, vmax)
    ax.add_collection(coll)
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.0)
    ax.set_aspect("equal")
    fig.colorbar(coll, ax=ax, label=label)
    _finish(fig, path)
