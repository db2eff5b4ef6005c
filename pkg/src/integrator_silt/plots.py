"""Figure rendering for the report paths (PNG files next to the CSV output)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_RC = {
    "figure.figsize": (6.0, 3.7),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)


def refinement_plot(levels, path, closed_form=None, title="refinement"):
    """Level value vs quadrature mesh, with the reference value when known."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        meshes = [m for m, _ in levels]
        values = [v for _, v in levels]
        ax.plot(meshes, values, "o-", label="quadrature")
        if closed_form is not None:
            ax.axhline(closed_form, color="tab:red", ls="--", lw=1, label="closed form")
        ax.set_xscale("log", base=2)
        ax.set_xlabel("quadrature mesh")
        ax.set_ylabel("value")
        ax.set_title(title)
        ax.legend()
        _save(fig, path)


def cauchy_plot(table, path, title="mean-square increments along the smoothing ladder"):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        eps = np.asarray(table.epsilons)
        mid = np.sqrt(eps[:-1] * eps[1:])
        ax.loglog(mid, table.cauchy_increments, "o-")
        ax.set_xlabel("geometric mean of consecutive eps")
        ax.set_ylabel("E (T_i - T_{i+1})^2")
        ax.set_title(title)
        _save(fig, path)


def paths_plot(samples, path, max_paths=20, title="sampled planar trajectories"):
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.4))
        nodes = samples[0].ctx.nodes
        for p in samples[:max_paths]:
            axes[0].plot(nodes, p.coord1, lw=0.7, alpha=0.7)
            axes[1].plot(p.coord1, p.coord2, lw=0.7, alpha=0.7)
        axes[0].set_xlabel("t")
        axes[0].set_ylabel("first coordinate")
        axes[1].set_xlabel("first coordinate")
        axes[1].set_ylabel("second coordinate")
        fig.suptitle(title)
        _save(fig, path)


def scan_plot(radii, series, path, title="shrinking-box scan", ylabel="value"):
    """One curve per named series against the box radius (log-log when positive)."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        r = np.asarray(radii)
        for label, values in series.items():
            ax.plot(r, values, "o-", label=label)
        ax.set_xlabel("box radius")
        ax.set_ylabel(ylabel)
        ax.invert_xaxis()
        ax.set_title(title)
        ax.legend()
        _save(fig, path)


def fwt_summary_plot(rows, path, title="transform quadratures by probe and mode"):
    """Horizontal bars of quadrature values, one per probe/mode pair."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.5, 0.5 + 0.35 * max(len(rows), 1)))
        labels = [f"{probe} / {mode}" for probe, mode, _ in rows]
        values = [v for _, _, v in rows]
        y = np.arange(len(rows))
        ax.barh(y, values)
        ax.set_yticks(y, labels)
        ax.set_xlabel("quadrature value")
        ax.set_title(title)
        _save(fig, path)
