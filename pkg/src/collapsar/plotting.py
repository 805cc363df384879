"""Self-contained SVG line charts of a trace (W, W', R against y)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .similarity import SolutionTrace


def plot_trace(trace: SolutionTrace, path: str) -> None:
    """Three stacked panels: W, W' (symlog), R (log), with event markers."""
    fig, axes = plt.subplots(3, 1, figsize=(7.0, 8.0), sharex=True)
    y = trace.ys

    ax = axes[0]
    ax.plot(y, trace.Ws, color="tab:green", lw=1.2)
    ax.axhline(-1.0, color="0.6", ls="--", lw=0.8)
    ax.set_ylabel("W")
    ax.set_yscale("symlog", linthresh=1.0)

    ax = axes[1]
    ax.plot(y, trace.Wps, color="tab:red", lw=1.2)
    ax.axhline(0.0, color="0.6", ls="--", lw=0.8)
    ax.set_ylabel("W'")
    ax.set_yscale("symlog", linthresh=1.0)

    ax = axes[2]
    pos = trace.Rs > 0.0
    ax.plot(y[pos], trace.Rs[pos], color="tab:blue", lw=1.2)
    ax.set_ylabel("R")
    ax.set_yscale("log")
    ax.set_xlabel("y")

    if y[-1] / max(y[0], 1e-300) > 50.0:
        for ax in axes:
            ax.set_xscale("log")

    colors = {"InflectionDown": "0.4", "VelocityMin": "0.2", "InflectionUp": "0.4"}
    for ev in trace.events:
        c = colors.get(ev.kind.value)
        if c is not None:
            for ax in axes[:2]:
                ax.axvline(ev.y_star, color=c, ls=":", lw=0.7)

    fig.align_ylabels(axes)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
