"""Deterministic SVG figures for CLI reports."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "svg.hashsalt": "phonon-bus",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.figsize": (4.8, 3.2),
}


def line_plot(path: Path, x, series: dict, xlabel: str, ylabel: str, title: str = "",
              logy: bool = False, marker: str | None = None) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, y in series.items():
            ax.plot(x, y, label=label, marker=marker, lw=1.2)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def bar_plot(path: Path, labels, values, ylabel: str, title: str = "",
             ylim: tuple | None = None) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar([str(l) for l in labels], values, color="0.4")
        ax.set_ylabel(ylabel)
        if ylim:
            ax.set_ylim(*ylim)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
