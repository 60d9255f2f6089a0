"""Static SVG charts (scatter and line plots) with byte-stable output."""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_RC = {"svg.hashsalt": "foldalign", "svg.fonttype": "none", "path.simplify": False}


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def scatter_svg(path, x, y, color_values, title: str = "", xlabel: str = "", ylabel: str = "",
                color_label: str = "frame") -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 4.5))
        sc = ax.scatter(x, y, c=color_values, cmap="viridis", s=12)
        fig.colorbar(sc, ax=ax, label=color_label)
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        fig.tight_layout()
        _save(fig, path)


def line_svg(path, curves: Mapping[str, tuple[Sequence[float], Sequence[float]]], title: str = "",
             xlabel: str = "", ylabel: str = "", panels: Sequence[Mapping] | None = None) -> None:
    """One axes per mapping in ``panels`` (or a single axes for ``curves``); label -> (x, y)."""
    groups = list(panels) if panels else [curves]
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, len(groups), figsize=(5 * len(groups), 4), squeeze=False)
        for ax, group in zip(axes[0], groups):
            for label, (xs, ys) in group.items():
                ax.plot(xs, ys, label=label, linewidth=1.2)
            ax.set_xlabel(xlabel)
            ax.set_ylabel(ylabel)
            ax.legend(fontsize=8)
        axes[0][0].set_title(title)
        fig.tight_layout()
        _save(fig, path)
