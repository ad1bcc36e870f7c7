"""Figure rendering for simulation summaries.

Everything draws to files through the Agg backend; nothing opens a
display. Run figures pair daily profit with cumulative profit; comparison
figures lay the same pair out as a grid with one column per n_min value.
"""

from __future__ import annotations

from os import PathLike

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .simulator import Summary

_PANELS = (("daily_profit", "daily profit"), ("cumulative_profit", "cumulative profit"))


def _series_by_policy(summary: Summary, attr: str) -> dict[str, tuple[list[int], list[float]]]:
    out: dict[str, tuple[list[int], list[float]]] = {}
    for row in summary.series:
        days, values = out.setdefault(row.policy, ([], []))
        days.append(row.day)
        values.append(float(getattr(row, attr)))
    return out


def _draw_panel(axis, summary: Summary, attr: str) -> None:
    for policy, (days, values) in sorted(_series_by_policy(summary, attr).items()):
        axis.plot(days, values, marker="o", markersize=3, linewidth=1.2, label=policy)
    axis.grid(True, alpha=0.3)


def render_run_figure(summary: Summary, path: str | PathLike) -> str:
    """Two stacked panels: daily profit on top, cumulative below."""
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(8, 7), sharex=True)
    for axis, (attr, label) in zip((top, bottom), _PANELS):
        _draw_panel(axis, summary, attr)
        axis.set_ylabel(label)
    bottom.set_xlabel("decision day")
    top.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def render_comparison_figure(summaries: dict[int, Summary], path: str | PathLike) -> str:
    """Grid of profit panels, one column per n_min, sorted ascending."""
    if not summaries:
        raise ValueError("no summaries to plot")
    n_mins = sorted(summaries)
    fig, axes = plt.subplots(
        2, len(n_mins), figsize=(4 * len(n_mins), 7), sharex=True, squeeze=False
    )
    for col, n_min in enumerate(n_mins):
        for row_idx, (attr, label) in enumerate(_PANELS):
            axis = axes[row_idx][col]
            _draw_panel(axis, summaries[n_min], attr)
            if row_idx == 0:
                axis.set_title(f"n_min = {n_min}")
            if col == 0:
                axis.set_ylabel(label)
        axes[1][col].set_xlabel("decision day")
    axes[0][0].legend(loc="best", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)
