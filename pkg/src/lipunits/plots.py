"""Figure rendering for the experiment reports.

Each study writes a PNG next to its CSV: the unit-size sweep as correctness
vs set size with both guessing baselines, the network study as a bar chart,
and the hierarchy study as the four classifier/network series.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

FIG_SIZE = (6.4, 4.0)
DPI = 150


def _new_axes(xlabel, ylabel):
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def render_discovery(summary_rows, path) -> None:
    rows = sorted(summary_rows, key=lambda r: r["map_size"])
    sizes = [r["map_size"] for r in rows]
    fig, ax = _new_axes("number of visual units", "word correctness C")
    ax.errorbar(
        sizes,
        [r["mean_C"] for r in rows],
        yerr=[r["se"] for r in rows],
        marker="o",
        capsize=3,
        label="mean C ± 1 se",
    )
    ax.plot(sizes, [r["unit_chance"] for r in rows], "g--", label="1 / units")
    ax.plot(sizes, [r["homophene_ceiling"] for r in rows], "r:", label="homophene ceiling")
    ax.legend()
    _save(fig, path)


def render_network_study(summary_rows, path) -> None:
    labels = [f"{r['classifier_unit']}/{r['network_unit']}" for r in summary_rows]
    fig, ax = _new_axes("classifier / network units", "correctness C")
    ax.bar(
        range(len(summary_rows)),
        [r["mean_C"] for r in summary_rows],
        yerr=[r["se"] for r in summary_rows],
        capsize=3,
    )
    ax.set_xticks(range(len(summary_rows)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    _save(fig, path)


def render_hierarchy_study(summary_rows, path) -> None:
    rows = sorted(summary_rows, key=lambda r: r["map_size"])
    sizes = [r["map_size"] for r in rows]
    fig, ax = _new_axes("number of visual units", "correctness C")
    series = [
        ("C_viseme_word", "units + word net"),
        ("C_viseme_phoneme", "units + phoneme net"),
        ("C_phoneme_word", "weak-learned phonemes + word net"),
        ("C_phoneme_phoneme", "weak-learned phonemes + phoneme net"),
    ]
    for key, label in series:
        se_key = key.replace("C_", "se_")
        ax.errorbar(
            sizes,
            [r.get(key, float("nan")) for r in rows],
            yerr=[r.get(se_key, 0.0) for r in rows],
            marker="o",
            capsize=3,
            label=label,
        )
    ax.legend(fontsize=8)
    _save(fig, path)
