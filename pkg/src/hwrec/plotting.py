"""Figures written next to the text reports (non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no version string or timestamp in the files, so reruns give identical bytes
_PNG_META = {"Software": None}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_confusion(report, labels, path, title="confusion"):
    n = len(labels)
    fig, ax = plt.subplots(figsize=(max(4, 0.35 * n + 2), max(4, 0.35 * n + 2)))
    im = ax.imshow(report.confusion, cmap="Blues", interpolation="nearest")
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(f"{title} (acc {100 * report.overall_accuracy:.2f}%)")
    if n <= 30:
        ax.set_xticks(range(n), labels, rotation=90, fontsize=7)
        ax.set_yticks(range(n), labels, fontsize=7)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    return _save(fig, path)


def plot_accuracy(results, path):
    """Grouped bars of train and test accuracy per (classifier, features) run."""
    names = [f"{r.classifier}\n{r.feature}" for r in results]
    x = np.arange(len(results))
    fig, ax = plt.subplots(figsize=(max(4, 0.9 * len(results) + 1), 3.5))
    ax.bar(x - 0.2, [100 * r.train.overall_accuracy for r in results], 0.4, label="train")
    ax.bar(x + 0.2, [100 * r.test.overall_accuracy for r in results], 0.4, label="test")
    ax.set_xticks(x, names, fontsize=8)
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0, 100)
    ax.legend(loc="lower right")
    fig.tight_layout()
    return _save(fig, path)


def plot_em_traces(traces, path):
    """Per-class log-likelihood against EM iteration."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for k, tr in enumerate(traces):
        ax.plot(range(len(tr.log_likelihood)), tr.log_likelihood, marker=".", label=f"class {k + 1}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("log-likelihood")
    if len(traces) <= 12:
        ax.legend(fontsize=6)
    fig.tight_layout()
    return _save(fig, path)


def plot_character(c, path, subunits=None):
    """Strokes of one character, optionally coloured by sub-unit."""
    fig, ax = plt.subplots(figsize=(3, 3))
    if subunits:
        for u in subunits:
            ax.plot(u.points[:, 0], u.points[:, 1], marker=".", ms=3)
    else:
        for s in c.strokes:
            ax.plot(s[:, 0], s[:, 1], marker=".", ms=3)
    ax.set_aspect("equal")
    fig.tight_layout()
    return _save(fig, path)
