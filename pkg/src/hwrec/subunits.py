"""Segmentation of preprocessed characters into sub-units."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Character


@dataclass(frozen=True, eq=False)
class SubUnit:
    points: np.ndarray
    source_stroke: int
    start: int  # index of the first point within the source stroke

    @property
    def bbox(self) -> np.ndarray:
        return bounding_box(self)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class SegmentationConfig:
    turn_threshold: float = np.pi / 3
    min_subunit_points: int = 6
    max_subunits: int = 12
    turn_scale: int = 3  # chord length, in points, used to measure turning

    def __post_init__(self):
        if not 0 < self.turn_threshold <= np.pi:
            raise ValueError("turn_threshold must lie in (0, pi]")
        if self.min_subunit_points < 2:
            raise ValueError("min_subunit_points must be >= 2")
        if self.max_subunits < 1 or self.turn_scale < 1:
            raise ValueError("max_subunits and turn_scale must be >= 1")


def bounding_box(su) -> np.ndarray:
    """[min x, max x, min y, max y] of a point run."""
    p = np.asarray(getattr(su, "points", su), dtype=float)
    lo, hi = p.min(axis=0), p.max(axis=0)
    return np.array([lo[0], hi[0], lo[1], hi[1]])


def chord_turning(stroke: np.ndarray, scale: int) -> np.ndarray:
    """Turning angle at each point between the chords to +-``scale`` neighbours.

    Near the stroke ends the chords shrink to whatever is available. The
    measure depends only on geometry, so reversing the stroke reverses the
    sequence without changing its values.
    """
    n = len(stroke)
    turn = np.zeros(n)
    for i in range(1, n - 1):
        k = min(scale, i, n - 1 - i)
        a = stroke[i] - stroke[i - k]
        b = stroke[i + k] - stroke[i]
        cross = abs(a[0] * b[1] - a[1] * b[0])
        dot = a[0] * b[0] + a[1] * b[1]
        turn[i] = np.arctan2(cross, dot)
    return turn


def _stroke_breaks(stroke: np.ndarray, cfg: SegmentationConfig) -> list:
    """Breakpoint indices for one stroke (a sub-unit ends at each break)."""
    n = len(stroke)
    turn = chord_turning(stroke, cfg.turn_scale)
    w = cfg.turn_scale
    cands = []
    for i in range(1, n - 1):
        if turn[i] <= cfg.turn_threshold:
            continue
        window = turn[max(0, i - w): i + w + 1]
        if turn[i] < window.max():
            continue
        # plateau of equal maxima: keep its central element only
        j = i
        while j + 1 < n and turn[j + 1] == turn[i]:
            j += 1
        k = i
        while k - 1 >= 0 and turn[k - 1] == turn[i]:
            k -= 1
        if i == (j + k) // 2:
            cands.append(i)
    # Drop weakest breaks until every piece is large enough. Weakness is
    # judged by turning angle, so the outcome does not depend on direction.
    breaks = sorted(cands)
    while breaks:
        bounds = [0] + [b + 1 for b in breaks] + [n]
        sizes = np.diff(bounds)
        if sizes.min() >= cfg.min_subunit_points:
            break
        # a small piece is bordered by one or two breaks; remove the weaker
        worst = None
        for p, size in enumerate(sizes):
            if size >= cfg.min_subunit_points:
                continue
            neighbours = [q for q in (p - 1, p) if 0 <= q < len(breaks)]
            q = min(neighbours, key=lambda q: (turn[breaks[q]], q))
            if worst is None or turn[breaks[q]] < turn[breaks[worst]]:
                worst = q
        del breaks[worst]
    return breaks


def extract_subunits(c: Character, cfg: SegmentationConfig = SegmentationConfig()) -> list:
    """Split strokes at pen-lifts and at strong turning points."""
    per_stroke = []
    for si, s in enumerate(c.strokes):
        breaks = _stroke_breaks(s, cfg)
        per_stroke.append((si, s, breaks, chord_turning(s, cfg.turn_scale)))
    total = sum(len(b) + 1 for _, _, b, _ in per_stroke)
    # enforce the global cap by dropping the weakest breaks overall
    while total > cfg.max_subunits:
        best = None
        for idx, (_, _, breaks, turn) in enumerate(per_stroke):
            for q, b in enumerate(breaks):
                if best is None or turn[b] < best[0]:
                    best = (turn[b], idx, q)
        if best is None:
            break
        _, idx, q = best
        del per_stroke[idx][2][q]
        total -= 1
    units = []
    for si, s, breaks, _ in per_stroke:
        bounds = [0] + [b + 1 for b in breaks] + [len(s)]
        for a, b in zip(bounds[:-1], bounds[1:]):
            units.append(SubUnit(s[a:b], si, a))
    return units
