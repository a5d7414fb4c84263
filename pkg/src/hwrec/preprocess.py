"""Preprocessing: repeated-point removal, normalization, resampling, smoothing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Character, DataError


@dataclass(frozen=True)
class PreprocessConfig:
    delta: float = 0.02  # nominal inter-point distance; informs the generator only
    target_points: int = 128
    smoothing_passes: int = 1
    smoothing_kernel: tuple = (0.25, 0.5, 0.25)

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.target_points < 2:
            raise ValueError("target_points must be at least 2")
        k = self.smoothing_kernel
        if len(k) != 3 or min(k) < 0 or abs(sum(k) - 1.0) > 1e-12:
            raise ValueError("smoothing kernel must be 3 nonnegative weights summing to 1")


def remove_repeated_points(stroke: np.ndarray) -> np.ndarray:
    """Drop points equal to their predecessor."""
    stroke = np.asarray(stroke, dtype=float)
    if len(stroke) < 2:
        return stroke
    keep = np.ones(len(stroke), dtype=bool)
    keep[1:] = np.any(stroke[1:] != stroke[:-1], axis=1)
    return stroke[keep]


def raw_span(c: Character) -> tuple:
    """(width, height) of the bounding box, scaled by the larger of the two."""
    pts = c.points
    extent = pts.max(axis=0) - pts.min(axis=0)
    top = extent.max()
    if top <= 0:
        return (1.0, 1.0)
    return (float(extent[0] / top), float(extent[1] / top))


def normalize_bbox(c: Character) -> Character:
    """Map each axis affinely onto [0, 1]; a flat axis maps to 0.5."""
    pts = c.points
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    extent = hi - lo
    out = []
    for s in c.strokes:
        t = np.empty_like(s)
        for axis in range(2):
            if extent[axis] > 0:
                t[:, axis] = (s[:, axis] - lo[axis]) / extent[axis]
            else:
                t[:, axis] = 0.5
        out.append(np.clip(t, 0.0, 1.0))
    return c.with_strokes(out)


def arc_lengths(stroke: np.ndarray) -> np.ndarray:
    """Cumulative arc length at each vertex, starting at 0."""
    seg = np.hypot(*np.diff(stroke, axis=0).T) if len(stroke) > 1 else np.zeros(0)
    return np.concatenate([[0.0], np.cumsum(seg)])


def allocate_segments(lengths, n_segments: int) -> np.ndarray:
    """Split ``n_segments`` among strokes proportionally to length (>= 1 each).

    Largest-remainder rounding; ties go to the earlier stroke.
    """
    lengths = np.asarray(lengths, dtype=float)
    n = len(lengths)
    if n_segments < n:
        raise DataError(f"cannot place {n_segments + n} points on {n} strokes")
    share = lengths / lengths.sum() * n_segments
    alloc = np.maximum(np.floor(share).astype(int), 1)
    while alloc.sum() > n_segments:
        # take from the stroke that is most over its share
        over = np.where(alloc > 1, alloc - share, -np.inf)
        alloc[int(np.argmax(over))] -= 1
    remainder = share - alloc
    while alloc.sum() < n_segments:
        i = int(np.argmax(remainder))
        alloc[i] += 1
        remainder[i] -= 1.0
    return alloc


def resample_equidistant(c: Character, cfg: PreprocessConfig = PreprocessConfig()) -> Character:
    """Resample every stroke at a common arc-length step.

    The step is ``total_length / (target_points - n_strokes)``, so that the
    character ends up with exactly ``target_points`` points. Each stroke
    receives a whole number of steps; its last step absorbs the rounding.
    """
    lengths = []
    cums = []
    for i, s in enumerate(c.strokes):
        cum = arc_lengths(s)
        if cum[-1] <= 0:
            raise DataError(f"stroke {i} has zero total length")
        lengths.append(cum[-1])
        cums.append(cum)
    n_seg = cfg.target_points - c.n_strokes
    step = sum(lengths) / n_seg
    alloc = allocate_segments(lengths, n_seg)
    out = []
    for s, cum, length, k in zip(c.strokes, cums, lengths, alloc):
        targets = np.minimum(np.arange(k) * step, length)
        targets = np.append(targets, length)
        x = np.interp(targets, cum, s[:, 0])
        y = np.interp(targets, cum, s[:, 1])
        out.append(np.column_stack([x, y]))
    return c.with_strokes(out)


def smooth(c: Character, cfg: PreprocessConfig = PreprocessConfig()) -> Character:
    """3-tap linear filter on x and y, endpoints held fixed."""
    a, b, w = cfg.smoothing_kernel
    out = []
    for s in c.strokes:
        s = s.copy()
        if len(s) >= 3:
            for _ in range(cfg.smoothing_passes):
                s[1:-1] = a * s[:-2] + b * s[1:-1] + w * s[2:]
        out.append(s)
    return c.with_strokes(out)


def preprocess(c: Character, cfg: PreprocessConfig = PreprocessConfig()) -> Character:
    """Full pipeline producing a ``target_points``-point character in [0, 1]^2.

    Stages: remove repeated points, normalize, resample, smooth, renormalize.
    Strokes that collapse to a single point (pen taps) are dropped.
    """
    strokes = [remove_repeated_points(s) for s in c.strokes]
    strokes = [s for s in strokes if len(s) >= 2]
    if not strokes:
        raise DataError("character needs at least two distinct points")
    span = c.span if c.span is not None else raw_span(c)
    out = Character(tuple(strokes), False, span)
    out = normalize_bbox(out)
    out = resample_equidistant(out, cfg)
    out = smooth(out, cfg)
    out = normalize_bbox(out)
    return out.with_strokes(out.strokes, preprocessed=True)


preprocess_pipeline = preprocess
