"""Fixed-length feature extractors over preprocessed characters.

Conventions shared by every extractor: coordinate blocks are x first, then
y; grids are indexed ``[ix, iy]`` and flattened row-major; histogram bins
are left-closed and right-open except the last, which is closed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dct, idct

from .core import Character, DataError
from .preprocess import raw_span

FEATURE_KINDS = ("st", "dft", "dct", "dwt", "sp", "hog", "hpod")


@dataclass(frozen=True)
class FeatureVector:
    kind: str
    values: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class HpodConfig:
    grid: int = 6
    orientation_bins: int = 8
    dynamics_bins: int = 11
    local_point_grid: int = 10
    local_orientation_bins: int = 16
    local_dynamics_bins: int = 14

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def global_dim(self) -> int:
        return self.grid**2 * (1 + self.orientation_bins + self.dynamics_bins) + 2

    @property
    def local_dim(self) -> int:
        return self.local_point_grid**2 + self.local_orientation_bins + self.local_dynamics_bins + 4


def span_features(c: Character) -> np.ndarray:
    return np.array(c.span if c.span is not None else raw_span(c))


def _require_points(c: Character, n: int = 128):
    if c.total_points != n:
        raise DataError(f"expected a {n}-point character, got {c.total_points}")


def bin_index(values, lo: float, hi: float, n: int) -> np.ndarray:
    """Map values in [lo, hi] to n equal bins; ``hi`` falls in the last."""
    idx = np.floor((np.asarray(values, dtype=float) - lo) / (hi - lo) * n).astype(int)
    return np.clip(idx, 0, n - 1)


# --- sequence transforms ---------------------------------------------------


def extract_st(c: Character) -> FeatureVector:
    _require_points(c)
    p = c.points
    return FeatureVector("st", np.concatenate([p[:, 0], p[:, 1], span_features(c)]))


def dft_block(seq: np.ndarray, n_coef: int = 64) -> np.ndarray:
    """[Re X_0..Re X_{n-1}, Im X_0..Im X_{n-1}] with 1/N forward scaling."""
    coef = np.fft.fft(seq) / len(seq)
    return np.concatenate([coef[:n_coef].real, coef[:n_coef].imag])


def extract_dft(c: Character) -> FeatureVector:
    _require_points(c)
    p = c.points
    return FeatureVector("dft", np.concatenate([dft_block(p[:, 0]), dft_block(p[:, 1]), span_features(c)]))


def extract_dct(c: Character) -> FeatureVector:
    _require_points(c)
    p = c.points
    blocks = [dct(p[:, a], type=2, norm="ortho") for a in range(2)]
    return FeatureVector("dct", np.concatenate(blocks + [span_features(c)]))


def inverse_dct(coef: np.ndarray) -> np.ndarray:
    return idct(coef, type=2, norm="ortho")


def haar_forward(seq: np.ndarray) -> np.ndarray:
    """Full-depth orthonormal Haar transform of a power-of-two-length signal.

    Output layout: [scaling, coarsest detail, ..., finest details].
    """
    a = np.asarray(seq, dtype=float)
    n = len(a)
    if n & (n - 1) or n == 0:
        raise ValueError("Haar transform needs a power-of-two length")
    details = []
    while len(a) > 1:
        even, odd = a[0::2], a[1::2]
        details.append((even - odd) / np.sqrt(2.0))
        a = (even + odd) / np.sqrt(2.0)
    return np.concatenate([a] + details[::-1])


def haar_inverse(coef: np.ndarray) -> np.ndarray:
    coef = np.asarray(coef, dtype=float)
    a = coef[:1]
    pos = 1
    while pos < len(coef):
        d = coef[pos:pos + len(a)]
        pos += len(a)
        out = np.empty(2 * len(a))
        out[0::2] = (a + d) / np.sqrt(2.0)
        out[1::2] = (a - d) / np.sqrt(2.0)
        a = out
    return a


def extract_dwt(c: Character) -> FeatureVector:
    _require_points(c)
    p = c.points
    return FeatureVector("dwt", np.concatenate([haar_forward(p[:, 0]), haar_forward(p[:, 1]), span_features(c)]))


# --- spatial histograms ----------------------------------------------------


def segments(c: Character):
    """Per-segment (start, end) arrays over all strokes; pen-lifts excluded."""
    starts = [s[:-1] for s in c.strokes if len(s) > 1]
    ends = [s[1:] for s in c.strokes if len(s) > 1]
    if not starts:
        return np.zeros((0, 2)), np.zeros((0, 2))
    return np.concatenate(starts), np.concatenate(ends)


def undirected_angle(d: np.ndarray) -> np.ndarray:
    """Orientation in [0, pi) of direction vectors, ignoring their sense.

    Vectors are flipped into the upper half-plane before ``arctan2`` so that
    ``d`` and ``-d`` give bit-identical results.
    """
    d = np.array(d, dtype=float)
    flip = (d[:, 1] < 0) | ((d[:, 1] == 0) & (d[:, 0] < 0))
    d[flip] = -d[flip]
    theta = np.arctan2(d[:, 1], d[:, 0])
    return np.where(theta >= np.pi, 0.0, theta)


def turning_angles(stroke: np.ndarray):
    """Absolute turning angle in [0, pi] at each interior vertex, and the vertices."""
    if len(stroke) < 3:
        return np.zeros(0), np.zeros((0, 2))
    a = stroke[1:-1] - stroke[:-2]
    b = stroke[2:] - stroke[1:-1]
    cross = np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    dot = a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1]
    return np.arctan2(cross, dot), stroke[1:-1]


def extract_sp(c: Character, grid: int = 28) -> FeatureVector:
    """Occupancy histogram of points over a grid x grid partition of [0,1]^2."""
    p = c.points
    ix = bin_index(p[:, 0], 0.0, 1.0, grid)
    iy = bin_index(p[:, 1], 0.0, 1.0, grid)
    hist = np.zeros((grid, grid))
    np.add.at(hist, (ix, iy), 1.0)
    hist /= len(p)
    return FeatureVector("sp", np.concatenate([hist.ravel(), span_features(c)]))


def orientation_bin(theta: np.ndarray, n_bins: int) -> np.ndarray:
    """Bins of width pi/n centred on 0, pi/n, ...; orientations wrap at pi."""
    width = np.pi / n_bins
    return np.floor((theta + width / 2) / width).astype(int) % n_bins


def extract_hog(c: Character, cells: int = 9, n_bins: int = 4) -> FeatureVector:
    """Length-weighted histogram of segment orientations per grid cell.

    Orientations are unsigned, so stroke direction does not matter; a
    segment is assigned to the cell containing its midpoint. The whole
    block is scaled to unit L2 norm.
    """
    start, end = segments(c)
    hist = np.zeros((cells, cells, n_bins))
    if len(start):
        d = end - start
        mid = (start + end) / 2
        w = np.hypot(d[:, 0], d[:, 1])
        b = orientation_bin(undirected_angle(d), n_bins)
        ix = bin_index(mid[:, 0], 0.0, 1.0, cells)
        iy = bin_index(mid[:, 1], 0.0, 1.0, cells)
        np.add.at(hist, (ix, iy, b), w)
    block = hist.ravel()
    norm = np.linalg.norm(block)
    if norm > 0:
        block = block / norm
    return FeatureVector("hog", np.concatenate([block, span_features(c)]))


def _hpod_block(strokes, lo, hi, point_grid, cell_grid, n_orient, n_dyn):
    """Point, orientation and dynamics histograms over a region.

    ``cell_grid`` True gives per-cell orientation/dynamics histograms on the
    same grid as the points; False pools them over the region. Each family
    sums to 1 (or is all zero when empty).
    """
    extent = np.where(hi > lo, hi - lo, 1.0)

    def cell(p):
        u = np.where(hi > lo, (p - lo) / extent, 0.5)
        return bin_index(u[:, 0], 0, 1, point_grid), bin_index(u[:, 1], 0, 1, point_grid)

    pts = np.concatenate(strokes)
    g = point_grid
    point_hist = np.zeros((g, g))
    np.add.at(point_hist, cell(pts), 1.0)
    point_hist /= len(pts)

    shape_o = (g, g, n_orient) if cell_grid else (n_orient,)
    shape_d = (g, g, n_dyn) if cell_grid else (n_dyn,)
    orient = np.zeros(shape_o)
    dyn = np.zeros(shape_d)
    for s in strokes:
        if len(s) < 2:
            continue
        d = np.diff(s, axis=0)
        w = np.hypot(d[:, 0], d[:, 1])
        ob = orientation_bin(undirected_angle(d), n_orient)
        turn, verts = turning_angles(s)
        db = bin_index(turn, 0.0, np.pi, n_dyn)
        if cell_grid:
            mid = (s[:-1] + s[1:]) / 2
            np.add.at(orient, cell(mid) + (ob,), w)
            if len(turn):
                np.add.at(dyn, cell(verts) + (db,), 1.0)
        else:
            np.add.at(orient, ob, w)
            np.add.at(dyn, db, 1.0)
    for h in (orient, dyn):
        total = h.sum()
        if total > 0:
            h /= total
    return point_hist, orient, dyn


def extract_hpod_global(c: Character, cfg: HpodConfig = HpodConfig()) -> FeatureVector:
    """Histograms of points, orientations and orientation dynamics per cell.

    Per grid cell the layout is [point fraction, orientation bins, dynamics
    bins]. Orientations are unsigned and dynamics are absolute turning
    angles in [0, pi], so the vector does not depend on stroke direction or
    stroke order.
    """
    g = cfg.grid
    points, orient, dyn = _hpod_block(
        c.strokes, np.zeros(2), np.ones(2), g, True, cfg.orientation_bins, cfg.dynamics_bins
    )
    cells = np.concatenate([points[:, :, None], orient, dyn], axis=2)
    return FeatureVector("hpod", np.concatenate([cells.ravel(), span_features(c)]))


def extract_hpod_local(points: np.ndarray, cfg: HpodConfig = HpodConfig()) -> FeatureVector:
    """Local HPOD vector of one sub-unit's point run.

    Layout: position histogram over the sub-unit's own bounding box, pooled
    orientation and dynamics histograms, then [min x, max x, min y, max y].
    """
    points = np.asarray(getattr(points, "points", points), dtype=float)
    if len(points) < 2:
        raise DataError("sub-unit needs at least 2 points")
    lo, hi = points.min(axis=0), points.max(axis=0)
    hist, orient, dyn = _hpod_block(
        [points], lo, hi, cfg.local_point_grid, False,
        cfg.local_orientation_bins, cfg.local_dynamics_bins,
    )
    bbox = np.array([lo[0], hi[0], lo[1], hi[1]])
    return FeatureVector("hpod_l", np.concatenate([hist.ravel(), orient, dyn, bbox]))


_EXTRACTORS = {
    "st": extract_st,
    "dft": extract_dft,
    "dct": extract_dct,
    "dwt": extract_dwt,
    "sp": extract_sp,
    "hog": extract_hog,
    "hpod": extract_hpod_global,
}

FEATURE_DIMS = {"st": 258, "dft": 258, "dct": 258, "dwt": 258, "sp": 786, "hog": 326,
                "hpod": 722, "hpod_l": 134}


def extract(kind: str, c: Character) -> FeatureVector:
    try:
        fn = _EXTRACTORS[kind]
    except KeyError:
        raise ValueError(f"unknown feature kind {kind!r}; choose from {FEATURE_KINDS}") from None
    return fn(c)


def feature_matrix(chars, kind: str) -> np.ndarray:
    return np.array([extract(kind, c).values for c in chars])
