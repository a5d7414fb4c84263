"""Sub-unit (SUB) classifier: a per-class latent-variable model fit by EM.

A class models a character as an independent triple: a Gaussian global
vector, a categorical sub-unit count, and for each sub-unit a latent
structure drawn from count-dependent weights followed by a Gaussian local
vector for that structure.

Local covariances are regularized by an eigenvalue floor rather than an
added ridge: the constrained maximum-likelihood covariance is the weighted
scatter with its eigenvalues clipped from below, so each M-step is still an
exact maximization and the observed log-likelihood cannot decrease.

Count weights get add-``smoothing`` pseudo-counts; they are fixed before EM
and do not affect monotonicity. Structure weights are the exact ML update
by default, with rows for counts never seen in training left uniform. A
positive ``eta_smoothing`` adds pseudo-counts there too; EM is then
monotone in the ``objective`` (log-likelihood plus the Dirichlet log prior)
rather than in the log-likelihood itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .baseline import (GaussianParams, fit_fd, fit_gaussian, gaussian_log_density, ridge_value,
                       sample_moments)
from .core import Label, NumericError, one_hot
from .features import HpodConfig, extract_hpod_global, extract_hpod_local
from .subunits import SegmentationConfig, extract_subunits


@dataclass(frozen=True, eq=False)
class SubCharacter:
    x_global: np.ndarray
    x_locals: np.ndarray  # (n_subunits, d_local)

    def __post_init__(self):
        locals_ = np.atleast_2d(np.asarray(self.x_locals, dtype=float))
        if len(locals_) < 1:
            raise ValueError("a character has at least one sub-unit")
        object.__setattr__(self, "x_locals", locals_)
        object.__setattr__(self, "x_global", np.asarray(self.x_global, dtype=float))

    @property
    def n_subunits(self) -> int:
        return len(self.x_locals)


@dataclass(frozen=True)
class EmConfig:
    n_h_su: int = 8
    max_iters: int = 200
    rel_tol: float = 1e-6
    ridge: float = 1e-3
    smoothing: float = 1.0
    eta_smoothing: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_h_su < 1 or self.max_iters < 1:
            raise ValueError("n_h_su and max_iters must be >= 1")
        if self.rel_tol <= 0 or min(self.ridge, self.smoothing, self.eta_smoothing) < 0:
            raise ValueError("rel_tol must be positive; ridge and smoothing nonnegative")


@dataclass(frozen=True, eq=False)
class SubModelParams:
    """Fitted parameters of one class.

    ``gamma`` and the rows of ``eta`` are indexed by sub-unit count 1..n_su
    followed by one tail entry shared by all larger counts.
    """

    glob: GaussianParams
    gamma: np.ndarray  # (n_su + 1,)
    eta: np.ndarray  # (n_su + 1, n_h_su)
    comps: list  # n_h_su local GaussianParams

    @property
    def n_su(self) -> int:
        return len(self.gamma) - 1

    @property
    def n_h_su(self) -> int:
        return len(self.comps)

    @property
    def mu(self):
        return self.glob.mu

    @property
    def sigma(self):
        return self.glob.sigma

    @property
    def comp_mu(self):
        return np.array([c.mu for c in self.comps])

    @property
    def comp_sigma(self):
        return np.array([c.sigma for c in self.comps])

    def count_row(self, n: int) -> int:
        return min(n, self.n_su + 1) - 1

    def to_dict(self):
        return {"mu": self.mu, "sigma": self.sigma, "gamma": self.gamma, "eta": self.eta,
                "comp_mu": self.comp_mu, "comp_sigma": self.comp_sigma}

    @classmethod
    def from_dict(cls, d):
        comps = [GaussianParams.from_moments(m, s) for m, s in zip(d["comp_mu"], d["comp_sigma"])]
        return cls(GaussianParams.from_moments(d["mu"], d["sigma"]),
                   np.asarray(d["gamma"]), np.asarray(d["eta"]), comps)

    def permuted(self, order) -> "SubModelParams":
        """Same model with mixture components relabelled."""
        order = list(order)
        return SubModelParams(self.glob, self.gamma, self.eta[:, order],
                              [self.comps[i] for i in order])


@dataclass
class EmTrace:
    objective: list = field(default_factory=list)
    log_likelihood: list = field(default_factory=list)
    reseeds: list = field(default_factory=list)  # iterations at which a component was reseeded
    n_iter: int = 0
    converged: bool = False
    n_h_su: int = 0


# --- feature construction --------------------------------------------------


def build_sub_character(c, fisher_w, hpod_cfg: HpodConfig = HpodConfig(),
                        seg_cfg: SegmentationConfig = SegmentationConfig()) -> SubCharacter:
    """Fisher-projected global HPOD vector plus one local vector per sub-unit."""
    g = extract_hpod_global(c, hpod_cfg).values
    units = extract_subunits(c, seg_cfg)
    locals_ = np.array([extract_hpod_local(u.points, hpod_cfg).values for u in units])
    return SubCharacter(np.asarray(fisher_w).T @ g, locals_)


# --- internals ---------------------------------------------------------------


def _stack(data):
    """All local vectors, the owning character of each, and count rows."""
    X = np.vstack([d.x_locals for d in data])
    owner = np.repeat(np.arange(len(data)), [d.n_subunits for d in data])
    return X, owner


def _rows(data, n_su):
    return np.array([min(d.n_subunits, n_su + 1) - 1 for d in data])


def _local_log_densities(X, comps) -> np.ndarray:
    return np.column_stack([gaussian_log_density(X, c) for c in comps])


def _safe_log(p):
    with np.errstate(divide="ignore"):
        return np.log(p)


def variance_floor(X, ridge: float) -> float:
    """ridge times the mean pooled variance of the local vectors."""
    _, pooled = sample_moments(X)
    return ridge_value(pooled, ridge)


def floor_eigenvalues(cov: np.ndarray, floor: float) -> np.ndarray:
    """Closest maximizer of the Gaussian likelihood with all eigenvalues >= floor."""
    cov = (cov + cov.T) / 2
    vals, vecs = np.linalg.eigh(cov)
    if vals[0] >= floor:
        return cov
    return (vecs * np.maximum(vals, floor)) @ vecs.T


# --- EM pieces ---------------------------------------------------------------


def complete_log_likelihood(data, z, p: SubModelParams) -> float:
    """log P(X^g, N, X^l, Z^l | w) for hard or soft assignments ``z``.

    ``z[m]`` is an ``(N'_m, n_h_su)`` array of assignment weights.
    """
    total = 0.0
    log_eta = _safe_log(p.eta)
    for d, zm in zip(data, z):
        zm = np.atleast_2d(np.asarray(zm, dtype=float))
        if zm.shape != (d.n_subunits, p.n_h_su):
            raise ValueError(f"assignment shape {zm.shape} does not match "
                             f"({d.n_subunits}, {p.n_h_su})")
        row = p.count_row(d.n_subunits)
        if p.gamma[row] <= 0:
            raise NumericError(f"zero count probability for {d.n_subunits} sub-units")
        total += gaussian_log_density(d.x_global, p.glob) + np.log(p.gamma[row])
        if np.any((zm > 0) & (p.eta[row] <= 0)):
            raise NumericError("zero structure weight with nonzero assignment")
        total += float(np.sum(zm * np.where(zm > 0, log_eta[row], 0.0)))
        ld = _local_log_densities(d.x_locals, p.comps)
        total += float(np.sum(zm * ld))
    return float(total)


def e_step(data, p: SubModelParams) -> list:
    """Posterior structure probabilities for every sub-unit, per character."""
    X, owner = _stack(data)
    log_r = _safe_log(p.eta)[_rows(data, p.n_su)[owner]] + _local_log_densities(X, p.comps)
    log_r -= logsumexp(log_r, axis=1, keepdims=True)
    rho = np.exp(log_r)
    splits = np.cumsum([d.n_subunits for d in data])[:-1]
    return np.split(rho, splits)


def count_distribution(data, n_su: int, smoothing: float) -> np.ndarray:
    counts = np.bincount(_rows(data, n_su), minlength=n_su + 1).astype(float)
    counts += smoothing
    return counts / counts.sum()


def m_step(data, rho, n_su: int, cfg: EmConfig = EmConfig(), floor: float | None = None) -> SubModelParams:
    """Closed-form parameter update given responsibilities.

    Global Gaussian and count distribution are plain frequency/moment
    estimates (ridged / smoothed); structure weights are responsibility
    counts per count value plus ``eta_smoothing``, uniform for empty rows; each component's mean is the
    responsibility-weighted mean and its covariance the weighted covariance
    with eigenvalues raised to at least ``floor``.
    """
    X, owner = _stack(data)
    R = np.vstack(rho)
    n_h = R.shape[1]
    if floor is None:
        floor = variance_floor(X, cfg.ridge)
    glob = fit_gaussian(np.array([d.x_global for d in data]), cfg.ridge)
    gamma = count_distribution(data, n_su, cfg.smoothing)

    rows = _rows(data, n_su)[owner]
    eta = np.zeros((n_su + 1, n_h))
    np.add.at(eta, rows, R)
    eta += cfg.eta_smoothing
    sums = eta.sum(axis=1, keepdims=True)
    eta = np.divide(eta, sums, out=np.full_like(eta, 1.0 / n_h), where=sums > 0)

    mass = R.sum(axis=0)
    comps = []
    for c in range(n_h):
        if mass[c] < 1e-8:
            raise _EmptyComponent(c)
        mu = R[:, c] @ X / mass[c]
        diff = X - mu
        cov = (diff * R[:, c, None]).T @ diff / mass[c]
        comps.append(GaussianParams.from_moments(mu, floor_eigenvalues(cov, floor)))
    return SubModelParams(glob, gamma, eta, comps)


class _EmptyComponent(Exception):
    def __init__(self, index):
        self.index = index


def observed_log_likelihood(data, p: SubModelParams) -> float:
    return float(np.sum(sub_scores_batch(data, p)))


def log_posterior(data, p: SubModelParams, cfg: EmConfig, ll=None) -> float:
    """Observed log-likelihood plus the log prior behind the smoothed weights."""
    ll = observed_log_likelihood(data, p) if ll is None else ll
    if cfg.eta_smoothing > 0:
        ll += cfg.eta_smoothing * float(np.sum(_safe_log(p.eta)))
    return ll


def farthest_point_init(X, n: int, rng) -> list:
    """Indices of up to ``n`` mutually distant rows; the first is random."""
    chosen = [int(rng.integers(len(X)))]
    dist = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    while len(chosen) < n:
        i = int(np.argmax(dist))
        if dist[i] <= 0:
            break
        chosen.append(i)
        dist = np.minimum(dist, np.sum((X - X[i]) ** 2, axis=1))
    return chosen


def fit_sub(train_k, cfg: EmConfig = EmConfig(), n_su: int | None = None,
            trace: EmTrace | None = None) -> SubModelParams:
    """ASUB: closed-form global and count parts, EM for the sub-unit mixture."""
    data = list(train_k)
    if len(data) < 2:
        raise ValueError("SUB fitting needs at least 2 characters")
    trace = trace if trace is not None else EmTrace()
    if n_su is None:
        n_su = max(d.n_subunits for d in data)
    X, owner = _stack(data)
    rng = np.random.default_rng(cfg.seed)
    seeds = farthest_point_init(X, min(cfg.n_h_su, len(X)), rng)
    n_h = len(seeds)
    trace.n_h_su = n_h
    floor = variance_floor(X, cfg.ridge)
    _, pooled = sample_moments(X)
    pooled = floor_eigenvalues(pooled, floor)
    comps = [GaussianParams.from_moments(X[i], pooled) for i in seeds]
    glob = fit_gaussian(np.array([d.x_global for d in data]), cfg.ridge)
    gamma = count_distribution(data, n_su, cfg.smoothing)
    p = SubModelParams(glob, gamma, np.full((n_su + 1, n_h), 1.0 / n_h), comps)

    ll = observed_log_likelihood(data, p)
    obj = log_posterior(data, p, cfg, ll)
    trace.objective.append(obj)
    trace.log_likelihood.append(ll)
    for it in range(1, cfg.max_iters + 1):
        rho = e_step(data, p)
        try:
            p = m_step(data, rho, n_su, cfg, floor)
        except _EmptyComponent as empty:
            p = _reseed(data, p, rho, empty.index, n_su, cfg, floor)
            trace.reseeds.append(it)
        ll = observed_log_likelihood(data, p)
        obj = log_posterior(data, p, cfg, ll)
        if not (np.isfinite(ll) and np.isfinite(obj)):
            raise NumericError(f"non-finite SUB likelihood at EM iteration {it}")
        prev = trace.log_likelihood[-1]
        trace.objective.append(obj)
        trace.log_likelihood.append(ll)
        trace.n_iter = it
        if abs(ll - prev) <= cfg.rel_tol * abs(prev):
            trace.converged = True
            break
    return p


def _reseed(data, p, rho, index, n_su, cfg, floor):
    """Move an empty component onto the worst-explained sub-unit vector."""
    X, owner = _stack(data)
    R = np.vstack(rho)
    log_mix = logsumexp(_safe_log(p.eta)[_rows(data, n_su)[owner]]
                        + _local_log_densities(X, p.comps), axis=1)
    worst = int(np.argmin(log_mix))
    R = R.copy()
    R[:, index] = 0.0
    R[worst] = 0.0
    R[worst, index] = 1.0
    splits = np.cumsum([d.n_subunits for d in data])[:-1]
    try:
        return m_step(data, np.split(R, splits), n_su, cfg, floor)
    except _EmptyComponent:
        raise NumericError("SUB mixture keeps losing components; lower n_h_su") from None


# --- scoring -----------------------------------------------------------------


def sub_scores_batch(data, p: SubModelParams) -> np.ndarray:
    """sub_log_likelihood for many characters at once."""
    data = list(data)
    X, owner = _stack(data)
    rows = _rows(data, p.n_su)
    mix = logsumexp(_safe_log(p.eta)[rows[owner]] + _local_log_densities(X, p.comps), axis=1)
    local = np.bincount(owner, weights=mix, minlength=len(data))
    G = np.array([d.x_global for d in data])
    return gaussian_log_density(G, p.glob) + _safe_log(p.gamma)[rows] + local


def sub_log_likelihood(c: SubCharacter, p: SubModelParams) -> float:
    """log P(x^g, N', x^l | w) with sub-unit structures summed out."""
    return float(sub_scores_batch([c], p)[0])


def sub_predict(c: SubCharacter, all_params) -> Label:
    scores = [sub_log_likelihood(c, p) for p in all_params]
    return one_hot(int(np.argmax(scores)) + 1, len(all_params))


# --- full classifier ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SubClassifier:
    """Fisher projection of global HPOD vectors plus one SUB model per class."""

    fisher_w: np.ndarray
    params: list
    hpod: HpodConfig = HpodConfig()
    segmentation: SegmentationConfig = SegmentationConfig()

    @classmethod
    def fit(cls, classes, cfg: EmConfig = EmConfig(), hpod: HpodConfig = HpodConfig(),
            segmentation: SegmentationConfig = SegmentationConfig(), traces=None, jobs: int = 1):
        """``classes`` is a list of per-class lists of preprocessed characters."""
        G = [np.array([extract_hpod_global(c, hpod).values for c in chars]) for chars in classes]
        W = fit_fd(G, cfg.ridge).w_matrix
        data = [[build_sub_character(c, W, hpod, segmentation) for c in chars] for chars in classes]

        def fit_one(k):
            tr = EmTrace()
            return fit_sub(data[k], cfg, trace=tr), tr

        if jobs > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(jobs) as pool:
                results = list(pool.map(fit_one, range(len(classes))))
        else:
            results = [fit_one(k) for k in range(len(classes))]
        if traces is not None:
            traces.extend(tr for _, tr in results)
        return cls(W, [p for p, _ in results], hpod, segmentation)

    def transform(self, chars) -> list:
        return [build_sub_character(c, self.fisher_w, self.hpod, self.segmentation) for c in chars]

    def scores(self, chars) -> np.ndarray:
        data = self.transform(chars)
        return np.column_stack([sub_scores_batch(data, p) for p in self.params])

    def predict(self, chars) -> np.ndarray:
        return np.argmax(self.scores(chars), axis=1)

    def to_dict(self):
        return {"fisher_w": self.fisher_w, "classes": [p.to_dict() for p in self.params],
                "hpod": vars(self.hpod), "segmentation": vars(self.segmentation)}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["fisher_w"]), [SubModelParams.from_dict(p) for p in d["classes"]],
                   HpodConfig(**d["hpod"]), SegmentationConfig(**d["segmentation"]))
