"""Soft-margin kernel SVM trained by SMO, with one-versus-one elimination."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .core import Label, NumericError, one_hot

DEFAULT_BETA = 1024.0
# RBF width per feature kind; "hpod" is chosen for this artifact's HPOD scale.
DEFAULT_UPSILON = {"st": 10.0, "dft": 28.0, "dct": 28.0, "dwt": 20.0, "sp": 10.0, "hog": 10.0,
                   "hpod": 0.5}


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    upsilon: float = 10.0

    def __post_init__(self):
        if self.kind not in ("rbf", "linear"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and not self.upsilon > 0:
            raise ValueError("upsilon must be positive")


def kernel_eval(k: KernelSpec, a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if k.kind == "linear":
        return float(a @ b)
    d = a - b
    return float(np.exp(-(d @ d) / k.upsilon**2))


def kernel_matrix(k: KernelSpec, A, B) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if k.kind == "linear":
        return A @ B.T
    return np.exp(-cdist(A, B, "sqeuclidean") / k.upsilon**2)


@dataclass(frozen=True, eq=False)
class BinarySvmModel:
    support_vectors: np.ndarray
    alphas: np.ndarray
    y: np.ndarray  # +1 for the first class, -1 for the second
    bias: float
    beta: float
    kernel: KernelSpec
    n_iter: int = 0
    kkt_gap: float = 0.0

    def to_dict(self):
        return {"support_vectors": self.support_vectors, "alphas": self.alphas, "y": self.y,
                "bias": self.bias, "beta": self.beta, "kernel": self.kernel.kind,
                "upsilon": self.kernel.upsilon, "n_iter": self.n_iter, "kkt_gap": self.kkt_gap}

    @classmethod
    def from_dict(cls, d):
        return cls(d["support_vectors"], d["alphas"], d["y"], d["bias"], d["beta"],
                   KernelSpec(d["kernel"], d["upsilon"]), d["n_iter"], d["kkt_gap"])


@dataclass
class SmoResult:
    """Full solver state, kept for diagnostics and tests."""

    alphas: np.ndarray
    y: np.ndarray
    gradient: np.ndarray
    bias: float
    n_iter: int
    gap: float
    objective: list = field(default_factory=list)


def dual_objective(alphas, y, K) -> float:
    v = alphas * y
    return float(alphas.sum() - 0.5 * v @ K @ v)


def smo(K: np.ndarray, y: np.ndarray, beta: float, tol: float = 1e-3,
        max_iter: int = 1_000_000, record: bool = False) -> SmoResult:
    """Maximize the SVM dual with maximal-violating-pair SMO.

    Works on the minimization form 0.5 a'Qa - sum(a), Q = yy'K, with the
    gradient kept up to date. Stops when the violating-pair gap
    ``max_up r - min_low r`` (r = -y * gradient) drops to ``tol``.
    """
    n = len(y)
    y = np.asarray(y, dtype=float)
    a = np.zeros(n)
    G = -np.ones(n)
    C = float(beta)
    objective = [0.0] if record else []
    it = 0
    while True:
        r = -y * G
        up = ((y > 0) & (a < C)) | ((y < 0) & (a > 0))
        low = ((y > 0) & (a > 0)) | ((y < 0) & (a < C))
        r_up = np.where(up, r, -np.inf)
        r_low = np.where(low, r, np.inf)
        i = int(np.argmax(r_up))
        j = int(np.argmin(r_low))
        gap = r_up[i] - r_low[j]
        if gap <= tol:
            break
        if it >= max_iter:
            raise NumericError(f"SMO did not converge in {max_iter} pair updates "
                               f"(KKT violation {gap:.3g})")
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        lim_i = C - a[i] if y[i] > 0 else a[i]
        lim_j = a[j] if y[j] > 0 else C - a[j]
        t = min(gap / max(eta, 1e-12), lim_i, lim_j)
        a[i] += y[i] * t
        a[j] -= y[j] * t
        # snap to the box exactly when a bound was reached
        if t == lim_i:
            a[i] = C if y[i] > 0 else 0.0
        if t == lim_j:
            a[j] = 0.0 if y[j] > 0 else C
        G += t * y * (K[:, i] - K[:, j])
        it += 1
        if record:
            objective.append(0.5 * a.sum() - 0.5 * a @ G)
    r = -y * G
    free = (a > 0) & (a < C)
    if free.any():
        bias = float(r[free].mean())
    else:
        up = ((y > 0) & (a < C)) | ((y < 0) & (a > 0))
        low = ((y > 0) & (a > 0)) | ((y < 0) & (a < C))
        hi = r[up].max() if up.any() else r[low].min()
        lo = r[low].min() if low.any() else hi
        bias = float((hi + lo) / 2)
    return SmoResult(a, y, G, bias, it, float(gap), objective)


def fit_svm_binary(pos, neg, beta: float = DEFAULT_BETA, kernel: KernelSpec = KernelSpec(),
                   tol: float = 1e-3, max_iter: int = 1_000_000, trace=None) -> BinarySvmModel:
    """Train the first class (``pos``, y=+1) against the second (``neg``, y=-1).

    If ``trace`` is a dict it receives the solver's ``SmoResult``.
    """
    pos = np.atleast_2d(np.asarray(pos, dtype=float))
    neg = np.atleast_2d(np.asarray(neg, dtype=float))
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("both classes need at least one sample")
    if not beta > 0:
        raise ValueError("beta must be positive")
    X = np.vstack([pos, neg])
    y = np.concatenate([np.ones(len(pos)), -np.ones(len(neg))])
    K = kernel_matrix(kernel, X, X)
    res = smo(K, y, beta, tol, max_iter, record=trace is not None)
    if trace is not None:
        trace.update(result=res, X=X, K=K)
    sv = res.alphas > 0
    return BinarySvmModel(X[sv], res.alphas[sv], y[sv], res.bias, float(beta), kernel,
                          res.n_iter, res.gap)


def svm_decision_binary(m: BinarySvmModel, x) -> np.ndarray | float:
    """sum_m alpha_m y_m k(x_m, x) + bias, for one vector or a batch."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if len(m.alphas) == 0:
        out = np.full(len(np.atleast_2d(x)), m.bias)
    else:
        out = kernel_matrix(m.kernel, np.atleast_2d(x), m.support_vectors) @ (m.alphas * m.y) + m.bias
    return float(out[0]) if single else out


@dataclass(frozen=True, eq=False)
class MulticlassSvmModel:
    pairwise: dict  # (i, j) with 0-based i < j -> BinarySvmModel
    n_classes: int

    def to_dict(self):
        return {"n_classes": self.n_classes,
                "pairs": [[i, j, m.to_dict()] for (i, j), m in sorted(self.pairwise.items())]}

    @classmethod
    def from_dict(cls, d):
        return cls({(int(i), int(j)): BinarySvmModel.from_dict(m) for i, j, m in d["pairs"]},
                   int(d["n_classes"]))


def fit_svm_multiclass(classes, beta: float = DEFAULT_BETA, kernel: KernelSpec = KernelSpec(),
                       tol: float = 1e-3, jobs: int = 1) -> MulticlassSvmModel:
    n = len(classes)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    def fit(pair):
        i, j = pair
        return pair, fit_svm_binary(classes[i], classes[j], beta, kernel, tol)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(jobs) as pool:
            fitted = dict(pool.map(fit, pairs))
    else:
        fitted = dict(map(fit, pairs))
    return MulticlassSvmModel(fitted, n)


def elimination_path(m: MulticlassSvmModel, x, decide=None) -> list:
    """Sequence of (k, j, f) evaluated by one-versus-one elimination (0-based).

    Starting from k=0, j=1, class k survives pair (k, j) if f > 0, else j
    takes its place; there are exactly N_ct - 1 steps.
    """
    decide = decide or (lambda k, j: svm_decision_binary(m.pairwise[(k, j)], x))
    path = []
    k = 0
    for j in range(1, m.n_classes):
        f = decide(k, j)
        path.append((k, j, f))
        if not f > 0:
            k = j
    return path


def svm_predict_index(m: MulticlassSvmModel, x) -> int:
    """0-based class chosen by elimination."""
    path = elimination_path(m, x)
    if not path:
        return 0
    k, j, f = path[-1]
    return k if f > 0 else j


def svm_predict_multiclass(m: MulticlassSvmModel, x) -> Label:
    return one_hot(svm_predict_index(m, x) + 1, m.n_classes)
