"""Second-order-statistics, subspace and Fisher discriminant classifiers.

All fitting functions take the training data as a list of per-class
``(n_k, d)`` arrays; class ``k`` of the list is class ``k + 1`` in labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .core import Label, NumericError, one_hot

LOG_2PI = np.log(2 * np.pi)

# Default retained dimension of the subspace classifier per feature kind.
DEFAULT_N_EF = {"st": 20, "dft": 20, "dct": 30, "dwt": 30, "sp": 70, "hog": 70, "hpod": 20}


def ridge_value(sigma: np.ndarray, eps: float) -> float:
    """eps * mean diagonal variance, or eps itself for a zero matrix."""
    tr = float(np.trace(sigma))
    return eps * tr / len(sigma) if tr > 0 else eps


@dataclass(frozen=True, eq=False)
class GaussianParams:
    mu: np.ndarray
    sigma: np.ndarray
    chol: np.ndarray
    logdet: float

    @classmethod
    def from_moments(cls, mu, sigma) -> "GaussianParams":
        mu = np.asarray(mu, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        sigma = (sigma + sigma.T) / 2
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise NumericError("covariance is not positive definite") from None
        logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
        return cls(mu, sigma, chol, logdet)

    @property
    def dim(self) -> int:
        return len(self.mu)

    def to_dict(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d) -> "GaussianParams":
        return cls.from_moments(d["mu"], d["sigma"])


def sample_moments(X: np.ndarray):
    """Mean and biased (1/n) covariance."""
    X = np.asarray(X, dtype=float)
    mu = X.mean(axis=0)
    c = X - mu
    return mu, c.T @ c / len(X)


def fit_gaussian(X: np.ndarray, ridge: float = 1e-3) -> GaussianParams:
    mu, sigma = sample_moments(X)
    sigma = sigma + ridge_value(sigma, ridge) * np.eye(len(mu))
    return GaussianParams.from_moments(mu, sigma)


def gaussian_log_density(x, p: GaussianParams) -> np.ndarray | float:
    """Log N(x; mu, sigma) via the cached Cholesky factor.

    ``x`` may be one vector or an ``(n, d)`` batch.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != p.dim:
        raise ValueError(f"dimension mismatch: {X.shape[1]} != {p.dim}")
    z = sla.solve_triangular(p.chol, (X - p.mu).T, lower=True, check_finite=False)
    out = -0.5 * (p.dim * LOG_2PI + p.logdet + np.sum(z * z, axis=0))
    return float(out[0]) if single else out


def _label(k0: int, n: int) -> Label:
    return one_hot(int(k0) + 1, n)


# --- SOS -------------------------------------------------------------------


def fit_sos(classes, ridge: float = 1e-3) -> list:
    params = []
    for k, X in enumerate(classes):
        if len(X) < 2:
            raise ValueError(f"class {k + 1} needs at least 2 samples, has {len(X)}")
        params.append(fit_gaussian(X, ridge))
    return params


def sos_scores(X, params) -> np.ndarray:
    X = np.atleast_2d(X)
    return np.column_stack([gaussian_log_density(X, p) for p in params])


def sos_predict(x, params) -> Label:
    return _label(np.argmax(sos_scores(x, params)[0]), len(params))


# --- subspace --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SubspaceParams:
    mu: np.ndarray
    basis: np.ndarray  # (d, n_ef), orthonormal columns
    eigenvalues: np.ndarray

    @property
    def n_ef(self) -> int:
        return self.basis.shape[1]

    def to_dict(self):
        return {"mu": self.mu, "basis": self.basis, "eigenvalues": self.eigenvalues}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mu"], d["basis"], d["eigenvalues"])


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each column positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def fit_ss(classes, n_ef: int) -> list:
    params = []
    for k, X in enumerate(classes):
        mu, sigma = sample_moments(X)
        if not 1 <= n_ef <= len(mu):
            raise ValueError(f"n_ef={n_ef} must lie in 1..{len(mu)}")
        try:
            vals, vecs = np.linalg.eigh(sigma)
        except np.linalg.LinAlgError:
            raise NumericError(f"eigensolver failed for class {k + 1}") from None
        order = np.argsort(vals, kind="stable")[::-1][:n_ef]
        params.append(SubspaceParams(mu, _fix_signs(vecs[:, order]), vals[order]))
    return params


def ss_residuals(X, params) -> np.ndarray:
    X = np.atleast_2d(X)
    out = []
    for p in params:
        c = X - p.mu
        r = c - (c @ p.basis) @ p.basis.T
        out.append(np.linalg.norm(r, axis=1))
    return np.column_stack(out)


def ss_predict(x, params) -> Label:
    return _label(np.argmin(ss_residuals(x, params)[0]), len(params))


# --- Fisher discriminant ---------------------------------------------------


def scatter_matrices(classes):
    """Within-class scatter (sum of class scatters) and weighted between-class scatter."""
    means = [np.mean(X, axis=0) for X in classes]
    counts = np.array([len(X) for X in classes], dtype=float)
    mu_t = np.sum([n * m for n, m in zip(counts, means)], axis=0) / counts.sum()
    d = len(mu_t)
    c_wi = np.zeros((d, d))
    c_bt = np.zeros((d, d))
    for X, m, n in zip(classes, means, counts):
        c = np.asarray(X) - m
        c_wi += c.T @ c
        dm = m - mu_t
        c_bt += n * np.outer(dm, dm)
    return c_wi, c_bt


def gram_schmidt(vectors: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt orthonormalization of the columns."""
    q = np.array(vectors, dtype=float)
    for j in range(q.shape[1]):
        for i in range(j):
            q[:, j] -= (q[:, i] @ q[:, j]) * q[:, i]
        norm = np.linalg.norm(q[:, j])
        if norm < 1e-12:
            raise NumericError("Fisher directions are linearly dependent")
        q[:, j] /= norm
    return q


def log_fisher_criterion(W, c_bt, c_wi) -> float:
    """log det(W' Cbt W) - log det(W' Cwi W)."""
    s_bt, ld_bt = np.linalg.slogdet(W.T @ c_bt @ W)
    s_wi, ld_wi = np.linalg.slogdet(W.T @ c_wi @ W)
    if s_bt <= 0 or s_wi <= 0:
        return -np.inf
    return float(ld_bt - ld_wi)


@dataclass(frozen=True, eq=False)
class FisherParams:
    w_matrix: np.ndarray  # (d, N_ct - 1), orthonormal columns
    eigvecs: np.ndarray  # generalized eigenvectors before orthonormalization
    eigvals: np.ndarray
    gaussians: list  # per-class GaussianParams in the projected space

    def project(self, X) -> np.ndarray:
        return np.asarray(X) @ self.w_matrix

    def to_dict(self):
        return {"w_matrix": self.w_matrix, "eigvecs": self.eigvecs, "eigvals": self.eigvals,
                "gaussians": [g.to_dict() for g in self.gaussians]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["w_matrix"], d["eigvecs"], d["eigvals"],
                   [GaussianParams.from_dict(g) for g in d["gaussians"]])


def regularized_scatters(classes, ridge: float = 1e-3):
    c_wi, c_bt = scatter_matrices(classes)
    c_wi = c_wi + ridge_value(c_wi, ridge) * np.eye(len(c_wi))
    return c_wi, c_bt


def fisher_directions(c_bt, c_wi, n_dirs: int):
    """Top ``n_dirs`` solutions of c_bt phi = lambda c_wi phi (c_wi SPD)."""
    d = len(c_bt)
    try:
        vals, vecs = sla.eigh(c_bt, c_wi, subset_by_index=[d - n_dirs, d - 1])
    except (np.linalg.LinAlgError, sla.LinAlgError):
        raise NumericError("within-class scatter is rank deficient even after ridge") from None
    return vals[::-1], _fix_signs(vecs[:, ::-1])


def fit_fd(classes, ridge: float = 1e-3) -> FisherParams:
    if len(classes) < 2:
        raise ValueError("Fisher discriminant needs at least 2 classes")
    c_wi, c_bt = regularized_scatters(classes, ridge)
    vals, vecs = fisher_directions(c_bt, c_wi, len(classes) - 1)
    W = gram_schmidt(vecs)
    gaussians = [fit_gaussian(np.asarray(X) @ W, ridge) for X in classes]
    return FisherParams(W, vecs, vals, gaussians)


def fd_scores(X, params: FisherParams) -> np.ndarray:
    return sos_scores(params.project(np.atleast_2d(X)), params.gaussians)


def fd_predict(x, params: FisherParams) -> Label:
    return _label(np.argmax(fd_scores(x, params)[0]), len(params.gaussians))
