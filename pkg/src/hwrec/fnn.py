"""Three-layer feedforward network trained by backpropagation on squared error."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import Label, NumericError, one_hot

# Hidden-layer sizes per feature kind; "hpod" is not in the published list.
DEFAULT_HIDDEN = {"st": 258, "dft": 290, "dct": 270, "dwt": 270, "sp": 500, "hog": 524, "hpod": 64}


def logistic(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def identity(z):
    return z


ACTIVATIONS = {
    "logistic": (logistic, lambda y: y * (1.0 - y)),
    "identity": (identity, lambda y: np.ones_like(y)),
}


@dataclass(frozen=True, eq=False)
class FnnParams:
    w_hidden: np.ndarray  # (N_hid, N_ftr)
    b_hidden: np.ndarray  # (N_hid,)
    w_out: np.ndarray  # (N_ct, N_hid)
    b_out: np.ndarray  # (N_ct,)
    activation_hidden: str = "logistic"
    activation_out: str = "logistic"
    # input standardization, applied before the first layer
    x_shift: np.ndarray | None = None
    x_scale: np.ndarray | None = None

    @property
    def n_in(self):
        return self.w_hidden.shape[1]

    def to_dict(self):
        d = {k: getattr(self, k) for k in ("w_hidden", "b_hidden", "w_out", "b_out",
                                           "activation_hidden", "activation_out")}
        if self.x_shift is not None:
            d["x_shift"], d["x_scale"] = self.x_shift, self.x_scale
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class FnnTrainConfig:
    n_hidden: int = 64
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 200
    seed: int = 0
    init_scale: float | None = None  # default 1/sqrt(fan-in)
    standardize: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.n_hidden < 1:
            raise ValueError("epochs and n_hidden must be >= 1")


def _inputs(x, p: FnnParams):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != p.n_in:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} != {p.n_in}")
    if p.x_shift is not None:
        x = (x - p.x_shift) / p.x_scale
    return x


def _forward(x, p: FnnParams):
    sh = ACTIVATIONS[p.activation_hidden][0]
    so = ACTIVATIONS[p.activation_out][0]
    h = sh(x @ p.w_hidden.T + p.b_hidden)
    return h, so(h @ p.w_out.T + p.b_out)


def fnn_forward(x, p: FnnParams) -> np.ndarray:
    """Output-layer activations for one input vector or a batch."""
    return _forward(_inputs(x, p), p)[1]


def fnn_loss(p: FnnParams, X, T) -> float:
    """Half the summed squared error over a batch of inputs and 1-of-N targets."""
    Y = fnn_forward(np.atleast_2d(X), p)
    return float(0.5 * np.sum((Y - np.atleast_2d(T)) ** 2))


def fnn_backprop_gradient(p: FnnParams, x, t) -> dict:
    """Gradient of the single-sample loss w.r.t. every weight and bias."""
    x = _inputs(x, p)
    h, y = _forward(x, p)
    d_out = ACTIVATIONS[p.activation_out][1]
    d_hid = ACTIVATIONS[p.activation_hidden][1]
    delta_o = (y - t) * d_out(y)
    delta_h = (p.w_out.T @ delta_o) * d_hid(h)
    return {
        "w_out": np.outer(delta_o, h),
        "b_out": delta_o,
        "w_hidden": np.outer(delta_h, x),
        "b_hidden": delta_h,
    }


def init_params(n_in: int, n_hidden: int, n_out: int, rng, init_scale=None) -> FnnParams:
    s1 = init_scale if init_scale is not None else 1.0 / np.sqrt(n_in)
    s2 = init_scale if init_scale is not None else 1.0 / np.sqrt(n_hidden)
    return FnnParams(
        rng.uniform(-s1, s1, (n_hidden, n_in)),
        rng.uniform(-s1, s1, n_hidden),
        rng.uniform(-s2, s2, (n_out, n_hidden)),
        rng.uniform(-s2, s2, n_out),
    )


def fit_fnn(X, labels, n_classes: int, cfg: FnnTrainConfig = FnnTrainConfig(), history=None) -> FnnParams:
    """Per-sample SGD with momentum over shuffled epochs.

    ``labels`` are 0-based class indices. If ``history`` is a list, the
    training loss after each epoch is appended to it.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    rng = np.random.default_rng(cfg.seed)
    T = np.eye(n_classes)[labels]
    shift = scale = None
    if cfg.standardize:
        shift = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale > 1e-12, scale, 1.0)
    p = init_params(X.shape[1], cfg.n_hidden, n_classes, rng, cfg.init_scale)
    p = replace(p, x_shift=shift, x_scale=scale)
    Z = (X - shift) / scale if cfg.standardize else X

    w1, b1, w2, b2 = (np.array(a) for a in (p.w_hidden, p.b_hidden, p.w_out, p.b_out))
    v1, vb1, v2, vb2 = (np.zeros_like(a) for a in (w1, b1, w2, b2))
    lr, mom = cfg.learning_rate, cfg.momentum
    for epoch in range(cfg.epochs):
        for m in rng.permutation(len(Z)):
            x, t = Z[m], T[m]
            h = logistic(w1 @ x + b1)
            y = logistic(w2 @ h + b2)
            do = (y - t) * y * (1.0 - y)
            dh = (w2.T @ do) * h * (1.0 - h)
            v2 *= mom
            v2 -= lr * np.outer(do, h)
            vb2 *= mom
            vb2 -= lr * do
            v1 *= mom
            v1 -= lr * np.outer(dh, x)
            vb1 *= mom
            vb1 -= lr * dh
            w2 += v2
            b2 += vb2
            w1 += v1
            b1 += vb1
        if history is not None or epoch == cfg.epochs - 1:
            Y = logistic(logistic(Z @ w1.T + b1) @ w2.T + b2)
            loss = float(0.5 * np.sum((Y - T) ** 2))
            if not np.isfinite(loss):
                raise NumericError(f"FNN training diverged at epoch {epoch + 1}")
            if history is not None:
                history.append(loss)
    return replace(p, w_hidden=w1, b_hidden=b1, w_out=w2, b_out=b2)


def fnn_predict(x, p: FnnParams) -> Label:
    y = fnn_forward(x, p)
    return one_hot(int(np.argmax(y)) + 1, len(y))
