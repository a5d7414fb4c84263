"""Glue between datasets, feature extraction, classifiers and model bundles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import baseline, fnn, svm
from .core import CLASSIFIER_KINDS, DataError, Dataset, ModelBundle
from .features import FEATURE_KINDS, feature_matrix
from .preprocess import PreprocessConfig, preprocess
from .sub import EmConfig, SubClassifier

# option name -> default, per classifier; unknown options are rejected
OPTION_DEFAULTS = {
    "SOS": {"ridge": 1e-3},
    "SS": {"n_ef": None},
    "FD": {"ridge": 1e-3},
    "FNN": {"hidden": None, "epochs": 200, "lr": 0.01, "momentum": 0.9, "standardize": True},
    "SVM": {"beta": svm.DEFAULT_BETA, "upsilon": None, "tol": 1e-3, "kernel": "rbf"},
    "SUB": {"nh": 8, "max_iters": 200, "tol": 1e-6, "ridge": 1e-3, "smoothing": 1.0},
}


def resolve_options(kind: str, feature: str, options: dict | None = None) -> dict:
    """Fill defaults (including feature-dependent ones) and validate names."""
    kind = kind.upper()
    if kind not in CLASSIFIER_KINDS:
        raise ValueError(f"unknown classifier {kind!r}")
    if feature not in FEATURE_KINDS:
        raise ValueError(f"unknown feature kind {feature!r}")
    if kind == "SUB" and feature != "hpod":
        raise ValueError("the SUB classifier works on hpod features only")
    given = {k: v for k, v in (options or {}).items() if v is not None}
    unknown = set(given) - set(OPTION_DEFAULTS[kind])
    if unknown:
        raise ValueError(f"options not used by {kind}: {sorted(unknown)}")
    opts = {**OPTION_DEFAULTS[kind], **given}
    if kind == "SS" and opts["n_ef"] is None:
        opts["n_ef"] = baseline.DEFAULT_N_EF[feature]
    if kind == "FNN" and opts["hidden"] is None:
        opts["hidden"] = fnn.DEFAULT_HIDDEN[feature]
    if kind == "SVM" and opts["upsilon"] is None:
        opts["upsilon"] = svm.DEFAULT_UPSILON[feature]
    return opts


def preprocess_dataset(ds: Dataset, cfg: PreprocessConfig = PreprocessConfig()) -> Dataset:
    return ds.map(lambda c: c if c.preprocessed else preprocess(c, cfg))


def class_lists(ds: Dataset) -> list:
    return [ds.classes[k] for k in range(1, ds.n_classes + 1)]


def class_matrices(ds: Dataset, feature: str) -> list:
    return [feature_matrix(chars, feature) for chars in class_lists(ds)]


@dataclass
class TrainedModel:
    """A fitted classifier together with what is needed to apply it."""

    kind: str
    feature: str
    model: object
    options: dict
    seed: int = 0
    labels: list = field(default_factory=list)
    traces: list = field(default_factory=list)  # training diagnostics, not persisted

    @property
    def n_classes(self) -> int:
        return len(self.labels)

    def scores(self, chars) -> np.ndarray:
        """Per-class scores where larger is better, shape (n, N_ct)."""
        if self.kind == "SUB":
            return self.model.scores(chars)
        X = feature_matrix(chars, self.feature)
        if self.kind == "SOS":
            return baseline.sos_scores(X, self.model)
        if self.kind == "SS":
            return -baseline.ss_residuals(X, self.model)
        if self.kind == "FD":
            return baseline.fd_scores(X, self.model)
        if self.kind == "FNN":
            return np.atleast_2d(fnn.fnn_forward(X, self.model))
        raise ValueError("SVM elimination gives decisions, not scores")

    def predict(self, chars) -> np.ndarray:
        """0-based predicted class per character; ties go to the lowest index."""
        chars = list(chars)
        if not chars:
            return np.zeros(0, dtype=int)
        if self.kind == "SVM":
            X = feature_matrix(chars, self.feature)
            return np.array([svm.svm_predict_index(self.model, x) for x in X])
        return np.argmax(self.scores(chars), axis=1)

    # --- persistence ---

    def to_bundle(self) -> ModelBundle:
        m = self.model
        if self.kind == "SOS":
            params = {"classes": [g.to_dict() for g in m]}
        elif self.kind == "SS":
            params = {"classes": [s.to_dict() for s in m]}
        else:
            params = m.to_dict()
        return ModelBundle(self.kind, self.feature, params, self.seed, list(self.labels),
                           dict(self.options))

    @classmethod
    def from_bundle(cls, b: ModelBundle) -> "TrainedModel":
        p = b.parameters
        try:
            if b.classifier_kind == "SOS":
                model = [baseline.GaussianParams.from_dict(g) for g in p["classes"]]
            elif b.classifier_kind == "SS":
                model = [baseline.SubspaceParams.from_dict(s) for s in p["classes"]]
            elif b.classifier_kind == "FD":
                model = baseline.FisherParams.from_dict(p)
            elif b.classifier_kind == "FNN":
                model = fnn.FnnParams.from_dict(p)
            elif b.classifier_kind == "SVM":
                model = svm.MulticlassSvmModel.from_dict(p)
            else:
                model = SubClassifier.from_dict(p)
        except (KeyError, TypeError) as exc:
            raise DataError(f"model parameters are incomplete: {exc}") from None
        return cls(b.classifier_kind, b.feature_kind, model, dict(b.config), b.rng_seed,
                   list(b.labels))


def fit_classifier(kind: str, feature: str, train: Dataset, options: dict | None = None,
                   seed: int = 0, jobs: int = 1) -> TrainedModel:
    """Fit one classifier on a preprocessed training set."""
    kind = kind.upper()
    opts = resolve_options(kind, feature, options)
    traces = []
    if kind == "SUB":
        cfg = EmConfig(n_h_su=int(opts["nh"]), max_iters=int(opts["max_iters"]),
                       rel_tol=float(opts["tol"]), ridge=float(opts["ridge"]),
                       smoothing=float(opts["smoothing"]), seed=seed)
        model = SubClassifier.fit(class_lists(train), cfg, traces=traces, jobs=jobs)
    else:
        mats = class_matrices(train, feature)
        if kind == "SOS":
            model = baseline.fit_sos(mats, opts["ridge"])
        elif kind == "SS":
            model = baseline.fit_ss(mats, int(opts["n_ef"]))
        elif kind == "FD":
            model = baseline.fit_fd(mats, opts["ridge"])
        elif kind == "FNN":
            X = np.vstack(mats)
            y = np.concatenate([np.full(len(m), k) for k, m in enumerate(mats)])
            cfg = fnn.FnnTrainConfig(n_hidden=int(opts["hidden"]), learning_rate=float(opts["lr"]),
                                     momentum=float(opts["momentum"]), epochs=int(opts["epochs"]),
                                     seed=seed, standardize=bool(opts["standardize"]))
            model = fnn.fit_fnn(X, y, len(mats), cfg, history=traces)
        else:
            kernel = svm.KernelSpec(opts["kernel"], float(opts["upsilon"]))
            model = svm.fit_svm_multiclass(mats, float(opts["beta"]), kernel, float(opts["tol"]),
                                           jobs=jobs)
    return TrainedModel(kind, feature, model, opts, seed, list(train.labels), traces)
