"""Accuracy evaluation, experiment runs and the synthetic stroke corpus."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import Character, Dataset
from .pipeline import fit_classifier, preprocess_dataset


@dataclass(frozen=True, eq=False)
class EvalReport:
    overall_accuracy: float
    per_class_accuracy: np.ndarray  # nan for classes without test samples
    confusion: np.ndarray  # confusion[i, j]: true class i+1 predicted as j+1
    n_test: int

    def to_dict(self):
        return {"overall_accuracy": self.overall_accuracy,
                "per_class_accuracy": [None if np.isnan(a) else float(a)
                                       for a in self.per_class_accuracy],
                "confusion": self.confusion.tolist(), "n_test": self.n_test}


def report_from_predictions(true, pred, n_classes: int) -> EvalReport:
    """Build a report from 1-based true and predicted class indices."""
    true = np.asarray(true, dtype=int)
    pred = np.asarray(pred, dtype=int)
    if true.shape != pred.shape:
        raise ValueError("prediction count does not match test count")
    if np.any((pred < 1) | (pred > n_classes)) or np.any((true < 1) | (true > n_classes)):
        raise ValueError(f"class index outside 1..{n_classes}")
    confusion = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(confusion, (true - 1, pred - 1), 1)
    rows = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(rows > 0, np.diag(confusion) / np.maximum(rows, 1), np.nan)
    n = len(true)
    overall = float(np.sum(true == pred) / n) if n else float("nan")
    return EvalReport(overall, per_class, confusion, n)


def evaluate(predict_fn, test: Dataset) -> EvalReport:
    """Accuracy of ``predict_fn`` (characters -> 1-based classes) on ``test``."""
    chars, true = [], []
    for c, k in test.samples():
        chars.append(c)
        true.append(k)
    pred = np.asarray(predict_fn(chars)) if chars else np.zeros(0, dtype=int)
    return report_from_predictions(true, pred, test.n_classes)


# --- synthetic corpus --------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    n_classes: int = 96
    samples_per_class_train: int = 133
    samples_per_class_test: int = 29
    noise_sigma: float = 0.01
    max_strokes: int = 3
    seed: int = 0
    reverse_prob: float = 0.5
    permute_strokes: bool = True

    def __post_init__(self):
        if min(self.n_classes, self.samples_per_class_train, self.samples_per_class_test) < 1:
            raise ValueError("class and sample counts must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if not 1 <= self.max_strokes:
            raise ValueError("max_strokes must be >= 1")


def _turn(a, b, c) -> float:
    u, v = b - a, c - b
    return float(np.arctan2(abs(u[0] * v[1] - u[1] * v[0]), u @ v))


def random_template(rng, max_strokes: int = 3) -> list:
    """1..max_strokes polylines in the unit square with long segments and sharp corners."""
    n_strokes = int(rng.integers(1, max_strokes + 1))
    strokes = []
    while len(strokes) < n_strokes:
        n_vert = int(rng.integers(2, 6))
        v = [rng.uniform(0, 1, 2)]
        tries = 0
        while len(v) < n_vert and tries < 200:
            tries += 1
            p = rng.uniform(0, 1, 2)
            if np.linalg.norm(p - v[-1]) < 0.25:
                continue
            if len(v) >= 2 and not np.pi / 3 <= _turn(v[-2], v[-1], p) <= 5 * np.pi / 6:
                continue
            v.append(p)
        if len(v) >= 2:
            strokes.append(np.array(v))
    return strokes


def sample_polyline(vertices: np.ndarray, rng, sigma: float) -> np.ndarray:
    """Points along the polyline (vertices included) with random spacing and phase."""
    spacing = rng.uniform(0.02, 0.04)
    pts = [vertices[0]]
    for a, b in zip(vertices[:-1], vertices[1:]):
        length = float(np.linalg.norm(b - a))
        t = np.arange(rng.uniform(0, spacing), length, spacing)
        t = t[(t > 1e-9) & (t < length - 1e-9)]
        pts.extend(a + (b - a) * (s / length) for s in t)
        pts.append(b)
    pts = np.array(pts)
    if sigma > 0:
        pts = pts + rng.normal(0.0, sigma, pts.shape)
    return pts


def sample_character(template, rng, cfg: SynthConfig) -> Character:
    strokes = [sample_polyline(v, rng, cfg.noise_sigma) for v in template]
    strokes = [s[::-1] if rng.random() < cfg.reverse_prob else s for s in strokes]
    if cfg.permute_strokes:
        strokes = [strokes[i] for i in rng.permutation(len(strokes))]
    # tablet-like coordinates
    scale = rng.uniform(200.0, 400.0)
    offset = rng.uniform(0.0, 1000.0, 2)
    return Character(tuple(s * scale + offset for s in strokes))


def _templates(rng, cfg: SynthConfig) -> list:
    return [random_template(rng, cfg.max_strokes) for _ in range(cfg.n_classes)]


def synth_templates(cfg: SynthConfig) -> list:
    """The per-class stroke templates that ``synth_generate`` samples from."""
    return _templates(np.random.default_rng(cfg.seed), cfg)


def synth_generate(cfg: SynthConfig):
    """Seeded (train, test) corpus; class k is drawn from its own template."""
    rng = np.random.default_rng(cfg.seed)
    templates = _templates(rng, cfg)
    labels = [f"c{k:03d}" for k in range(1, cfg.n_classes + 1)]
    out = []
    for role, n in (("train", cfg.samples_per_class_train), ("test", cfg.samples_per_class_test)):
        classes = {k + 1: [sample_character(t, rng, cfg) for _ in range(n)]
                   for k, t in enumerate(templates)}
        out.append(Dataset(classes, list(labels), role))
    return out[0], out[1]


# --- experiments ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    classifier: str
    feature: str
    train: EvalReport
    test: EvalReport
    options: dict

    def record(self) -> dict:
        return {"classifier": self.classifier, "features": self.feature,
                "train_accuracy": self.train.overall_accuracy,
                "test_accuracy": self.test.overall_accuracy,
                "n_train": self.train.n_test, "n_test": self.test.n_test,
                "options": self.options}


def run_experiment(train: Dataset, test: Dataset, classifier: str, feature: str,
                   options: dict | None = None, seed: int = 0, jobs: int = 1):
    """Fit on ``train`` only and report accuracy on both sets.

    Returns the result and the fitted model.
    """
    train = preprocess_dataset(train)
    test = preprocess_dataset(test)
    if test.labels != train.labels:
        raise ValueError("train and test class labels differ")
    model = fit_classifier(classifier, feature, train, options, seed, jobs)
    predict = lambda chars: model.predict(chars) + 1
    result = ExperimentResult(model.kind, feature, evaluate(predict, train), evaluate(predict, test),
                              dict(model.options))
    return result, model


def format_table(results) -> str:
    """Aligned text table with one row per experiment."""
    head = ("classifier", "features", "train acc", "test acc")
    rows = [(r.classifier, r.feature, f"{100 * r.train.overall_accuracy:.2f}",
             f"{100 * r.test.overall_accuracy:.2f}") for r in results]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h)
              for i, h in enumerate(head)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(v.ljust(w) if i < 2 else v.rjust(w)
                               for i, (v, w) in enumerate(zip(row, widths))))
    return "\n".join(lines) + "\n"


def format_records(results) -> str:
    return "".join(json.dumps(r.record(), sort_keys=True) + "\n" for r in results)


def format_report(report: EvalReport, labels) -> str:
    lines = [f"n_test\t{report.n_test}", f"accuracy\t{report.overall_accuracy:.6f}",
             "class\tlabel\taccuracy\tcount"]
    counts = report.confusion.sum(axis=1)
    for k, (lab, acc) in enumerate(zip(labels, report.per_class_accuracy)):
        a = "nan" if np.isnan(acc) else f"{acc:.6f}"
        lines.append(f"{k + 1}\t{lab}\t{a}\t{counts[k]}")
    return "\n".join(lines) + "\n"
