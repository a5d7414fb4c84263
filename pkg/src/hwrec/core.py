"""Domain types, dataset ingestion and model persistence."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

FORMAT_VERSION = 1

CLASSIFIER_KINDS = ("SOS", "SS", "FD", "FNN", "SVM", "SUB")


class HwrecError(Exception):
    """Base class for all errors raised by this package."""


class DataError(HwrecError, ValueError):
    """Malformed input data or files."""


class ModelFileError(DataError):
    """Persisted model is unreadable, corrupt or of the wrong version."""


class NumericError(HwrecError, ArithmeticError):
    """A numerical routine failed (non-convergence, non-finite values...)."""


def _as_stroke(points) -> np.ndarray:
    arr = np.array(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DataError(f"stroke must be an (n, 2) array, got shape {arr.shape}")
    if len(arr) == 0:
        raise DataError("empty stroke")
    if not np.all(np.isfinite(arr)):
        raise DataError("stroke contains non-finite coordinates")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Character:
    """An online character: an ordered sequence of strokes.

    Each stroke is a read-only ``(n, 2)`` float array of pen positions.
    ``span`` holds the (x, y) span features measured on the raw trace and
    is carried through preprocessing, which destroys the aspect ratio.
    """

    strokes: tuple
    preprocessed: bool = False
    span: tuple | None = None

    def __post_init__(self):
        strokes = tuple(_as_stroke(s) for s in self.strokes)
        if not strokes:
            raise DataError("character has no strokes")
        object.__setattr__(self, "strokes", strokes)
        if self.span is not None:
            object.__setattr__(self, "span", (float(self.span[0]), float(self.span[1])))

    @property
    def n_strokes(self) -> int:
        return len(self.strokes)

    @property
    def total_points(self) -> int:
        return sum(len(s) for s in self.strokes)

    @property
    def points(self) -> np.ndarray:
        return np.concatenate(self.strokes)

    def with_strokes(self, strokes, preprocessed=None) -> "Character":
        return Character(
            tuple(strokes),
            self.preprocessed if preprocessed is None else preprocessed,
            self.span,
        )


@dataclass(frozen=True, eq=False)
class Label:
    index: int  # 1-based class index
    one_hot: np.ndarray


def one_hot(k: int, n: int) -> Label:
    """1-of-n label vector for class ``k`` (1-based)."""
    if n < 1 or not 1 <= k <= n:
        raise ValueError(f"class index {k} out of range 1..{n}")
    vec = np.zeros(n)
    vec[k - 1] = 1.0
    vec.setflags(write=False)
    return Label(k, vec)


@dataclass
class Dataset:
    """Characters grouped by 1-based class index.

    ``labels[k - 1]`` is the label string of class ``k``.
    """

    classes: dict
    labels: list
    role: str = "train"

    def __post_init__(self):
        if self.role not in ("train", "test"):
            raise ValueError(f"unknown dataset role {self.role!r}")
        expected = set(range(1, len(self.labels) + 1))
        if not set(self.classes) <= expected:
            raise DataError("class indices must be contiguous 1..N_ct")
        for k in expected:
            self.classes.setdefault(k, [])
        if self.role == "train":
            empty = [k for k in expected if not self.classes[k]]
            if empty:
                raise DataError(f"training classes without samples: {empty}")

    @property
    def n_classes(self) -> int:
        return len(self.labels)

    def counts(self) -> dict:
        return {k: len(v) for k, v in sorted(self.classes.items())}

    def __len__(self) -> int:
        return sum(len(v) for v in self.classes.values())

    def samples(self) -> Iterator[tuple[Character, int]]:
        """Yield ``(character, class_index)`` in class order."""
        for k in sorted(self.classes):
            for c in self.classes[k]:
                yield c, k

    def map(self, fn) -> "Dataset":
        return Dataset(
            {k: [fn(c) for c in v] for k, v in self.classes.items()},
            list(self.labels),
            self.role,
        )


# --- dataset files -------------------------------------------------------


def _parse_line(obj, lineno):
    if not isinstance(obj, dict) or "label" not in obj or "strokes" not in obj:
        raise DataError(f"line {lineno}: expected an object with 'label' and 'strokes'")
    strokes = obj["strokes"]
    if not isinstance(strokes, list) or not strokes:
        raise DataError(f"line {lineno}: 'strokes' must be a nonempty list")
    parsed = []
    for s in strokes:
        if not isinstance(s, list) or not s:
            raise DataError(f"empty stroke at line {lineno}")
        try:
            parsed.append(_as_stroke(s))
        except (DataError, ValueError, TypeError) as exc:
            raise DataError(f"line {lineno}: bad stroke ({exc})") from None
    span = obj.get("span")
    return str(obj["label"]), Character(tuple(parsed), bool(obj.get("preprocessed", False)), span)


def parse_dataset(path, role: str = "train", labels=None) -> Dataset:
    """Read a line-delimited sample file.

    Labels are mapped to indices in first-appearance order, unless
    ``labels`` fixes the mapping (e.g. from a trained model), in which case
    unseen labels are an error.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    fixed = labels is not None
    label_list = list(labels) if fixed else []
    index = {lab: i + 1 for i, lab in enumerate(label_list)}
    classes: dict = {}
    n = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: malformed line ({exc.msg})") from None
            lab, char = _parse_line(obj, lineno)
            if lab not in index:
                if fixed:
                    raise DataError(f"line {lineno}: unknown label {lab!r}")
                label_list.append(lab)
                index[lab] = len(label_list)
            classes.setdefault(index[lab], []).append(char)
            n += 1
    if n == 0:
        raise DataError(f"empty dataset file: {path}")
    return Dataset(classes, label_list, role)


def character_record(label: str, c: Character) -> dict:
    rec = {"label": label, "strokes": [s.tolist() for s in c.strokes]}
    if c.preprocessed:
        rec["preprocessed"] = True
    if c.span is not None:
        rec["span"] = list(c.span)
    return rec


def write_dataset(ds: Dataset, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for c, k in ds.samples():
            fh.write(json.dumps(character_record(ds.labels[k - 1], c)) + "\n")


# --- model persistence ---------------------------------------------------


def encode(obj):
    """Convert nested params (ndarrays, tuples, numpy scalars) to JSON types.

    Python's float repr round-trips exactly, so arrays survive bit-for-bit.
    """
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": True, "shape": list(obj.shape), "dtype": obj.dtype.str,
                "data": obj.ravel().tolist()}
    if isinstance(obj, dict):
        return {str(k): encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [encode(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def decode(obj):
    if isinstance(obj, dict):
        if obj.get("__ndarray__"):
            return np.array(obj["data"], dtype=np.dtype(obj["dtype"])).reshape(obj["shape"])
        return {k: decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [decode(v) for v in obj]
    return obj


def _checksum(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, allow_nan=True)
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class ModelBundle:
    classifier_kind: str
    feature_kind: str
    parameters: dict
    rng_seed: int = 0
    labels: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.classifier_kind not in CLASSIFIER_KINDS:
            raise ValueError(f"unknown classifier kind {self.classifier_kind!r}")


def save_model(bundle: ModelBundle, path) -> None:
    payload = {
        "format_version": bundle.format_version,
        "classifier_kind": bundle.classifier_kind,
        "feature_kind": bundle.feature_kind,
        "rng_seed": int(bundle.rng_seed),
        "labels": list(bundle.labels),
        "config": encode(bundle.config),
        "parameters": encode(bundle.parameters),
    }
    for value in _walk_floats(payload["parameters"]):
        if not math.isfinite(value):
            raise NumericError("refusing to save non-finite model parameters")
    payload["checksum"] = _checksum(payload)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def _walk_floats(obj):
    if isinstance(obj, float):
        yield obj
    elif isinstance(obj, dict):
        for v in obj.values():
            yield from _walk_floats(v)
    elif isinstance(obj, list):
        for v in obj:
            yield from _walk_floats(v)


def load_model(path) -> ModelBundle:
    path = Path(path)
    if not path.exists():
        raise ModelFileError(f"no such model file: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise ModelFileError(f"truncated or corrupt model file: {path}") from None
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise ModelFileError(f"not a model file: {path}")
    if payload["format_version"] != FORMAT_VERSION:
        raise ModelFileError(
            f"model format version {payload['format_version']} is not supported "
            f"(expected {FORMAT_VERSION})"
        )
    stored = payload.pop("checksum", None)
    if stored != _checksum(payload):
        raise ModelFileError(f"checksum mismatch in model file: {path}")
    try:
        return ModelBundle(
            classifier_kind=payload["classifier_kind"],
            feature_kind=payload["feature_kind"],
            parameters=decode(payload["parameters"]),
            rng_seed=payload["rng_seed"],
            labels=payload.get("labels", []),
            config=decode(payload.get("config", {})),
            format_version=payload["format_version"],
        )
    except (KeyError, ValueError) as exc:
        raise ModelFileError(f"invalid model file {path}: {exc}") from None
