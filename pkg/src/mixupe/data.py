"""Tabular CSV ingestion: typing, one-hot encoding, imputation, scaling, splits.

A dataset is described by a JSON sidecar::

    {
      "spec_version": 1,
      "has_header": true,
      "missing_tokens": ["?", "NA", ""],
      "columns": [
        {"name": "sepal_length", "kind": "continuous"},
        {"name": "color", "kind": "categorical", "categories": ["red", "blue"]},
        {"name": "class", "kind": "label", "categories": ["a", "b", "c"]}
      ]
    }

``kind`` is one of ``continuous``, ``categorical``, ``label``; exactly one
label column is allowed. Optional keys: ``"strict"`` (default true; when
false unknown categorical values map to an extra ``__unknown__`` slot) and
``"skip": true`` on a column to ignore it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

SPEC_VERSION = 1
DEFAULT_MISSING = ("?", "NA", "")
UNKNOWN = "__unknown__"
KINDS = ("continuous", "categorical", "label")
SPLITS = ("train", "val", "test")


class DataError(ValueError):
    pass


@dataclass
class ColumnSpec:
    name: str
    kind: str
    categories: list[str] = field(default_factory=list)
    skip: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind != "continuous" and not self.categories:
            raise DataError(f"column {self.name!r}: categories must be non-empty")
        self.categories = [str(c) for c in self.categories]

    @property
    def impute_rule(self) -> str:
        return "mean" if self.kind == "continuous" else "mode"


@dataclass
class DatasetSpec:
    columns: list[ColumnSpec]
    has_header: bool = True
    missing_tokens: tuple[str, ...] = DEFAULT_MISSING
    strict: bool = True

    def __post_init__(self):
        labels = [c for c in self.columns if c.kind == "label" and not c.skip]
        if len(labels) != 1:
            raise DataError(f"exactly one label column required, found {len(labels)}")

    @property
    def label(self) -> ColumnSpec:
        return next(c for c in self.columns if c.kind == "label" and not c.skip)

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        version = d.get("spec_version", SPEC_VERSION)
        if version != SPEC_VERSION:
            raise DataError(f"unsupported spec_version {version}")
        cols = [ColumnSpec(c["name"], c["kind"], list(c.get("categories", [])), bool(c.get("skip", False)))
                for c in d["columns"]]
        return cls(cols, bool(d.get("has_header", True)), tuple(d.get("missing_tokens", DEFAULT_MISSING)),
                   bool(d.get("strict", True)))

    @classmethod
    def from_file(cls, path: str | Path) -> "DatasetSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        cols = []
        for c in self.columns:
            entry = {"name": c.name, "kind": c.kind}
            if c.categories:
                entry["categories"] = list(c.categories)
            if c.skip:
                entry["skip"] = True
            cols.append(entry)
        return {"spec_version": SPEC_VERSION, "has_header": self.has_header,
                "missing_tokens": list(self.missing_tokens), "strict": self.strict, "columns": cols}


@dataclass
class RawTable:
    """Typed columns; ``None`` marks a missing cell."""

    columns: dict[str, list]
    n_rows: int

    def missing(self) -> list[tuple[int, str]]:
        return [(i, name) for name, col in self.columns.items() for i, v in enumerate(col) if v is None]


def load_csv(path: str | Path, spec: DatasetSpec) -> RawTable:
    """Parse a comma-separated UTF-8 file according to ``spec``."""
    active = spec.columns
    missing = set(spec.missing_tokens)
    cols: dict[str, list] = {c.name: [] for c in active if not c.skip}
    n = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and spec.has_header:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(active):
                raise DataError(f"{path}:{lineno}: expected {len(active)} fields, got {len(row)}")
            for c, cell in zip(active, row):
                if c.skip:
                    continue
                cell = cell.strip()
                if cell in missing:
                    cols[c.name].append(None)
                elif c.kind == "continuous":
                    try:
                        cols[c.name].append(float(cell))
                    except ValueError:
                        raise DataError(f"{path}:{lineno}: column {c.name!r}: cannot parse {cell!r} as a number") from None
                elif cell in c.categories:
                    cols[c.name].append(cell)
                elif spec.strict or c.kind == "label":
                    raise DataError(f"{path}:{lineno}: column {c.name!r}: unknown category {cell!r}")
                else:
                    cols[c.name].append(UNKNOWN)
            n += 1
    return RawTable(cols, n)


def _categories(c: ColumnSpec, strict: bool) -> list[str]:
    return c.categories if strict else [*c.categories, UNKNOWN]


def encode_and_impute(raw: RawTable, spec: DatasetSpec, train_mask=None) -> tuple[np.ndarray, np.ndarray]:
    """One-hot encode and fill missing cells from train-split statistics.

    Continuous gaps get the train mean, categorical gaps the train mode
    (ties go to the earliest declared category). Rows with a missing label
    are rejected.
    """
    n = raw.n_rows
    train = np.ones(n, dtype=bool) if train_mask is None else np.asarray(train_mask, dtype=bool)
    blocks = []
    for c in spec.columns:
        if c.skip or c.kind == "label":
            continue
        col = raw.columns[c.name]
        present = np.array([v is not None for v in col])
        if not present[train].any():
            raise DataError(f"column {c.name!r} has no observed values in the training split")
        if c.kind == "continuous":
            vals = np.array([np.nan if v is None else v for v in col], dtype=np.float64)
            fill = vals[train & present].mean()
            blocks.append(np.where(present, vals, fill)[:, None])
        else:
            cats = _categories(c, spec.strict)
            idx = np.array([-1 if v is None else cats.index(v) for v in col])
            counts = np.bincount(idx[train & present], minlength=len(cats))
            idx = np.where(present, idx, int(np.argmax(counts)))
            blocks.append(np.eye(len(cats))[idx])
    features = np.hstack(blocks) if blocks else np.zeros((n, 0))

    lab = spec.label
    col = raw.columns[lab.name]
    if any(v is None for v in col):
        bad = next(i for i, v in enumerate(col) if v is None)
        raise DataError(f"row {bad}: label is missing")
    labels = np.eye(len(lab.categories))[[lab.categories.index(v) for v in col]]
    return features, labels


def feature_dim(spec: DatasetSpec) -> int:
    d = 0
    for c in spec.columns:
        if c.skip or c.kind == "label":
            continue
        d += 1 if c.kind == "continuous" else len(_categories(c, spec.strict))
    return d


def normalize(features: np.ndarray, train_mask, scale: bool = True):
    """Standardize with train-split statistics; ``std < 1e-12`` becomes 1."""
    train = np.asarray(train_mask, dtype=bool)
    if not train.any():
        raise DataError("normalization needs a nonempty training split")
    mean = features[train].mean(axis=0, keepdims=True)
    centred = features - mean
    if scale:
        std = features[train].std(axis=0, keepdims=True)
        std = np.where(std < 1e-12, 1.0, std)
    else:
        std = np.ones_like(mean)
    return centred / std, mean, std


def _allocate(n: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder split of ``n`` items; ties go to the earlier slot."""
    raw = [n * f for f in fractions]
    sizes = [int(np.floor(r)) for r in raw]
    order = sorted(range(len(fractions)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split(n: int, fractions: Sequence[float] = (0.7, 0.15, 0.15), seed: int = 0, stratify=None) -> np.ndarray:
    """Seeded shuffle then contiguous assignment into train/val/test.

    With ``stratify`` (class index per row) each class is split on its own.
    Returns an array of split names.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise DataError(f"fractions must be three nonnegative numbers summing to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    out = np.empty(n, dtype=object)
    groups = [np.arange(n)] if stratify is None else [np.flatnonzero(np.asarray(stratify) == k)
                                                      for k in np.unique(stratify)]
    for members in groups:
        members = members[rng.permutation(len(members))]
        start = 0
        for name, size in zip(SPLITS, _allocate(len(members), fractions)):
            out[members[start : start + size]] = name
            start += size
    for name, f in zip(SPLITS, fractions):
        if f > 0 and not np.any(out == name):
            raise DataError(f"split {name!r} is empty for n={n} and fractions {fractions}")
    return out.astype(str)


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_mean: np.ndarray
    feature_std: np.ndarray
    spec: DatasetSpec
    split_assignment: np.ndarray
    name: str = ""

    def part(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        mask = self.split_assignment == which
        return self.features[mask], self.labels[mask]

    @property
    def train(self):
        return self.part("train")

    @property
    def val(self):
        return self.part("val")

    @property
    def test(self):
        return self.part("test")

    @property
    def n_classes(self) -> int:
        return self.labels.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def train_mean(self) -> np.ndarray:
        """Feature mean of the (already normalized) training split."""
        return self.train[0].mean(axis=0, keepdims=True)


def load_dataset(
    csv_path: str | Path,
    spec_path: str | Path | DatasetSpec,
    fractions: Sequence[float] = (0.7, 0.15, 0.15),
    seed: int = 0,
    stratified: bool = True,
    scale: bool = True,
) -> Dataset:
    """load -> split -> encode/impute (train stats) -> normalize (train stats)."""
    spec = spec_path if isinstance(spec_path, DatasetSpec) else DatasetSpec.from_file(spec_path)
    raw = load_csv(csv_path, spec)
    lab = spec.label
    strat = np.array([lab.categories.index(v) for v in raw.columns[lab.name]]) if stratified else None
    assignment = split(raw.n_rows, fractions, seed, stratify=strat)
    train = assignment == "train"
    feats, labels = encode_and_impute(raw, spec, train)
    feats, mean, std = normalize(feats, train, scale=scale)
    return Dataset(feats, labels, mean, std, spec, assignment, Path(csv_path).stem)


BUNDLED = Path(__file__).parent / "datasets"


def bundled(name: str) -> tuple[Path, Path]:
    """CSV and spec paths of a dataset shipped with the package."""
    csv_path, spec_path = BUNDLED / f"{name}.csv", BUNDLED / f"{name}.json"
    if not csv_path.exists():
        known = sorted(p.stem for p in BUNDLED.glob("*.csv"))
        raise DataError(f"no bundled dataset {name!r}; available: {known}")
    return csv_path, spec_path
