"""Labeled datasets, synthetic Gaussian mixtures, CSV IO and K-fold partitioning."""

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._util import exact, rng, write_atomic, write_json
from .errors import DataError, InvalidArgument


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature matrix ``(N, d)`` with integer labels in ``[0, class_count)``.

    Sample ids are implicit: row ``i`` has id ``i``.
    """

    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError(f"features must be a non-empty 2-D matrix, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError(f"expected {X.shape[0]} labels, got shape {y.shape}")
        c = int(self.class_count)
        if c < 2:
            raise DataError(f"class_count must be >= 2, got {c}")
        if y.min() < 0 or y.max() >= c:
            raise DataError(f"labels must lie in [0, {c})")
        missing = np.setdiff1d(np.arange(c), y)
        if missing.size:
            raise DataError(f"classes {missing.tolist()} have no samples")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain non-finite values")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_count", c)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def ids(self):
        return np.arange(self.n)

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (self.class_count == other.class_count
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels))

    __hash__ = None

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.class_count)


@dataclass(frozen=True, eq=False)
class FoldPartition:
    folds: tuple
    seed: int

    @property
    def k(self):
        return len(self.folds)

    def fold_of(self, n=None):
        """Array mapping each sample index to the fold that contains it."""
        n = n if n is not None else sum(len(f) for f in self.folds)
        out = np.full(n, -1, dtype=np.int64)
        for k, fold in enumerate(self.folds):
            out[fold] = k
        return out


@dataclass(frozen=True)
class SyntheticSpec:
    """Isotropic Gaussian mixture; a larger ``spreads[k]`` makes class ``k`` harder."""

    centers: np.ndarray
    spreads: np.ndarray
    samples_per_class: int
    label_noise_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        spreads = np.broadcast_to(np.asarray(self.spreads, dtype=np.float64), (centers.shape[0],)).copy()
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "spreads", spreads)
        if centers.shape[0] < 2:
            raise InvalidArgument(f"need at least 2 classes, got {centers.shape[0]}")
        if not np.all(np.isfinite(centers)):
            raise InvalidArgument("class centers must be finite")
        if not np.all(np.isfinite(spreads)) or np.any(spreads <= 0):
            raise InvalidArgument("spreads must be positive and finite")
        if int(self.samples_per_class) < 1:
            raise InvalidArgument("samples_per_class must be >= 1")
        if not 0.0 <= float(self.label_noise_rate) < 1.0:
            raise InvalidArgument("label_noise_rate must lie in [0, 1)")

    @property
    def class_count(self):
        return self.centers.shape[0]

    @property
    def dim(self):
        return self.centers.shape[1]

    def to_json(self):
        return {
            "centers": self.centers.tolist(),
            "spreads": self.spreads.tolist(),
            "samples_per_class": int(self.samples_per_class),
            "label_noise_rate": float(self.label_noise_rate),
            "seed": int(self.seed),
        }

    @classmethod
    def from_json(cls, obj):
        try:
            return cls(centers=obj["centers"], spreads=obj["spreads"],
                       samples_per_class=int(obj["samples_per_class"]),
                       label_noise_rate=float(obj.get("label_noise_rate", 0.0)),
                       seed=int(obj.get("seed", 0)))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidArgument):
                raise
            raise InvalidArgument(f"invalid synthetic spec: {exc}") from exc


def mixture_spec(class_count, dim, spreads, samples_per_class, separation=1.0,
                 label_noise_rate=0.0, seed=0, center_seed=None):
    """Convenience constructor placing class centers at random.

    Centers are standard normal draws scaled by ``separation`` and come from
    their own stream (``center_seed``, default ``seed``), so train and test
    sets built with different ``seed`` share one mixture when ``center_seed``
    is fixed.
    """
    cs = seed if center_seed is None else center_seed
    centers = separation * rng(cs, 0).standard_normal((class_count, dim))
    return SyntheticSpec(centers=centers, spreads=spreads, samples_per_class=samples_per_class,
                         label_noise_rate=label_noise_rate, seed=seed)


def generate_synthetic(spec):
    """Draw a dataset from ``spec``.

    Returns ``(dataset, corrupted)`` where ``corrupted`` holds the sorted
    indices whose label was flipped to a uniformly chosen different class.
    Rows are grouped by true class.
    """
    c, d, m = spec.class_count, spec.dim, int(spec.samples_per_class)
    n = c * m
    g = rng(spec.seed, 1)
    labels = np.repeat(np.arange(c, dtype=np.int64), m)
    noise = g.standard_normal((n, d))
    features = spec.centers[labels] + spec.spreads[labels, None] * noise
    n_bad = math.floor(exact(spec.label_noise_rate) * n)
    corrupted = np.sort(g.choice(n, size=n_bad, replace=False)).astype(np.int64)
    if n_bad:
        labels[corrupted] = (labels[corrupted] + g.integers(1, c, size=n_bad)) % c
    return LabeledDataset(features, labels, c), corrupted


def partition(dataset, k, seed, stratified=False):
    """Split sample indices into ``k`` disjoint folds of near-equal size.

    ``dataset`` may be a :class:`LabeledDataset` or a sample count. The first
    ``N mod k`` folds receive one extra sample. With ``stratified=True`` each
    class is spread evenly over the folds (requires a dataset).
    """
    n = dataset if isinstance(dataset, (int, np.integer)) else len(dataset)
    k = int(k)
    if k < 1 or k > n:
        raise InvalidArgument(f"need 1 <= K <= N, got K={k}, N={n}")
    g = rng(seed, 2)
    if stratified:
        if not isinstance(dataset, LabeledDataset):
            raise InvalidArgument("stratified partitioning needs labels")
        order = np.concatenate([g.permutation(np.flatnonzero(dataset.labels == cls))
                                for cls in range(dataset.class_count)])
        # round-robin dealing keeps every class balanced and fold sizes within 1
        folds = tuple(np.sort(order[j::k]) for j in range(k))
    else:
        order = g.permutation(n)
        base, extra = divmod(n, k)
        bounds = np.cumsum([0] + [base + (1 if j < extra else 0) for j in range(k)])
        folds = tuple(np.sort(order[bounds[j]:bounds[j + 1]]) for j in range(k))
    return FoldPartition(folds=folds, seed=int(seed))


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def save_csv(dataset, path, meta=None):
    """Write ``f0..f{d-1},label`` rows (17 significant digits) and a JSON sidecar."""
    lines = [",".join([f"f{j}" for j in range(dataset.dim)] + ["label"])]
    for x, y in zip(dataset.features, dataset.labels):
        lines.append(",".join(format(v, ".17g") for v in x) + f",{int(y)}")
    write_atomic(path, "\n".join(lines) + "\n")
    side = {"n": dataset.n, "d": dataset.dim, "c": dataset.class_count,
            "seed": None, "corrupted_indices": []}
    side.update(meta or {})
    write_json(sidecar_path(path), side)


def load_meta(path):
    side = sidecar_path(path)
    if not side.exists():
        return {}
    with open(side, encoding="utf-8") as fh:
        return json.load(fh)


def load_csv(path, class_count=None):
    """Read a dataset written by :func:`save_csv` (or any file in that layout).

    The class count comes from ``class_count``, else the sidecar's ``c``,
    else ``max(label) + 1``.
    """
    path = Path(path)
    rows, labels, linenos = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        d = len(header) - 1
        if d < 1 or header[-1] != "label" or header[:-1] != [f"f{j}" for j in range(d)]:
            raise DataError(f"{path}: header must be f0,...,f{{d-1}},label")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise DataError(f"{path}: row {lineno}: expected {d + 1} cells, got {len(row)}")
            try:
                x = [float(v) for v in row[:-1]]
                lab = float(row[-1])
            except ValueError as exc:
                raise DataError(f"{path}: row {lineno}: non-numeric cell ({exc})") from None
            if not lab.is_integer() or lab < 0:
                raise DataError(f"{path}: row {lineno}: label {row[-1]!r} is not a class index")
            rows.append(x)
            labels.append(int(lab))
            linenos.append(lineno)
    if not rows:
        raise DataError(f"{path}: no data rows")
    if class_count is None:
        class_count = load_meta(path).get("c")
    c = int(class_count) if class_count is not None else max(labels) + 1
    for lineno, lab in zip(linenos, labels):
        if lab >= c:
            raise DataError(f"{path}: row {lineno}: label {lab} outside [0, {c})")
    return LabeledDataset(np.array(rows), np.array(labels), c)
