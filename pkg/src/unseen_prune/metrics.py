"""Diagnostics: score dispersion, rank stability, coreset evaluation and class-level analysis."""

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import model as _model
from ._util import write_atomic
from .errors import DataError, InvalidArgument
from .scoring import ScoreTable, descending_order, max_score


@dataclass(frozen=True)
class EvalReport:
    test_accuracy: float
    per_class_accuracy: np.ndarray
    class_counts: np.ndarray
    inter_class_variance: float
    config_digest: str = ""
    seed: int = None

    def to_json(self):
        return {
            "test_accuracy": self.test_accuracy,
            "per_class_accuracy": self.per_class_accuracy.tolist(),
            "class_counts": self.class_counts.tolist(),
            "inter_class_variance": self.inter_class_variance,
            "config_digest": self.config_digest,
            "seed": self.seed,
        }


def _scores(table):
    return table.scores if isinstance(table, ScoreTable) else np.asarray(table, dtype=np.float64)


def ranks(table):
    """Rank of every sample, 1 for the highest score; ties by ascending index."""
    order = descending_order(_scores(table))
    r = np.empty(order.size, dtype=np.int64)
    r[order] = np.arange(1, order.size + 1)
    return r


def rank_pcc(a, b):
    """Pearson correlation between two rank vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidArgument(f"rank vectors must have equal length, got {a.shape} and {b.shape}")
    if a.size < 2:
        raise InvalidArgument("need at least two samples")
    da, db = a - a.mean(), b - b.mean()
    denom = np.sqrt(np.dot(da, da) * np.dot(db, db))
    if denom == 0:
        raise DataError("constant vector has no correlation")
    return float(np.clip(np.dot(da, db) / denom, -1.0, 1.0))


def dispersion(table, threshold_fraction=0.01, max_value=None):
    """Fraction of samples scoring below ``threshold_fraction`` of the maximum.

    The maximum is the scorer's bound (``ln c`` for entropy) for raw tables,
    and the largest observed score for loss or normalized tables, unless
    ``max_value`` is given. If that maximum is zero every score is zero and
    the result is 1.
    """
    if not 0 < threshold_fraction < 1:
        raise InvalidArgument("threshold_fraction must lie in (0, 1)")
    s = _scores(table)
    if max_value is None:
        if isinstance(table, ScoreTable) and not table.normalized:
            max_value = max_score(table.scorer, table.class_count)
        if max_value is None:
            max_value = float(s.max())
    if max_value <= 0:
        return 1.0
    return float(np.mean(s < threshold_fraction * max_value))


def evaluate_params(params, features, labels, class_count=None, config_digest="", seed=None):
    """Accuracy report for an already trained model on a labeled test set."""
    c = class_count or params.class_count
    y = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(y, minlength=c)
    if counts.size > c:
        raise DataError("test labels outside the model's classes")
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise DataError(f"per-class accuracy undefined: classes {missing.tolist()} absent from the test set")
    hits = (_model.predict(params, features) == y).astype(np.float64)
    per_class = np.bincount(y, weights=hits, minlength=c) / counts
    return EvalReport(
        test_accuracy=float(hits.mean()),
        per_class_accuracy=per_class,
        class_counts=counts,
        inter_class_variance=float(np.var(per_class)),
        config_digest=config_digest,
        seed=seed,
    )


def config_digest(config):
    return hashlib.sha256(json.dumps(config.to_json(), sort_keys=True).encode()).hexdigest()[:16]


def evaluate(coreset, train_set, test_set, config, backend=None):
    """Train a fresh model on the coreset rows and report test accuracy."""
    idx = np.asarray(coreset, dtype=np.int64)
    if idx.size == 0:
        raise InvalidArgument("coreset is empty")
    if test_set.dim != train_set.dim or test_set.class_count != train_set.class_count:
        raise DataError("train and test sets disagree on feature width or class count")
    params = _model.train(train_set, config, idx, backend=backend)
    return evaluate_params(params, test_set.features, test_set.labels, train_set.class_count,
                           config_digest=config_digest(config), seed=config.seed)


def rank_change_by_class(fitting_ranks, unseen_ranks, labels, class_accuracies=None):
    """Summaries of ``unseen_rank - fitting_rank`` per class.

    A negative difference means the sample moved up (towards selection) under
    unseen scoring. With ``class_accuracies`` the hardest and easiest classes
    are reported as well.
    """
    f = np.asarray(fitting_ranks, dtype=np.int64)
    u = np.asarray(unseen_ranks, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    if not (f.shape == u.shape == y.shape):
        raise InvalidArgument("rank vectors and labels must align")
    diff = u - f
    per_class = {}
    for cls in np.unique(y):
        d = diff[y == cls]
        per_class[int(cls)] = {"count": int(d.size), "mean": float(d.mean()),
                               "median": float(np.median(d)),
                               "fraction_negative": float(np.mean(d < 0))}
    out = {"per_class": per_class, "differences": diff}
    if class_accuracies is not None:
        acc = np.asarray(class_accuracies, dtype=np.float64)
        out["hardest_class"] = int(np.argmin(acc))
        out["easiest_class"] = int(np.argmax(acc))
    return out


def histogram(table, bins=20, range_=None):
    """Rows of ``(bin_left, bin_right, count)``."""
    s = _scores(table)
    counts, edges = np.histogram(s, bins=bins, range=range_)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(counts.size)]


def save_histogram(rows, path):
    lines = ["bin_left,bin_right,count"] + [f"{a!r},{b!r},{c}" for a, b, c in rows]
    write_atomic(path, "\n".join(lines) + "\n")


def save_variance_series(rows, path):
    """Rows of ``(prune_rate, variance, mode)``."""
    lines = ["prune_rate,variance,mode"] + [f"{p!r},{v!r},{m}" for p, v, m in rows]
    write_atomic(path, "\n".join(lines) + "\n")
