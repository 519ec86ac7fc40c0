"""Sample-importance scorers and the fitting / unseen / proxy scoring regimes.

Every scorer is oriented so that a higher score means a harder, more
informative sample; selection is always top-M.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import model as _model
from ._util import child_seed, write_atomic
from .data import partition
from .errors import DataError, DegenerateInput, InvalidArgument, InvariantViolation

SCORERS = ("entropy", "margin", "least_confidence", "loss")
MODES = ("fitting", "unseen", "proxy", "stage")


def score_entropy(probs):
    """Shannon entropy (nats) along the last axis, clipped to [0, ln c]."""
    p = np.asarray(probs, dtype=np.float64)
    safe = np.where(p > 0, p, 1.0)
    h = -np.sum(p * np.log(safe), axis=-1)
    return np.clip(h, 0.0, np.log(p.shape[-1]))


def score_margin(probs):
    """``1 - (p_top1 - p_top2)``: 0 when certain, 1 when the top two tie."""
    p = np.asarray(probs, dtype=np.float64)
    top2 = np.partition(p, p.shape[-1] - 2, axis=-1)[..., -2:]
    return np.clip(1.0 - (top2[..., 1] - top2[..., 0]), 0.0, 1.0)


def score_least_confidence(probs):
    p = np.asarray(probs, dtype=np.float64)
    return np.clip(1.0 - p.max(axis=-1), 0.0, 1.0)


_PROB_SCORERS = {
    "entropy": score_entropy,
    "margin": score_margin,
    "least_confidence": score_least_confidence,
}


def score_samples(params, features, labels, scorer):
    """Apply ``scorer`` to a trained model's predictions on the given rows."""
    if scorer == "loss":
        return np.atleast_1d(_model.loss(params, features, labels))
    try:
        fn = _PROB_SCORERS[scorer]
    except KeyError:
        raise InvalidArgument(f"unknown scorer {scorer!r}; expected one of {SCORERS}") from None
    return np.atleast_1d(fn(_model.predict_proba(params, features)))


def max_score(scorer, class_count):
    """Largest value the scorer can take, or None when unbounded (loss)."""
    return {"entropy": float(np.log(class_count)), "margin": 1.0,
            "least_confidence": 1.0 - 1.0 / class_count}.get(scorer)


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """Per-sample scores plus how they were produced.

    ``scored_by`` (models x samples, bool) records which model contributed to
    which sample's score when that is known; it backs the exclusion checks.
    """

    scores: np.ndarray
    n_contributors: np.ndarray
    mode: str
    scorer: str
    class_count: int
    seed: int = 0
    k: int = None
    normalized: bool = False
    scored_by: np.ndarray = field(default=None, repr=False)
    fold_of: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        s = np.ascontiguousarray(self.scores, dtype=np.float64)
        nc = np.ascontiguousarray(self.n_contributors, dtype=np.int64)
        if s.ndim != 1 or s.size < 1:
            raise DataError("scores must be a non-empty vector")
        if nc.shape != s.shape:
            raise DataError("n_contributors must align with scores")
        if not np.all(np.isfinite(s)) or np.any(s < 0):
            raise DataError("scores must be finite and non-negative")
        if self.mode not in MODES:
            raise InvalidArgument(f"unknown mode {self.mode!r}")
        if self.scorer not in SCORERS:
            raise InvalidArgument(f"unknown scorer {self.scorer!r}")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "n_contributors", nc)

    def __len__(self):
        return self.scores.size

    @property
    def mode_tag(self):
        return f"unseen({self.k})" if self.mode == "unseen" else self.mode

    def header(self):
        return {"mode": self.mode, "scorer": self.scorer, "K": self.k, "seed": self.seed,
                "normalized": self.normalized, "class_count": self.class_count}


def descending_order(scores, eligible=None):
    """Indices sorted by score descending, ties broken by ascending index."""
    s = np.asarray(scores, dtype=np.float64)
    idx = np.arange(s.size) if eligible is None else np.unique(np.asarray(eligible, dtype=np.int64))
    return idx[np.lexsort((idx, -s[idx]))]


def score_fitting(dataset, scorer, config, backend=None):
    """One model trained on every sample scores every sample."""
    params = _model.train(dataset, config, backend=backend)
    scores = score_samples(params, dataset.features, dataset.labels, scorer)
    n = len(dataset)
    return ScoreTable(scores, np.ones(n, dtype=np.int64), "fitting", scorer,
                      dataset.class_count, seed=config.seed,
                      scored_by=np.ones((1, n), dtype=bool))


def _fold_config(config, k):
    return config.replace(seed=child_seed(config.seed, 10, k))


def _map(fn, items, jobs):
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def fold_models(dataset, k, config, stratified=False, jobs=1, backend=None):
    """Partition ``dataset`` and train one fresh model per fold.

    The partition is drawn from ``config.seed``; fold ``k``'s model uses a
    seed derived from ``(config.seed, k)``. Returns ``(partition, models)``.
    """
    parts = partition(dataset, k, config.seed, stratified=stratified)
    models = _map(lambda j: _model.train(dataset, _fold_config(config, j), parts.folds[j],
                                         backend=backend),
                  range(k), jobs)
    return parts, models


def score_unseen(dataset, scorer, k, config, stratified=False, jobs=1, backend=None):
    """Score each sample only with the K-1 fold models that never trained on it.

    The model trained on fold ``j`` scores every sample outside fold ``j``; a
    sample's score is the mean of its K-1 out-of-fold scores. Fold trainings
    may run on ``jobs`` threads; the reduction is always in fold order.
    """
    n = len(dataset)
    k = int(k)
    if k < 2:
        raise InvalidArgument("unseen scoring needs K >= 2 (K=1 leaves every sample unscored)")
    if k > n:
        raise InvalidArgument(f"K={k} exceeds N={n}")
    parts, models = fold_models(dataset, k, config, stratified, jobs, backend)
    fold_of = parts.fold_of(n)
    total = np.zeros(n)
    count = np.zeros(n, dtype=np.int64)
    scored_by = np.zeros((k, n), dtype=bool)
    for j, params in enumerate(models):
        outside = np.flatnonzero(fold_of != j)
        total[outside] += score_samples(params, dataset.features[outside],
                                        dataset.labels[outside], scorer)
        count[outside] += 1
        scored_by[j, outside] = True
    for j, fold in enumerate(parts.folds):
        if scored_by[j, fold].any():
            raise InvariantViolation(f"fold model {j} scored a sample it trained on")
    if np.any(count != k - 1):
        raise InvariantViolation("every sample must have exactly K-1 contributors")
    return ScoreTable(total / (k - 1), count, "unseen", scorer, dataset.class_count,
                      seed=config.seed, k=k, scored_by=scored_by, fold_of=fold_of)


def score_proxy(dataset, scorer, k, config, stratified=False, jobs=1, backend=None):
    """Diagnostic: K fold models each score their *own* fold (seen samples).

    Same models and compute as :func:`score_unseen`, but fitting-style
    scoring; isolates the effect of scoring unseen samples from the effect of
    smaller training sets.
    """
    n = len(dataset)
    parts, models = fold_models(dataset, k, config, stratified, jobs, backend)
    scores = np.zeros(n)
    scored_by = np.zeros((len(models), n), dtype=bool)
    for j, (params, fold) in enumerate(zip(models, parts.folds)):
        scores[fold] = score_samples(params, dataset.features[fold], dataset.labels[fold], scorer)
        scored_by[j, fold] = True
    return ScoreTable(scores, np.ones(n, dtype=np.int64), "proxy", scorer, dataset.class_count,
                      seed=config.seed, k=int(k), scored_by=scored_by,
                      fold_of=parts.fold_of(n))


def normalize(table):
    """Divide scores by their sum. Order (ties included) is unchanged."""
    if table.normalized:
        return table
    total = float(np.sum(table.scores))
    if not total > 0:
        raise DegenerateInput("cannot normalize an all-zero score table")
    return replace(table, scores=table.scores / total, normalized=True)


def save_table(table, path):
    """CSV ``index,score,n_contributors,rank`` preceded by a ``# {json}`` header line."""
    order = descending_order(table.scores)
    rank = np.empty(len(table), dtype=np.int64)
    rank[order] = np.arange(1, len(table) + 1)
    lines = ["# " + json.dumps(table.header(), sort_keys=True), "index,score,n_contributors,rank"]
    lines += [f"{i},{s!r},{int(c)},{int(r)}"
              for i, (s, c, r) in enumerate(zip(table.scores.tolist(), table.n_contributors, rank))]
    write_atomic(path, "\n".join(lines) + "\n")


def load_table(path):
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise DataError(f"{path}: missing '# {{json}}' header line")
        try:
            head = json.loads(first[1:])
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: bad header: {exc}") from None
        if fh.readline().strip() != "index,score,n_contributors,rank":
            raise DataError(f"{path}: bad column header")
        idx, scores, counts = [], [], []
        for lineno, line in enumerate(fh, start=3):
            if not line.strip():
                continue
            cells = line.strip().split(",")
            if len(cells) != 4:
                raise DataError(f"{path}: row {lineno}: expected 4 cells")
            try:
                idx.append(int(cells[0]))
                scores.append(float(cells[1]))
                counts.append(int(cells[2]))
            except ValueError as exc:
                raise DataError(f"{path}: row {lineno}: {exc}") from None
    if idx != list(range(len(idx))):
        raise DataError(f"{path}: indices must run 0..N-1 in order")
    return ScoreTable(np.array(scores), np.array(counts), head["mode"], head["scorer"],
                      int(head["class_count"]), seed=head.get("seed", 0), k=head.get("K"),
                      normalized=bool(head.get("normalized", False)))
