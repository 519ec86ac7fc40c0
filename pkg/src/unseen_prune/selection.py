"""Top-M selection, stage planning and the incremental evaluate-and-refill loop."""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import model as _model
from ._util import child_seed, exact, write_atomic, write_json
from .errors import InvalidArgument, InvariantViolation
from .scoring import (ScoreTable, descending_order, normalize, score_fitting, score_samples,
                      score_unseen)


def target_size(n, prune_rate):
    """Coreset size ``floor(N * (1 - p))``, computed exactly on the decimal ``p``."""
    p = exact(prune_rate)
    if not 0 < p < 1:
        raise InvalidArgument(f"prune rate must lie in (0, 1), got {prune_rate}")
    m = math.floor(int(n) * (1 - p))
    if m < 1:
        raise InvalidArgument(f"prune rate {prune_rate} leaves an empty coreset for N={n}")
    return m


@dataclass(frozen=True)
class StagePlan:
    sizes: tuple

    @property
    def stages(self):
        return len(self.sizes)

    @property
    def total(self):
        return sum(self.sizes)


def plan_stages(n, prune_rate, stages, m2_fraction=0.10):
    """Per-stage selection sizes M_1..M_J summing to the target size.

    The refill budget (everything after stage 1) is
    ``min(ceil(N * m2_fraction), floor(M / 2))``, raised to J-1 if needed so
    every stage adds at least one sample, and split evenly over stages 2..J
    with the remainder going to earlier stages.
    """
    m = target_size(n, prune_rate)
    stages = int(stages)
    if stages < 1:
        raise InvalidArgument("need at least one stage")
    if stages > m:
        raise InvalidArgument(f"J={stages} stages cannot each add a sample to a coreset of {m}")
    if stages == 1:
        return StagePlan((m,))
    f = exact(m2_fraction)
    if not 0 < f < 1:
        raise InvalidArgument(f"m2_fraction must lie in (0, 1), got {m2_fraction}")
    refill = min(math.ceil(int(n) * f), m // 2)
    refill = max(refill, stages - 1)
    base, extra = divmod(refill, stages - 1)
    tail = [base + (1 if j < extra else 0) for j in range(stages - 1)]
    return StagePlan(tuple([m - refill] + tail))


def select_top(scores, m, eligible=None):
    """The ``m`` eligible indices with the largest scores, in descending-score order.

    ``scores`` is a :class:`ScoreTable` or a length-N vector; ties go to the
    lower index.
    """
    s = scores.scores if isinstance(scores, ScoreTable) else np.asarray(scores, dtype=np.float64)
    order = descending_order(s, eligible)
    m = int(m)
    if m < 0 or m > order.size:
        raise InvalidArgument(f"cannot select {m} of {order.size} eligible samples")
    return order[:m]


@dataclass
class StageRecord:
    stage: int
    added: np.ndarray
    scored: np.ndarray
    scores: np.ndarray
    model_seed: int = None
    trained_on: int = 0
    table: ScoreTable = field(default=None, repr=False)


@dataclass
class SelectionState:
    """Coreset S_j (in order of addition), remaining set R_j and the audit log."""

    coreset: np.ndarray
    remaining: np.ndarray
    stage: int
    stage_sizes: tuple
    prune_rate: float
    target: int
    seed: int = 0
    records: list = field(default_factory=list, repr=False)

    def check(self, n):
        s, r = self.coreset, self.remaining
        if np.intersect1d(s, r).size or np.unique(s).size != s.size:
            raise InvariantViolation(f"stage {self.stage}: coreset and remainder overlap")
        if not np.array_equal(np.sort(np.concatenate([s, r])), np.arange(n)):
            raise InvariantViolation(f"stage {self.stage}: coreset and remainder do not cover 0..N-1")
        if s.size != sum(self.stage_sizes[:self.stage]):
            raise InvariantViolation(f"stage {self.stage}: coreset has {s.size} samples")

    def audit(self):
        return {
            "p": self.prune_rate,
            "M": self.target,
            "stage_sizes": list(self.stage_sizes),
            "seed": self.seed,
            "stages": [{"stage": r.stage, "added": sorted(int(i) for i in r.added),
                        "scored": int(r.scored.size), "trained_on": r.trained_on,
                        "model_seed": r.model_seed,
                        "scorer": r.table.scorer if r.table is not None else "loss"}
                       for r in self.records],
        }


def incremental_select(dataset, scorer, k, plan, config, prune_rate=None, baseline=False,
                       stage1_table=None, jobs=1, backend=None):
    """Run all stages and return the final :class:`SelectionState`.

    Stage 1 ranks every sample with ``scorer`` under unseen scoring (or fitting
    scoring if ``baseline``), normalizes, and keeps the top M_1. Each later
    stage trains a fresh model on the current coreset, scores the remainder by
    loss and moves the top M_j into the coreset. ``stage1_table`` reuses an
    existing table instead of rescoring.
    """
    n = len(dataset)
    if plan.total >= n:
        raise InvalidArgument("plan selects the whole dataset")
    if stage1_table is None:
        if baseline:
            stage1_table = score_fitting(dataset, scorer, config, backend=backend)
        else:
            stage1_table = score_unseen(dataset, scorer, k, config, jobs=jobs, backend=backend)
    elif len(stage1_table) != n:
        raise InvalidArgument("stage-1 table does not match the dataset")
    table = normalize(stage1_table)
    # Normalizing is monotone, but dividing by the sum can round two distinct
    # scores onto one value; ordering by the raw scores keeps the coreset
    # exactly independent of the normalization.
    first = select_top(stage1_table, plan.sizes[0])
    p = prune_rate if prune_rate is not None else 1 - Fraction(plan.total, n)
    state = SelectionState(coreset=first, remaining=np.setdiff1d(np.arange(n), first),
                           stage=1, stage_sizes=plan.sizes, prune_rate=float(p),
                           target=plan.total, seed=config.seed)
    state.records.append(StageRecord(1, first, np.arange(n), table.scores, config.seed, n, table))
    state.check(n)
    for j in range(2, plan.stages + 1):
        seed_j = child_seed(config.seed, 11, j)
        params = _model.train(dataset, config.replace(seed=seed_j), state.coreset, backend=backend)
        pool = state.remaining
        if np.intersect1d(pool, state.coreset).size:
            raise InvariantViolation(f"stage {j} would score samples its model trained on")
        s = score_samples(params, dataset.features[pool], dataset.labels[pool], "loss")
        added = pool[select_top(s, plan.sizes[j - 1])]
        state.coreset = np.concatenate([state.coreset, added])
        state.remaining = np.setdiff1d(pool, added)
        state.stage = j
        state.records.append(StageRecord(j, added, pool, s, seed_j, int(state.coreset.size - added.size)))
        state.check(n)
    return state


def save_coreset(state, path, extra=None):
    """Sorted indices, one per line, plus ``<name>.audit.json`` next to it."""
    path = Path(path)
    write_atomic(path, "".join(f"{int(i)}\n" for i in np.sort(state.coreset)))
    audit = state.audit()
    audit.update(extra or {})
    write_json(audit_path(path), audit)


def audit_path(path):
    path = Path(path)
    return path.with_name(path.name + ".audit.json")


def load_coreset(path):
    with open(path, encoding="utf-8") as fh:
        return np.array([int(line) for line in fh if line.strip()], dtype=np.int64)


def cost_model(n, prune_rate, batch_size, k=4, stages=2, m2_fraction=0.10):
    """Training iterations (SGD steps) for each pipeline, from sample counts.

    * ``prev_iters``: one scoring model on all of D, then the final model on
      the coreset, ``N (2 - p) / B``.
    * ``unseen_iters``: K fold models on N/K samples each, then the coreset
      model. Equal to ``prev_iters``.
    * ``is_extra_iters``: the stage models of incremental selection, each
      trained on the coreset as it stood before its stage. For two stages
      this is ``N (1 - p - f) / B`` with ``f`` the refill fraction.

    Arithmetic is exact (rational) until the final conversion to float.
    The refill fraction is capped at ``(1 - p) / 2`` as in :func:`plan_stages`.
    """
    N, p, B, K, J = Fraction(int(n)), exact(prune_rate), Fraction(int(batch_size)), int(k), int(stages)
    if not 0 < p < 1:
        raise InvalidArgument("prune rate must lie in (0, 1)")
    if B < 1 or K < 1 or J < 1:
        raise InvalidArgument("batch size, K and J must be >= 1")
    f = min(exact(m2_fraction), (1 - p) / 2)
    prev = N * (2 - p) / B
    unseen = K * (N / (K * B)) + N * (1 - p) / B
    first = N * (1 - p) - N * f
    extra = sum((first + (j - 2) * N * f / (J - 1) for j in range(2, J + 1)), Fraction(0)) / B
    return {
        "prev_iters": float(prev),
        "unseen_iters": float(unseen),
        "is_extra_iters": float(extra),
        "is_total_iters": float(unseen + extra),
        "is_ratio": float(extra / prev),
    }
