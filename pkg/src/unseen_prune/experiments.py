"""Multi-seed diagnostics on a fixed 10-class Gaussian-mixture benchmark.

The benchmark: 10 classes in 16 dimensions, class spreads rising linearly from
0.5 (easy) to 1.5 (hard), 200 training samples per class with 5% label
noise, and a clean test set of 300 samples per class drawn from the same
mixture. Training uses :class:`TrainConfig` defaults (an MLP that can fit
its training set) unless a config is passed.
"""

import numpy as np

from . import metrics, scoring, selection
from ._util import child_seed, rng
from .data import generate_synthetic, mixture_spec
from .model import TrainConfig, train

CLASS_COUNT = 10
DIM = 16
SPREADS = tuple(np.linspace(0.5, 1.5, CLASS_COUNT))
SEPARATION = 1.0
TRAIN_PER_CLASS = 200
TEST_PER_CLASS = 300
NOISE = 0.05
CENTER_SEED = 1234
TEST_SEED = 10_000
K = 4


def benchmark_spec(seed=0, samples_per_class=TRAIN_PER_CLASS, noise=NOISE):
    return mixture_spec(CLASS_COUNT, DIM, SPREADS, samples_per_class, separation=SEPARATION,
                        label_noise_rate=noise, seed=seed, center_seed=CENTER_SEED)


def benchmark_data(seed=0):
    """``(train, corrupted, test)`` for one draw of the benchmark."""
    train_set, corrupted = generate_synthetic(benchmark_spec(seed))
    test_set, _ = generate_synthetic(benchmark_spec(TEST_SEED, TEST_PER_CLASS, 0.0))
    return train_set, corrupted, test_set


def random_coreset(n, m, seed):
    return np.sort(rng(seed, 7).choice(n, size=m, replace=False))


def _config(config, seed):
    return (config or TrainConfig()).replace(seed=seed)


def dispersion_experiment(seeds=5, config=None, jobs=1, threshold=0.01, data_seed=0):
    """Near-zero entropy fraction under fitting vs unseen scoring, one dataset, several seeds."""
    ds, _, _ = benchmark_data(data_seed)
    rows = []
    for s in range(seeds):
        cfg = _config(config, s)
        fit = scoring.score_fitting(ds, "entropy", cfg)
        uns = scoring.score_unseen(ds, "entropy", K, cfg, jobs=jobs)
        rows.append({"seed": s, "fitting": metrics.dispersion(fit, threshold),
                     "unseen": metrics.dispersion(uns, threshold)})
    summary = {mode: float(np.mean([r[mode] for r in rows])) for mode in ("fitting", "unseen")}
    summary["threshold"] = threshold * float(np.log(CLASS_COUNT))
    return {"rows": rows, "summary": summary}


def stability_experiment(seeds=5, config=None, jobs=1, data_seed=0):
    """Rank PCC between scoring runs with seeds (s, s+1 mod n) on one dataset."""
    ds, _, _ = benchmark_data(data_seed)
    ranks = {"fitting": [], "unseen": []}
    for s in range(seeds):
        cfg = _config(config, s)
        ranks["fitting"].append(metrics.ranks(scoring.score_fitting(ds, "entropy", cfg)))
        ranks["unseen"].append(metrics.ranks(scoring.score_unseen(ds, "entropy", K, cfg, jobs=jobs)))
    pairs = [(i, (i + 1) % seeds) for i in range(seeds)] if seeds > 2 else [(0, 1)]
    rows = [{"pair": [a, b], **{m: metrics.rank_pcc(r[a], r[b]) for m, r in ranks.items()}}
            for a, b in pairs]
    summary = {mode: float(np.mean([r[mode] for r in rows])) for mode in ranks}
    return {"rows": rows, "summary": summary}


def _coresets(ds, cfg, prune_rate, tables, include_is=True):
    m = selection.target_size(len(ds), prune_rate)
    out = {
        "fitting": selection.select_top(tables["fitting"], m),
        "unseen": selection.select_top(tables["unseen"], m),
        "random": random_coreset(len(ds), m, child_seed(cfg.seed, 13)),
    }
    if include_is:
        plan = selection.plan_stages(len(ds), prune_rate, 2)
        out["unseen+is"] = selection.incremental_select(
            ds, "entropy", K, plan, cfg, prune_rate=prune_rate,
            stage1_table=tables["unseen"]).coreset
    return out


def _evaluate_all(ds, test, cfg, prune_rates, include_is, corrupted, jobs):
    tables = {"fitting": scoring.score_fitting(ds, "entropy", cfg),
              "unseen": scoring.score_unseen(ds, "entropy", K, cfg, jobs=jobs)}
    rows = []
    for p in prune_rates:
        for mode, idx in _coresets(ds, cfg, p, tables, include_is).items():
            rep = metrics.evaluate(idx, ds, test, cfg)
            rows.append({"seed": cfg.seed, "prune_rate": p, "mode": mode,
                         "accuracy": rep.test_accuracy,
                         "inter_class_variance": rep.inter_class_variance,
                         "per_class_accuracy": rep.per_class_accuracy.tolist(),
                         "mislabeled_kept": int(np.isin(idx, corrupted).sum())})
    return rows


def _mean_by(rows, key, prune_rates, modes):
    return {f"{p}": {m: float(np.mean([r[key] for r in rows if r["prune_rate"] == p and r["mode"] == m]))
                     for m in modes}
            for p in prune_rates}


def class_variance_experiment(seeds=5, config=None, jobs=1, prune_rates=(0.5, 0.7)):
    """Inter-class accuracy variance of coreset models, per selection framework."""
    rows = []
    for s in range(seeds):
        ds, corrupted, test = benchmark_data(s)
        rows += _evaluate_all(ds, test, _config(config, s), prune_rates, True, corrupted, jobs)
    modes = ("fitting", "unseen", "unseen+is", "random")
    return {"rows": rows,
            "summary": {"inter_class_variance": _mean_by(rows, "inter_class_variance", prune_rates, modes),
                        "accuracy": _mean_by(rows, "accuracy", prune_rates, modes)}}


def usefulness_experiment(seeds=5, config=None, jobs=1, prune_rates=(0.3,)):
    """Test accuracy of fitting, unseen, unseen+IS and random coresets."""
    rows = []
    for s in range(seeds):
        ds, corrupted, test = benchmark_data(s)
        rows += _evaluate_all(ds, test, _config(config, s), prune_rates, True, corrupted, jobs)
    modes = ("fitting", "unseen", "unseen+is", "random")
    return {"rows": rows,
            "summary": {"accuracy": _mean_by(rows, "accuracy", prune_rates, modes),
                        "mislabeled_kept": _mean_by(rows, "mislabeled_kept", prune_rates, modes)}}


def rank_change_experiment(seeds=5, config=None, jobs=1):
    """Mean rank change (unseen - fitting) of the hardest and easiest classes.

    Class difficulty is the per-class test accuracy of a model trained on the
    full training set.
    """
    rows = []
    for s in range(seeds):
        ds, _, test = benchmark_data(s)
        cfg = _config(config, s)
        full = train(ds, cfg)
        acc = metrics.evaluate_params(full, test.features, test.labels, CLASS_COUNT).per_class_accuracy
        fit = metrics.ranks(scoring.score_fitting(ds, "entropy", cfg))
        uns = metrics.ranks(scoring.score_unseen(ds, "entropy", K, cfg, jobs=jobs))
        out = metrics.rank_change_by_class(fit, uns, ds.labels, acc)
        hard, easy = out["hardest_class"], out["easiest_class"]
        rows.append({"seed": s, "hardest_class": hard, "easiest_class": easy,
                     "hardest_mean": out["per_class"][hard]["mean"],
                     "easiest_mean": out["per_class"][easy]["mean"],
                     "hardest_fraction_negative": out["per_class"][hard]["fraction_negative"],
                     "easiest_fraction_negative": out["per_class"][easy]["fraction_negative"]})
    keys = ("hardest_mean", "easiest_mean", "hardest_fraction_negative", "easiest_fraction_negative")
    return {"rows": rows, "summary": {k: float(np.mean([r[k] for r in rows])) for k in keys}}


EXPERIMENTS = {
    "dispersion": dispersion_experiment,
    "stability": stability_experiment,
    "class-variance": class_variance_experiment,
    "usefulness": usefulness_experiment,
    "rank-change": rank_change_experiment,
}


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
