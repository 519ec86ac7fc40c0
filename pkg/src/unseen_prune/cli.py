"""``unseen-prune`` command line.

Subcommands: gen, score, select, eval, compare, cost, experiment, repro.
Every run writes a JSON manifest holding the resolved arguments and input
and output digests; ``repro`` replays one.

Exit codes: 0 success, 1 internal failure / repro mismatch, 2 usage error,
3 data error, 4 numerical divergence.
"""

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _backend, experiments
from . import data as _data
from . import metrics, scoring, selection
from ._util import child_seed, sha256_file, write_json
from .errors import DataError, DivergenceError, InvalidArgument, InvariantViolation
from .model import TrainConfig, parse_arch

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3, 4

TRAIN_FLAGS = {
    # flag dest -> TrainConfig field
    "arch": "architecture",
    "hidden": "hidden_width",
    "epochs": "epochs",
    "batch_size": "batch_size",
    "lr": "learning_rate",
    "momentum": "momentum",
    "init_scale": "weight_init_scale",
}


class UsageError(InvalidArgument):
    pass


def _add_train_flags(p):
    g = p.add_argument_group("training (flags > --config file > defaults)")
    g.add_argument("--config", type=Path, help="JSON file of training options")
    g.add_argument("--arch", help="softmax | mlp | mlp(WIDTH)")
    g.add_argument("--hidden", type=int, help="hidden width for mlp")
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--momentum", type=float)
    g.add_argument("--init-scale", type=float)


def _common(p, seed_required=False):
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.add_argument("--manifest", type=Path, help="manifest path (default: <output>.manifest.json)")
    if seed_required:
        p.add_argument("--seed", type=int, required=True)


def build_parser():
    parser = argparse.ArgumentParser(prog="unseen-prune", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset from a JSON spec")
    p.add_argument("spec", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, help="override the spec's sampling seed")
    p.add_argument("--noise", type=float, help="override label_noise_rate")
    _common(p)

    p = sub.add_parser("score", help="score every sample of a dataset")
    p.add_argument("dataset", type=Path)
    p.add_argument("--mode", choices=["fitting", "unseen", "proxy"], default="unseen")
    p.add_argument("--scorer", choices=scoring.SCORERS, default="entropy")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--stratified", action="store_true")
    p.add_argument("--jobs", type=int, default=1, help="parallel fold trainings")
    p.add_argument("--out", type=Path, required=True)
    _common(p, seed_required=True)
    _add_train_flags(p)

    p = sub.add_parser("select", help="select a coreset")
    p.add_argument("dataset", type=Path)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scores", type=Path, help="stage-1 score table")
    src.add_argument("--end-to-end", action="store_true", help="compute stage-1 scores here")
    p.add_argument("--p", type=float, required=True, help="prune rate in (0, 1)")
    p.add_argument("--j", type=int, default=2, help="number of stages")
    p.add_argument("--m2-frac", type=float, default=0.10)
    p.add_argument("--mode", choices=["unseen", "fitting"], default="unseen")
    p.add_argument("--scorer", choices=scoring.SCORERS, default="entropy")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)
    _common(p, seed_required=True)
    _add_train_flags(p)

    p = sub.add_parser("eval", help="train on a coreset and report test accuracy")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--test", type=Path, required=True)
    which = p.add_mutually_exclusive_group()
    which.add_argument("--coreset", type=Path, help="coreset file (default: full training set)")
    which.add_argument("--random", type=float, metavar="P",
                       help="random-coreset control at prune rate P")
    p.add_argument("--out", type=Path, required=True)
    _common(p, seed_required=True)
    _add_train_flags(p)

    p = sub.add_parser("compare", help="rank PCC and dispersion of two score tables")
    p.add_argument("table_a", type=Path)
    p.add_argument("table_b", type=Path)
    p.add_argument("--threshold", type=float, default=0.01)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--hist-prefix", type=Path, help="write <prefix>_a.csv / <prefix>_b.csv histograms")
    p.add_argument("--out", type=Path, required=True)
    _common(p)

    p = sub.add_parser("cost", help="training-iteration cost model")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--j", type=int, default=2)
    p.add_argument("--m2-frac", type=float, default=0.10)
    p.add_argument("--out", type=Path)
    _common(p)

    p = sub.add_parser("experiment", help="desk-scale multi-seed diagnostics on the benchmark mixture")
    p.add_argument("name", choices=sorted(experiments.EXPERIMENTS))
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)
    _common(p)
    _add_train_flags(p)

    p = sub.add_parser("repro", help="replay a run manifest")
    p.add_argument("manifest_file", type=Path)
    p.add_argument("--out-dir", type=Path, help="write outputs here instead of the original paths")
    p.add_argument("--check", action="store_true", help="fail unless outputs match recorded digests")
    return parser


def resolve_config(args):
    """Training config from defaults, then ``--config``, then explicit flags."""
    values = TrainConfig().to_json()
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            values.update(TrainConfig.from_json(json.load(fh)).to_json())
    for flag, name in TRAIN_FLAGS.items():
        v = getattr(args, flag, None)
        if v is None:
            continue
        if flag == "arch":
            arch, width = parse_arch(v)
            values["architecture"] = arch
            if width is not None:
                values["hidden_width"] = width
        else:
            values[name] = v
    if getattr(args, "seed", None) is not None:
        values["seed"] = args.seed
    return TrainConfig(**values)


def _check_outputs(paths, force):
    if force:
        return
    for path in paths:
        if path is not None and Path(path).exists():
            raise UsageError(f"{path} exists; pass --force to overwrite")


def _summary(scores):
    return {"min": float(scores.min()), "max": float(scores.max()), "mean": float(scores.mean())}


def cmd_gen(args):
    with open(args.spec, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidArgument(f"{args.spec}: not valid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise InvalidArgument(f"{args.spec}: expected a JSON object")
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.noise is not None:
        raw["label_noise_rate"] = args.noise
    if "centers" not in raw and "class_count" in raw:
        try:
            spec = _data.mixture_spec(int(raw["class_count"]), int(raw["dim"]), raw["spreads"],
                                      int(raw["samples_per_class"]),
                                      separation=float(raw.get("separation", 1.0)),
                                      label_noise_rate=float(raw.get("label_noise_rate", 0.0)),
                                      seed=int(raw.get("seed", 0)),
                                      center_seed=raw.get("center_seed"))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidArgument):
                raise
            raise InvalidArgument(f"invalid synthetic spec: {exc}") from None
    else:
        spec = _data.SyntheticSpec.from_json(raw)
    _check_outputs([args.out, _data.sidecar_path(args.out)], args.force)
    ds, corrupted = _data.generate_synthetic(spec)
    _data.save_csv(ds, args.out, meta={"seed": int(spec.seed),
                                       "corrupted_indices": corrupted.tolist()})
    print(f"wrote {args.out}: N={ds.n} d={ds.dim} c={ds.class_count} corrupted={corrupted.size}")
    return {"outputs": [args.out, _data.sidecar_path(args.out)], "inputs": [args.spec],
            "spec": spec.to_json()}


def _score_table(ds, mode, scorer, k, config, stratified=False, jobs=1):
    if mode == "fitting":
        return scoring.score_fitting(ds, scorer, config)
    if mode == "proxy":
        return scoring.score_proxy(ds, scorer, k, config, stratified=stratified, jobs=jobs)
    return scoring.score_unseen(ds, scorer, k, config, stratified=stratified, jobs=jobs)


def cmd_score(args):
    if args.mode != "fitting" and args.k < 2:
        raise UsageError("--k must be >= 2 for unseen/proxy scoring")
    config = resolve_config(args)
    _check_outputs([args.out], args.force)
    ds = _data.load_csv(args.dataset)
    table = _score_table(ds, args.mode, args.scorer, args.k, config, args.stratified, args.jobs)
    scoring.save_table(table, args.out)
    summary = _summary(table.scores)
    summary["dispersion"] = metrics.dispersion(table)
    print(f"{table.mode_tag} {table.scorer}: N={len(table)} min={summary['min']:.6g} "
          f"max={summary['max']:.6g} dispersion={summary['dispersion']:.4f}")
    return {"outputs": [args.out], "inputs": [args.dataset], "config": config.to_json(),
            "summary": summary}


def cmd_select(args):
    config = resolve_config(args)
    ds = _data.load_csv(args.dataset)
    plan = selection.plan_stages(len(ds), args.p, args.j, args.m2_frac)
    audit_file = selection.audit_path(args.out)
    _check_outputs([args.out, audit_file], args.force)
    inputs = [args.dataset]
    table = None
    if args.scores:
        table = scoring.load_table(args.scores)
        if len(table) != len(ds):
            raise DataError(f"score table has {len(table)} rows but dataset has {len(ds)}")
        inputs.append(args.scores)
    state = selection.incremental_select(
        ds, args.scorer, args.k, plan, config, prune_rate=args.p,
        baseline=(args.mode == "fitting"), stage1_table=table, jobs=args.jobs)
    stage1 = state.records[0].table
    extra = {"mode": stage1.mode_tag, "scorer": stage1.scorer, "K": stage1.k,
             "m2_fraction": args.m2_frac, "config": config.to_json()}
    selection.save_coreset(state, args.out, extra=extra)
    print(f"selected {state.coreset.size} of {len(ds)} (p={args.p}, stages={list(plan.sizes)})")
    return {"outputs": [args.out, audit_file], "inputs": inputs, "config": config.to_json(),
            "stage_sizes": list(plan.sizes)}


def cmd_eval(args):
    config = resolve_config(args)
    _check_outputs([args.out], args.force)
    train = _data.load_csv(args.train)
    test = _data.load_csv(args.test, class_count=train.class_count)
    inputs = [args.train, args.test]
    if args.coreset:
        idx = selection.load_coreset(args.coreset)
        if idx.size and (idx.min() < 0 or idx.max() >= len(train)):
            raise DataError(f"{args.coreset}: indices outside 0..{len(train) - 1}")
        inputs.append(args.coreset)
        kind = "coreset"
    elif args.random is not None:
        m = selection.target_size(len(train), args.random)
        idx = experiments.random_coreset(len(train), m, child_seed(config.seed, 13))
        kind = "random"
    else:
        idx = np.arange(len(train))
        kind = "full"
    report = metrics.evaluate(idx, train, test, config)
    out = report.to_json()
    out.update({"kind": kind, "coreset_size": int(idx.size)})
    write_json(args.out, out)
    print(f"{kind}: {idx.size} training samples, test accuracy {report.test_accuracy:.4f}, "
          f"inter-class variance {report.inter_class_variance:.6f}")
    return {"outputs": [args.out], "inputs": inputs, "config": config.to_json()}


def cmd_compare(args):
    outs = [args.out]
    if args.hist_prefix:
        outs += [Path(f"{args.hist_prefix}_a.csv"), Path(f"{args.hist_prefix}_b.csv")]
    _check_outputs(outs, args.force)
    a, b = scoring.load_table(args.table_a), scoring.load_table(args.table_b)
    if len(a) != len(b):
        raise DataError(f"tables differ in length ({len(a)} vs {len(b)})")
    report = {
        "rank_pcc": metrics.rank_pcc(metrics.ranks(a), metrics.ranks(b)),
        "dispersion_a": metrics.dispersion(a, args.threshold),
        "dispersion_b": metrics.dispersion(b, args.threshold),
        "threshold_fraction": args.threshold,
        "a": a.header(), "b": b.header(),
    }
    if args.hist_prefix:
        hi = max(float(a.scores.max()), float(b.scores.max()))
        for table, path in ((a, outs[1]), (b, outs[2])):
            metrics.save_histogram(metrics.histogram(table, args.bins, (0.0, hi or 1.0)), path)
    write_json(args.out, report)
    print(f"rank PCC {report['rank_pcc']:.4f}; dispersion a={report['dispersion_a']:.4f} "
          f"b={report['dispersion_b']:.4f}")
    return {"outputs": outs, "inputs": [args.table_a, args.table_b]}


def cmd_cost(args):
    if args.out:
        _check_outputs([args.out], args.force)
    table = selection.cost_model(args.n, args.p, args.b, args.k, args.j, args.m2_frac)
    width = max(len(k) for k in table)
    for key, value in table.items():
        print(f"{key:<{width}}  {value:.6f}")
    if args.out:
        write_json(args.out, table)
    return {"outputs": [args.out] if args.out else [], "inputs": [], "cost": table}


def cmd_experiment(args):
    config = resolve_config(args)
    _check_outputs([args.out], args.force)
    result = experiments.EXPERIMENTS[args.name](seeds=args.seeds, config=config, jobs=args.jobs)
    write_json(args.out, experiments.to_jsonable(result))
    print(json.dumps(experiments.to_jsonable(result.get("summary", {})), indent=2))
    return {"outputs": [args.out], "inputs": [], "config": config.to_json()}


COMMANDS = {"gen": cmd_gen, "score": cmd_score, "select": cmd_select, "eval": cmd_eval,
            "compare": cmd_compare, "cost": cmd_cost, "experiment": cmd_experiment}


def _jsonable_args(args):
    out = {}
    for key, value in vars(args).items():
        if key in ("manifest", "force"):
            continue
        out[key] = str(value) if isinstance(value, Path) else value
    return out


def _default_manifest(args, outputs):
    if args.manifest:
        return args.manifest
    if outputs:
        first = Path(outputs[0])
        return first.with_name(first.name + ".manifest.json")
    return None


def run(args):
    result = COMMANDS[args.command](args)
    outputs = [Path(p) for p in result.pop("outputs")]
    inputs = [Path(p) for p in result.pop("inputs")]
    target = _default_manifest(args, outputs)
    if target is not None:
        manifest = {
            "tool": "unseen-prune",
            "version": __version__,
            "backend": _backend.NAME,
            "command": args.command,
            "args": _jsonable_args(args),
            "inputs": {str(p): sha256_file(p) for p in inputs},
            "outputs": {str(p): sha256_file(p) for p in outputs},
            "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        }
        manifest.update(result)
        write_json(target, manifest)
    return outputs


_PATH_ARGS = {"out", "hist_prefix"}
_INPUT_ARGS = {"spec", "dataset", "scores", "train", "test", "coreset", "table_a", "table_b",
               "config"}


def cmd_repro(args):
    with open(args.manifest_file, encoding="utf-8") as fh:
        manifest = json.load(fh)
    recorded = dict(manifest["args"])
    for path, digest in manifest.get("inputs", {}).items():
        if not Path(path).exists():
            raise DataError(f"input {path} is missing")
        if sha256_file(path) != digest:
            raise DataError(f"input {path} changed since the recorded run")
    if manifest.get("backend") != _backend.NAME:
        print(f"warning: recorded backend {manifest.get('backend')!r}, running {_backend.NAME!r}",
              file=sys.stderr)
    ns = argparse.Namespace(**recorded)
    for key in _PATH_ARGS | _INPUT_ARGS:
        value = getattr(ns, key, None)
        if isinstance(value, str):
            setattr(ns, key, Path(value))
    rename = {}
    if args.out_dir:
        for key in _PATH_ARGS:
            value = getattr(ns, key, None)
            if value is not None:
                setattr(ns, key, args.out_dir / Path(value).name)
        for old in manifest.get("outputs", {}):
            rename[str(args.out_dir / Path(old).name)] = old
        ns.manifest = args.out_dir / (Path(args.manifest_file).name)
    else:
        ns.manifest = None
    ns.force = True
    outputs = run(ns)
    if args.check:
        want = manifest.get("outputs", {})
        bad = []
        for path in outputs:
            original = rename.get(str(path), str(path))
            if original in want and sha256_file(path) != want[original]:
                bad.append(str(path))
        if bad:
            print(f"mismatch: {', '.join(bad)}", file=sys.stderr)
            return EXIT_FAIL
        print(f"reproduced {len(outputs)} output(s) byte-identically")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "repro":
            return cmd_repro(args)
        run(args)
        return EXIT_OK
    except UsageError as exc:
        parser.error(str(exc))
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
