"""Compare the compiled and pure-numpy training kernels.

Times a full ``fit`` and one unseen scoring pass on the benchmark mixture for
each available backend, and checks that both backends produce the same
parameters.

    python benchmarks/bench_backends.py --repeats 3
"""

import argparse
import statistics
import time

import numpy as np

from unseen_prune import _backend, experiments, model, scoring
from unseen_prune.model import TrainConfig


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times), statistics.median(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    ds, _, _ = experiments.benchmark_data(args.seed)
    backends = _backend.available()
    print(f"dataset: N={ds.n} d={ds.dim} c={ds.class_count}; backends: {', '.join(backends)}")
    if "cython" not in backends:
        print("compiled extension not built; only the numpy backend is timed")

    configs = {"softmax": TrainConfig(architecture="softmax", seed=args.seed),
               "mlp(32)": TrainConfig(seed=args.seed)}
    results = {}
    print(f"{'task':<22}{'backend':<9}{'best s':>9}{'median s':>10}")
    for label, cfg in configs.items():
        for b in backends:
            best, med = best_of(lambda: model.train(ds, cfg, backend=b), args.repeats)
            results[(label, b)] = best
            print(f"{'fit ' + label:<22}{b:<9}{best:>9.3f}{med:>10.3f}")
    for b in backends:
        best, med = best_of(lambda: scoring.score_unseen(ds, "entropy", 4, configs["mlp(32)"],
                                                          backend=b), args.repeats)
        results[("unseen", b)] = best
        print(f"{'unseen K=4 mlp(32)':<22}{b:<9}{best:>9.3f}{med:>10.3f}")

    if len(backends) > 1:
        print("\nspeedup (python / cython):")
        for label in (*configs, "unseen"):
            print(f"  {label:<10} {results[(label, 'python')] / results[(label, 'cython')]:.2f}x")
        for label, cfg in configs.items():
            a = model.train(ds, cfg, backend="cython")
            b = model.train(ds, cfg, backend="python")
            gap = max(float(np.max(np.abs(x - y))) for x, y in zip(a.arrays, b.arrays))
            print(f"  max |param difference| {label}: {gap:.2e}")


if __name__ == "__main__":
    main()
