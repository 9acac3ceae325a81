"""Time the forest kernels under both backends.

The backend is chosen when etongue.forest is imported, so the fair way
to compare is one subprocess per backend with ETONGUE_FOREST_BACKEND
set before the interpreter starts. This script is both the driver and
the worker: run it with no arguments and it re-executes itself twice,
then prints a side-by-side table. The compiled backend pays its jit
cost on the first call of each kernel; that shows up in the "cold
train" row and is excluded everywhere else.

    python3 benchmarks/bench_forest.py
    python3 benchmarks/bench_forest.py --trees 100 --repeats 5
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def synthetic_features(n_per_class, n_classes, n_features, seed):
    from etongue.preprocess import FeatureVector

    rng = np.random.default_rng(seed)
    centers = rng.uniform(-40.0, 40.0, size=(n_classes, n_features))
    feats = []
    for c in range(n_classes):
        rows = centers[c] + rng.normal(0.0, 12.0, size=(n_per_class, n_features))
        for i, row in enumerate(rows):
            feats.append(
                FeatureVector(
                    record_id=f"c{c}-r{i:03d}",
                    label=f"class-{c}",
                    values=np.asarray(row, dtype=np.float64),
                    n_sample=n_features // 3,
                )
            )
    return feats


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run_worker(args):
    from etongue.forest import BACKEND, Hyperparams, loocv, predict_proba, train

    feats = synthetic_features(24, 4, 360, seed=13)
    small = feats[::4]  # 24 records, still 4 balanced classes
    h_train = Hyperparams(n_trees=args.trees, seed=5)
    h_cv = Hyperparams(n_trees=50, seed=5)

    t0 = time.perf_counter()
    model = train(feats, h_train)
    cold_train = time.perf_counter() - t0

    rng = np.random.default_rng(17)
    queries = rng.normal(0.0, 30.0, size=(1000, 360))

    results = {
        "backend": BACKEND,
        "cold_train_s": cold_train,
        "train_s": best_of(lambda: train(feats, h_train), args.repeats),
        "loocv_s": best_of(lambda: loocv(small, h_cv), args.repeats),
        "predict_s": best_of(lambda: predict_proba(model, queries), args.repeats),
        "trees": args.trees,
        "n_records": len(feats),
        "n_features": 360,
    }
    print(json.dumps(results))


def run_backend(name, argv):
    env = dict(os.environ, ETONGUE_FOREST_BACKEND=name)
    cmd = [sys.executable, os.path.abspath(__file__), "--worker", *argv]
    out = subprocess.run(cmd, env=env, capture_output=True, text=True)
    if out.returncode != 0:
        sys.stderr.write(out.stderr)
        raise SystemExit(f"{name} worker failed with code {out.returncode}")
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trees", type=int, default=200)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.worker:
        run_worker(args)
        return

    argv = ["--trees", str(args.trees), "--repeats", str(args.repeats)]
    print("timing numba backend ...", file=sys.stderr)
    compiled = run_backend("numba", argv)
    print("timing numpy backend ...", file=sys.stderr)
    fallback = run_backend("numpy", argv)

    rows = [
        ("cold train (first call)", "cold_train_s"),
        (f"train {args.trees} trees, 96 x 360", "train_s"),
        ("loocv 50 trees, 24 x 360", "loocv_s"),
        (f"predict 1000 rows, {args.trees} trees", "predict_s"),
    ]
    print(f"{'workload':<34} {'numba':>10} {'numpy':>10} {'speedup':>9}")
    for label, key in rows:
        a, b = compiled[key], fallback[key]
        print(f"{label:<34} {a:>9.3f}s {b:>9.3f}s {b / a:>8.1f}x")


if __name__ == "__main__":
    main()
