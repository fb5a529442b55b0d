"""Time the compiled and numpy forest kernels on the same inputs.

    python benchmarks/bench_kernels.py --n 25120 --d 60 --trees 5

Both kernels must produce identical trees and scores; the script checks
that before reporting timings.
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from fullinterp import _pykernels

try:
    from fullinterp import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _data(n: int, d: int, seed: int):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (rng.random(n) < 0.5).astype(np.int8)
    X[y == 1, : d // 4] += 0.7
    w = rng.integers(1, 3, size=n).astype(np.int64)
    return X, y, w


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _pack(trees):
    feats, thrs, lefts, rights, vals, roots = [], [], [], [], [], []
    off = 0
    for f, h, a, b, p, q in trees:
        roots.append(off)
        feats.append(f)
        thrs.append(h)
        lefts.append(np.where(a >= 0, a + off, -1))
        rights.append(np.where(b >= 0, b + off, -1))
        vals.append(p / np.maximum(p + q, 1))
        off += len(f)
    return (
        np.concatenate(feats).astype(np.int32),
        np.concatenate(thrs),
        np.concatenate(lefts).astype(np.int32),
        np.concatenate(rights).astype(np.int32),
        np.concatenate(vals).astype(np.float64),
        np.array(roots, dtype=np.int64),
    )


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=25120, help="training rows")
    ap.add_argument("--d", type=int, default=60, help="features")
    ap.add_argument("--trees", type=int, default=5)
    ap.add_argument("--depth", type=int, default=12)
    ap.add_argument("--score-rows", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    X, y, w = _data(args.n, args.d, args.seed)
    n_sub = max(1, int(np.sqrt(args.d)))
    Xs = np.random.default_rng(args.seed + 1).normal(size=(args.score_rows, args.d))
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels is not None else [])
    results, timings = {}, {}
    for name, k in backends:
        def build(k=k):
            return [k.build_tree(X, y, w, args.depth, 2, n_sub, 1000 + t) for t in range(args.trees)]

        trees = build()
        packed = _pack(trees)
        t_build = _time(build, args.repeat)
        t_score = _time(lambda: k.predict_forest(Xs, *packed), args.repeat)
        results[name] = (trees, k.predict_forest(Xs, *packed))
        timings[name] = (t_build, t_score)

    if "cython" in results:
        (tp, sp), (tc, sc) = results["python"], results["cython"]
        same = all(all(np.array_equal(a, b) for a, b in zip(x, z)) for x, z in zip(tp, tc)) and np.array_equal(sp, sc)
        if not same:
            print("MISMATCH: compiled and numpy kernels disagree", file=sys.stderr)
            return 1
        print("kernels agree bit-for-bit")
    else:
        print("compiled extension not available; timing the numpy kernels only")

    print(f"rows={args.n} d={args.d} trees={args.trees} depth={args.depth} score_rows={args.score_rows}")
    print(f"{'backend':<8} {'build (s)':>10} {'score (s)':>10}")
    for name, (tb, ts) in timings.items():
        print(f"{name:<8} {tb:>10.3f} {ts:>10.4f}")
    if "cython" in timings:
        (pb, ps), (cb, cs) = timings["python"], timings["cython"]
        print(f"speedup  {pb / cb:>10.1f}x {ps / cs:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
