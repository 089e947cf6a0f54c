"""Compare the compiled kernels with the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat 3] [--json out.json]

Both backends run the same workloads from the same generator state; the script
also confirms the outputs agree bit for bit.
"""

import argparse
import json
import math
import time

import numpy as np

from annealed_walk import _pykernels
from annealed_walk.mcmc import MoveMix
from annealed_walk.rng import seed_state

try:
    from annealed_walk import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def chain_workload(mod, N, n_props, mix):
    k = mod.ChainKernel(np.zeros(N, dtype=np.int8), 2, math.log(0.5), seed_state(7))
    prop = np.zeros(5, dtype=np.int64)
    acc = np.zeros(5, dtype=np.int64)
    k.run(n_props, *mix.kernel_args(N), prop, acc)
    return (k.range_size, tuple(k.rng_state()), tuple(acc))


def enumeration_workload(mod, N):
    return tuple(mod.enumerate_histogram(2, N).tolist())


def killed_walk_workload(mod, n_walks):
    size = 41
    rng = np.random.default_rng(3)
    mask = (rng.random((size, size)) < 0.1).astype(np.uint8)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = 1
    mask[20, 20] = 0
    target = np.zeros_like(mask)
    target[17:24, 17:24] = 1
    s, s2, esc, _ = mod.killed_walk_visits(mask, target, np.array([20, 20]), n_walks, seed_state(5))
    return (s, s2, esc)


WORKLOADS = [
    ("chain N=100, default mix", lambda m, scale: chain_workload(m, 100, 20000 * scale, MoveMix())),
    ("chain N=1000, localized mix", lambda m, scale: chain_workload(m, 1000, 20000 * scale, MoveMix.localized())),
    ("enumeration d=2 N=7", lambda m, scale: enumeration_workload(m, 7)),
    ("killed walks 41x41", lambda m, scale: killed_walk_workload(m, 2000 * scale)),
]


def best_time(fn, repeat):
    best, out = math.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="write timings to this file")
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels unavailable; build with 'pip install -e . --no-build-isolation'")
        return 1
    rows = []
    print(f"{'workload':32s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}  agree")
    for name, work in WORKLOADS:
        tp, op = best_time(lambda: work(_pykernels, 1), args.repeat)
        tc, oc = best_time(lambda: work(_ckernels, 1), args.repeat)
        agree = op == oc
        rows.append({"workload": name, "python_s": tp, "cython_s": tc, "speedup": tp / tc, "agree": agree})
        print(f"{name:32s} {tp:11.4f} {tc:11.4f} {tp / tc:8.1f}  {agree}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
    return 0 if all(r["agree"] for r in rows) else 1


if __name__ == "__main__":
    raise SystemExit(main())
