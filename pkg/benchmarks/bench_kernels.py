"""Time the lattice scan of each available backend on oracle score differences.

    python3 benchmarks/bench_kernels.py --n 4 5 6 --repeat 3
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from umnicrl import kernels
from umnicrl.graph import random_dag
from umnicrl.harness import oracle_frame
from umnicrl.lattice import SearchBox
from umnicrl.scm import random_interventions, random_sem, random_transform
from umnicrl.score import ScoreDifferenceStack, oracle_scores, score_difference
from umnicrl.theory import kappa_bound
from umnicrl.umni import ProbeContext


def context(n: int, seed: int) -> ProbeContext:
    rng = np.random.default_rng(seed)
    sem = random_sem(random_dag(n, 0.5, rng), rng)
    specs = random_interventions(n, "soft", sem, rng)
    model = random_transform(n + 1, n, rng)
    obs, envs = oracle_scores(sem, specs, model)
    stack = ScoreDifferenceStack(tuple(score_difference(s, obs) for s in envs))
    return ProbeContext(stack, oracle_frame(sem, model))


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, nargs="+", default=[4, 5, 6])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    impls = kernels.backends()
    print(f"default backend: {kernels.BACKEND}")
    print("lattice_dims: every point; first_rank_one: a full scan with the rank-one points removed")
    head = " ".join(f"{b + ' s':>12}" for b in impls)
    print(f"{'kernel':>14} {'n':>3} {'kappa':>5} {'points':>9} {head}  speedup")
    for n in args.n:
        ctx = context(n, args.seed)
        ev = ctx.projected(np.zeros((0, ctx.stack.d)))
        kappa = kappa_bound(n)
        pts = np.ascontiguousarray(SearchBox(kappa, n).points(), dtype=float)
        dims = {name: impl.lattice_dims(ev, ctx.trace_u, pts, 1e-6, 0.0) for name, impl in impls.items()}
        for name, res in dims.items():
            if not np.array_equal(res, dims["python"]):
                raise SystemExit(f"backend {name} disagrees with python at n={n}")
        scan = np.ascontiguousarray(pts[dims["python"] != 1])
        for kernel, points in (("lattice_dims", pts), ("first_rank_one", scan)):
            times = {
                name: best_of(lambda: getattr(impl, kernel)(ev, ctx.trace_u, points, 1e-6, 0.0), args.repeat)
                for name, impl in impls.items()
            }
            speedup = times["python"] / times["cython"] if "cython" in times else float("nan")
            cols = " ".join(f"{times[b]:12.4f}" for b in impls)
            print(f"{kernel:>14} {n:>3} {kappa:>5} {len(points):>9} {cols}  {speedup:6.1f}x")

if __name__ == "__main__":
    main()
