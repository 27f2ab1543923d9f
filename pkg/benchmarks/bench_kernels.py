"""Time the compiled and the numpy path kernels on the same ensemble.

Usage: python benchmarks/bench_kernels.py [--paths 64] [--steps 20000] [--repeat 3]

Reports nanoseconds per path-step for each backend and checks that both
produce the same states. The numpy kernel is vectorized across paths, so its
per-step cost falls as --paths grows.
"""
import argparse
import time

import numpy as np

from sdiflow import kernels
from sdiflow import problems as P
from sdiflow._backend import HAS_NUMBA
from sdiflow.schedules import NoiseSchedule, TikhonovSchedule

CASES = [
    ("rank_deficient_ls d=4", P.rank_deficient_ls(dim=4), "prox_em"),
    ("l1_quadratic", P.l1_quadratic(), "prox_em"),
    ("l1_quadratic yosida", P.l1_quadratic(), "yosida_em"),
    ("dist_power p=4", P.dist_power(1.0, 2.0, p=4.0), "prox_em"),
]


def run(backend, prob, scheme, n_paths, n_steps):
    tik = TikhonovSchedule("power", 1.0, 0.9)
    noise = NoiseSchedule("power", 0.5, 2.0)
    gens = [np.random.default_rng([1, i]) for i in range(n_paths)]
    x0s = np.ones((n_paths, prob.dim))
    rec = np.array([0, n_steps // 2, n_steps])
    return kernels.simulate_paths(gens, x0s, n_steps, 1e-3, rec, scheme, 1e-2, prob, tik, noise, 1.0,
                                  backend=backend)


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=64)
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = ["numba", "numpy"] if HAS_NUMBA else ["numpy"]
    work = args.paths * args.steps
    print(f"{args.paths} paths x {args.steps} steps, best of {args.repeat}")
    print(f"{'case':<24s}" + "".join(f"{b + ' ns/step':>16s}" for b in backends) + f"{'speedup':>10s}")
    for name, prob, scheme in CASES:
        row, outs = [], []
        for be in backends:
            run(be, prob, scheme, 2, 10)  # compile outside the timed region
            secs, out = best_time(lambda: run(be, prob, scheme, args.paths, args.steps), args.repeat)
            row.append(secs / work * 1e9)
            outs.append(out)
        speed = f"{row[1] / row[0]:9.1f}x" if len(row) == 2 else ""
        print(f"{name:<24s}" + "".join(f"{v:16.1f}" for v in row) + speed)
        if len(outs) == 2:
            np.testing.assert_allclose(outs[0][0], outs[1][0], rtol=1e-10, atol=1e-12)


if __name__ == "__main__":
    main()
