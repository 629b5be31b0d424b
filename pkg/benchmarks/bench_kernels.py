"""Compare the compiled and numpy kernels on field evaluation and ensemble evolution.

    python benchmarks/bench_kernels.py [--pairs N] [--repeat R]
"""

import argparse
import time

import numpy as np

from pilotwave import _backend
from pilotwave import ensemble as ens
from pilotwave.guidance import kernel_consts
from pilotwave.wavepacket import PhysicalParams


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    p = PhysicalParams()
    consts = kernel_consts(p)
    pts = ens.sample(ens.EnsembleConfig(n_pairs=args.pairs, master_seed=1), p)
    y1, y2 = float(pts.y1[0]), float(pts.y2[0])

    results = {}
    for name in sorted(_backend.BACKENDS):
        kern = _backend.get(name)
        n_eval = 20_000
        t_eval, _ = best_of(lambda: [kern.velocity_density(y1, y2, 3.0, consts) for _ in range(n_eval)], args.repeat)
        t_evo, arr = best_of(lambda: ens.evolve_ensemble(pts, p.t0, params=p, backend=name), args.repeat)
        results[name] = arr
        print(f"{name:9s} field eval {1e6 * t_eval / n_eval:8.2f} us/call   "
              f"evolve {args.pairs} pairs {t_evo:8.3f} s ({1e6 * t_evo / args.pairs:9.1f} us/pair)")

    if len(results) == 2:
        a, b = results["compiled"], results["python"]
        diff = max(np.max(np.abs(a.y1 - b.y1)), np.max(np.abs(a.y2 - b.y2)))
        print(f"max |compiled - python| final position: {diff:.2e}")


if __name__ == "__main__":
    main()
