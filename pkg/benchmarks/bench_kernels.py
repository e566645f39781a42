"""Compiled kernel against the numpy fallback.

Times ``Integrator.advance`` over one 256-step noise block and reports
microseconds per member-step (best of ``--repeat``).  Also checks that
both backends produce the same final states.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--diag 1]
"""
import argparse
import time

import numpy as np

from chcook import kernels
from chcook.dynamics import ExactNoise, Integrator, SolverConfig
from chcook.potential import PotentialSpec

CASES = [(16, 64, 1), (16, 64, 64), (32, 128, 1), (32, 128, 64), (64, 256, 64)]
STEPS = 256


def _time(fn, cfg, E, diag, repeat):
    nz = ExactNoise(cfg.M, cfg.dt, 0).block(range(E), 0, STEPS)
    integ = Integrator(cfg, fn)
    best, state = np.inf, None
    for _ in range(repeat):
        state = np.zeros((E, cfg.M + 1))
        state[:, 1] = 0.3
        acc = np.zeros((E, kernels.N_ACC))
        prof = np.zeros((E, 2, cfg.P)) if diag == 2 else None
        t0 = time.perf_counter()
        integ.advance(state, nz, acc, diag, prof=prof)
        best = min(best, time.perf_counter() - t0)
    return best / (E * STEPS) * 1e6, state


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--diag", type=int, default=1, choices=(0, 1, 2))
    args = ap.parse_args(argv)
    if kernels.compiled_advance is None:
        print("compiled kernel not built; only the fallback is available")
    print(f"{'M':>4} {'P':>5} {'E':>4} {'compiled us':>12} {'python us':>10} {'speedup':>8} "
          f"{'max |diff|':>11}")
    for M, P, E in CASES:
        cfg = SolverConfig(M=M, P=P, dt=1e-5, T=0.0, spec=PotentialSpec(n=2))
        tp, sp = _time(kernels.python_advance, cfg, E, args.diag, args.repeat)
        if kernels.compiled_advance is None:
            print(f"{M:>4} {P:>5} {E:>4} {'-':>12} {tp:>10.2f}")
            continue
        tc, sc = _time(kernels.compiled_advance, cfg, E, args.diag, args.repeat)
        print(f"{M:>4} {P:>5} {E:>4} {tc:>12.2f} {tp:>10.2f} {tp / tc:>8.1f} "
              f"{np.max(np.abs(sc - sp)):>11.2e}")


if __name__ == "__main__":
    main()
