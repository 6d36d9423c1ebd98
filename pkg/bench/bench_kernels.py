"""Compiled DOPRI5 core against the pure-Python twin on the shooting workloads.

    python bench/bench_kernels.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from ksi import _backend
from ksi.radial_ivp import integrate, launch_series, profile_ode, probe_ode

CASES = [
    ("profile n=5 a=1 rmax=50", profile_ode(5), 1.0, 50.0),
    ("profile n=9 a=100 rmax=50", profile_ode(9), 100.0, 50.0),
    ("probe n=5 a=10 lam=0.5 rmax=50", probe_ode(5, 0.5), (10.0, 1.0), 50.0),
    ("probe n=3 a=4 lam=0 rmax=200", probe_ode(3, 0.0), (4.0, 1.0), 200.0),
]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _backend.compiled_dopri5 is None:
        print("compiled core not built; only the Python timings are shown")
    print(f"{'case':34s} {'steps':>7s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s} "
          f"{'max |diff|':>11s}")
    for name, ode, init, rmax in CASES:
        launch = launch_series(ode, init)
        tp, rp = best_of(lambda: integrate(ode, launch, rmax, backend=_backend.python_dopri5),
                         args.repeat)
        if _backend.compiled_dopri5 is not None:
            tc, rc = best_of(lambda: integrate(ode, launch, rmax,
                                               backend=_backend.compiled_dopri5), args.repeat)
            diff = float(np.max(np.abs(rp.states - rc.states))) if rp.states.shape == rc.states.shape \
                else float("nan")
            print(f"{name:34s} {rp.grid.size:7d} {1e3 * tp:10.1f} {1e3 * tc:12.2f} "
                  f"{tp / tc:8.1f} {diff:11.2e}")
        else:
            print(f"{name:34s} {rp.grid.size:7d} {1e3 * tp:10.1f} {'-':>12s}")


if __name__ == "__main__":
    main()
