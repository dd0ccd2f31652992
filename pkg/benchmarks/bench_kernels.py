"""Compare the compiled and pure-Python kernel backends.

Run with ``python3 benchmarks/bench_kernels.py``. Prints per-call times for
each kernel and backend plus a round-level timing with the active backend.
"""

import argparse
import timeit

import numpy as np

from catauth import kernels
from catauth.protocol import RoundConfig, new_session, run_round
from catauth.schmidt import MAJORIZATION_TOL, make_schmidt


def random_pair(rng, n):
    return make_schmidt(rng.random(n)).coefficients, make_schmidt(rng.random(n)).coefficients


def bench_kernels(dims, number):
    rng = np.random.default_rng(0)
    mods = kernels.backends()
    rows = []
    for n in dims:
        b, c = random_pair(rng, n)
        probs = np.full(100, 0.99)
        u = rng.random(100)
        cases = {
            "majorizes": lambda m: m.majorizes(c, b, MAJORIZATION_TOL),
            "min_tail_ratio": lambda m: m.min_tail_ratio(b, c, 0.0),
            "best_breakpoints": lambda m: m.best_breakpoints(b, c, MAJORIZATION_TOL),
            "first_failure": lambda m: m.first_failure(probs, u),
        }
        for name, fn in cases.items():
            times = {}
            for label, mod in mods.items():
                reps = number if name != "best_breakpoints" else max(1, number // 2 ** (n - 1))
                times[label] = timeit.timeit(lambda: fn(mod), number=reps) / reps
            rows.append((name, n, times))
    return rows


def bench_rounds(trials):
    t = timeit.default_timer()
    for seed in range(trials):
        run_round(new_session(RoundConfig(100, 10, seed=seed), record_transcript=False))
    return (timeit.default_timer() - t) / trials


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--number", type=int, default=2000)
    ap.add_argument("--dims", default="5,8,12")
    ap.add_argument("--rounds", type=int, default=500)
    args = ap.parse_args()
    dims = [int(d) for d in args.dims.split(",")]
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':<18}{'n':>4}{'python (us)':>14}{'compiled (us)':>16}{'speedup':>10}")
    for name, n, times in bench_kernels(dims, args.number):
        py = times["python"] * 1e6
        co = times.get("compiled")
        if co is None:
            print(f"{name:<18}{n:>4}{py:>14.2f}{'n/a':>16}{'':>10}")
        else:
            print(f"{name:<18}{n:>4}{py:>14.2f}{co * 1e6:>16.2f}{py / (co * 1e6):>9.1f}x")
    print(f"honest round K=100 K'=10: {bench_rounds(args.rounds) * 1e3:.3f} ms")


if __name__ == "__main__":
    main()
