"""Time each hot kernel under both backends.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Both twins are imported directly, so one process compares them; the first
numba call is timed separately because it includes compilation (or a cache
load).
"""

import argparse
import time

import numpy as np

from cartankit import _kernels as K


def cases(rng):
    m = 12
    S = np.exp(1j * rng.uniform(-np.pi, np.pi, size=(m, m, m)))
    a = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    b = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    f = rng.normal(size=(64, 64)) + 1j * rng.normal(size=(64, 64))
    g = rng.normal(size=(64, 64)) + 1j * rng.normal(size=(64, 64))
    d = rng.normal(size=(256, 256)) + 1j * rng.normal(size=(256, 256))
    return {
        "cocycle_defect (m=12)": ("cocycle_defect", (S,)),
        "twisted_product (m=12)": ("twisted_product", (a, b, S)),
        "groupoid_convolve (N=6)": ("groupoid_convolve", (f, g)),
        "diagonal_average (N=8, n=4)": ("diagonal_average", (d, 16)),
    }


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"active backend: {K.BACKEND}; numba available: {K.HAVE_NUMBA}")
    print(f"{'kernel':32s} {'numpy ms':>10s} {'numba ms':>10s} {'first call':>11s} {'speedup':>8s}  max diff")
    for label, (name, a) in cases(rng).items():
        t_np, out_np = best_of(getattr(K, f"{name}_numpy"), a, args.repeat)
        if not K.HAVE_NUMBA:
            print(f"{label:32s} {t_np * 1e3:10.3f} {'-':>10s}")
            continue
        jit = getattr(K, f"{name}_numba")
        t0 = time.perf_counter()
        jit(*a)
        first = time.perf_counter() - t0
        t_nb, out_nb = best_of(jit, a, args.repeat)
        if isinstance(out_np, tuple):
            diff = abs(out_np[0] - out_nb[0])
        else:
            diff = float(np.abs(out_np - out_nb).max())
        print(f"{label:32s} {t_np * 1e3:10.3f} {t_nb * 1e3:10.3f} {first:10.2f}s {t_np / t_nb:8.1f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
