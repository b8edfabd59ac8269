"""Time the compiled kernels against the numpy fallback.

Run from the repository root after an editable install::

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from bifdetect import _kernels_py as py

try:
    from bifdetect import _core as core
except ImportError:  # extension not built
    core = None


def cases():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (100, 2))
    A = np.array([[-3.0, 1.0], [1.0, -1.0]])
    N, m = 20, 2600
    C = np.zeros((m, N, 2))
    C[:, :2, :] = np.eye(2)
    C += 0.05 * rng.standard_normal(C.shape)
    Theta = np.zeros((N, 2))
    Theta[:2] = np.eye(2)
    return {
        "rk4_pitchfork (100 orbits x 100 steps)":
            lambda m: m.rk4_pitchfork(X, -4.0, 1e-3, 100, 10.0),
        "rk4_linear (100 orbits x 100 steps)":
            lambda m: m.rk4_linear(X, A, 1e-3, 100, 10.0),
        "barrier_terms (2600 samples, grad)": lambda m: m.barrier_terms(Theta, C, True, 1e-12),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if core is None:
        print("compiled extension not available; build with `pip install -e .`")
    print(f"{'kernel':42s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, call in cases().items():
        t_py = min(timeit.repeat(lambda: call(py), number=3, repeat=args.repeat)) / 3
        if core is None:
            print(f"{name:42s} {1e3 * t_py:10.3f} {'-':>10s} {'-':>8s}")
            continue
        t_c = min(timeit.repeat(lambda: call(core), number=3, repeat=args.repeat)) / 3
        print(f"{name:42s} {1e3 * t_py:10.3f} {1e3 * t_c:10.3f} {t_py / t_c:7.1f}x")


if __name__ == "__main__":
    main()
