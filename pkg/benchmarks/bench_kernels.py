"""Compare the compiled kernels with the NumPy fallback.

Usage: python3 benchmarks/bench_kernels.py [--paths N] [--steps N] [--repeat N]

Prints the best-of-``repeat`` wall time per kernel and backend and checks
that both backends agree.
"""

import argparse
import time

import numpy as np

from mcslab import _kernels_py

try:
    from mcslab import _kernels as _compiled
except ImportError:
    _compiled = None


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def thomas_case(n, rng):
    lower = rng.uniform(-1, 0, n)
    upper = rng.uniform(-1, 0, n)
    diag = 2.5 + rng.uniform(0, 1, n)
    rhs = rng.normal(size=n)
    return lower, diag, upper, rhs


def rate_case(paths, steps, rng):
    n_t, n_r = 201, 101
    T = 20.0
    tab = dict(
        q_tab=np.ascontiguousarray(1.0 - 0.01 * np.outer(np.linspace(1, 0, n_t), np.linspace(0, 2, n_r))),
        e1_tab=np.full((n_t, n_r), 0.1),
        e2_tab=np.full((n_t, n_r), 0.12),
    )
    tab["q_tab"][-1] = 1.0
    dt = T / steps
    m = steps - 1
    z1 = rng.normal(size=(m, paths))
    z2 = rng.normal(size=(m, paths))

    def state():
        q0 = tab["q_tab"][0, 50]
        return dict(
            r=np.full(paths, 0.03), logy=np.zeros(paths), drain=np.zeros(paths),
            w=np.full(paths, (1 / q0 - 1) / T), budget=np.zeros(paths),
            logc=np.full(paths, -np.log(T * q0)), qv=np.zeros((1, paths)),
        )

    window = np.full(m, -1, dtype=np.int64)
    window[m // 2: m // 2 + 10] = 0
    fixed = (z1, z2, 0.0, dt, T, 0.03, np.exp(-0.5 * dt), 0.01 * np.sqrt(dt), 0.1, 0.3,
             0.0, T / (n_t - 1), -0.03, 0.12 / (n_r - 1))

    def call(mod):
        s = state()
        mod.rate_block(s["r"], s["logy"], s["drain"], s["w"], s["budget"], s["logc"], *fixed,
                       tab["q_tab"], tab["e1_tab"], tab["e2_tab"], window, s["qv"])
        return s

    return call


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--paths", type=int, default=20_000)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--size", type=int, default=401, help="tridiagonal system size")
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    rng = np.random.default_rng(0)
    backends = {"python": _kernels_py}
    if _compiled is not None:
        backends["cython"] = _compiled
    else:
        print("compiled extension not available; timing the fallback only")

    case = thomas_case(args.size, rng)
    print(f"thomas, n={args.size}, 1000 solves")
    times = {}
    for name, mod in backends.items():
        times[name] = best_time(lambda: [mod.thomas(*case) for _ in range(1000)], args.repeat)
        print(f"  {name:7s} {times[name] * 1e3:9.2f} ms")
    if len(backends) == 2:
        diff = np.max(np.abs(backends["python"].thomas(*case) - backends["cython"].thomas(*case)))
        print(f"  speed-up {times['python'] / times['cython']:.1f}x, max difference {diff:.2e}")

    call = rate_case(args.paths, args.steps, rng)
    print(f"rate_block, {args.paths} paths x {args.steps} steps")
    out = {}
    for name, mod in backends.items():
        times[name] = best_time(lambda: call(mod), args.repeat)
        out[name] = call(mod)
        print(f"  {name:7s} {times[name]:9.3f} s")
    if len(backends) == 2:
        diff = max(np.max(np.abs(out["python"][k] - out["cython"][k])) for k in out["python"])
        print(f"  speed-up {times['python'] / times['cython']:.1f}x, max difference {diff:.2e}")


if __name__ == "__main__":
    main()
