"""Compiled vs numpy simplex kernels.

Two levels: the raw kernels on synthetic eta files and ratio-test rows,
and whole LP solves of the demo planning model with each backend.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import time
from importlib import resources

import numpy as np

from tcscplan import build_planning_model, load_scenario, read_case
from tcscplan.solver import LpEngine
from tcscplan.solver.kernels import _kernels_py


def _backends():
    out = {"python": _kernels_py}
    try:
        from tcscplan.solver import _kernels
        out["cython"] = _kernels
    except ImportError:
        pass
    return out


def _timeit(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def eta_file(rng, m=2000, n_eta=64, density=0.02):
    nnz = max(1, int(m * density))
    start = np.zeros(n_eta + 1, dtype=np.int64)
    idx, val = [], []
    for e in range(n_eta):
        idx.append(rng.choice(m, nnz, replace=False).astype(np.int32))
        val.append(rng.normal(size=nnz))
        start[e + 1] = start[e] + nnz
    rows = rng.integers(0, m, n_eta).astype(np.int64)
    pivs = rng.uniform(0.5, 2.0, n_eta) * rng.choice([-1, 1], n_eta)
    return (n_eta, start, np.concatenate(idx), np.concatenate(val), rows, pivs)


def ratio_row(rng, n=8000):
    alpha = rng.normal(size=n) * (rng.random(n) < 0.05)
    d = np.abs(rng.normal(size=n)) * 1e-2
    state = rng.choice(np.array([1, 2], dtype=np.int8), n)
    d[state == 2] *= -1
    lb = np.zeros(n)
    ub = rng.uniform(0.1, 5.0, n)
    return alpha, d, state, lb, ub


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    eta = eta_file(rng)
    x0 = rng.normal(size=2000)
    row = ratio_row(rng)
    rows = []
    for name, k in _backends().items():
        t_f = _timeit(lambda: k.ftran_etas(x0.copy(), *eta), repeat)
        t_b = _timeit(lambda: k.btran_etas(x0.copy(), *eta), repeat)
        t_r = _timeit(lambda: k.dual_ratio_test(*row, 1.0, 5.0, 1e-7, 1e-7, False), repeat)
        rows.append((name, t_f, t_b, t_r))
    return rows


def bench_lp(repeat):
    data = resources.files("tcscplan") / "data"
    case = read_case(str(data / "demo5.m"))
    model = build_planning_model(case, load_scenario(str(data / "demo5.toml"), case))
    rows = []
    for name, k in _backends().items():
        engine = LpEngine(model, kernels=k)
        sol = engine.solve()
        t = _timeit(engine.solve, repeat)
        rows.append((name, t, sol.iterations, sol.objective))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)

    print("kernel timings (best of %d, microseconds)" % args.repeat)
    print(f"{'backend':8s} {'ftran':>10s} {'btran':>10s} {'ratio':>10s}")
    for name, f, b, r in bench_kernels(args.repeat):
        print(f"{name:8s} {f * 1e6:10.1f} {b * 1e6:10.1f} {r * 1e6:10.1f}")

    print("\ndemo5 root LP (best of %d)" % max(1, args.repeat // 4))
    print(f"{'backend':8s} {'ms':>10s} {'iters':>6s} {'objective':>16s}")
    for name, t, it, obj in bench_lp(max(1, args.repeat // 4)):
        print(f"{name:8s} {t * 1e3:10.1f} {it:6d} {obj:16.2f}")


if __name__ == "__main__":
    main()
