"""Compare the numba and numpy variants of the hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5] [--size 20001]
"""

import argparse
import time

import numpy as np

from radner import _kernels, solve
from radner.equilibrium import MarketSpec
from radner.trajectory import TabulatedGamma, TabulatedKappa, TrajectoryModel

TARGETS = [-300, -202, -165, -102, -75, -60, -35, -20, -15, 0, 6, 11, 23, 30, 63, 70, 115, 150, 220, 290]


def best_of(fn, repeat):
    fn()  # warm-up (and JIT compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(size):
    tt = np.linspace(0.0, 1.0, 257)
    model = TrajectoryModel(1.0, TabulatedKappa(tuple(0.1 + 0.05 * np.sin(4 * tt))), TabulatedGamma(tuple(tt**1.5)))
    sol = solve(MarketSpec(1.0, 0.2, 0.0, tuple((float(a), 0.0) for a in TARGETS)), model)
    m, o = sol.model, sol.ordering
    t = np.linspace(0.0, 1.0, size)
    rng = np.random.default_rng(0)
    v = rng.uniform(1e-4, 1e-3, size)
    c = np.cumsum(rng.normal(0, 0.1, size))
    tails = (m.x, m.kappa_nodes, m.gamma_nodes, m.k_tail, m.p_tail)
    return {
        "tail_integrals": lambda k: k.tail_integrals(*tails, t),
        "strategy_grid": lambda k: k.strategy_grid(
            t, o.tau, o.a_rank, sol.theta0_rank, sol.regime_tau, sol.regime_slope, sol.regime_const, m.x, m.gamma_nodes
        ),
        "gamma_grid": lambda k: k.gamma_grid(t, o.tau, o.A, *tails),
        "tv_denoise": lambda k: k.tv_denoise(v, c, 0.01),
    }


def run(size=20001, repeat=5):
    if _kernels.NUMBA_KERNELS is None:
        raise SystemExit("numba is not installed; nothing to compare")
    rows = []
    for name, call in cases(size).items():
        t_np = best_of(lambda: call(_kernels.NUMPY_KERNELS), repeat)
        t_jit = best_of(lambda: call(_kernels.NUMBA_KERNELS), repeat)
        rows.append((name, t_np, t_jit))
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=20001)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    print(f"{'kernel':<16}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}")
    for name, t_np, t_jit in run(args.size, args.repeat):
        print(f"{name:<16}{1e3 * t_np:>12.3f}{1e3 * t_jit:>12.3f}{t_np / t_jit:>10.1f}")


if __name__ == "__main__":
    main()
