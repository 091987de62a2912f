"""Compare the numba and numpy backends on the three hot loops.

Run with ``python benchmarks/bench_backends.py``.  Both implementations live in
``sphkernels._accel``, so one process can time them side by side; the
``SPHKERNELS_BACKEND`` flag only picks the default used by the library.
"""

import argparse
import time

import numpy as np

from sphkernels import _accel
from sphkernels.kernels import KernelSpec
from sphkernels.series import kernel_series
from sphkernels.sphharm import jacobi_quadrature


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(d, k_max, n_terms, nodes):
    rule = jacobi_quadrature(d, nodes, desingularize=True)
    t = rule.nodes
    b = np.asarray(kernel_series(KernelSpec.ntk(3), n_terms).coeffs)
    table = _accel.legendre_table_numpy(d, k_max, t)
    return {
        "legendre_table": (
            lambda: _accel.legendre_table_numba(d, k_max, t),
            lambda: _accel.legendre_table_numpy(d, k_max, t),
        ),
        "quadrature_sums": (
            lambda: _accel.weighted_row_sums_numba(table, rule.weights),
            lambda: _accel.weighted_row_sums_numpy(table, rule.weights),
        ),
        "series_project": (
            lambda: _accel.series_project_numba(b, float(d), k_max),
            lambda: _accel.series_project_numpy(b, float(d), k_max),
        ),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--kmax", type=int, default=400)
    ap.add_argument("--terms", type=int, default=1 << 17, help="series length")
    ap.add_argument("--nodes", type=int, default=1600, help="quadrature nodes per half")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    if not _accel.HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    print(f"d={args.d} kmax={args.kmax} terms={args.terms} nodes/half={args.nodes}")
    print(f"{'loop':<18}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'max diff/max':>15}")
    for name, (fast, slow) in cases(args.d, args.kmax, args.terms, args.nodes).items():
        fast()  # compile outside the timing
        t_fast, a = best_of(fast, args.repeat)
        t_slow, b = best_of(slow, args.repeat)
        # relative to the largest entry: cancelled entries sit at rounding level
        diff = float(np.max(np.abs(a - b)) / np.max(np.abs(b)))
        print(f"{name:<18}{t_fast:>12.4f}{t_slow:>12.4f}{t_slow / t_fast:>10.1f}{diff:>15.2e}")


if __name__ == "__main__":
    main()
