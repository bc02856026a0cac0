"""Time the quadrature kernels on both backends.

    python benchmarks/bench_kernels.py [--points 65 129 257] [--repeat 3]

Prints one row per (operator, grid size) with the best time of each backend,
the speed-up, and the largest relative difference between the two outputs.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from hfact import _accel
from hfact.grid import Grid, GridFunction
from hfact.operators import KernelParams, apply_ialpha, apply_partial_adjoint, commutator


def _inputs(points: int):
    grid = Grid.uniform(1, -8, 8, points)
    x = grid.points()[:, 0]
    f1 = GridFunction(grid, np.exp(-x ** 2))
    f2 = GridFunction(grid, np.exp(-(x - 1) ** 2 / 4))
    b = GridFunction(grid, np.log(np.abs(x) + 0.1))
    return grid, f1, f2, b


def _best(fn, repeat: int) -> tuple[float, np.ndarray]:
    out = fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out.values


def run(points_list, repeat: int = 3) -> list[dict]:
    kp = KernelParams(2, 1, 0.25)
    rows = []
    for points in points_list:
        _, f1, f2, b = _inputs(points)
        ops = {
            "ialpha": lambda: apply_ialpha(kp, [f1, f2]),
            "adjoint": lambda: apply_partial_adjoint(1, kp, [f1, f2]),
            "commutator": lambda: commutator(1, b, [f1, f2], kp),
        }
        for name, fn in ops.items():
            times, outs = {}, {}
            for backend in ("numba", "numpy"):
                if backend == "numba" and not _accel.NUMBA_AVAILABLE:
                    continue
                _accel.set_backend(backend)
                times[backend], outs[backend] = _best(fn, repeat)
            row = {"op": name, "points": points, **{f"{k}_s": v for k, v in times.items()}}
            if len(outs) == 2:
                scale = np.max(np.abs(outs["numpy"])) or 1.0
                row["speedup"] = times["numpy"] / times["numba"]
                row["max_rel_diff"] = float(np.max(np.abs(outs["numba"] - outs["numpy"])) / scale)
            rows.append(row)
    _accel.set_backend("numba" if _accel.NUMBA_AVAILABLE and _accel._env_enabled() else "numpy")
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, nargs="+", default=[65, 129, 257])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    print(f"{'op':<11}{'points':>7}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>9}{'max rel diff':>14}")
    for r in run(args.points, args.repeat):
        print(f"{r['op']:<11}{r['points']:>7}{r.get('numba_s', float('nan')):>12.4g}{r['numpy_s']:>12.4g}"
              f"{r.get('speedup', float('nan')):>9.1f}{r.get('max_rel_diff', float('nan')):>14.2e}")


if __name__ == "__main__":
    main()
