"""Multilinear fractional integrals, their partial adjoints, the bilinear
forms built from them, and commutators with a multiplier ``b``.

All operators work on grid functions that share one grid.  The integrals are
quadrature sums over the nonzero nodes of each input, so cost scales with
support sizes rather than grid size.  Slot indices ``l`` are 1-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import GridMismatch, IndexOutOfRange, NonFiniteResult, SingularPoint, ValidationError
from .grid import GridFunction, integrate


@dataclass(frozen=True)
class KernelParams:
    m: int
    n: int
    alpha: float

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValidationError("m and n must be positive")
        if not 0.0 < self.alpha < self.m * self.n:
            raise ValidationError(f"alpha must lie in (0, m*n) = (0, {self.m * self.n}), got {self.alpha}")

    @property
    def exponent(self) -> float:
        return self.alpha - self.m * self.n


def kernel_eval(kp: KernelParams, x, ys) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    ys = np.asarray(ys, dtype=float).reshape(kp.m, -1)
    s = float(np.sum(np.sqrt(np.sum((ys - x) ** 2, axis=1))))
    if s == 0.0:
        raise SingularPoint(f"kernel is singular at x={x.tolist()}")
    return s ** kp.exponent


def _check(kp: KernelParams, fs: Sequence[GridFunction]):
    if len(fs) != kp.m:
        raise GridMismatch(f"expected {kp.m} functions, got {len(fs)}")
    grid = fs[0].grid
    for f in fs[1:]:
        if f.grid != grid:
            raise GridMismatch("inputs live on different grids")
    if grid.dimension != kp.n:
        raise GridMismatch(f"kernel dimension {kp.n} but grid dimension {grid.dimension}")
    return grid


def _check_slot(l: int, m: int):
    if not 1 <= l <= m:
        raise IndexOutOfRange(f"slot {l} outside 1..{m}")


def _nodes(f: GridFunction):
    """Coordinates and weighted values of the nonzero nodes of ``f``."""
    idx = np.flatnonzero(f.flat)
    pts = f.grid.points()[idx]
    return pts, f.flat[idx] * f.grid.weights.reshape(-1)[idx], idx


def _finite(values: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise NonFiniteResult(f"{what}: non-finite value at output node {bad}")
    return values


def _output_points(grid, where):
    if where is None:
        return np.arange(grid.size)
    mask = np.asarray(where, dtype=bool).reshape(-1)
    return np.flatnonzero(mask)


def ialpha_at(kp: KernelParams, fs: Sequence[GridFunction], points) -> np.ndarray:
    """I_alpha(f_1, ..., f_m) at arbitrary points ``(P, n)``."""
    _check(kp, fs)
    pts = np.asarray(points, dtype=float).reshape(-1, kp.n)
    nodes = [_nodes(f) for f in fs]
    out = kernels.center_sum(pts, [t for t, _, _ in nodes], [v for _, v, _ in nodes], kp.exponent)
    return _finite(out, "I_alpha")


def apply_ialpha(kp: KernelParams, fs: Sequence[GridFunction], where=None) -> GridFunction:
    """I_alpha on every grid node (or only on nodes where ``where`` is true; zero elsewhere)."""
    grid = _check(kp, fs)
    idx = _output_points(grid, where)
    out = np.zeros(grid.size)
    out[idx] = ialpha_at(kp, fs, grid.points()[idx])
    return GridFunction(grid, out)


def partial_adjoint_at(l: int, kp: KernelParams, args: Sequence[GridFunction], points) -> np.ndarray:
    """(I_alpha^*)_l(args) at arbitrary points.

    ``args[l-1]`` is the function integrated against the kernel centred at the
    free variable; the output point takes the place of slot ``l``:

        sum_x args_l(x) prod_{j != l} args_j(t_j) (|x - y| + sum_{j != l} |x - t_j|)^(alpha - mn).
    """
    _check(kp, args)
    _check_slot(l, kp.m)
    pts = np.asarray(points, dtype=float).reshape(-1, kp.n)
    if kp.m == 1:
        return ialpha_at(kp, args, pts)
    x0, v0, _ = _nodes(args[l - 1])
    others = [_nodes(f) for j, f in enumerate(args) if j != l - 1]
    out = kernels.adjoint_sum(pts, x0, v0, [t for t, _, _ in others], [v for _, v, _ in others], kp.exponent)
    return _finite(out, "partial adjoint")


def apply_partial_adjoint(l: int, kp: KernelParams, args: Sequence[GridFunction], where=None) -> GridFunction:
    """Discrete adjoint of I_alpha in slot ``l``.

    Satisfies pairing(I_alpha(fs), g) = pairing(f_l, adjoint(l, fs with g in slot l))
    exactly up to rounding.  For m = 1 this is I_alpha itself (bitwise).
    """
    grid = _check(kp, args)
    _check_slot(l, kp.m)
    if kp.m == 1:
        return apply_ialpha(kp, args, where)
    idx = _output_points(grid, where)
    out = np.zeros(grid.size)
    out[idx] = partial_adjoint_at(l, kp, args, grid.points()[idx])
    return GridFunction(grid, out)


def pairing(f: GridFunction, g: GridFunction) -> float:
    if f.grid != g.grid:
        raise GridMismatch("pairing needs a common grid")
    return integrate(f * g)


def _slotted(l: int, g: GridFunction, hs: Sequence[GridFunction]) -> list[GridFunction]:
    args = list(hs)
    args[l - 1] = g
    return args


def pi_l(l: int, g: GridFunction, hs: Sequence[GridFunction], kp: KernelParams) -> GridFunction:
    """h_l (I^*)_l(h_1, .., g, .., h_m) - g I_alpha(h_1, .., h_m).

    Each product is evaluated only where its multiplier is nonzero.
    """
    _check_slot(l, kp.m)
    grid = _check(kp, list(hs))
    if g.grid != grid:
        raise GridMismatch("g and h live on different grids")
    hl = hs[l - 1]
    first = apply_partial_adjoint(l, kp, _slotted(l, g, hs), where=hl.support_mask())
    second = apply_ialpha(kp, hs, where=g.support_mask())
    return GridFunction(grid, hl.values * first.values - g.values * second.values)


def _commutator_values(l: int, b: GridFunction, fs: Sequence[GridFunction], kp: KernelParams, where=None) -> tuple[np.ndarray, np.ndarray]:
    grid = _check(kp, fs)
    _check_slot(l, kp.m)
    if b.grid != grid:
        raise GridMismatch("b and f live on different grids")
    idx = _output_points(grid, where)
    nodes = [_nodes(f) for f in fs]
    bt = b.flat[nodes[l - 1][2]]
    bx = b.flat[idx]
    out = kernels.center_sum(grid.points()[idx], [t for t, _, _ in nodes], [v for _, v, _ in nodes],
                             kp.exponent, slot=l - 1, bt=bt, bx=bx)
    return idx, _finite(out, "commutator")


def commutator(l: int, b: GridFunction, fs: Sequence[GridFunction], kp: KernelParams, where=None) -> GridFunction:
    """[b, I_alpha]_l(fs) = I_alpha(.., b f_l, ..) - b I_alpha(fs).

    Summed in kernel-difference form so that a constant ``b`` gives exactly zero.
    """
    idx, vals = _commutator_values(l, b, fs, kp, where)
    out = np.zeros(b.grid.size)
    out[idx] = vals
    return GridFunction(b.grid, out)
