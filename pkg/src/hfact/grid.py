"""Uniform grids on truncation boxes, grid functions and quadrature.

A :class:`Grid` is a rectangular window of a uniform lattice.  Every lattice
is described by an *anchor* (a cell edge per axis) and a spacing; grid point
``i`` sits at the centre of cell ``[anchor + (offset+i)*h, anchor + (offset+i+1)*h]``.
Coarsening doubles the spacing while keeping the anchor, so each coarse cell
is exactly the union of ``2**n`` fine cells.  This is what lets functions
built at different resolutions be added and compared without interpolation
error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DegenerateBall, GridMismatch, GridTooLarge, NonFiniteResult

MAX_POINTS = 1 << 24
MIN_POINTS_PER_AXIS = 4
# Closed ball membership |x-c| <= r, widened by this relative slack so that
# lattice points at distance exactly r survive floating-point round-off.
MEMBERSHIP_SLACK = 1e-9


def _as_tuple(v, n=None, cast=float):
    if np.isscalar(v):
        return tuple(cast(v) for _ in range(n or 1))
    return tuple(cast(x) for x in v)


@dataclass(frozen=True)
class Grid:
    anchor: tuple[float, ...]
    spacing: tuple[float, ...]
    offset: tuple[int, ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        n = len(self.shape)
        if n < 1 or not (len(self.anchor) == len(self.spacing) == len(self.offset) == n):
            raise GridMismatch("anchor, spacing, offset and shape must have one entry per axis")
        if any(h <= 0 or not math.isfinite(h) for h in self.spacing):
            raise GridMismatch(f"spacing must be positive, got {self.spacing}")
        if any(s < MIN_POINTS_PER_AXIS for s in self.shape):
            raise GridMismatch(f"need at least {MIN_POINTS_PER_AXIS} points per axis, got {self.shape}")
        if math.prod(self.shape) > MAX_POINTS:
            raise GridTooLarge(f"{math.prod(self.shape)} points exceeds the budget of {MAX_POINTS}")

    @classmethod
    def uniform(cls, n: int, axis_min, axis_max, points) -> "Grid":
        """Grid with ``points`` nodes per axis from ``axis_min`` to ``axis_max`` inclusive."""
        lo = _as_tuple(axis_min, n)
        hi = _as_tuple(axis_max, n)
        pts = _as_tuple(points, n, int)
        if not (len(lo) == len(hi) == len(pts) == n):
            raise GridMismatch("axis_min, axis_max, points must match the dimension")
        if any(b <= a for a, b in zip(lo, hi)):
            raise GridMismatch("axis_max must exceed axis_min on every axis")
        if any(p < MIN_POINTS_PER_AXIS for p in pts):
            raise GridMismatch(f"need at least {MIN_POINTS_PER_AXIS} points per axis")
        h = tuple((b - a) / (p - 1) for a, b, p in zip(lo, hi, pts))
        anchor = tuple(a - hh / 2 for a, hh in zip(lo, h))
        return cls(anchor, h, (0,) * n, pts)

    # -- geometry ---------------------------------------------------------
    @property
    def dimension(self) -> int:
        return len(self.shape)

    @property
    def points_per_axis(self) -> tuple[int, ...]:
        return self.shape

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def axis_min(self) -> tuple[float, ...]:
        return tuple(a + (o + 0.5) * h for a, o, h in zip(self.anchor, self.offset, self.spacing))

    @property
    def axis_max(self) -> tuple[float, ...]:
        return tuple(a + (o + s - 0.5) * h
                     for a, o, s, h in zip(self.anchor, self.offset, self.shape, self.spacing))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    def axis_coords(self, axis: int) -> np.ndarray:
        a, o, s, h = self.anchor[axis], self.offset[axis], self.shape[axis], self.spacing[axis]
        return a + (o + np.arange(s) + 0.5) * h

    @cached_property
    def _points(self) -> np.ndarray:
        axes = [self.axis_coords(k) for k in range(self.dimension)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        pts.setflags(write=False)
        return pts

    def points(self) -> np.ndarray:
        """All grid points, shape ``(size, n)``, row-major order."""
        return self._points

    @cached_property
    def _weights(self) -> np.ndarray:
        # cells clipped to the box: boundary nodes carry half a cell per axis
        w = np.ones(())
        for k in range(self.dimension):
            wk = np.full(self.shape[k], self.spacing[k])
            wk[0] = wk[-1] = self.spacing[k] / 2
            w = np.multiply.outer(w, wk)
        w.setflags(write=False)
        return w

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weight per node, shaped like the grid."""
        return self._weights

    def contains_box(self, lo: Sequence[float], hi: Sequence[float]) -> bool:
        amin, amax = self.axis_min, self.axis_max
        tol = [1e-9 * h for h in self.spacing]
        return all(l >= a - t and u <= b + t for l, u, a, b, t in zip(lo, hi, amin, amax, tol))

    # -- lattice relations -------------------------------------------------
    def level_of(self, other: "Grid") -> int | None:
        """``t`` such that ``other`` is this lattice coarsened ``t`` times (negative if finer)."""
        if other.dimension != self.dimension:
            return None
        ts = set()
        for a0, h0, a1, h1 in zip(self.anchor, self.spacing, other.anchor, other.spacing):
            ratio = h1 / h0
            t = round(math.log2(ratio))
            if abs(ratio - 2.0 ** t) > 1e-9 * max(ratio, 1.0):
                return None
            if abs(a0 - a1) > 1e-9 * min(h0, h1):
                return None
            ts.add(t)
        return ts.pop() if len(ts) == 1 else None

    def same_lattice(self, other: "Grid") -> bool:
        return self.level_of(other) == 0

    def coarsened(self, t: int = 1) -> "Grid":
        """Aligned coarser grid covering this grid's cells, spacing multiplied by ``2**t``."""
        if t < 0:
            raise ValueError("t must be non-negative")
        f = 1 << t
        offs, shape = [], []
        for o, s in zip(self.offset, self.shape):
            first = o // f
            last = (o + s - 1) // f
            first, last = _pad_range(first, last)
            offs.append(first)
            shape.append(last - first + 1)
        return Grid(self.anchor, tuple(h * f for h in self.spacing), tuple(offs), tuple(shape))

    def window(self, lo: Sequence[float], hi: Sequence[float], margin: int = 2) -> "Grid":
        """Grid on the same lattice whose nodes cover the box ``[lo, hi]`` plus ``margin`` nodes."""
        offs, shape = [], []
        for k in range(self.dimension):
            a, h = self.anchor[k], self.spacing[k]
            first = math.floor((lo[k] - a) / h - 0.5 + 1e-9) - margin
            last = math.ceil((hi[k] - a) / h - 0.5 - 1e-9) + margin
            first, last = _pad_range(first, last)
            offs.append(first)
            shape.append(last - first + 1)
        return Grid(self.anchor, self.spacing, tuple(offs), tuple(shape))

    def cell_edges(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([a + o * h for a, o, h in zip(self.anchor, self.offset, self.spacing)])
        hi = np.array([a + (o + s) * h for a, o, s, h in zip(self.anchor, self.offset, self.shape, self.spacing)])
        return lo, hi

    def header(self) -> str:
        fmt = lambda xs: ",".join(format(x, ".17g") for x in xs)
        return (f"# grid n={self.dimension} min={fmt(self.axis_min)} "
                f"max={fmt(self.axis_max)} pts={','.join(str(s) for s in self.shape)}")


def _pad_range(first: int, last: int) -> tuple[int, int]:
    missing = MIN_POINTS_PER_AXIS - (last - first + 1)
    if missing > 0:
        first -= missing // 2
        last += missing - missing // 2
    return first, last


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_tuple(self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0:
            raise DegenerateBall(f"radius must be positive, got {self.radius}")

    @property
    def dimension(self) -> int:
        return len(self.center)

    def scaled(self, factor: float) -> "Ball":
        return Ball(self.center, self.radius * factor)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d2 = np.sum((np.asarray(pts) - np.asarray(self.center)) ** 2, axis=-1)
        return d2 <= (self.radius * (1 + MEMBERSHIP_SLACK)) ** 2


class GridFunction:
    """Immutable real function sampled on every node of a :class:`Grid`."""

    __slots__ = ("grid", "values", "__weakref__")

    def __init__(self, grid: Grid, values):
        v = np.array(values, dtype=np.float64)
        if v.size != grid.size:
            raise GridMismatch(f"{v.size} values for a grid of {grid.size} points")
        v = v.reshape(grid.shape)
        if not np.all(np.isfinite(v)):
            bad = np.argwhere(~np.isfinite(v))[0]
            raise NonFiniteResult(f"non-finite value at grid index {tuple(int(i) for i in bad)}")
        v.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", v)

    def __setattr__(self, name, value):
        raise AttributeError("GridFunction is immutable")

    def __reduce__(self):
        return (GridFunction, (self.grid, np.array(self.values)))

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "GridFunction":
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_callable(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        """Sample ``fn`` (called with an ``(size, n)`` array of points)."""
        return cls(grid, np.asarray(fn(grid.points()), dtype=float).reshape(grid.shape))

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def support_mask(self) -> np.ndarray:
        return self.values != 0.0

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def __repr__(self):
        return f"GridFunction(shape={self.grid.shape}, max|f|={self.max_abs():.3g})"

    # pointwise algebra
    def __add__(self, other):
        return pointwise("add", self, other)

    def __sub__(self, other):
        return pointwise("sub", self, other)

    def __mul__(self, other):
        if np.isscalar(other):
            return pointwise("scale", self, other)
        return pointwise("mul", self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return pointwise("scale", self, -1.0)

    def __pow__(self, e):
        return pointwise("power", self, e)

    def __abs__(self):
        return GridFunction(self.grid, np.abs(self.values))

    def crop(self, margin: int = 2) -> "GridFunction":
        """Restrict to the smallest window (same lattice) holding the support."""
        mask = self.support_mask()
        if not mask.any():
            return self
        idx = np.argwhere(mask)
        lo_i, hi_i = idx.min(axis=0), idx.max(axis=0)
        g = self.grid
        lo = [g.anchor[k] + (g.offset[k] + lo_i[k] + 0.5) * g.spacing[k] for k in range(g.dimension)]
        hi = [g.anchor[k] + (g.offset[k] + hi_i[k] + 0.5) * g.spacing[k] for k in range(g.dimension)]
        return embed(self, g.window(lo, hi, margin))


def _check_same_grid(fs: Iterable[GridFunction]) -> Grid:
    fs = list(fs)
    grid = fs[0].grid
    for f in fs[1:]:
        if f.grid != grid:
            raise GridMismatch("grid functions live on different grids")
    return grid


def pointwise(kind: str, *args) -> GridFunction:
    """Pointwise ``add``, ``sub``, ``mul`` (grid functions), ``scale`` (by a real) or ``power``."""
    if kind in ("add", "sub", "mul"):
        if len(args) < 2:
            raise TypeError(f"{kind} needs at least two grid functions")
        grid = _check_same_grid(args)
        out = np.array(args[0].values)
        for f in args[1:]:
            if kind == "add":
                out = out + f.values
            elif kind == "sub":
                out = out - f.values
            else:
                out = out * f.values
        return GridFunction(grid, out)
    if kind == "scale":
        f, c = args
        return GridFunction(f.grid, f.values * float(c))
    if kind == "power":
        f, e = args
        e = float(e)
        if not float(e).is_integer() and np.any(f.values < 0):
            raise NonFiniteResult("non-integer power of a negative value")
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.power(f.values, e)
        return GridFunction(f.grid, out)
    raise ValueError(f"unknown pointwise operation {kind!r}")


def integrate(f: GridFunction) -> float:
    """Quadrature of ``f`` over its box (node weight = clipped cell volume)."""
    return float(np.sum(f.values * f.grid.weights))


def ball_indicator(grid: Grid, ball: Ball) -> GridFunction:
    if ball.dimension != grid.dimension:
        raise GridMismatch("ball and grid dimensions differ")
    if ball.radius < 2 * max(grid.spacing) * (1 - 1e-9):
        raise DegenerateBall(f"radius {ball.radius} is below two grid spacings {max(grid.spacing)}")
    mask = ball.contains(grid.points())
    if not mask.any():
        raise DegenerateBall(f"no grid point of the box lies in {ball}")
    return GridFunction(grid, mask.astype(float))


# -- moving functions between aligned lattices --------------------------------

def embed(f: GridFunction, target: Grid) -> GridFunction:
    """Re-express ``f`` on ``target``, which must be the same lattice or an aligned refinement.

    Coarse values are replicated onto the fine nodes of each coarse cell, so
    integrals and pointwise values are preserved exactly.  Raises
    :class:`GridMismatch` if part of the support of ``f`` falls outside
    ``target`` or the lattices are not nested.
    """
    src = f.grid
    t = target.level_of(src)
    if t is None or t < 0:
        raise GridMismatch("target grid is not an aligned refinement of the source lattice")
    if src == target:
        return f
    fac = 1 << t
    slices_src, slices_dst = [], []
    idx_maps = []
    for k in range(src.dimension):
        # target node i lies in source cell (target.offset+i)//fac
        src_cell = (target.offset[k] + np.arange(target.shape[k])) // fac - src.offset[k]
        valid = (src_cell >= 0) & (src_cell < src.shape[k])
        idx_maps.append((src_cell, valid))
        # every source node holding support must map entirely inside the target
        covered = np.zeros(src.shape[k], dtype=bool)
        cells = src_cell[valid]
        counts = np.bincount(cells, minlength=src.shape[k])
        covered[counts == fac] = True
        slices_src.append(covered)
    support = f.support_mask()
    for k in range(src.dimension):
        other = tuple(j for j in range(src.dimension) if j != k)
        live = support.any(axis=other) if other else support
        if np.any(live & ~slices_src[k]):
            raise GridMismatch("support of the function leaves the target grid")
    out = np.zeros(target.shape)
    sel = []
    src_idx = []
    for cell, valid in idx_maps:
        sel.append(np.nonzero(valid)[0])
        src_idx.append(cell[valid])
    if all(len(s) for s in sel):
        out[np.ix_(*sel)] = f.values[np.ix_(*src_idx)]
    return GridFunction(target, out)


def union_grid(grids: Sequence[Grid], margin: int = 1) -> Grid:
    """Smallest window of the finest lattice in ``grids`` that covers all of them."""
    finest = min(grids, key=lambda g: g.spacing[0])
    lo = np.full(finest.dimension, np.inf)
    hi = np.full(finest.dimension, -np.inf)
    for g in grids:
        t = finest.level_of(g)
        if t is None or t < 0:
            raise GridMismatch("grids are not aligned dyadic coarsenings of one lattice")
        elo, ehi = g.cell_edges()
        lo = np.minimum(lo, elo)
        hi = np.maximum(hi, ehi)
    h = np.asarray(finest.spacing)
    return finest.window(lo + h / 2, hi - h / 2, margin)


def common_grid(fs: Sequence[GridFunction]) -> list[GridFunction]:
    """Embed ``fs`` on one shared grid (identity when they already share one)."""
    grids = [f.grid for f in fs]
    if all(g == grids[0] for g in grids):
        return list(fs)
    target = union_grid(grids)
    return [embed(f, target) for f in fs]


# -- CSV file format --------------------------------------------------------

def write_csv(f: GridFunction, path) -> None:
    path = Path(path)
    lines = [f.grid.header()]
    lines.extend(format(float(v), ".17g") for v in f.flat)
    path.write_text("\n".join(lines) + "\n")


def read_csv(path) -> GridFunction:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# grid"):
        raise GridMismatch(f"{path}: missing '# grid' header")
    fields = dict(tok.split("=", 1) for tok in text[0][len("# grid"):].split())
    n = int(fields["n"])
    lo = [float(x) for x in fields["min"].split(",")]
    hi = [float(x) for x in fields["max"].split(",")]
    pts = [int(x) for x in fields["pts"].split(",")]
    grid = Grid.uniform(n, lo, hi, pts)
    vals = np.array([float(s) for s in text[1:] if s.strip()])
    return GridFunction(grid, vals)
