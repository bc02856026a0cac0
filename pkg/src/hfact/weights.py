"""Weights: exponent bookkeeping, Muckenhoupt-type constants over a finite
cube family, weighted norms, doubling exponents and BMO norms.

Suprema over all cubes are replaced by maxima over a :class:`CubeFamily`,
so every constant reported here is a lower bound for the continuous one.
Averages over a cube are plain means over the grid nodes it contains.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, EmptyFamily, GridMismatch, ValidationError
from .grid import Grid, GridFunction, integrate, read_csv
from .operators import KernelParams

RELATION_TOL = 1e-12


@dataclass(frozen=True)
class ExponentConfig:
    m: int
    n: int
    alpha: float
    p: tuple[float, ...]
    q: float

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(x) for x in self.p))
        if self.m < 1 or self.n < 1:
            raise ValidationError("m and n must be positive integers")
        if len(self.p) != self.m:
            raise ValidationError(f"need {self.m} exponents p_i, got {len(self.p)}")
        if not all(1 < pi < math.inf for pi in self.p) or not 1 < self.q < math.inf:
            raise ValidationError("every p_i and q must lie strictly between 1 and infinity")
        if not 0 < self.alpha < self.m * self.n:
            raise ValidationError("alpha must lie in (0, m*n)")
        gap = sum(1 / pi for pi in self.p) - 1 / self.q - self.alpha / self.n
        if abs(gap) > RELATION_TOL:
            raise ValidationError(f"sum 1/p_i - 1/q - alpha/n = {gap:.3e}, must vanish")

    @property
    def p_prime(self) -> tuple[float, ...]:
        return tuple(pi / (pi - 1) for pi in self.p)

    @property
    def q_prime(self) -> float:
        return self.q / (self.q - 1)

    @property
    def p_total(self) -> float:
        """The exponent p with 1/p = sum 1/p_i."""
        return 1.0 / sum(1 / pi for pi in self.p)

    def kernel_params(self) -> KernelParams:
        return KernelParams(self.m, self.n, self.alpha)


# -- cube families ------------------------------------------------------------

@dataclass(frozen=True)
class CubeFamily:
    """Finite family of closed axis-aligned cubes, stored as inclusive node index ranges.

    ``parents`` records for each cube the index of the cube it was split from
    (-1 for roots); children tile their parent geometrically.
    """

    grid: Grid
    lo: np.ndarray
    hi: np.ndarray
    corners: np.ndarray
    sides: np.ndarray
    parents: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.lo)

    @classmethod
    def dyadic(cls, grid: Grid, min_side: float | None = None, shifted: bool = True) -> "CubeFamily":
        """Dyadic cubes of the grid box down to ``min_side`` (default four spacings), plus half-side translates."""
        h = np.asarray(grid.spacing)
        amin = np.asarray(grid.axis_min)
        amax = np.asarray(grid.axis_max)
        box = amax - amin
        if min_side is None:
            min_side = 4 * float(h.max())
        corners, sides, parents = [], [], []
        # generation-by-generation tree: unshifted dyadic cubes split into 2^n children
        level_nodes = [(tuple(amin), tuple(box), -1)]
        shifts = [np.array(s) for s in np.ndindex(*(2,) * grid.dimension)]
        while level_nodes:
            next_nodes = []
            for corner, side, parent in level_nodes:
                side_a = np.asarray(side)
                if np.any(side_a < min_side * (1 - 1e-9)):
                    continue
                me = len(corners)
                corners.append(np.asarray(corner))
                sides.append(side_a)
                parents.append(parent)
                half = side_a / 2
                for s in shifts:
                    next_nodes.append((tuple(np.asarray(corner) + s * half), tuple(half), me))
            level_nodes = next_nodes
        if shifted:
            base = len(corners)
            for i in range(base):
                side = sides[i]
                for s in shifts[1:]:
                    c = corners[i] + s * side / 2
                    if np.all(c + side <= amax + 1e-9 * h):
                        corners.append(c)
                        sides.append(side)
                        parents.append(-1)
        return cls._build(grid, np.array(corners), np.array(sides), np.array(parents, dtype=int))

    @classmethod
    def explicit(cls, grid: Grid, cubes: Sequence[tuple[Sequence[float], float | Sequence[float]]]) -> "CubeFamily":
        """Family from ``(corner, side)`` pairs."""
        n = grid.dimension
        corners = np.array([np.broadcast_to(np.asarray(c, float), (n,)) for c, _ in cubes]).reshape(-1, n)
        sides = np.array([np.broadcast_to(np.asarray(s, float), (n,)) for _, s in cubes]).reshape(-1, n)
        return cls._build(grid, corners, sides, np.full(len(corners), -1))

    @classmethod
    def _build(cls, grid, corners, sides, parents):
        if len(corners) == 0:
            raise EmptyFamily("cube family is empty")
        amin = np.asarray(grid.axis_min)
        h = np.asarray(grid.spacing)
        lo = np.ceil((corners - amin) / h - 1e-9).astype(int)
        hi = np.floor((corners + sides - amin) / h + 1e-9).astype(int)
        shape = np.asarray(grid.shape)
        lo = np.clip(lo, 0, shape - 1)
        hi = np.clip(hi, 0, shape - 1)
        keep = np.all(hi - lo + 1 >= 2, axis=1)
        if not keep.any():
            raise EmptyFamily("no cube contains enough grid points")
        remap = np.cumsum(keep) - 1
        parents = np.where(parents >= 0, parents, -1)
        parents = np.array([remap[p] if p >= 0 and keep[p] else -1 for p in parents])[keep]
        return cls(grid, lo[keep], hi[keep], corners[keep], sides[keep], parents)

    def slices(self, i: int) -> tuple[slice, ...]:
        return tuple(slice(a, b + 1) for a, b in zip(self.lo[i], self.hi[i]))

    def counts(self) -> np.ndarray:
        return np.prod(self.hi - self.lo + 1, axis=1)

    def means(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values).reshape(self.grid.shape)
        return np.array([v[self.slices(i)].mean() for i in range(len(self))])

    def sums(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values).reshape(self.grid.shape)
        return np.array([v[self.slices(i)].sum() for i in range(len(self))])

    def ancestors(self, i: int):
        p = self.parents[i]
        while p >= 0:
            yield p
            p = self.parents[p]


def _family(F: CubeFamily, f: GridFunction) -> CubeFamily:
    if F is None:
        return CubeFamily.dyadic(f.grid)
    if len(F) == 0:
        raise EmptyFamily("cube family is empty")
    if F.grid != f.grid:
        raise GridMismatch("cube family built on a different grid")
    return F


def _positive(w: GridFunction, what="weight"):
    if not np.all(w.values > 0):
        raise ValidationError(f"{what} must be strictly positive")


# -- constants ---------------------------------------------------------------------

def _product_of_averages(F: CubeFamily, omegas, outer, inner) -> float:
    """max over cubes of avg(prod w_i^outer_i) * prod_i avg(w_i^(-a_i))^(b_i).

    Every such product is invariant under rescaling each weight, so each
    weight is first divided by its value at the cube's first node; constant
    weights then give exactly 1.
    """
    best = -math.inf
    vals = [w.values for w in omegas]
    for i in range(len(F)):
        sl = F.slices(i)
        blocks = [v[sl] / v[sl].flat[0] for v in vals]
        prod = np.ones_like(blocks[0])
        for blk, e in zip(blocks, outer):
            prod = prod * blk ** e
        total = prod.mean()
        for blk, (a, b) in zip(blocks, inner):
            total *= np.mean(blk ** (-a)) ** b
        best = max(best, float(total))
    return best


def ap_constant(omega: GridFunction, p: float, F: CubeFamily | None = None) -> float:
    F = _family(F, omega)
    _positive(omega)
    if not 1 < p < math.inf:
        raise ValidationError("p must lie in (1, inf)")
    return _product_of_averages(F, [omega], [1.0], [(1.0 / (p - 1), p - 1)])


def apq_constant(w: "WeightVector", F: CubeFamily | None = None) -> float:
    """max_Q avg(prod omega_i^q) * prod_i avg(omega_i^(-p_i'))^(q/p_i')."""
    F = _family(F, w.omegas[0])
    c = w.config
    return _product_of_averages(F, w.omegas, [c.q] * c.m, [(pp, c.q / pp) for pp in c.p_prime])


def a_vecp_constant(w: "WeightVector", F: CubeFamily | None = None) -> float:
    """max_Q avg(prod omega_i^(p/p_i)) * prod_i avg(omega_i^(1-p_i'))^(p/p_i')."""
    F = _family(F, w.omegas[0])
    c = w.config
    p = c.p_total
    return _product_of_averages(F, w.omegas, [p / pi for pi in c.p],
                                [(pp - 1, p / pp) for pp in c.p_prime])


def weighted_lp_norm(f: GridFunction, omega: GridFunction | None, p: float) -> float:
    if math.isinf(p):
        return f.max_abs()
    if p < 1:
        raise ValidationError("p must be at least 1")
    integrand = np.abs(f.values) ** p
    if omega is not None:
        if omega.grid != f.grid:
            raise GridMismatch("function and weight on different grids")
        integrand = integrand * omega.values
    return integrate(GridFunction(f.grid, integrand)) ** (1.0 / p)


class DoublingExponents(NamedTuple):
    epsilon_hat: float
    L_hat: float
    C_hat: float


def doubling_pairs(omega: GridFunction, F: CubeFamily) -> tuple[np.ndarray, np.ndarray]:
    """Log measure ratios ``x = log(|S|/|Q|)`` and ``y = log(w(S)/w(Q))`` over nested pairs."""
    counts = F.counts().astype(float)
    mass = F.sums(omega.values)
    xs, ys = [], []
    for s in range(len(F)):
        for q in F.ancestors(s):
            xs.append(math.log(counts[s] / counts[q]))
            ys.append(math.log(mass[s] / mass[q]))
    return np.array(xs), np.array(ys)


def doubling_exponents(omega: GridFunction, F: CubeFamily | None = None) -> DoublingExponents:
    """Fitted exponents comparing weighted and Lebesgue measure ratios of nested cubes.

    ``epsilon_hat`` and ``L_hat`` are the extreme slopes y/x over all pairs,
    ``C_hat`` the exponential of the worst residual about the least-squares
    line through the origin.
    """
    F = _family(F, omega)
    _positive(omega)
    x, y = doubling_pairs(omega, F)
    if len(x) == 0:
        raise EmptyFamily("cube family has no nested pairs")
    slopes = y / x
    beta = float(np.dot(x, y) / np.dot(x, x))
    c_hat = math.exp(float(np.max(np.abs(y - beta * x))))
    return DoublingExponents(float(slopes.min()), float(slopes.max()), c_hat)


def bmo_norm(b: GridFunction, F: CubeFamily | None = None) -> float:
    F = _family(F, b)
    v = b.values
    best = 0.0
    for i in range(len(F)):
        block = v[F.slices(i)]
        # centring on one node first makes constant blocks give exactly zero
        block = block - block.flat[0]
        best = max(best, float(np.mean(np.abs(block - block.mean()))))
    return best


# -- weight vectors and the weight mini-language --------------------------------------

def evaluate_weight(spec: dict, grid: Grid, base_spacing: float | None = None) -> GridFunction:
    """Sample a weight specification on ``grid``.

    ``{"kind": "constant", "c": 2.0}``,
    ``{"kind": "power", "a": 0.5, "offset": "auto", "center": [0.0]}`` for ``(|x - center| + offset)^a``
    (``"auto"`` means one spacing of the base grid), or
    ``{"kind": "file", "path": ...}`` for a grid-function CSV on the same lattice.
    """
    kind = spec.get("kind")
    if kind == "constant":
        c = float(spec.get("c", 1.0))
        if not c > 0:
            raise ConfigError("constant weight must be positive", "c")
        return GridFunction.constant(grid, c)
    if kind == "power":
        a = float(spec["a"])
        off = spec.get("offset", "auto")
        if off == "auto":
            off = base_spacing if base_spacing is not None else max(grid.spacing)
        off = float(off)
        center = np.broadcast_to(np.asarray(spec.get("center", 0.0), float), (grid.dimension,))
        if off <= 0 and a < 0:
            raise ConfigError("negative power needs a positive offset", "offset")
        r = np.sqrt(np.sum((grid.points() - center) ** 2, axis=1))
        vals = (r + off) ** a
        if not np.all(vals > 0):
            raise ConfigError("power weight is not strictly positive on the grid", "offset")
        return GridFunction(grid, vals)
    if kind == "file":
        src = read_csv(spec["path"])
        if src.grid.level_of(grid) != 0:
            raise ConfigError("file weight can only be sampled on its own lattice", "path")
        return _lookup(src, grid)
    raise ConfigError(f"unknown weight kind {kind!r}", "kind")


def _lookup(src: GridFunction, grid: Grid) -> GridFunction:
    idx = []
    for k in range(grid.dimension):
        i = grid.offset[k] - src.grid.offset[k] + np.arange(grid.shape[k])
        if i.min() < 0 or i.max() >= src.grid.shape[k]:
            raise ConfigError("requested grid leaves the weight file's box", "path")
        idx.append(i)
    return GridFunction(grid, src.values[np.ix_(*idx)])


class WeightVector:
    """The m weights omega_i with derived measures mu = prod omega_i^q and mu_i = omega_i^(-p_i')."""

    def __init__(self, omegas: Sequence[GridFunction], config: ExponentConfig,
                 specs: Sequence[dict] | None = None, base_spacing: float | None = None):
        if len(omegas) != config.m:
            raise ValidationError(f"need {config.m} weights, got {len(omegas)}")
        grid = omegas[0].grid
        for w in omegas:
            if w.grid != grid:
                raise GridMismatch("weights on different grids")
            _positive(w)
        self.omegas = tuple(omegas)
        self.config = config
        self.specs = None if specs is None else tuple(specs)
        self.base_spacing = base_spacing

    @classmethod
    def from_specs(cls, specs: Sequence[dict], config: ExponentConfig, grid: Grid) -> "WeightVector":
        base = max(grid.spacing)
        return cls([evaluate_weight(s, grid, base) for s in specs], config, specs, base)

    @classmethod
    def unit(cls, config: ExponentConfig, grid: Grid) -> "WeightVector":
        return cls.from_specs([{"kind": "constant", "c": 1.0}] * config.m, config, grid)

    @property
    def grid(self) -> Grid:
        return self.omegas[0].grid

    def on(self, grid: Grid) -> "WeightVector":
        """The same weights sampled on another grid."""
        if grid == self.grid:
            return self
        if self.specs is None:
            raise GridMismatch("weights without specifications cannot be resampled")
        return WeightVector([evaluate_weight(s, grid, self.base_spacing) for s in self.specs],
                            self.config, self.specs, self.base_spacing)

    @property
    def is_unit(self) -> bool:
        return all(np.all(w.values == 1.0) for w in self.omegas)

    @cached_property
    def mu(self) -> GridFunction:
        prod = np.ones(self.grid.shape)
        for w in self.omegas:
            prod = prod * w.values ** self.config.q
        return GridFunction(self.grid, prod)

    @cached_property
    def duals(self) -> tuple[GridFunction, ...]:
        return tuple(GridFunction(self.grid, w.values ** (-pp))
                     for w, pp in zip(self.omegas, self.config.p_prime))

    @cached_property
    def L_hat(self) -> float:
        """Largest fitted upper doubling exponent over the dual weights."""
        F = CubeFamily.dyadic(self.grid)
        return max(doubling_exponents(mu, F).L_hat for mu in self.duals)


def dual_class_constants(w: WeightVector, F: CubeFamily | None = None) -> dict:
    """A_{m p_i'} constants of the dual weights and the A_{mq} constant of mu."""
    F = _family(F, w.omegas[0])
    c = w.config
    return {
        "duals": [ap_constant(mu, c.m * pp, F) for mu, pp in zip(w.duals, c.p_prime)],
        "mu": ap_constant(w.mu, c.m * c.q, F),
    }
