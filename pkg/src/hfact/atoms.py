"""(1, q, 0)-atoms, the telescoping decomposition of two-bump functions,
and two computable H^1 estimators (an atomic upper bound and a maximal
function lower surrogate).

Atoms produced by :func:`two_bump_decompose` live on small windows of aligned
lattices.  Dilated balls can be sampled on coarser lattices (``dilation_ppr``
points per radius), so supports far larger than the input grid stay cheap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import signal

from .errors import (DegenerateBall, EmptyScales, GridMismatch, MeanNotZero, SeparationTooSmall,
                     SupportViolation, ValidationError)
from .grid import Ball, Grid, GridFunction, ball_indicator, common_grid, embed, integrate
from .weights import weighted_lp_norm

CANCEL_TOL = 1e-10
SIZE_TOL = 1e-6
MEAN_TOL = 1e-8
NOISE_TOL = 1e-13


def lq_norm(f: GridFunction, q: float) -> float:
    return weighted_lp_norm(f, None, q)


def ball_measure(grid: Grid, ball: Ball) -> float:
    """Discrete measure of ``ball``: quadrature of its indicator on ``grid``."""
    mask = ball.contains(grid.points()).reshape(grid.shape)
    return float(np.sum(mask * grid.weights))


@dataclass(frozen=True)
class Atom:
    ball: Ball
    values: GridFunction
    q_exponent: float = math.inf

    @property
    def grid(self) -> Grid:
        return self.values.grid


@dataclass(frozen=True)
class AtomReport:
    support_ok: bool
    support_slack: float
    cancellation_ok: bool
    cancellation_slack: float
    size_ok: bool
    size_slack: float

    @property
    def passed(self) -> bool:
        return self.support_ok and self.cancellation_ok and self.size_ok


def validate_atom(a: Atom) -> AtomReport:
    """Check support, cancellation and size.

    Slacks: leaked L^1 mass outside the ball; |mean| / L^1 norm;
    L^q norm divided by the allowed |ball|^(1/q - 1), minus one.
    """
    g = a.values.grid
    inside = a.ball.contains(g.points()).reshape(g.shape)
    absv = np.abs(a.values.values)
    leaked = float(np.sum(absv * ~inside * g.weights))
    l1 = float(np.sum(absv * g.weights))
    mean = abs(integrate(a.values))
    cancel = mean / l1 if l1 > 0 else 0.0
    measure = ball_measure(g, a.ball)
    allowed = measure ** (1.0 / a.q_exponent - 1.0) if measure > 0 else math.inf
    size = lq_norm(a.values, a.q_exponent) / allowed - 1.0
    return AtomReport(leaked == 0.0, leaked, cancel <= CANCEL_TOL, cancel, size <= SIZE_TOL, size)


def canonical_atom(grid: Grid, ball: Ball) -> Atom:
    """Odd step on ``ball``: positive below the centre along axis 0, negative above, 0 on the mid plane.

    The heavier half is scaled down so the two masses match exactly; on a
    grid symmetric about the centre both levels equal 1/|B|.
    """
    chi = ball_indicator(grid, ball).values
    offset = grid.points()[:, 0].reshape(grid.shape) - ball.center[0]
    tiny = 1e-9 * grid.spacing[0]
    lower = chi * (offset < -tiny)
    upper = chi * (offset > tiny)
    m_lo = float(np.sum(lower * grid.weights))
    m_up = float(np.sum(upper * grid.weights))
    if m_lo == 0.0 or m_up == 0.0:
        raise DegenerateBall("ball is too small to carry a mean-zero step")
    measure = ball_measure(grid, ball)
    vals = (lower * min(1.0, m_up / m_lo) - upper * min(1.0, m_lo / m_up)) / measure
    return Atom(ball, GridFunction(grid, vals), math.inf)


@dataclass
class AtomicDecomposition:
    terms: list[tuple[float, Atom]]
    source_note: str = ""
    info: dict = field(default_factory=dict)

    def reconstruct(self, grid: Grid | None = None) -> GridFunction:
        """Sum of lambda * atom on one grid (the union window of the atoms by default)."""
        if not self.terms:
            if grid is None:
                raise ValidationError("empty decomposition needs an explicit grid")
            return GridFunction.zeros(grid)
        parts = [a.values * lam for lam, a in self.terms]
        if grid is not None:
            parts = [embed(p, grid) for p in parts]
        else:
            parts = common_grid(parts)
        out = np.zeros(parts[0].grid.shape)
        for p in parts:
            out = out + p.values
        return GridFunction(parts[0].grid, out)

    def scaled(self, c: float) -> "AtomicDecomposition":
        return AtomicDecomposition([(lam * c, a) for lam, a in self.terms], self.source_note, dict(self.info))


def atomic_h1_bound(d: AtomicDecomposition) -> float:
    return float(sum(abs(lam) for lam, _ in d.terms))


# -- two-bump decomposition -----------------------------------------------------------

def lattice_level(spacing: float, radius: float, dilation_ppr: float | None) -> int:
    """Coarsening level keeping at least ``dilation_ppr`` nodes per radius."""
    if dilation_ppr is None:
        return 0
    return max(0, int(math.floor(math.log2(radius / (dilation_ppr * spacing)) + 1e-12)))


def _window_for(base: Grid, level: int, ball: Ball, margin: int = 2) -> Grid:
    lo, hi = ball.bbox()
    lattice = base.coarsened(level) if level > 0 else base
    return lattice.window(lo, hi, margin)


def _normalize(values: GridFunction, ball: Ball, q: float):
    measure = ball_measure(values.grid, ball)
    lam = lq_norm(values, q) * measure ** (1.0 - 1.0 / q)
    if lam == 0.0:
        return None
    return lam, Atom(ball, values * (1.0 / lam), q)


def _covering_ball(ball: Ball, lattice: Grid, atom_grid: Grid) -> Ball:
    """``ball`` grown to contain every fine node of the coarse cells it selects."""
    if lattice.spacing[0] <= atom_grid.spacing[0] * (1 + 1e-12):
        return ball
    return Ball(ball.center, ball.radius + 0.5 * math.sqrt(sum(h * h for h in lattice.spacing)))


def _difference(chi_in, lam_in, chi_out, lam_out, ball):
    """lam_in * chi_in - lam_out * chi_out on the finer of the two lattices."""
    fine = chi_in.grid if chi_in.grid.spacing[0] <= chi_out.grid.spacing[0] else chi_out.grid
    cover = _covering_ball(ball, chi_out.grid, fine)
    w = fine.window(*cover.bbox(), margin=2)
    values = embed(chi_in, w) * lam_in - embed(chi_out, w) * lam_out
    return values, cover, max(abs(lam_in), abs(lam_out))


def _check_support(f: GridFunction, ball: Ball, name: str):
    outside = ~ball.contains(f.grid.points()).reshape(f.grid.shape)
    leaked = np.abs(f.values) * outside
    if np.any(leaked):
        raise SupportViolation(f"{name} is nonzero outside its ball (leaked max {leaked.max():.3e})")


def two_bump_decompose(f1: GridFunction, f2: GridFunction, B1: Ball, B2: Ball, q: float = math.inf,
                       dilation_ppr: float | None = None, mean_tol: float = MEAN_TOL) -> AtomicDecomposition:
    """Telescoping atomic decomposition of ``f1 + f2`` with ``supp f_i`` in ``B_i``.

    Per bump: the mean-removed bump on ``B_i``, then differences of averaged
    indicators on ``2^(j-2) B_i`` and ``2^(j-1) B_i`` for j = 2..J0, then a
    merge atom on ``B(midpoint, 2^(J0+1) r)`` where J0 = floor(log2(d/r)) + 1.
    Each atom is normalized by its measured L^q norm.
    """
    r = B1.radius
    if abs(B2.radius - r) > 1e-12 * r:
        raise ValidationError("the two balls must have equal radii")
    c1v, c2v = np.asarray(B1.center), np.asarray(B2.center)
    d = float(np.linalg.norm(c1v - c2v))
    if d < 4 * r * (1 - 1e-12):
        raise SeparationTooSmall(f"separation {d:.6g} is below 4r = {4 * r:.6g}")
    _check_support(f1, B1, "f1")
    _check_support(f2, B2, "f2")
    if f1.grid.level_of(f2.grid) is None:
        raise GridMismatch("bumps are not sampled on aligned lattices")
    base = f1.grid if f1.grid.spacing[0] <= f2.grid.spacing[0] else f2.grid
    # work on tight windows so every sum below runs over the same nodes
    f1 = embed(f1, f1.grid.window(*B1.bbox(), margin=2))
    f2 = embed(f2, f2.grid.window(*B2.bbox(), margin=2))
    c1, c2 = integrate(f1), integrate(f2)
    l1 = integrate(abs(f1)) + integrate(abs(f2))
    info = {"J0": int(math.floor(math.log2(d / r))) + 1, "separation": d,
            "size_constants": [lq_norm(f, q) * r ** (f.grid.dimension * (1 - 1 / q)) for f in (f1, f2)],
            "mean_defect": abs(c1 + c2), "dropped_noise": 0.0}
    if abs(c1 + c2) > mean_tol * l1:
        raise MeanNotZero(f"integral of f1 + f2 is {c1 + c2:.3e} (L1 mass {l1:.3e})")
    if l1 == 0.0:
        return AtomicDecomposition([], "two-bump (zero input)", info)
    J0 = info["J0"]
    s = min(base.spacing)
    mid = Ball(tuple((c1v + c2v) / 2), 2 ** (J0 + 1) * r)
    merge_grid = _window_for(base, lattice_level(s, mid.radius, dilation_ppr), mid)
    merge_chi = ball_indicator(merge_grid, mid)
    shift = (c1 - c2) / (2 * integrate(merge_chi))

    terms: list[tuple[float, Atom]] = []
    for f, B, c, sign in ((f1, B1, c1, 1.0), (f2, B2, c2, -1.0)):
        # averaged indicators lam_j * chi_{2^(j-1) B}, j = 1..J0
        levels = []
        for j in range(1, J0 + 1):
            Bj = B.scaled(2 ** (j - 1))
            if j == 1:
                grid_j = f.grid
            else:
                grid_j = _window_for(f.grid, lattice_level(min(f.grid.spacing), Bj.radius, dilation_ppr), Bj)
            chi = ball_indicator(grid_j, Bj)
            levels.append((Bj, chi, c / integrate(chi)))
        B0, chi0, lam0 = levels[0]
        pieces = [(f - chi0 * lam0, B0, abs(lam0))]
        for j in range(1, J0):
            (_, chi_in, lam_in), (Bj, chi_out, lam_out) = levels[j - 1], levels[j]
            pieces.append(_difference(chi_in, lam_in, chi_out, lam_out, Bj))
        _, chi_last, lam_last = levels[-1]
        pieces.append(_difference(chi_last, lam_last, merge_chi, sign * shift, mid))
        for values, ball, scale in pieces:
            if values.max_abs() <= NOISE_TOL * scale:
                # rounding residue of a piece that vanishes in exact arithmetic
                info["dropped_noise"] += integrate(abs(values))
                continue
            normed = _normalize(values, ball, q)
            if normed is not None:
                terms.append(normed)
    return AtomicDecomposition(terms, "two-bump telescoping", info)


# -- maximal-function surrogate ---------------------------------------------------------

def bump_kernel(grid: Grid, t: float) -> np.ndarray:
    """Samples of (1 - |x|/t)_+^2 on the grid offsets, normalized to unit quadrature mass."""
    axes = []
    for h in grid.spacing:
        k = int(math.floor(t / h))
        axes.append(np.arange(-k, k + 1) * h)
    mesh = np.meshgrid(*axes, indexing="ij")
    rad = np.sqrt(sum(m ** 2 for m in mesh))
    phi = np.clip(1.0 - rad / t, 0.0, None) ** 2
    return phi / (phi.sum() * grid.cell_volume)


def default_scales(grid: Grid, count: int = 8) -> list[float]:
    lo = 2 * max(grid.spacing)
    hi = min(b - a for a, b in zip(grid.axis_min, grid.axis_max)) / 4
    return list(np.geomspace(lo, max(hi, 2 * lo), count))


def maximal_h1_estimate(f: GridFunction, scales: Sequence[float] | None = None) -> float:
    """Quadrature of max_t |phi_t * f| over the given scales (direct-sum convolution)."""
    if scales is None:
        scales = default_scales(f.grid)
    scales = [float(t) for t in scales]
    h = max(f.grid.spacing)
    if len(scales) < 3 or any(not t >= h for t in scales):
        raise EmptyScales("need at least three scales, each at least one grid spacing")
    if f.is_zero():
        return 0.0
    pad = max(scales)
    lo = [a - pad for a in f.grid.axis_min]
    hi = [b + pad for b in f.grid.axis_max]
    g = embed(f, f.grid.window(lo, hi, margin=1))
    best = np.zeros(g.grid.shape)
    for t in scales:
        conv = signal.convolve(g.values, bump_kernel(g.grid, t), mode="same", method="direct")
        best = np.maximum(best, np.abs(conv * g.grid.cell_volume))
    return integrate(GridFunction(g.grid, best))
