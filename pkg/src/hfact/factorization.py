"""Approximating atoms by the bilinear forms Pi_l, iterating the
approximation into a weak factorization series, and checking the series
against BMO multipliers.

Each atom a on B(x0, r) is approximated by Pi_l(g, h_1, ..., h_m) with bumps
on a chain of balls B(y_j, r) at distance about M r.  The residual a - Pi_l
is a mean-zero function on two balls, so it is fed back into the two-bump
decomposition; repeating this gives the rounds of :func:`factorize`.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .atoms import Atom, AtomicDecomposition, atomic_h1_bound, lq_norm, two_bump_decompose
from .errors import (BumpOutsideBox, DivergingRounds, GridMismatch, IndexOutOfRange, NormalizerTooSmall,
                     ValidationError, ZeroDenominator)
from .grid import Ball, Grid, GridFunction, ball_indicator, embed, integrate, union_grid
from .operators import KernelParams, _commutator_values, pairing, partial_adjoint_at, pi_l
from .weights import WeightVector, weighted_lp_norm

log = logging.getLogger(__name__)

NORMALIZER_FLOOR = 1e-14


@dataclass
class AtomApprox:
    l: int
    M: float
    bumps: list[Ball]
    g: GridFunction
    hs: list[GridFunction]
    norm_product: float
    residual: GridFunction
    residual_h1: float
    pi: GridFunction
    near: GridFunction
    far: GridFunction
    decomposition: AtomicDecomposition | None
    mean_correction: GridFunction | None = None
    diagnostics: dict = field(default_factory=dict)


def bump_chain(x0: Sequence[float], r: float, M: float, l: int, m: int) -> list[Ball]:
    """Balls B(y_j, r): y_l is offset from x0 by M r / sqrt(n) in every coordinate,
    the remaining slots follow in increasing index order, each offset the same
    amount from the previous centre."""
    x0 = np.asarray(x0, dtype=float)
    step = M * r / math.sqrt(len(x0))
    order = [l] + [j for j in range(1, m + 1) if j != l]
    centers = {}
    prev = x0
    for j in order:
        prev = prev + step
        centers[j] = prev
    return [Ball(tuple(centers[j]), r) for j in range(1, m + 1)]


def _crop_to(f: GridFunction, ball: Ball) -> GridFunction:
    return embed(f, f.grid.window(*ball.bbox(), margin=2))


def approximate_atom(a: Atom, l: int, w: WeightVector, kp: KernelParams, M: float, *,
                     extend: bool = False, dilation_ppr: float | None = None,
                     L_hat: float | None = None, decompose: bool = True) -> AtomApprox:
    """Build g, h_1..h_m with Pi_l(g, h) close to the atom ``a``.

    g = (|B_l| mu / mu(B_l))^(1/q) on B_l, h_j = omega_j^(-p_j') on B_j for j != l,
    and h_l = a / N0 where N0 = (I^*)_l(h_1, .., g, .., h_m)(x0).  With
    ``extend`` the atom's grid window is widened to hold the bump chain;
    otherwise the chain must fit inside the atom's grid box.
    """
    m, n = kp.m, kp.n
    if not 1 <= l <= m:
        raise IndexOutOfRange(f"slot {l} outside 1..{m}")
    if M < 4:
        raise ValidationError(f"M must be at least 4, got {M}")
    cfg = w.config
    if (cfg.m, cfg.n) != (m, n) or abs(cfg.alpha - kp.alpha) > 1e-15:
        raise ValidationError("kernel parameters do not match the exponent configuration")
    ball0 = a.ball
    r = ball0.radius
    bumps = bump_chain(ball0.center, r, M, l, m)
    all_balls = [ball0] + bumps
    lo = np.min([b.bbox()[0] for b in all_balls], axis=0)
    hi = np.max([b.bbox()[1] for b in all_balls], axis=0)
    if extend:
        grid = a.grid.window(lo, hi, margin=2)
    else:
        grid = a.grid
        if not grid.contains_box(lo, hi):
            raise BumpOutsideBox(f"bump chain spans [{lo}, {hi}], outside the grid box")
    atom = embed(a.values, grid)
    wv = w.on(grid)
    q = cfg.q

    chis = [ball_indicator(grid, b) for b in bumps]
    chi_l = chis[l - 1]
    vol_l = integrate(chi_l)
    mu_l = integrate(wv.mu * chi_l)
    g = GridFunction(grid, (vol_l * wv.mu.values / mu_l) ** (1.0 / q) * chi_l.values)
    hs = [GridFunction(grid, wv.duals[j].values * chis[j].values) for j in range(m)]
    args = list(hs)
    args[l - 1] = g
    N0 = float(partial_adjoint_at(l, kp, args, np.asarray(ball0.center)[None, :])[0])
    if not N0 > NORMALIZER_FLOOR:
        raise NormalizerTooSmall(f"normalizer {N0:.3e} at the atom centre is below {NORMALIZER_FLOOR}")
    hs[l - 1] = atom * (1.0 / N0)

    g_mass = integrate(g)
    dual_mass = [integrate(hs[j]) for j in range(m)]
    lower = (M * r) ** kp.exponent * g_mass * math.prod(dual_mass[j] for j in range(m) if j != l - 1)

    pi = pi_l(l, g, hs, kp)
    residual = atom - pi
    inside0 = ball0.contains(grid.points()).reshape(grid.shape)
    near = GridFunction(grid, residual.values * inside0)
    far = GridFunction(grid, residual.values * ~inside0)

    # weighted norms from the grid, and their closed forms
    g_norm = weighted_lp_norm(g, wv.mu ** (1.0 - cfg.q_prime), cfg.q_prime)
    h_norms = [weighted_lp_norm(hs[j], wv.omegas[j] ** cfg.p[j], cfg.p[j]) for j in range(m)]
    norm_product = g_norm * math.prod(h_norms)
    closed = {"g": vol_l / mu_l ** (1.0 / q)}
    for j in range(m):
        if j != l - 1:
            closed[f"h{j + 1}"] = dual_mass[j] ** (1.0 / cfg.p[j])
    discrepancy = {"g": abs(g_norm / closed["g"] - 1.0)}
    for j in range(m):
        if j != l - 1:
            discrepancy[f"h{j + 1}"] = abs(h_norms[j] / closed[f"h{j + 1}"] - 1.0)
    if L_hat is None:
        L_hat = 1.0 if w.is_unit else w.L_hat
    exponent = m * n * (1.0 + L_hat) - kp.alpha

    scale = M * r ** n
    gvals = g.values
    c_near = float(np.max(np.abs(near.values))) * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_far = np.where(gvals > 0, np.abs(far.values) / np.where(gvals > 0, gvals, 1.0), 0.0)
    c_far = float(np.max(ratio_far)) * scale
    pi_l1 = integrate(abs(pi))

    decomposition = None
    correction = None
    residual_h1 = math.nan
    mean_defect = 0.0
    if decompose:
        near_c, far_c = _crop_to(near, ball0), _crop_to(far, bumps[l - 1])
        # The residual has zero mean in exact arithmetic.  Its rounding-level
        # defect is moved into a constant on the atom's ball, so it cannot be
        # amplified when the (much smaller) residual is decomposed again.
        mean_defect = integrate(near_c) + integrate(far_c)
        chi0 = GridFunction(near_c.grid, ball0.contains(near_c.grid.points()).astype(float))
        correction = chi0 * (mean_defect / integrate(chi0))
        decomposition = two_bump_decompose(near_c - correction, far_c, ball0,
                                           Ball(bumps[l - 1].center, r), math.inf, dilation_ppr)
        residual_h1 = atomic_h1_bound(decomposition)

    diagnostics = {
        "normalizer": N0,
        "normalizer_constant": N0 / lower,
        "pi_integral": integrate(pi),
        "pi_l1": pi_l1,
        "cancellation_ratio": abs(integrate(pi)) / pi_l1 if pi_l1 > 0 else 0.0,
        "residual_integral": integrate(residual),
        "mean_defect": mean_defect,
        "size_constant_near": c_near,
        "size_constant_far": c_far,
        "size_constant": max(c_near, c_far),
        "g_norm": g_norm,
        "h_norms": h_norms,
        "closed_forms": closed,
        "closed_form_discrepancy": discrepancy,
        "L_hat": L_hat,
        "growth_exponent": exponent,
        "growth_ratio": norm_product / M ** exponent,
    }
    return AtomApprox(l, M, bumps, g, hs, norm_product, residual, residual_h1, pi, near, far,
                      decomposition, correction, diagnostics)


# -- L^1 norms of sums of functions on different lattices ------------------------------

def piecewise_l1(pieces: Sequence[tuple[float, GridFunction]]) -> tuple[float, bool]:
    """L^1 norm of sum(c * f), each f read as constant on its grid cells.

    Exact in one dimension (sweep over sorted cell edges).  In higher
    dimensions returns the triangle-inequality bound and ``False``.
    """
    pieces = [(c, f) for c, f in pieces if c != 0 and not f.is_zero()]
    if not pieces:
        return 0.0, True
    if pieces[0][1].grid.dimension != 1:
        return float(sum(abs(c) * integrate(abs(f)) for c, f in pieces)), False
    edges, deltas, counts = [], [], []
    for c, f in pieces:
        g = f.grid
        nz = np.flatnonzero(f.flat)
        a, h, o = g.anchor[0], g.spacing[0], g.offset[0]
        v = c * f.flat[nz]
        edges += [a + (o + nz) * h, a + (o + nz + 1) * h]
        deltas += [v, -v]
        counts += [np.ones(len(nz), dtype=np.int64), -np.ones(len(nz), dtype=np.int64)]
    e = np.concatenate(edges)
    order = np.argsort(e, kind="stable")
    e = e[order]
    cnt = np.concatenate(counts)[order]
    val = kernels.sweep_sum(np.concatenate(deltas)[order], cnt)[:-1]
    active = np.cumsum(cnt)[:-1] > 0
    return float(np.sum(np.abs(val) * np.diff(e) * active)), True


# -- the iterated factorization --------------------------------------------------------

@dataclass
class FactorizationTerm:
    lam: float
    l: int
    g: GridFunction
    hs: list[GridFunction]
    round: int
    pi_parts: list[GridFunction] = field(default_factory=list, repr=False)
    norm_product: float = math.nan

    def common_grid(self) -> Grid:
        return union_grid([self.g.grid] + [h.grid for h in self.hs], margin=1)

    def on_common_grid(self) -> tuple[GridFunction, list[GridFunction]]:
        grid = self.common_grid()
        return embed(self.g, grid), [embed(h, grid) for h in self.hs]


@dataclass
class RoundRecord:
    k: int
    num_terms: int
    atomic_error: float
    l1_error: float
    lambda_l1: float
    pruned_mass: float
    defect_mass: float
    next_atoms: int
    l1_exact: bool
    seconds: float


@dataclass
class FactorizationResult:
    terms: list[FactorizationTerm]
    rounds: list[RoundRecord]
    lambda_l1: float
    config: dict
    initial_l1: float
    initial_atomic: float
    error_pieces: list[tuple[float, GridFunction]] = field(default_factory=list, repr=False)
    sources: list[GridFunction] = field(default_factory=list, repr=False)

    @property
    def round_errors(self) -> list[float]:
        return [r.l1_error for r in self.rounds]

    @property
    def atomic_errors(self) -> list[float]:
        return [r.atomic_error for r in self.rounds]

    @property
    def final_error(self) -> float:
        return self.rounds[-1].l1_error if self.rounds else self.initial_l1

    @property
    def max_norm_product(self) -> float:
        return max((t.norm_product for t in self.terms), default=0.0)

    def ratio_fit(self) -> "RatioFit":
        return fit_ratio(self.round_errors)


@dataclass(frozen=True)
class RatioFit:
    rho_bar: float
    ratios: tuple[float, ...]
    within_band: bool


def fit_ratio(errors: Sequence[float], band: tuple[float, float] = (0.3, 3.0)) -> RatioFit:
    """Least-squares geometric rate of ``errors`` (log-linear in the round index)."""
    e = np.asarray(errors, dtype=float)
    if len(e) < 2 or np.any(e <= 0):
        return RatioFit(math.nan, tuple(), False)
    k = np.arange(1, len(e) + 1)
    slope = np.polyfit(k, np.log(e), 1)[0]
    rho = float(math.exp(slope))
    ratios = tuple(float(x) for x in e[1:] / e[:-1])
    ok = all(band[0] * rho <= x <= band[1] * rho for x in ratios)
    return RatioFit(rho, ratios, ok)


def factorize(f1: GridFunction, f2: GridFunction, B1: Ball, B2: Ball, l: int, w: WeightVector,
              kp: KernelParams, M: float, K_max: int, prune_tol: float = 1e-6, *,
              dilation_ppr: float | None = 4, progress: Callable[[RoundRecord], None] | None = None
              ) -> FactorizationResult:
    """Iterated weak factorization of the two-bump function f1 + f2.

    Round k approximates every surviving atom by lambda * Pi_l(g, h) and
    decomposes the residuals into the atoms of round k + 1.  Atoms with
    |lambda| below ``prune_tol`` times the initial atomic norm are dropped and
    kept in the error budget.  The L^1 error of round k is the exact L^1 norm
    of f - sum of all Pi terms so far (one dimension; a triangle bound otherwise).
    """
    if K_max < 1:
        raise ValidationError("K_max must be at least 1")
    if not 1 <= l <= kp.m:
        raise IndexOutOfRange(f"slot {l} outside 1..{kp.m}")
    config = {"M": M, "K_max": K_max, "prune_tol": prune_tol, "l": l, "m": kp.m, "n": kp.n,
              "alpha": kp.alpha, "dilation_ppr": dilation_ppr}
    sources = [f1, f2]
    d0 = two_bump_decompose(f1, f2, B1, B2, math.inf, dilation_ppr)
    initial_l1, _ = piecewise_l1([(1.0, f1), (1.0, f2)])
    initial_atomic = atomic_h1_bound(d0)
    result = FactorizationResult([], [], 0.0, config, initial_l1, initial_atomic, [], sources)
    if not d0.terms:
        return result
    L_hat = 1.0 if w.is_unit else w.L_hat
    threshold = prune_tol * initial_atomic
    current = [(lam, a) for lam, a in d0.terms if abs(lam) >= threshold]
    pruned = [(lam, a.values) for lam, a in d0.terms if abs(lam) < threshold]
    pruned_mass = float(sum(abs(lam) for lam, _ in pruned))
    defect_mass = 0.0
    prev_l1 = initial_l1
    for k in range(1, K_max + 1):
        if not current:
            break
        t0 = time.perf_counter()
        pieces: list[tuple[float, GridFunction]] = []
        nxt: list[tuple[float, Atom]] = []
        carried: list[tuple[float, GridFunction]] = []
        for lam, atom in current:
            ap = approximate_atom(atom, l, w, kp, M, extend=True, dilation_ppr=dilation_ppr, L_hat=L_hat)
            bl = ap.bumps[l - 1]
            g = _crop_to(ap.g, bl)
            hs = [_crop_to(h, atom.ball if j == l - 1 else ap.bumps[j]) for j, h in enumerate(ap.hs)]
            inside = atom.ball.contains(ap.pi.grid.points()).reshape(ap.pi.grid.shape)
            pi_parts = [_crop_to(GridFunction(ap.pi.grid, ap.pi.values * inside), atom.ball),
                        _crop_to(GridFunction(ap.pi.grid, ap.pi.values * ~inside), bl)]
            result.terms.append(FactorizationTerm(lam, l, g, hs, k, pi_parts, ap.norm_product))
            pieces.append((lam, _crop_to(ap.near, atom.ball)))
            pieces.append((lam, _crop_to(ap.far, bl)))
            nxt.extend((lam * lam2, a2) for lam2, a2 in ap.decomposition.terms)
            if ap.diagnostics["mean_defect"] != 0.0:
                carried.append((lam, ap.mean_correction))
                defect_mass += abs(lam * ap.diagnostics["mean_defect"])
        l1_err, exact = piecewise_l1(pieces + pruned)
        pruned.extend(carried)
        kept = [(lam, a) for lam, a in nxt if abs(lam) >= threshold]
        newly = [(lam, a.values) for lam, a in nxt if abs(lam) < threshold]
        pruned.extend(newly)
        pruned_mass += float(sum(abs(lam) for lam, _ in newly))
        atomic_err = float(sum(abs(lam) for lam, _ in kept)) + pruned_mass
        result.lambda_l1 = float(sum(abs(t.lam) for t in result.terms))
        rec = RoundRecord(k, len(current), atomic_err, l1_err, result.lambda_l1, pruned_mass,
                          defect_mass, len(kept), exact, time.perf_counter() - t0)
        result.rounds.append(rec)
        result.error_pieces = pieces + pruned[: len(pruned) - len(newly) - len(carried)]
        log.info("round %d: %d terms, L1 error %.6g, atomic error %.6g", k, rec.num_terms, l1_err, atomic_err)
        if progress is not None:
            progress(rec)
        if l1_err > prev_l1:
            raise DivergingRounds(f"round {k} L1 error {l1_err:.6g} exceeds round {k - 1} error {prev_l1:.6g}",
                                  result)
        prev_l1 = l1_err
        current = kept
        if atomic_err < threshold:
            break
    return result


def series_error_l1(f_parts: Sequence[GridFunction], result: FactorizationResult) -> float:
    """L^1 norm of f - sum(lambda Pi) assembled from the stored Pi pieces."""
    pieces = [(1.0, f) for f in f_parts]
    for t in result.terms:
        pieces.extend((-t.lam, p) for p in t.pi_parts)
    return piecewise_l1(pieces)[0]


# -- duality with BMO multipliers ------------------------------------------------------------

def _sampler(b) -> Callable[[Grid], GridFunction]:
    if isinstance(b, GridFunction):
        src = b

        def sample(grid: Grid) -> GridFunction:
            if grid == src.grid:
                return src
            if src.grid.level_of(grid) != 0:
                raise GridMismatch("a sampled multiplier can only be read on its own lattice")
            idx = []
            for k in range(grid.dimension):
                i = grid.offset[k] - src.grid.offset[k] + np.arange(grid.shape[k])
                if i.min() < 0 or i.max() >= src.grid.shape[k]:
                    raise GridMismatch("term grid leaves the multiplier's box")
                idx.append(i)
            return GridFunction(grid, src.values[np.ix_(*idx)])
        return sample
    return lambda grid: GridFunction.from_callable(grid, b)


@dataclass(frozen=True)
class DualityReport:
    lhs: float
    rhs: float
    bound: float
    b_sup: float
    error_bound: float

    def as_tuple(self) -> tuple[float, float, float]:
        return self.lhs, self.rhs, self.bound


def duality_check(b, result: FactorizationResult, f: GridFunction | Sequence[GridFunction],
                  w: WeightVector, kp: KernelParams) -> DualityReport:
    """lhs = <b, f>; rhs = sum lambda <g, [b, I_alpha]_l(h)>; bound = sum |lambda| ||g|| ||[b, I_alpha]_l(h)||.

    The commutator norm is taken over each term's grid window.  ``error_bound``
    is sup|b| (over every node used) times the final L^1 error; ``|lhs - rhs|``
    stays below it whenever b is affine on each cell, where the quadratures on
    different lattices agree.
    """
    sample = _sampler(b)
    parts = [f] if isinstance(f, GridFunction) else list(f)
    lhs = 0.0
    b_sup = 0.0
    for part in parts:
        bp = sample(part.grid)
        lhs += pairing(bp, part)
        b_sup = max(b_sup, bp.max_abs())
    rhs = 0.0
    bound = 0.0
    cfg = w.config
    for t in result.terms:
        g, hs = t.on_common_grid()
        grid = g.grid
        bg = sample(grid)
        b_sup = max(b_sup, bg.max_abs())
        wv = w.on(grid)
        _, cvals = _commutator_values(t.l, bg, hs, kp)
        comm = GridFunction(grid, cvals)
        rhs += t.lam * pairing(g, comm)
        g_norm = weighted_lp_norm(g, wv.mu ** (1.0 - cfg.q_prime), cfg.q_prime)
        c_norm = weighted_lp_norm(comm, wv.mu, cfg.q)
        bound += abs(t.lam) * g_norm * c_norm
    return DualityReport(lhs, rhs, bound, b_sup, b_sup * result.final_error)


def commutator_norm_estimate(b: GridFunction, w: WeightVector, kp: KernelParams,
                             ensemble: Sequence[Sequence[GridFunction]], l: int = 1) -> float:
    """max over the ensemble of ||[b, I_alpha]_l(fs)||_{L^q(mu)} / prod ||f_j||_{L^{p_j}(omega_j^{p_j})}."""
    if not ensemble:
        raise ValidationError("ensemble is empty")
    wv = w.on(b.grid)
    cfg = w.config
    best = 0.0
    for fs in ensemble:
        den = math.prod(weighted_lp_norm(f, wv.omegas[j] ** cfg.p[j], cfg.p[j]) for j, f in enumerate(fs))
        if den == 0.0:
            raise ZeroDenominator("an ensemble tuple has a zero function")
        _, cvals = _commutator_values(l, b, list(fs), kp)
        num = weighted_lp_norm(GridFunction(b.grid, cvals), wv.mu, cfg.q)
        best = max(best, num / den)
    return best
