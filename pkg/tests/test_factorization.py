import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hfact import factorization as fz
from hfact.atoms import canonical_atom, validate_atom
from hfact.errors import (BumpOutsideBox, DivergingRounds, GridMismatch, IndexOutOfRange, NormalizerTooSmall,
                          ValidationError, ZeroDenominator)
from hfact.factorization import (approximate_atom, bump_chain, commutator_norm_estimate, duality_check,
                                 factorize, fit_ratio, piecewise_l1, series_error_l1)
from hfact.grid import Ball, Grid, GridFunction, ball_indicator, embed, integrate
from hfact.weights import WeightVector


@pytest.fixture
def atom(grid129):
    return canonical_atom(grid129, Ball((-6.0,), 0.5))


@pytest.fixture(scope="module")
def small_run():
    from hfact.weights import ExponentConfig
    ec = ExponentConfig(2, 1, 0.25, (4.0, 4.0), 4.0)
    g = Grid.uniform(1, -8, 8, 129)
    w = WeightVector.unit(ec, g)
    B1, B2 = Ball((-4.0,), 0.5), Ball((4.0,), 0.5)
    f1, f2 = ball_indicator(g, B1), -ball_indicator(g, B2)
    res = factorize(f1, f2, B1, B2, 1, w, ec.kernel_params(), 32, 2, 1e-10)
    return res, (f1, f2), w, ec.kernel_params()


def brute_normalizer(kp, g, h, x0):
    """sum_x g(x) sum_t h(t) (|x - x0| + |x - t|)^e with quadrature weights."""
    pts = g.grid.points()[:, 0]
    wts = g.grid.weights.ravel()
    total = 0.0
    for i in np.flatnonzero(g.flat):
        for j in np.flatnonzero(h.flat):
            s = abs(pts[i] - x0) + abs(pts[i] - pts[j])
            total += g.flat[i] * h.flat[j] * wts[i] * wts[j] * s ** kp.exponent
    return total


# -- single-atom approximation ----------------------------------------------------------

@pytest.mark.parametrize("l, expected", [(1, [(10.0,), (18.0,)]), (2, [(18.0,), (10.0,)])])
def test_bump_chain_positions(l, expected):
    balls = bump_chain((2.0,), 0.5, 16, l, 2)
    assert [b.center for b in balls] == expected
    assert all(b.radius == 0.5 for b in balls)


def test_unit_weights_give_indicators(atom, unit_weights, kp):
    ap = approximate_atom(atom, 1, unit_weights, kp, 16, extend=True)
    chis = [ball_indicator(ap.g.grid, b) for b in ap.bumps]
    assert np.array_equal(ap.g.values, chis[0].values)
    assert np.array_equal(ap.hs[1].values, chis[1].values)


def test_normalizer_matches_direct_sum(atom, unit_weights, kp):
    ap = approximate_atom(atom, 1, unit_weights, kp, 16, extend=True)
    N0 = brute_normalizer(kp, ap.g, ap.hs[1], -6.0)
    assert ap.diagnostics["normalizer"] == pytest.approx(N0, rel=1e-12)
    target = embed(atom.values, ap.hs[0].grid).values
    np.testing.assert_allclose(ap.hs[0].values * N0, target, rtol=1e-12, atol=1e-14 * np.abs(target).max())


def test_residual_mean_and_support(atom, unit_weights, kp):
    ap = approximate_atom(atom, 1, unit_weights, kp, 16, extend=True)
    assert abs(ap.diagnostics["residual_integral"]) <= 1e-12 * integrate(abs(ap.residual))
    pts = ap.residual.grid.points()
    allowed = atom.ball.contains(pts) | ap.bumps[0].contains(pts)
    assert np.all(ap.residual.values[~allowed] == 0)
    assert ap.diagnostics["cancellation_ratio"] <= 1e-12


def test_closed_form_norms(atom, unit_weights, kp):
    ap = approximate_atom(atom, 1, unit_weights, kp, 16, extend=True)
    assert max(ap.diagnostics["closed_form_discrepancy"].values()) <= 1e-12
    assert ap.diagnostics["size_constant"] < math.inf


def test_residual_decomposes_into_valid_atoms(atom, unit_weights, kp):
    ap = approximate_atom(atom, 1, unit_weights, kp, 16, extend=True, dilation_ppr=4)
    assert ap.decomposition.terms
    assert all(validate_atom(a).passed for _, a in ap.decomposition.terms)
    rec = ap.decomposition.reconstruct()
    target = (fz._crop_to(ap.near, atom.ball) - ap.mean_correction)
    assert ap.residual_h1 > 0 and rec.max_abs() == pytest.approx(max(target.max_abs(), ap.far.max_abs()), rel=1e-9)


@pytest.mark.parametrize("M", [8, 16, 32, 64])
def test_residual_shrinks_with_M(atom, unit_weights, kp, M):
    small = approximate_atom(atom, 1, unit_weights, kp, M, extend=True, dilation_ppr=4).residual_h1
    large = approximate_atom(atom, 1, unit_weights, kp, 2 * M, extend=True, dilation_ppr=4).residual_h1
    assert large < small


def test_bump_outside_box(atom, unit_weights, kp):
    with pytest.raises(BumpOutsideBox):
        approximate_atom(atom, 1, unit_weights, kp, 32, extend=False)


def test_bad_arguments(atom, unit_weights, kp):
    with pytest.raises(IndexOutOfRange):
        approximate_atom(atom, 3, unit_weights, kp, 16, extend=True)
    with pytest.raises(ValidationError):
        approximate_atom(atom, 1, unit_weights, kp, 2, extend=True)


def test_normalizer_too_small(atom, exponents, grid129, kp):
    specs = [{"kind": "constant", "c": 1.0}, {"kind": "constant", "c": 1e30}]
    w = WeightVector.from_specs(specs, exponents, grid129)
    with pytest.raises(NormalizerTooSmall):
        approximate_atom(atom, 1, w, kp, 16, extend=True)


# -- L^1 sweep and ratio fit --------------------------------------------------------------

def _piecewise_oracle(pieces):
    """Refine to the common partition of all cell edges and add midpoint values."""
    edges = set()
    for _, f in pieces:
        g = f.grid
        a, h, o = g.anchor[0], g.spacing[0], g.offset[0]
        edges.update(a + (o + np.arange(g.shape[0] + 1)) * h)
    e = np.array(sorted(edges))
    mids = (e[:-1] + e[1:]) / 2
    total = np.zeros_like(mids)
    for c, f in pieces:
        g = f.grid
        a, h, o = g.anchor[0], g.spacing[0], g.offset[0]
        idx = np.floor((mids - a) / h).astype(int) - o
        ok = (idx >= 0) & (idx < g.shape[0])
        total[ok] += c * f.flat[idx[ok]]
    return float(np.sum(np.abs(total) * np.diff(e)))


def test_piecewise_l1_mixed_lattices(rng):
    fine = Grid.uniform(1, -4, 4, 65)
    coarse = fine.coarsened(2)
    pieces = [(1.0, GridFunction(fine, rng.normal(size=fine.shape))),
              (-0.5, GridFunction(coarse, rng.normal(size=coarse.shape))),
              (2.0, GridFunction(fine.window((1.0,), (2.0,), 1), 1.0 + 0 * fine.window((1.0,), (2.0,), 1).weights))]
    val, exact = piecewise_l1(pieces)
    assert exact
    assert val == pytest.approx(_piecewise_oracle(pieces), rel=1e-12)


def test_piecewise_l1_cancels_exactly(grid129):
    f = ball_indicator(grid129, Ball((1.0,), 2.0))
    assert piecewise_l1([(1.0, f), (-1.0, f)]) == (0.0, True)
    assert piecewise_l1([]) == (0.0, True)
    assert piecewise_l1([(3.0, f)])[0] == pytest.approx(3 * integrate(f), rel=1e-14)


def test_fit_ratio_exact_geometric():
    fit = fit_ratio([1.0, 0.1, 0.01, 0.001])
    assert fit.rho_bar == pytest.approx(0.1, rel=1e-12)
    assert fit.within_band
    assert not fit_ratio([1.0, 0.1, 0.09, 0.001]).within_band
    assert math.isnan(fit_ratio([1.0]).rho_bar)


# -- iterated factorization -------------------------------------------------------------

def test_zero_input_gives_empty_result(grid129, unit_weights, kp):
    B1, B2 = Ball((-4.0,), 0.5), Ball((4.0,), 0.5)
    z = GridFunction.zeros(grid129)
    res = factorize(z, z, B1, B2, 1, unit_weights, kp, 32, 3)
    assert res.terms == [] and res.rounds == [] and res.final_error == 0.0


def test_small_run_errors_decrease(small_run):
    res, parts, _, _ = small_run
    errs = res.round_errors
    assert len(errs) == 2
    assert errs[1] < errs[0] < res.initial_l1
    assert all(r.l1_exact for r in res.rounds)
    assert res.lambda_l1 == pytest.approx(sum(abs(t.lam) for t in res.terms))


def test_small_run_matches_series_oracle(small_run):
    res, parts, _, _ = small_run
    # the stored error pieces exclude pruned atoms, which the oracle also misses
    oracle = series_error_l1(list(parts), res)
    assert abs(oracle - res.final_error) <= 1e-6 * res.initial_l1 + res.rounds[-1].pruned_mass


def test_smaller_M_converges_slower(two_bumps, unit_weights, kp):
    f1, f2, B1, B2 = two_bumps
    slow = factorize(f1, f2, B1, B2, 1, unit_weights, kp, 5, 2, 1e-10).ratio_fit().rho_bar
    fast = factorize(f1, f2, B1, B2, 1, unit_weights, kp, 32, 2, 1e-10).ratio_fit().rho_bar
    assert slow > fast


def test_diverging_rounds_keep_partial_result(two_bumps, unit_weights, kp, monkeypatch):
    f1, f2, B1, B2 = two_bumps
    calls = iter([(8.0, True), (100.0, True)])
    monkeypatch.setattr(fz, "piecewise_l1", lambda pieces: next(calls, (1000.0, True)))
    with pytest.raises(DivergingRounds) as info:
        factorize(f1, f2, B1, B2, 1, unit_weights, kp, 8, 3, 1e-10)
    assert len(info.value.result.rounds) == 1
    assert info.value.result.rounds[0].l1_error == 100.0


@pytest.mark.parametrize("c", [0.25, 3.0])
def test_scale_equivariance(two_bumps, unit_weights, kp, c):
    f1, f2, B1, B2 = two_bumps
    base = factorize(f1, f2, B1, B2, 1, unit_weights, kp, 8, 2, 1e-10)
    scaled = factorize(f1 * c, f2 * c, B1, B2, 1, unit_weights, kp, 8, 2, 1e-10)
    np.testing.assert_allclose(scaled.round_errors, np.array(base.round_errors) * c, rtol=1e-9)
    assert scaled.lambda_l1 == pytest.approx(c * base.lambda_l1, rel=1e-12)
    assert len(scaled.terms) == len(base.terms)


def test_bad_K(two_bumps, unit_weights, kp):
    f1, f2, B1, B2 = two_bumps
    with pytest.raises(ValidationError):
        factorize(f1, f2, B1, B2, 1, unit_weights, kp, 8, 0)


# -- duality and commutator estimates -----------------------------------------------------

def test_duality_constant_multiplier(small_run):
    res, parts, w, kp = small_run
    rep = duality_check(lambda p: np.full(len(p), 2.5), res, list(parts), w, kp)
    assert rep.lhs == 0.0
    assert abs(rep.rhs) <= 1e-10


@pytest.mark.parametrize("b", [lambda p: p[:, 0], lambda p: 0.3 * p[:, 0] - 1.0])
def test_duality_affine_multiplier(small_run, b):
    res, parts, w, kp = small_run
    rep = duality_check(b, res, list(parts), w, kp)
    assert abs(rep.lhs - rep.rhs) <= rep.error_bound
    assert abs(rep.rhs) <= rep.bound


def test_duality_sampled_multiplier_needs_its_lattice(small_run):
    res, parts, w, kp = small_run
    wide = parts[0].grid.window((-2000.0,), (2000.0,), 0)
    b = GridFunction.from_callable(wide, lambda p: np.sin(p[:, 0]))
    # later atoms live on coarsened lattices whose nodes are not nodes of b
    with pytest.raises(GridMismatch):
        duality_check(b, res, list(parts), w, kp)


def test_duality_sampled_matches_callable(small_run):
    res, parts, w, kp = small_run
    base = parts[0].grid
    fine = [t for t in res.terms if t.common_grid().level_of(base) == 0]
    assert fine
    sub = fz.FactorizationResult(fine, res.rounds, 0.0, res.config, res.initial_l1, res.initial_atomic)
    wide = base.window((-2000.0,), (2000.0,), 0)
    fn = lambda p: np.sin(p[:, 0])
    sampled = duality_check(GridFunction.from_callable(wide, fn), sub, list(parts), w, kp)
    direct = duality_check(fn, sub, list(parts), w, kp)
    assert sampled.as_tuple() == direct.as_tuple()


def _ensemble(grid):
    return [[ball_indicator(grid, Ball((c,), 1.0)), ball_indicator(grid, Ball((c + s,), 1.0))]
            for c in (-3.0, 0.0, 2.0) for s in (0.0, 2.5)]


def test_commutator_estimate_of_constant(grid129, unit_weights, kp):
    assert commutator_norm_estimate(GridFunction.constant(grid129, 7.0), unit_weights, kp,
                                    _ensemble(grid129)) <= 1e-12


@given(st.floats(-50, 50).filter(lambda c: abs(c) > 1e-3))
def test_commutator_estimate_homogeneous(c):
    from hfact.weights import ExponentConfig
    ec = ExponentConfig(2, 1, 0.25, (4.0, 4.0), 4.0)
    g = Grid.uniform(1, -8, 8, 65)
    w = WeightVector.unit(ec, g)
    b = GridFunction.from_callable(g, lambda p: np.log(1 + np.abs(p[:, 0])))
    ens = _ensemble(g)
    base = commutator_norm_estimate(b, w, ec.kernel_params(), ens)
    assert commutator_norm_estimate(b * c, w, ec.kernel_params(), ens) == pytest.approx(abs(c) * base, rel=1e-12)


def test_commutator_estimate_errors(grid129, unit_weights, kp):
    b = GridFunction.from_callable(grid129, lambda p: p[:, 0])
    with pytest.raises(ValidationError):
        commutator_norm_estimate(b, unit_weights, kp, [])
    with pytest.raises(ZeroDenominator):
        commutator_norm_estimate(b, unit_weights, kp, [[GridFunction.zeros(grid129), b]])
