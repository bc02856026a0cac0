import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hfact.atoms import (Atom, AtomicDecomposition, atomic_h1_bound, ball_measure, canonical_atom,
                         maximal_h1_estimate, two_bump_decompose, validate_atom)
from hfact.errors import (DegenerateBall, EmptyScales, MeanNotZero, SeparationTooSmall,
                          SupportViolation, ValidationError)
from hfact.grid import Ball, Grid, GridFunction, ball_indicator, embed, integrate


@pytest.fixture
def line():
    return Grid.uniform(1, -2, 11, 105)


def unit_pair(grid, a=0.5, b=8.5, r=0.5):
    B1, B2 = Ball((a,), r), Ball((b,), r)
    return ball_indicator(grid, B1), -ball_indicator(grid, B2), B1, B2


# -- validation ---------------------------------------------------------------------

def test_validate_canonical_atom(line):
    atom = canonical_atom(line, Ball((4.0,), 1.0))
    rep = validate_atom(atom)
    assert rep.passed
    assert abs(integrate(atom.values)) <= 1e-14
    assert atom.values.max_abs() == pytest.approx(1 / ball_measure(line, atom.ball), rel=1e-12)


def test_validate_flags_each_failure(line):
    B = Ball((4.0,), 1.0)
    good = canonical_atom(line, B).values
    leak = good + ball_indicator(line, Ball((8.0,), 0.5)) * 0.01 - ball_indicator(line, Ball((0.0,), 0.5)) * 0.01
    rep = validate_atom(Atom(B, leak))
    assert not rep.support_ok and rep.support_slack > 0
    rep = validate_atom(Atom(B, good + ball_indicator(line, B) * 0.1))
    assert not rep.cancellation_ok
    rep = validate_atom(Atom(B, good * 2))
    assert not rep.size_ok and rep.size_slack == pytest.approx(1.0)


def test_canonical_atom_needs_room():
    g = Grid.uniform(1, -1, 1, 5)
    with pytest.raises(DegenerateBall):
        canonical_atom(g, Ball((0.0,), 0.1))


# -- two-bump decomposition ---------------------------------------------------------

def test_two_bump_example(line):
    f1, f2, B1, B2 = unit_pair(line)
    dec = two_bump_decompose(f1, f2, B1, B2, q=2)
    assert dec.info["J0"] == 5
    rec = dec.reconstruct()
    assert (rec - embed(f1 + f2, rec.grid)).max_abs() <= 1e-12
    assert all(validate_atom(a).passed for _, a in dec.terms)


def _nested_lambda(grid, inner: Ball, outer: Ball, mass: float) -> float:
    """mass * ||chi_in / m_in - chi_out / m_out||_2 * m_out^(1/2) with chi_in <= chi_out."""
    m1, m2 = ball_measure(grid, inner), ball_measure(grid, outer)
    return mass * math.sqrt((1 / m1 - 1 / m2) * m2)


def test_two_bump_coefficients_match_closed_form(line):
    f1, f2, B1, B2 = unit_pair(line)
    dec = two_bump_decompose(f1, f2, B1, B2, q=2)
    J0 = dec.info["J0"]
    big = Grid.uniform(1, -40, 49, 713)
    mid = Ball((4.5,), 2 ** (J0 + 1) * 0.5)
    mass = integrate(f1)
    expected = []
    for B in (B1, B2):
        # the first piece f - mean * chi_B vanishes for an indicator and is dropped
        expected += [_nested_lambda(big, B.scaled(2 ** (j - 2)), B.scaled(2 ** (j - 1)), mass) for j in range(2, J0 + 1)]
        expected.append(_nested_lambda(big, B.scaled(2 ** (J0 - 1)), mid, mass))
    got = sorted(abs(lam) for lam, _ in dec.terms)
    assert len(got) == len(expected)
    np.testing.assert_allclose(got, sorted(expected), rtol=1e-12)
    # continuum values: each dyadic step gives 1, the merge step sqrt(3)
    assert atomic_h1_bound(dec) == pytest.approx(2 * mass * (J0 - 1 + math.sqrt(3)), rel=5e-2)


@pytest.mark.parametrize("ratio", [8, 16, 32, 64, 128])
def test_two_bump_sum_grows_like_log(ratio):
    r, h = 0.5, 0.125
    d = ratio * r
    half = d / 2 + 4 * r
    g = Grid.uniform(1, -half, half, int(round(2 * half / h)) + 1)
    B1, B2 = Ball((-d / 2,), r), Ball((d / 2,), r)
    dec = two_bump_decompose(ball_indicator(g, B1), -ball_indicator(g, B2), B1, B2, 2.0)
    c = atomic_h1_bound(dec) / math.log2(ratio)
    assert 1.0 <= c <= 4.0


def test_two_bump_with_coarse_lattices(line):
    f1, f2, B1, B2 = unit_pair(line)
    dec = two_bump_decompose(f1, f2, B1, B2, q=math.inf, dilation_ppr=2)
    rec = dec.reconstruct()
    assert (rec - embed(f1 + f2, rec.grid)).max_abs() <= 1e-12
    assert all(validate_atom(a).passed for _, a in dec.terms)


def test_two_bump_zero_input(line):
    z = GridFunction.zeros(line)
    dec = two_bump_decompose(z, z, Ball((0.5,), 0.5), Ball((8.5,), 0.5))
    assert dec.terms == [] and atomic_h1_bound(dec) == 0.0
    with pytest.raises(ValidationError):
        dec.reconstruct()
    assert dec.reconstruct(line).is_zero()


def test_two_bump_errors(line):
    f1, f2, B1, B2 = unit_pair(line)
    with pytest.raises(SeparationTooSmall):
        two_bump_decompose(f1, f2, B1, Ball((1.5,), 0.5))
    with pytest.raises(MeanNotZero):
        two_bump_decompose(f1, f2 * 0.5, B1, B2)
    with pytest.raises(SupportViolation):
        two_bump_decompose(f1, f2, Ball((0.0,), 0.5), B2)
    with pytest.raises(ValidationError):
        two_bump_decompose(f1, f2, B1, Ball((8.5,), 0.75))


@given(st.floats(-100, 100).filter(lambda c: abs(c) > 1e-3))
def test_h1_bound_is_homogeneous(c):
    g = Grid.uniform(1, -2, 11, 105)
    f1, f2, B1, B2 = unit_pair(g)
    dec = two_bump_decompose(f1, f2, B1, B2, 2.0)
    scaled = two_bump_decompose(f1 * c, f2 * c, B1, B2, 2.0)
    assert atomic_h1_bound(scaled) == pytest.approx(abs(c) * atomic_h1_bound(dec), rel=1e-12)
    assert atomic_h1_bound(dec.scaled(c)) == pytest.approx(abs(c) * atomic_h1_bound(dec), rel=1e-12)


# -- maximal estimate -----------------------------------------------------------------

def test_maximal_estimate_zero_and_homogeneous(line):
    assert maximal_h1_estimate(GridFunction.zeros(line)) == 0.0
    a = canonical_atom(line, Ball((4.0,), 1.0)).values
    base = maximal_h1_estimate(a)
    assert base > 0
    assert maximal_h1_estimate(a * -3.0) == pytest.approx(3 * base, rel=1e-12)


def test_maximal_estimate_bounded_by_atomic_sum(line):
    f1, f2, B1, B2 = unit_pair(line)
    dec = two_bump_decompose(f1, f2, B1, B2, 2.0)
    assert maximal_h1_estimate(f1 + f2) <= 50 * atomic_h1_bound(dec)


@pytest.mark.parametrize("scales", [[0.5, 1.0], [0.01, 1.0, 2.0], []])
def test_maximal_estimate_rejects_bad_scales(line, scales):
    with pytest.raises(EmptyScales):
        maximal_h1_estimate(ball_indicator(line, Ball((4.0,), 1.0)), scales)
