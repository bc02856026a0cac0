"""The acceptance battery: one check function per criterion.

Each check returns a :class:`CheckResult` with the measured quantities, so the
CLI ``suite`` command and the test-suite run exactly the same code.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .atoms import atomic_h1_bound, canonical_atom, two_bump_decompose, validate_atom
from .config import ExperimentConfig, evaluate_multiplier
from .factorization import approximate_atom, commutator_norm_estimate, factorize, series_error_l1
from .grid import Ball, Grid, GridFunction, ball_indicator, embed, integrate
from .operators import _commutator_values, apply_ialpha, apply_partial_adjoint, pairing
from .weights import CubeFamily, WeightVector, ap_constant, apq_constant, bmo_norm, weighted_lp_norm

M_SWEEP = (8.0, 16.0, 32.0, 64.0)


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        keys = ", ".join(f"{k}={_short(v)}" for k, v in sorted(self.measured.items()) if _is_scalar(v))
        return f"[{status}] criterion {self.number}: {self.name} ({keys}; {self.seconds:.1f}s)"


def _is_scalar(v) -> bool:
    return isinstance(v, (bool, int, float, np.floating, np.integer))


def _short(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.4g}"


def _timed(number: int, name: str, fn: Callable[[], tuple[bool, dict]]) -> CheckResult:
    t0 = time.perf_counter()
    passed, measured = fn()
    return CheckResult(number, name, bool(passed), measured, time.perf_counter() - t0)


def _smooth(grid: Grid, rng: np.random.Generator, terms: int = 3) -> GridFunction:
    """Random sum of Gaussians, compactly cut to the inner half of the box."""
    x = grid.points()[:, 0]
    lo, hi = grid.axis_min[0], grid.axis_max[0]
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    vals = np.zeros_like(x)
    for _ in range(terms):
        c = rng.uniform(mid - half / 2, mid + half / 2)
        s = rng.uniform(0.3, 2.0) * half / 8
        vals += rng.normal() * np.exp(-((x - c) / s) ** 2)
    return GridFunction(grid, vals)


# -- shared constructions --------------------------------------------------------------

@lru_cache(maxsize=4)
def _m_sweep(cfg_json: str, weights_key: str = "config"):
    cfg = ExperimentConfig.from_dict(json.loads(cfg_json))
    grid = cfg.build_grid()
    ec = cfg.exponent_config()
    kp = ec.kernel_params()
    w = cfg.weight_vector(grid) if weights_key == "config" else WeightVector.from_specs(
        [{"kind": "power", "a": 0.1}] + [{"kind": "constant", "c": 1.0}] * (ec.m - 1), ec, grid)
    atom = canonical_atom(grid, cfg.atom_ball())
    out = []
    for M in M_SWEEP:
        for l in range(1, ec.m + 1):
            out.append((M, l, approximate_atom(atom, l, w, kp, M, extend=True, dilation_ppr=cfg.dilation_ppr)))
    return out


def _sweep(cfg: ExperimentConfig, weights_key: str = "config"):
    return _m_sweep(cfg.to_json(), weights_key)


# -- criteria ------------------------------------------------------------------------------

def check_adjoint_identity(cfg: ExperimentConfig, tuples: int = 20, seed: int = 1) -> CheckResult:
    def run():
        grid = cfg.build_grid()
        kp = cfg.exponent_config().kernel_params()
        rng = np.random.default_rng(seed)
        worst = 0.0
        for i in range(tuples):
            fs = [_smooth(grid, rng) for _ in range(kp.m)]
            g = _smooth(grid, rng)
            l = 1 + i % kp.m
            lhs = pairing(apply_ialpha(kp, fs), g)
            args = list(fs)
            args[l - 1] = g
            rhs = pairing(fs[l - 1], apply_partial_adjoint(l, kp, args))
            scale = pairing(apply_ialpha(kp, [abs(f) for f in fs]), abs(g))
            worst = max(worst, abs(lhs - rhs) / scale)
        return worst <= 1e-10, {"max_relative_gap": worst, "tuples": tuples}
    return _timed(1, "adjoint pairing identity", run)


def check_cancellation(cfg: ExperimentConfig) -> CheckResult:
    def run():
        worst = 0.0
        count = 0
        for key in ("config", "power"):
            for M, l, ap in _sweep(cfg, key):
                worst = max(worst, ap.diagnostics["cancellation_ratio"])
                count += 1
        return worst <= 1e-8, {"max_cancellation_ratio": worst, "constructions": count}
    return _timed(2, "cancellation of Pi_l", run)


def check_duality_identity(cfg: ExperimentConfig, samples: int = 10, seed: int = 2) -> CheckResult:
    def run():
        ec = cfg.exponent_config()
        kp = ec.kernel_params()
        grid = cfg.build_grid()
        w = cfg.weight_vector(grid)
        atom = canonical_atom(grid, cfg.atom_ball())
        ap = approximate_atom(atom, cfg.l, w, kp, 16.0, extend=True, decompose=False)
        g, hs, pi = ap.g, ap.hs, ap.pi
        big = g.grid
        wv = w.on(big)
        rng = np.random.default_rng(seed)
        x = big.points()[:, 0]
        worst_gap = 0.0
        worst_slack = -math.inf
        for _ in range(samples):
            a, f, c = rng.normal(size=3)
            b = GridFunction(big, a * np.sin(f * x / 4) + c * np.log(np.abs(x - rng.uniform(-4, 4)) + 0.5))
            lhs = pairing(b, pi)
            _, cvals = _commutator_values(cfg.l, b, hs, kp)
            comm = GridFunction(big, cvals)
            rhs = pairing(g, comm)
            scale = integrate(abs(b) * abs(pi)) + integrate(abs(g) * abs(comm))
            worst_gap = max(worst_gap, abs(lhs - rhs) / scale)
            bound = (weighted_lp_norm(g, wv.mu ** (1.0 - ec.q_prime), ec.q_prime)
                     * weighted_lp_norm(comm, wv.mu, ec.q))
            worst_slack = max(worst_slack, abs(rhs) - bound)
        ok = worst_gap <= 1e-10 and worst_slack <= 1e-12
        return ok, {"max_relative_gap": worst_gap, "max_holder_excess": worst_slack, "samples": samples}
    return _timed(3, "duality identity and Hoelder bound", run)


SEPARATION_RATIOS = (8, 16, 32, 64, 128)


def two_bump_sweep(ratios=SEPARATION_RATIOS, r: float = 0.5, h: float = 0.125, q: float = 2.0):
    """Sum |lambda| and reconstruction error for chi_B1 - chi_B2 at separations d/r."""
    out = []
    for ratio in ratios:
        d = ratio * r
        half = d / 2 + 4 * r
        pts = int(round(2 * half / h)) + 1
        grid = Grid.uniform(1, -half, half, pts)
        B1, B2 = Ball((-d / 2,), r), Ball((d / 2,), r)
        f1, f2 = ball_indicator(grid, B1), -ball_indicator(grid, B2)
        dec = two_bump_decompose(f1, f2, B1, B2, q)
        rec = dec.reconstruct()
        err = (rec - embed(f1 + f2, rec.grid)).max_abs()
        valid = all(validate_atom(a).passed for _, a in dec.terms)
        out.append((ratio, atomic_h1_bound(dec), err, valid, dec.info["J0"]))
    return out


def check_two_bump(cfg: ExperimentConfig | None = None) -> CheckResult:
    def run():
        rows = two_bump_sweep()
        consts = [s / math.log2(ratio) for ratio, s, _, _, _ in rows]
        err = max(e for _, _, e, _, _ in rows)
        spread = max(consts) / min(consts)
        ok = err <= 1e-12 and spread <= 3.0 and all(v for *_, v, _ in rows)
        return ok, {"max_reconstruction_error": err, "C_fit": max(consts), "C_spread": spread,
                    "all_atoms_valid": all(v for *_, v, _ in rows)}
    return _timed(4, "two-bump decomposition", run)


def check_decay(cfg: ExperimentConfig) -> CheckResult:
    def run():
        vals = [ap.residual_h1 for M, l, ap in _sweep(cfg) if l == cfg.l]
        decreasing = all(b < a for a, b in zip(vals, vals[1:]))
        ratio = vals[-1] / vals[0]
        measured = {f"residual_h1_M{int(M)}": v for M, v in zip(M_SWEEP, vals)}
        measured["ratio_64_to_8"] = ratio
        return decreasing and ratio <= 0.5, measured
    return _timed(5, "residual decay in M", run)


def check_factorization(cfg: ExperimentConfig, M: float | None = None, K_max: int | None = None,
                        progress=None) -> CheckResult:
    def run():
        grid = cfg.build_grid()
        kp = cfg.exponent_config().kernel_params()
        w = cfg.weight_vector(grid)
        B1, B2 = cfg.balls()
        f1, f2 = ball_indicator(grid, B1), -ball_indicator(grid, B2)
        res = factorize(f1, f2, B1, B2, cfg.l, w, kp, M or cfg.factorize_M, K_max or cfg.K_max,
                        cfg.prune_tol, dilation_ppr=cfg.dilation_ppr, progress=progress)
        fit = res.ratio_fit()
        errs = res.round_errors
        oracle = series_error_l1([f1, f2], res)
        decreasing = all(b < a for a, b in zip(errs, errs[1:]))
        ok = (len(errs) == (K_max or cfg.K_max) and decreasing and fit.rho_bar < 1 and fit.within_band)
        measured = {"rho_bar": fit.rho_bar, "rounds": len(errs), "final_l1": errs[-1] if errs else 0.0,
                    "oracle_l1": oracle, "within_band": fit.within_band, "lambda_l1": res.lambda_l1}
        measured.update({f"l1_round{k + 1}": e for k, e in enumerate(errs)})
        measured["result"] = res
        return ok, measured
    return _timed(6, "geometric decay of factorization rounds", run)


def check_norm_growth(cfg: ExperimentConfig) -> CheckResult:
    def run():
        ec = cfg.exponent_config()
        rows = [(M, ap.norm_product) for M, l, ap in _sweep(cfg) if l == cfg.l]
        slope = float(np.polyfit(np.log([M for M, _ in rows]), np.log([v for _, v in rows]), 1)[0])
        limit = ec.m * ec.n * 2 - ec.alpha + 0.5
        return slope <= limit, {"fitted_slope": slope, "slope_limit": limit}
    return _timed(7, "norm-product growth in M", run)


def check_weight_constants(cfg: ExperimentConfig, samples: int = 50, seed: int = 3) -> CheckResult:
    def run():
        grid = cfg.build_grid()
        ec = cfg.exponent_config()
        F = CubeFamily.dyadic(grid)
        ones = WeightVector.unit(ec, grid)
        apq_one = apq_constant(ones, F)
        rng = np.random.default_rng(seed)
        min_ap = math.inf
        worst_scale = 0.0
        for i in range(samples):
            w = GridFunction(grid, np.exp(rng.normal(scale=1.0, size=grid.shape)))
            p = float(rng.uniform(1.2, 6.0))
            a = ap_constant(w, p, F)
            min_ap = min(min_ap, a)
            if i < 10:
                for c in (0.1, 7.0, 100.0):
                    worst_scale = max(worst_scale, abs(ap_constant(w * c, p, F) / a - 1.0))
        ok = apq_one == 1.0 and min_ap >= 1.0 and worst_scale <= 1e-12
        return ok, {"apq_all_ones": apq_one, "min_ap": min_ap, "max_scale_drift": worst_scale}
    return _timed(8, "weight constants", run)


def default_ensemble(grid: Grid, m: int = 2) -> list[list[GridFunction]]:
    """Indicator tuples at several scales and positions, all slots on the same ball."""
    out = []
    lo, hi = grid.axis_min[0], grid.axis_max[0]
    h = grid.spacing[0]
    for s in (2 * h, 4 * h, 0.125 * (hi - lo), 0.25 * (hi - lo)):
        for c in (-0.25 * (hi - lo) + (lo + hi) / 2, (lo + hi) / 2, 0.2 * (hi - lo) + (lo + hi) / 2):
            if c - s < lo or c + s > hi:
                continue
            chi = ball_indicator(grid, Ball((c,), s))
            out.append([chi] * m)
    return out


def check_bmo_comparability(cfg: ExperimentConfig) -> CheckResult:
    def run():
        grid = cfg.build_grid()
        ec = cfg.exponent_config()
        kp = ec.kernel_params()
        w = cfg.weight_vector(grid)
        F = CubeFamily.dyadic(grid)
        ens = default_ensemble(grid, ec.m)
        zero = commutator_norm_estimate(GridFunction.constant(grid, 3.0), w, kp, ens, cfg.l)
        ratios = []
        for spec in cfg.multipliers:
            b = evaluate_multiplier(spec, grid)
            ratios.append(commutator_norm_estimate(b, w, kp, ens, cfg.l) / bmo_norm(b, F))
        lo, hi = min(ratios), max(ratios)
        ok = zero == 0.0 and lo >= 1 / 50 and hi <= 50
        return ok, {"constant_estimate": zero, "band_low": lo, "band_high": hi, "band_width": hi / lo,
                    "multipliers": len(ratios)}
    return _timed(9, "commutator norm versus BMO norm", run)


CHECKS = {
    1: check_adjoint_identity,
    2: check_cancellation,
    3: check_duality_identity,
    4: check_two_bump,
    5: check_decay,
    6: check_factorization,
    7: check_norm_growth,
    8: check_weight_constants,
    9: check_bmo_comparability,
}


def run_all(cfg: ExperimentConfig | None = None, only=None, echo=print) -> list[CheckResult]:
    cfg = cfg or ExperimentConfig()
    results = []
    for k, fn in CHECKS.items():
        if only and k not in only:
            continue
        res = fn(cfg)
        if echo is not None:
            echo(res.line())
        results.append(res)
    return results
