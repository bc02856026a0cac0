"""Command line entry point: ``hfact <subcommand> [--config PATH] [--out DIR] [--threads K]``.

Exit codes: 0 success, 1 acceptance failure (``suite`` only), 2 invalid
input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import _accel
from .acceptance import default_ensemble, run_all
from .atoms import canonical_atom
from .config import ExperimentConfig, evaluate_multiplier, multiplier_function
from .errors import ConfigError, DivergingRounds, NumericalFailure, ValidationError
from .factorization import approximate_atom, commutator_norm_estimate, duality_check, factorize
from .grid import ball_indicator
from .operators import apply_ialpha, apply_partial_adjoint
from .report import Report, emit_report, factorization_report
from .weights import (CubeFamily, a_vecp_constant, ap_constant, apq_constant, bmo_norm,
                      doubling_exponents, dual_class_constants)

SUBCOMMANDS = ("constants", "apply", "atom-approx", "factorize", "duality", "bmo-bound", "suite")

log = logging.getLogger("hfact")


def _constants(cfg: ExperimentConfig) -> list[Report]:
    grid = cfg.build_grid()
    w = cfg.weight_vector(grid)
    ec = w.config
    F = CubeFamily.dyadic(grid)
    classes = dual_class_constants(w, F)
    doubling = [doubling_exponents(mu, F)._asdict() for mu in w.duals]
    summary = {
        "apq_constant": apq_constant(w, F),
        "a_vecp_constant": a_vecp_constant(w, F),
        "ap_constants": [ap_constant(om, p, F) for om, p in zip(w.omegas, ec.p)],
        "dual_classes": classes,
        "doubling_duals": doubling,
        "cubes": len(F.sides),
    }
    rows = [[i + 1, summary["ap_constants"][i], classes["duals"][i], d["epsilon_hat"], d["L_hat"], d["C_hat"]]
            for i, d in enumerate(doubling)]
    header = ("i", "ap_constant", "dual_ap_constant", "epsilon_hat", "L_hat", "C_hat")
    return [Report("constants", summary, {"weights": (header, rows)})]


def _apply(cfg: ExperimentConfig) -> list[Report]:
    grid = cfg.build_grid()
    kp = cfg.exponent_config().kernel_params()
    balls = cfg.balls()
    fs = [ball_indicator(grid, balls[j % len(balls)]) for j in range(kp.m)]
    ia = apply_ialpha(kp, fs)
    adj = apply_partial_adjoint(cfg.l, kp, fs)
    x = grid.points()[:, 0]
    rows = [[float(x[i]), float(ia.flat[i]), float(adj.flat[i])] for i in range(grid.size)]
    summary = {"grid": grid.header(), "max_ialpha": ia.max_abs(), "max_adjoint": adj.max_abs(), "slot": cfg.l}
    header = ("x", "ialpha", "adjoint")
    return [Report("apply", summary, {"values": (header, rows)}, {"values": (header, rows)})]


def _atom_approx(cfg: ExperimentConfig) -> list[Report]:
    grid = cfg.build_grid()
    kp = cfg.exponent_config().kernel_params()
    w = cfg.weight_vector(grid)
    atom = canonical_atom(grid, cfg.atom_ball())
    rows, per_m = [], []
    for M in cfg.M:
        ap = approximate_atom(atom, cfg.l, w, kp, M, extend=cfg.extend_box, dilation_ppr=cfg.dilation_ppr)
        d = ap.diagnostics
        rows.append([M, ap.residual_h1, ap.norm_product, d["normalizer_constant"], d["size_constant"],
                     d["cancellation_ratio"]])
        per_m.append({"M": M, "residual_h1": ap.residual_h1, "norm_product": ap.norm_product,
                      "diagnostics": {k: v for k, v in d.items()}})
    header = ("M", "residual_h1", "norm_product", "normalizer_constant", "size_constant", "cancellation_ratio")
    plot = [[r[0], r[1]] for r in rows]
    return [Report("atom_approx", {"sweep": per_m, "slot": cfg.l},
                   {"sweep": (header, rows)}, {"residual": (("M", "residual_h1"), plot)})]


def _run_factorize(cfg: ExperimentConfig, progress=None):
    grid = cfg.build_grid()
    kp = cfg.exponent_config().kernel_params()
    w = cfg.weight_vector(grid)
    B1, B2 = cfg.balls()
    f1, f2 = ball_indicator(grid, B1), -ball_indicator(grid, B2)
    res = factorize(f1, f2, B1, B2, cfg.l, w, kp, cfg.factorize_M, cfg.K_max, cfg.prune_tol,
                    dilation_ppr=cfg.dilation_ppr, progress=progress)
    return res, (f1, f2), w, kp


def _progress(rec):
    log.info("round %d: %d terms, l1 error %.6g", rec.k, rec.num_terms, rec.l1_error)


def _factorize(cfg: ExperimentConfig) -> list[Report]:
    res, *_ = _run_factorize(cfg, _progress)
    return [factorization_report(res)]


def _duality(cfg: ExperimentConfig) -> list[Report]:
    res, parts, w, kp = _run_factorize(cfg, _progress)
    grid = cfg.build_grid()
    rows, entries = [], []
    for i, spec in enumerate(cfg.multipliers):
        rep = duality_check(multiplier_function(spec, grid), res, list(parts), w, kp)
        rows.append([i, rep.lhs, rep.rhs, rep.bound, rep.error_bound, abs(rep.lhs - rep.rhs)])
        entries.append({"multiplier": spec, "lhs": rep.lhs, "rhs": rep.rhs, "bound": rep.bound,
                        "b_sup": rep.b_sup, "error_bound": rep.error_bound})
    header = ("index", "lhs", "rhs", "bound", "error_bound", "gap")
    return [factorization_report(res), Report("duality", {"checks": entries}, {"checks": (header, rows)})]


def _bmo_bound(cfg: ExperimentConfig) -> list[Report]:
    grid = cfg.build_grid()
    ec = cfg.exponent_config()
    kp = ec.kernel_params()
    w = cfg.weight_vector(grid)
    F = CubeFamily.dyadic(grid)
    ens = default_ensemble(grid, ec.m)
    rows, entries = [], []
    for i, spec in enumerate(cfg.multipliers):
        b = evaluate_multiplier(spec, grid)
        bmo = bmo_norm(b, F)
        est = commutator_norm_estimate(b, w, kp, ens, cfg.l)
        ratio = est / bmo if bmo > 0 else float("nan")
        rows.append([i, bmo, est, ratio])
        entries.append({"multiplier": spec, "bmo_norm": bmo, "commutator_estimate": est, "ratio": ratio})
    ratios = [r[3] for r in rows if np.isfinite(r[3])]
    summary = {"multipliers": entries, "ensemble_size": len(ens),
               "band": [min(ratios), max(ratios)] if ratios else []}
    return [Report("bmo_bound", summary, {"multipliers": (("index", "bmo_norm", "estimate", "ratio"), rows)})]


def _suite(cfg: ExperimentConfig) -> tuple[list[Report], bool]:
    results = run_all(cfg, echo=print)
    rows = [[r.number, r.passed, r.seconds] for r in results]
    summary = {"criteria": [{"number": r.number, "name": r.name, "passed": r.passed,
                             "measured": {k: v for k, v in r.measured.items() if k != "result"}}
                            for r in results]}
    reports = [Report("suite", summary, {"criteria": (("number", "passed", "seconds"), rows)})]
    fact = next((r for r in results if r.number == 6), None)
    if fact is not None and "result" in fact.measured:
        reports.append(factorization_report(fact.measured["result"]))
    return reports, all(r.passed for r in results)


HANDLERS = {
    "constants": _constants,
    "apply": _apply,
    "atom-approx": _atom_approx,
    "factorize": _factorize,
    "duality": _duality,
    "bmo-bound": _bmo_bound,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hfact", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="JSON experiment configuration (defaults are used when omitted)")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--threads", type=int, help="kernel threads (falls back to HFACT_THREADS)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def run_subcommand(name: str, cfg: ExperimentConfig) -> int:
    """Run one subcommand and write its reports; returns the exit code."""
    try:
        if name == "suite":
            reports, ok = _suite(cfg)
        else:
            reports, ok = HANDLERS[name](cfg), True
    except DivergingRounds as exc:
        emit_report([factorization_report(exc.result)], cfg.out, cfg.formats)
        print(f"error: factorize: {exc}", file=sys.stderr)
        return 3
    except NumericalFailure as exc:
        print(f"error: {name}: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"error: {name}: {exc}", file=sys.stderr)
        return 2
    paths = emit_report(reports, cfg.out, cfg.formats)
    for p in paths:
        log.info("wrote %s", p)
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        if args.out:
            cfg.out = args.out
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("threads must be a positive integer", "--threads")
            cfg.threads = args.threads
    except ConfigError as exc:
        print(f"error: config {exc}", file=sys.stderr)
        return 2
    _accel.set_threads(cfg.threads)
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    return run_subcommand(args.subcommand, cfg)


if __name__ == "__main__":
    sys.exit(main())
