"""Deterministic report files: JSON summaries, CSV tables and gnuplot .dat files.

Output bytes depend only on the data: keys are sorted and every float is
written with 17 significant digits.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

ROUND_COLUMNS = ("k", "num_terms", "atomic_error", "l1_error", "lambda_l1")


def fmt(x: Any) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _json(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return _json_str(obj)
    if isinstance(obj, (bool, np.bool_, int, float, np.integer, np.floating)):
        return fmt(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_json_str(str(k))}: {_json(obj[k], indent, level + 1)}"
                 for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + _json(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _json_str(s: str) -> str:
    return json.dumps(s)


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with sorted keys and 17-digit floats (NaN/Infinity as in Python's json)."""
    return _json(obj, indent, 0) + "\n"


def csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def dat_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    lines = ["# " + " ".join(header)]
    lines += [" ".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


@dataclass
class Report:
    """A named bundle of one JSON summary and any number of tables."""

    name: str
    summary: dict = field(default_factory=dict)
    tables: dict[str, tuple[Sequence[str], list]] = field(default_factory=dict)
    plots: dict[str, tuple[Sequence[str], list]] = field(default_factory=dict)

    def write(self, out_dir, formats: Sequence[str] = ("json", "csv", "dat")) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        if "json" in formats:
            written.append(_write(out / f"{self.name}.json", dumps(self.summary)))
        if "csv" in formats:
            for key in sorted(self.tables):
                header, rows = self.tables[key]
                written.append(_write(out / f"{self.name}_{key}.csv", csv_text(header, rows)))
        if "dat" in formats:
            for key in sorted(self.plots):
                header, rows = self.plots[key]
                written.append(_write(out / f"{self.name}_{key}.dat", dat_text(header, rows)))
        return written


def _write(path: Path, text: str) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def emit_report(results: Sequence[Report], out_dir, formats: Sequence[str] = ("json", "csv", "dat")) -> list[Path]:
    paths: list[Path] = []
    for rep in results:
        paths.extend(rep.write(out_dir, formats))
    return paths


def round_rows(result) -> list[list]:
    return [[r.k, r.num_terms, r.atomic_error, r.l1_error, r.lambda_l1] for r in result.rounds]


def factorization_report(result, name: str = "factorize") -> Report:
    """Summary, per-round CSV and a (k, error) decay line for ``result``."""
    rows = round_rows(result)
    fit = result.ratio_fit() if len(result.rounds) >= 2 else None
    summary = {
        "config": result.config,
        "initial_l1": result.initial_l1,
        "initial_atomic": result.initial_atomic,
        "lambda_l1": result.lambda_l1,
        "num_terms": len(result.terms),
        "max_norm_product": result.max_norm_product,
        "final_error": result.final_error,
        "rounds": [{
            "k": r.k, "num_terms": r.num_terms, "atomic_error": r.atomic_error, "l1_error": r.l1_error,
            "lambda_l1": r.lambda_l1, "pruned_mass": r.pruned_mass, "defect_mass": r.defect_mass,
            "next_atoms": r.next_atoms, "l1_exact": r.l1_exact,
        } for r in result.rounds],
        "ratio_fit": None if fit is None else {
            "rho_bar": fit.rho_bar, "ratios": list(fit.ratios), "within_band": fit.within_band},
    }
    decay = [[0, result.initial_l1]] + [[r.k, r.l1_error] for r in result.rounds]
    return Report(name, summary, {"rounds": (ROUND_COLUMNS, rows)}, {"decay": (("k", "error"), decay)})
