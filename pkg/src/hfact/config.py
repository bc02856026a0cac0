"""JSON experiment configuration.

Every field is validated before any computation starts, and every error
names the offending path (``"exponents.p[1]"``, ``"geometry.r"``, ...).
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError, ValidationError
from .grid import Ball, Grid, GridFunction, read_csv
from .weights import ExponentConfig, WeightVector, evaluate_weight

FORMATS = ("json", "csv", "dat")
MULTIPLIER_KINDS = ("constant", "log", "sin", "power", "step", "file")


@dataclass
class GridSpec:
    n: int = 1
    min: float = -8.0
    max: float = 8.0
    points: int = 129

    def build(self) -> Grid:
        return Grid.uniform(self.n, self.min, self.max, self.points)


@dataclass
class ExponentSpec:
    m: int = 2
    alpha: float = 0.25
    p: list[float] = field(default_factory=lambda: [4.0, 4.0])
    q: float = 4.0


@dataclass
class Geometry:
    centers: list[list[float]] = field(default_factory=lambda: [[-4.0], [4.0]])
    r: float = 0.5
    # atom-approx works on a single atom centred here
    atom_center: list[float] = field(default_factory=lambda: [-6.0])


@dataclass
class ExperimentConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    exponents: ExponentSpec = field(default_factory=ExponentSpec)
    weights: list[dict] = field(default_factory=lambda: [{"kind": "constant", "c": 1.0}] * 2)
    geometry: Geometry = field(default_factory=Geometry)
    M: list[float] = field(default_factory=lambda: [8.0, 16.0, 32.0, 64.0])
    factorize_M: float = 32.0
    K_max: int = 4
    prune_tol: float = 1e-10
    l: int = 1
    multipliers: list[dict] = field(default_factory=lambda: [
        {"kind": "log", "delta": "auto"},
        {"kind": "sin", "freq": 0.5},
        {"kind": "step", "at": 0.0},
        {"kind": "power", "a": 0.5, "delta": "auto"},
        {"kind": "log", "delta": "auto", "center": 3.0},
    ])
    dilation_ppr: float | None = 4.0
    # widen the grid window (same lattice) to hold bump chains; when false the
    # chain of every configured M must fit inside the grid box
    extend_box: bool = True
    out: str = "out"
    threads: int | None = None
    formats: list[str] = field(default_factory=lambda: list(FORMATS))
    seed: int = 0

    # -- serialization ---------------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object", "$")
        data = copy.deepcopy(data)
        known = set(cls.__dataclass_fields__)
        extra = sorted(set(data) - known)
        if extra:
            raise ConfigError(f"unknown key {extra[0]!r}", extra[0])
        sub = {"grid": GridSpec, "exponents": ExponentSpec, "geometry": Geometry}
        for key, typ in sub.items():
            if key in data:
                part = data[key]
                if not isinstance(part, dict):
                    raise ConfigError("expected an object", key)
                bad = sorted(set(part) - set(typ.__dataclass_fields__))
                if bad:
                    raise ConfigError(f"unknown key {bad[0]!r}", f"{key}.{bad[0]}")
                try:
                    data[key] = typ(**part)
                except TypeError as exc:
                    raise ConfigError(str(exc), key) from None
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", str(path)) from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}", str(path)) from None
        return cls.from_dict(data)

    # -- derived objects ------------------------------------------------------------

    def build_grid(self) -> Grid:
        return self.grid.build()

    def exponent_config(self) -> ExponentConfig:
        e = self.exponents
        return ExponentConfig(e.m, self.grid.n, e.alpha, tuple(e.p), e.q)

    def weight_vector(self, grid: Grid | None = None) -> WeightVector:
        grid = grid or self.build_grid()
        return WeightVector.from_specs(self.weights, self.exponent_config(), grid)

    def balls(self) -> tuple[Ball, Ball]:
        r = self.geometry.r
        return tuple(Ball(tuple(c), r) for c in self.geometry.centers)

    def atom_ball(self) -> Ball:
        return Ball(tuple(self.geometry.atom_center), self.geometry.r)

    # -- validation -----------------------------------------------------------------

    def validate(self) -> None:
        g = self.grid
        _need(isinstance(g.n, int) and g.n >= 1, "dimension must be a positive integer", "grid.n")
        _need(_finite(g.min) and _finite(g.max) and g.min < g.max, "need min < max", "grid.max")
        _need(isinstance(g.points, int) and g.points >= 4, "need at least 4 points per axis", "grid.points")
        grid = _wrap(self.build_grid, "grid")

        e = self.exponents
        _need(isinstance(e.p, list) and len(e.p) == e.m, f"p needs {e.m} entries", "exponents.p")
        for i, p in enumerate(e.p):
            _need(_finite(p) and p > 1, "each p_i must be in (1, inf)", f"exponents.p[{i}]")
        _wrap(self.exponent_config, "exponents")

        _need(isinstance(self.weights, list) and len(self.weights) == e.m,
              f"weights needs {e.m} entries", "weights")
        for i, spec in enumerate(self.weights):
            _need(isinstance(spec, dict), "weight spec must be an object", f"weights[{i}]")
            _wrap(lambda: evaluate_weight(spec, grid, max(grid.spacing)), f"weights[{i}]")
        _wrap(lambda: self.weight_vector(grid), "weights")

        geo = self.geometry
        _need(_finite(geo.r) and geo.r > 0, "radius must be positive", "geometry.r")
        _need(geo.r >= 2 * max(grid.spacing) - 1e-12, "radius must be at least two grid spacings", "geometry.r")
        _need(len(geo.centers) == 2, "two bump centres are required", "geometry.centers")
        for i, c in enumerate(geo.centers):
            _need(len(c) == g.n, f"centre needs {g.n} coordinates", f"geometry.centers[{i}]")
            _need(_inside(grid, c, geo.r), "bump leaves the grid box", f"geometry.centers[{i}]")
        d = float(np.linalg.norm(np.subtract(geo.centers[0], geo.centers[1])))
        _need(d >= 4 * geo.r, "bump centres must be at least 4r apart", "geometry.centers")
        _need(len(geo.atom_center) == g.n, f"centre needs {g.n} coordinates", "geometry.atom_center")

        _need(1 <= self.l <= e.m, f"slot must be in 1..{e.m}", "l")
        _need(len(self.M) > 0, "at least one M is required", "M")
        for i, M in enumerate(self.M):
            _need(_finite(M) and M >= 4, "M must be at least 4", f"M[{i}]")
            if not self.extend_box:
                _need(self._chain_fits(grid, M), "bump chain leaves the grid box", f"M[{i}]")
        _need(isinstance(self.extend_box, bool), "extend_box must be true or false", "extend_box")
        _need(_finite(self.factorize_M) and self.factorize_M >= 4, "M must be at least 4", "factorize_M")
        _need(isinstance(self.K_max, int) and self.K_max >= 1, "K_max must be a positive integer", "K_max")
        _need(_finite(self.prune_tol) and self.prune_tol >= 0, "prune_tol must be nonnegative", "prune_tol")
        _need(self.dilation_ppr is None or (_finite(self.dilation_ppr) and self.dilation_ppr >= 2),
              "dilation_ppr must be null or at least 2", "dilation_ppr")
        _need(self.threads is None or (isinstance(self.threads, int) and self.threads >= 1),
              "threads must be a positive integer", "threads")
        for i, fmt in enumerate(self.formats):
            _need(fmt in FORMATS, f"format must be one of {FORMATS}", f"formats[{i}]")
        for i, spec in enumerate(self.multipliers):
            _wrap(lambda: evaluate_multiplier(spec, grid), f"multipliers[{i}]")

    def _chain_fits(self, grid: Grid, M: float) -> bool:
        from .factorization import bump_chain

        ball = self.atom_ball()
        chain = bump_chain(ball.center, ball.radius, M, self.l, self.exponents.m)
        return all(_inside(grid, b.center, b.radius) for b in [ball] + chain)


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _need(cond: bool, message: str, path: str) -> None:
    if not cond:
        raise ConfigError(message, path)


def _wrap(fn, path: str):
    try:
        return fn()
    except ConfigError as exc:
        inner = exc.path
        raise ConfigError(exc.message, f"{path}.{inner}" if inner else path) from None
    except (ValidationError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path) from None


def _inside(grid: Grid, center, r: float) -> bool:
    c = np.asarray(center, dtype=float)
    return grid.contains_box(c - r, c + r)


def _multiplier_values(spec: dict, pts: np.ndarray, delta: float) -> np.ndarray:
    kind = spec.get("kind")
    if kind not in MULTIPLIER_KINDS or kind == "file":
        raise ConfigError(f"unknown multiplier kind {kind!r}", "kind")
    center = np.broadcast_to(np.asarray(spec.get("center", 0.0), float), (pts.shape[1],))
    dist = np.sqrt(np.sum((pts - center) ** 2, axis=1))
    if kind == "constant":
        return np.full(len(pts), float(spec.get("c", 1.0)))
    if kind == "log":
        if delta <= 0:
            raise ConfigError("delta must be positive", "delta")
        return np.log(dist + delta)
    if kind == "sin":
        return np.sin(float(spec.get("freq", 1.0)) * pts[:, 0])
    if kind == "power":
        a = float(spec.get("a", 0.5))
        if a < 0 and delta <= 0:
            raise ConfigError("negative power needs a positive delta", "delta")
        return (dist + delta) ** a
    return np.where(pts[:, 0] >= float(spec.get("at", 0.0)), 1.0, -1.0)


def _delta(spec: dict, grid: Grid) -> float:
    delta = spec.get("delta", "auto")
    return max(grid.spacing) if delta == "auto" else float(delta)


def evaluate_multiplier(spec: dict, grid: Grid) -> GridFunction:
    """Sample a BMO multiplier ``b`` on ``grid``.

    Kinds: ``constant`` (``c``), ``log`` (``log(|x - center| + delta)``),
    ``sin`` (``sin(freq * x_1)``), ``power`` (``(|x - center| + delta)^a``),
    ``step`` (sign of ``x_1 - at``) and ``file``.  ``delta: "auto"`` is one
    grid spacing.
    """
    if not isinstance(spec, dict):
        raise ConfigError("multiplier spec must be an object", "")
    if spec.get("kind") == "file":
        if "path" not in spec:
            raise ConfigError("file multiplier needs a path", "path")
        src = read_csv(spec["path"])
        if src.grid != grid:
            raise ConfigError("file multiplier must live on the configured grid", "path")
        return src
    return GridFunction(grid, _multiplier_values(spec, grid.points(), _delta(spec, grid)))


def multiplier_function(spec: dict, base: Grid):
    """The multiplier as a callable on points (a sampled GridFunction for files),
    with ``delta`` fixed by the base grid so every window sees the same b."""
    if spec.get("kind") == "file":
        return evaluate_multiplier(spec, base)
    delta = _delta(spec, base)
    return lambda points: _multiplier_values(spec, np.asarray(points, dtype=float), delta)


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


def to_json_value(x: Any) -> Any:
    """Plain JSON values for numpy scalars and tuples."""
    if isinstance(x, dict):
        return {str(k): to_json_value(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_json_value(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return x
