"""Experiment configuration: JSON schema, validation and materialization.

Validation returns every violation (not only the first), each diagnostic
prefixed with the dotted path of the offending field, in document order.
The schema is documented in the README.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .evolution import TimeGrid
from .operators import BetaField, DomainSpec, Grid1D, TailMode, make_grid

__all__ = [
    "ExperimentConfig",
    "ConfigError",
    "validate_config",
    "validate_config_data",
    "load_config",
]

MAX_INTERIOR_NODES = 4096


class ConfigError(ValueError):
    """Invalid experiment configuration; carries the full diagnostics list."""

    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (see README for the JSON schema)."""

    variant: str
    a: float
    b: float
    collar_width: float
    s: float
    tail: TailMode
    beta_segments: tuple
    target: dict
    n: int
    steps_per_unit_time: float
    theta: float
    cg_tol: float
    max_iter: int
    horizons: tuple
    out_dir: str
    formats: tuple
    raw: dict = field(repr=False, default_factory=dict)

    def domain_spec(self) -> DomainSpec:
        return DomainSpec(
            a=self.a, b=self.b, collar_width=self.collar_width, s=self.s, tail=self.tail
        )

    def grid(self) -> Grid1D:
        return make_grid(self.domain_spec(), self.n)

    def beta_field(self, grid: Grid1D) -> BetaField:
        if self.variant == "dirichlet":
            return BetaField.zero(grid)
        if not self.beta_segments:
            return BetaField.constant(grid, 1.0)
        return BetaField.from_segments(grid, self.beta_segments)

    def target_values(self, grid: Grid1D) -> np.ndarray:
        x = grid.interior_nodes
        t = self.target
        kind = t["kind"]
        if kind == "constant":
            return np.full(x.size, float(t["value"]))
        if kind == "gaussian":
            return t["amplitude"] * np.exp(-((x - t["center"]) ** 2) / (2.0 * t["width"] ** 2))
        if kind == "indicator":
            return ((x >= t["from"]) & (x <= t["to"])).astype(float)
        raise ValueError(f"unknown target kind {kind!r}")

    def time_grid(self, T: float) -> TimeGrid:
        return TimeGrid(T=T, K=int(round(self.steps_per_unit_time * T)), theta=self.theta)


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _require(data: dict, key: str, path: str, diags: list[str]):
    if key not in data:
        diags.append(f"{path}.{key}: missing required field")
        return None
    return data[key]


def validate_config_data(data) -> list[str]:
    """Collect every schema violation in a raw config document."""
    diags: list[str] = []
    if not isinstance(data, dict):
        return ["$: config must be a JSON object"]

    problem = _require(data, "problem", "$", diags)
    if isinstance(problem, dict):
        variant = _require(problem, "variant", "problem", diags)
        if variant is not None and variant not in ("robin", "dirichlet"):
            diags.append(f"problem.variant: must be 'robin' or 'dirichlet' (got {variant!r})")
        a = _require(problem, "a", "problem", diags)
        b = _require(problem, "b", "problem", diags)
        for name, val in (("a", a), ("b", b)):
            if val is not None and not _is_num(val):
                diags.append(f"problem.{name}: must be a finite number")
        if _is_num(a) and _is_num(b) and not a < b:
            diags.append(f"problem.a: must satisfy a < b (got a={a}, b={b})")
        R = _require(problem, "collar_width", "problem", diags)
        if R is not None and (not _is_num(R) or R <= 0):
            diags.append(f"problem.collar_width: must be a positive number (got {R!r})")
        s = _require(problem, "s", "problem", diags)
        if s is not None and (not _is_num(s) or not 0.0 < s < 1.0):
            diags.append(f"problem.s: must lie strictly inside (0, 1) (got {s!r})")
        tail = problem.get("tail_mode", {"kind": "zero"})
        if not isinstance(tail, dict) or tail.get("kind") not in ("zero", "constant"):
            diags.append("problem.tail_mode.kind: must be 'zero' or 'constant'")
        elif tail.get("kind") == "constant" and not _is_num(tail.get("value")):
            diags.append("problem.tail_mode.value: constant tail requires a finite value")
        beta = problem.get("beta", [])
        if not isinstance(beta, list):
            diags.append("problem.beta: must be a list of segments")
        else:
            for i, seg in enumerate(beta):
                ok = (
                    isinstance(seg, dict)
                    and _is_num(seg.get("from"))
                    and _is_num(seg.get("to"))
                    and _is_num(seg.get("value"))
                    and seg["value"] >= 0
                )
                if not ok:
                    diags.append(
                        f"problem.beta[{i}]: segment needs finite 'from', 'to' and "
                        "nonnegative 'value'"
                    )
        target = _require(problem, "target", "problem", diags)
        if target is not None:
            if not isinstance(target, dict):
                diags.append("problem.target: must be an object")
            else:
                kind = target.get("kind")
                needed = {
                    "constant": ("value",),
                    "gaussian": ("center", "width", "amplitude"),
                    "indicator": ("from", "to"),
                }.get(kind)
                if needed is None:
                    diags.append(
                        "problem.target.kind: must be 'constant', 'gaussian' or 'indicator'"
                    )
                else:
                    for key in needed:
                        if not _is_num(target.get(key)):
                            diags.append(f"problem.target.{key}: must be a finite number")
                    if kind == "gaussian" and _is_num(target.get("width")) and target["width"] <= 0:
                        diags.append("problem.target.width: must be positive")

    disc = _require(data, "discretization", "$", diags)
    if isinstance(disc, dict):
        n = _require(disc, "n", "discretization", diags)
        if n is not None and (not isinstance(n, int) or isinstance(n, bool) or n < 8):
            diags.append(f"discretization.n: must be an integer >= 8 (got {n!r})")
        elif isinstance(n, int) and n > MAX_INTERIOR_NODES:
            diags.append(f"discretization.n: desk scale tops out at {MAX_INTERIOR_NODES}")
        spu = _require(disc, "steps_per_unit_time", "discretization", diags)
        if spu is not None and (not _is_num(spu) or spu <= 0):
            diags.append("discretization.steps_per_unit_time: must be a positive number")
        theta = disc.get("theta", 1.0)
        if not _is_num(theta) or not 0.5 <= theta <= 1.0:
            diags.append(f"discretization.theta: must lie in [0.5, 1] (got {theta!r})")

    control = _require(data, "control", "$", diags)
    if isinstance(control, dict):
        tol = control.get("cg_tol", 1e-10)
        if not _is_num(tol) or tol <= 0:
            diags.append(f"control.cg_tol: must be a positive number (got {tol!r})")
        mi = control.get("max_iter", 500)
        if not isinstance(mi, int) or isinstance(mi, bool) or mi < 1:
            diags.append(f"control.max_iter: must be a positive integer (got {mi!r})")

    sweep = _require(data, "sweep", "$", diags)
    if isinstance(sweep, dict):
        horizons = sweep.get("T")
        if horizons is None:
            diags.append("sweep.T: missing horizon list")
        elif not isinstance(horizons, list) or not horizons:
            diags.append("sweep.T: must be a nonempty list of horizons")
        else:
            for i, T in enumerate(horizons):
                if not _is_num(T) or T <= 0:
                    diags.append(f"sweep.T[{i}]: horizons must be positive numbers")
            if (
                isinstance(disc, dict)
                and _is_num(disc.get("steps_per_unit_time"))
                and all(_is_num(T) and T > 0 for T in horizons)
            ):
                for i, T in enumerate(horizons):
                    if round(disc["steps_per_unit_time"] * T) < 2:
                        diags.append(
                            f"sweep.T[{i}]: horizon yields fewer than 2 time steps at this rate"
                        )

    out = _require(data, "output", "$", diags)
    if isinstance(out, dict):
        d = _require(out, "directory", "output", diags)
        if d is not None and not isinstance(d, str):
            diags.append("output.directory: must be a string")
        formats = out.get("formats", ["csv", "json"])
        if not isinstance(formats, list) or not formats or not set(formats) <= {"csv", "json"}:
            diags.append("output.formats: must be a nonempty subset of ['csv', 'json']")

    return diags


def validate_config(path: str | Path) -> list[str]:
    """Validate a config file; returns all diagnostics (empty iff runnable)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        return [f"$: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"]
    return validate_config_data(data)


def load_config(path: str | Path) -> ExperimentConfig:
    """Read, validate and materialize a config file; raises ConfigError when invalid."""
    diags = validate_config(path)
    if diags:
        raise ConfigError(diags)
    data = json.loads(Path(path).read_text())
    problem = data["problem"]
    tail_raw = problem.get("tail_mode", {"kind": "zero"})
    tail = (
        TailMode.zero()
        if tail_raw["kind"] == "zero"
        else TailMode.constant(float(tail_raw["value"]))
    )
    control = data["control"]
    return ExperimentConfig(
        variant=problem["variant"],
        a=float(problem["a"]),
        b=float(problem["b"]),
        collar_width=float(problem["collar_width"]),
        s=float(problem["s"]),
        tail=tail,
        beta_segments=tuple(
            (float(seg["from"]), float(seg["to"]), float(seg["value"]))
            for seg in problem.get("beta", [])
        ),
        target=dict(problem["target"]),
        n=int(data["discretization"]["n"]),
        steps_per_unit_time=float(data["discretization"]["steps_per_unit_time"]),
        theta=float(data["discretization"].get("theta", 1.0)),
        cg_tol=float(control.get("cg_tol", 1e-10)),
        max_iter=int(control.get("max_iter", 500)),
        horizons=tuple(float(T) for T in data["sweep"]["T"]),
        out_dir=str(data["output"]["directory"]),
        formats=tuple(data["output"].get("formats", ["csv", "json"])),
        raw=data,
    )
