"""Render turnpike figures from sweep CSV outputs.

Inputs are the delimited artifacts of a sweep run: per-horizon
deviation_T*.csv files (columns t, err_state, err_adjoint, err_control) and
sweep.csv (columns T, avg_err_state, avg_err_control, gamma_hat, C_hat, r2,
envelope_pass).  Rendering never modifies its inputs and never invokes any
solver.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "turnpike-figures"  # deterministic svg ids
import matplotlib.pyplot as plt
import numpy as np

__all__ = ["FigureSpec", "SchemaError", "render"]

#: log-axis floor for curves that touch zero
LOG_FLOOR = 1e-16

DEVIATION_COLUMNS = ("t", "err_state", "err_adjoint", "err_control")
SWEEP_COLUMNS = (
    "T",
    "avg_err_state",
    "avg_err_control",
    "gamma_hat",
    "C_hat",
    "r2",
    "envelope_pass",
)


class SchemaError(ValueError):
    """An input CSV does not match the expected schema; names the column."""

    def __init__(self, filename: str, column: str):
        super().__init__(f"{filename}: missing required column '{column}'")
        self.column = column


@dataclass(frozen=True)
class FigureSpec:
    """What to render: input directory, figure kind and output path."""

    in_dir: Path
    kind: str
    out_path: Path
    dpi: int = 150
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("deviation", "sweep"):
            raise ValueError(f"figure kind must be 'deviation' or 'sweep', got {self.kind!r}")


def _read_csv(path: Path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        for column in required:
            if column not in header:
                raise SchemaError(path.name, column)
        rows = list(reader)
    out: dict[str, np.ndarray] = {}
    for column in required:
        values = [row[column] for row in rows]
        if column == "envelope_pass":
            out[column] = np.array([v.strip().lower() == "true" for v in values])
        else:
            out[column] = np.array([float(v) for v in values])
    return out


def _deviation_files(in_dir: Path) -> list[tuple[float, Path]]:
    found = []
    for path in sorted(in_dir.glob("deviation_T*.csv")):
        match = re.match(r"deviation_T(.+)\.csv$", path.name)
        if match:
            found.append((float(match.group(1)), path))
    if not found:
        raise FileNotFoundError(f"no deviation_T*.csv files in {in_dir}")
    return sorted(found)


def _render_deviation(spec: FigureSpec, ax) -> None:
    sweep = _read_csv(spec.in_dir / "sweep.csv", SWEEP_COLUMNS)
    envelopes = {
        float(T): (g, C)
        for T, g, C in zip(sweep["T"], sweep["gamma_hat"], sweep["C_hat"])
    }
    colors = plt.cm.viridis(np.linspace(0.0, 0.85, len(_deviation_files(spec.in_dir))))
    for color, (T, path) in zip(colors, _deviation_files(spec.in_dir)):
        data = _read_csv(path, DEVIATION_COLUMNS)
        t = data["t"]
        e = np.maximum(data["err_state"], LOG_FLOOR)
        ax.semilogy(t, e, color=color, lw=1.6, label=f"T = {T:g}")
        if T in envelopes and math.isfinite(envelopes[T][0]):
            gamma, C = envelopes[T]
            env = C * (np.exp(-gamma * t) + np.exp(-gamma * (T - t)))
            ax.semilogy(t, np.maximum(env, LOG_FLOOR), "--", color=color, lw=1.0, alpha=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("state deviation")
    ax.set_title("Deviation from the stationary optimum (dashed: fitted envelope)")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.25)


def _render_sweep(spec: FigureSpec, ax) -> None:
    sweep = _read_csv(spec.in_dir / "sweep.csv", SWEEP_COLUMNS)
    T = sweep["T"]
    for column, marker in (("avg_err_state", "o"), ("avg_err_control", "s")):
        values = np.maximum(sweep[column], LOG_FLOOR)
        ax.loglog(T, values, marker=marker, lw=1.4, label=column)
        if T.size >= 2 and np.all(values > LOG_FLOOR):
            slope = np.polyfit(np.log(T), np.log(values), 1)[0]
            ax.annotate(
                f"slope {slope:.2f}",
                (T[-1], values[-1]),
                textcoords="offset points",
                xytext=(4, 4),
                fontsize=8,
            )
    ax.set_xlabel("horizon T")
    ax.set_ylabel("averaged error")
    ax.set_title("Averaged-error decay with the horizon")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.25)


def render(spec: FigureSpec) -> Path:
    """Render the requested figure; returns the written image path."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    try:
        if spec.kind == "deviation":
            _render_deviation(spec, ax)
        else:
            _render_sweep(spec, ax)
        fig.tight_layout()
        spec.out_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(spec.out_path, dpi=spec.dpi, metadata=_stable_metadata(spec.out_path))
    finally:
        plt.close(fig)
    return spec.out_path


def _stable_metadata(out_path: Path) -> dict | None:
    # strip run-dependent metadata so re-rendering is idempotent in content
    suffix = out_path.suffix.lower()
    if suffix == ".png":
        return {"Software": "turnpike-figures"}
    if suffix == ".svg":
        return {"Date": None}
    if suffix == ".pdf":
        return {"CreationDate": None}
    return None
