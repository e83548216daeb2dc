"""Kernel-collocation discretization of the 1-D fractional Laplacian with an
exterior collar.

The operator is discretized on a uniform cell-centered grid covering the
interval (a, b) plus a collar of width R on each side.  Node pairs interact
through the Riesz kernel |x - y|^(-1-2s) with weight h per node; pairs with
both nodes in the collar never interact (the underlying quadratic form only
pairs points when at least one of them lies inside the interval).  The far
field beyond the collar is part of the model, not an approximation: it is
either held at zero (adding an analytic stiffness to interior diagonals) or
at a constant (in which case every row annihilates constant vectors exactly).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "TailMode",
    "DomainSpec",
    "Grid1D",
    "BetaField",
    "FormMatrices",
    "DegenerateSystemError",
    "GridConsistencyError",
    "normalization_constant",
    "kernel_tail_rho",
    "make_grid",
    "assemble_form",
    "apply_fractional_laplacian",
    "nonlocal_normal_derivative",
    "robin_extension",
    "dual_norm",
    "bilinear_form",
    "norm_interior",
    "norm_mu",
    "norm_collar",
]

#: largest fractional order the kernel quadrature has been validated for;
#: larger values are accepted but near-diagonal consistency degrades as s -> 1.
VALIDATED_S_MAX = 0.8


class DegenerateSystemError(ValueError):
    """A linear system lost definiteness (typically beta = 0 with constant tail)."""


class GridConsistencyError(ValueError):
    """Grid, domain description and coefficient field do not belong together."""


def normalization_constant(N: int, s: float) -> float:
    """Normalization constant of the fractional Laplacian in N dimensions.

    C(N, s) = s * 2^(2s) * Gamma((2s + N)/2) / (pi^(N/2) * Gamma(1 - s)).
    """
    if N < 1 or int(N) != N:
        raise ValueError(f"dimension must be a positive integer, got {N}")
    if not 0.0 < s < 1.0:
        raise ValueError(f"fractional order must lie in (0, 1), got {s}")
    return (
        s
        * 2.0 ** (2.0 * s)
        * math.gamma((2.0 * s + N) / 2.0)
        / (math.pi ** (N / 2.0) * math.gamma(1.0 - s))
    )


@dataclass(frozen=True)
class TailMode:
    """Assumed exterior datum beyond the collar: zero, or a finite constant."""

    kind: str
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant"):
            raise ValueError(f"tail mode must be 'zero' or 'constant', got {self.kind!r}")
        if self.kind == "constant" and not math.isfinite(self.value):
            raise ValueError("constant tail requires a finite value")

    @classmethod
    def zero(cls) -> "TailMode":
        return cls("zero")

    @classmethod
    def constant(cls, value: float) -> "TailMode":
        return cls("constant", float(value))


@dataclass(frozen=True)
class DomainSpec:
    """Interval (a, b), collar width, fractional order and tail model."""

    a: float
    b: float
    collar_width: float
    s: float
    tail: TailMode = field(default_factory=TailMode.zero)

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"need a < b, got a={self.a}, b={self.b}")
        if not self.collar_width > 0.0:
            raise ValueError(f"collar width must be positive, got {self.collar_width}")
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"fractional order must lie in (0, 1), got {self.s}")


def kernel_tail_rho(x: float, spec: DomainSpec) -> float:
    """Integral of |x - y|^(-1-2s) over (a, b), for x strictly outside [a, b].

    Closed form: (d_near^(-2s) - d_far^(-2s)) / (2s) with d_near/d_far the
    distances from x to the closer/farther endpoint.
    """
    a, b, s = spec.a, spec.b, spec.s
    if a <= x <= b:
        raise ValueError(f"point {x} lies inside [{a}, {b}]; rho is defined outside only")
    d_near = x - b if x > b else a - x
    d_far = x - a if x > b else b - x
    return (d_near ** (-2.0 * s) - d_far ** (-2.0 * s)) / (2.0 * s)


@dataclass(frozen=True)
class Grid1D:
    """Uniform cell-centered grid over the interval and its collar.

    Nodes are sorted ascending: left collar, interior, right collar.  No node
    coincides with a or b, so kernel distances are always >= h.
    """

    spec: DomainSpec
    nodes: np.ndarray
    interior_mask: np.ndarray

    def __post_init__(self):
        d = np.diff(self.nodes)
        if not np.all(d > 0):
            raise ValueError("grid nodes must be strictly increasing")
        h = d[0]
        if np.max(np.abs(d - h)) > 1e-12 * h:
            raise ValueError("grid spacing must be uniform to 1e-12 relative")
        if np.any(np.isclose(self.nodes, self.spec.a)) or np.any(
            np.isclose(self.nodes, self.spec.b)
        ):
            raise ValueError("no node may fall on an interval endpoint")
        self.nodes.setflags(write=False)
        self.interior_mask.setflags(write=False)

    @property
    def h(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def collar_mask(self) -> np.ndarray:
        return ~self.interior_mask

    @property
    def interior_nodes(self) -> np.ndarray:
        return self.nodes[self.interior_mask]

    @property
    def collar_nodes(self) -> np.ndarray:
        return self.nodes[self.collar_mask]

    @property
    def n_interior(self) -> int:
        return int(self.interior_mask.sum())

    @property
    def n_collar(self) -> int:
        return int(self.collar_mask.sum())

    @property
    def outer_edges(self) -> tuple[float, float]:
        """Outer boundary of the region covered by grid cells."""
        m = self.n_collar // 2
        return self.spec.a - m * self.h, self.spec.b + m * self.h

    def classify(self, index: int) -> str:
        return "interior" if self.interior_mask[index] else "collar"


def make_grid(spec: DomainSpec, n_interior: int) -> Grid1D:
    """Build the cell-centered grid with n_interior cells inside (a, b).

    The collar is rounded to a whole number of cells per side.
    """
    if n_interior < 2:
        raise ValueError(f"need at least 2 interior nodes, got {n_interior}")
    h = (spec.b - spec.a) / n_interior
    m = int(round(spec.collar_width / h))
    if m < 1:
        raise ValueError("collar width must cover at least one grid cell")
    left = spec.a - (np.arange(m)[::-1] + 0.5) * h
    inner = spec.a + (np.arange(n_interior) + 0.5) * h
    right = spec.b + (np.arange(m) + 0.5) * h
    nodes = np.concatenate([left, inner, right])
    mask = np.zeros(nodes.size, dtype=bool)
    mask[m : m + n_interior] = True
    return Grid1D(spec=spec, nodes=nodes, interior_mask=mask)


@dataclass(frozen=True)
class BetaField:
    """Nonnegative Robin coefficient sampled at the collar nodes."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("beta values must form a 1-D array")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("beta must be finite and nonnegative")
        object.__setattr__(self, "values", v)
        v.setflags(write=False)

    @classmethod
    def constant(cls, grid: Grid1D, value: float) -> "BetaField":
        return cls(np.full(grid.n_collar, float(value)))

    @classmethod
    def zero(cls, grid: Grid1D) -> "BetaField":
        return cls(np.zeros(grid.n_collar))

    @classmethod
    def from_segments(cls, grid: Grid1D, segments) -> "BetaField":
        """Piecewise-constant field: list of (lo, hi, value) over collar nodes."""
        v = np.zeros(grid.n_collar)
        x = grid.collar_nodes
        for lo, hi, value in segments:
            v[(x >= lo) & (x <= hi)] = value
        return cls(v)


@dataclass(frozen=True)
class FormMatrices:
    """Assembled quadratic form and mass matrices on one grid.

    A_full carries the kernel couplings, the row-sum diagonal, the analytic
    far-field stiffness (zero-tail mode, interior rows) and the collar mass
    weighted by beta.  Mass matrices are lumped (diagonal), stored as vectors.
    """

    grid: Grid1D
    beta: BetaField
    A_full: np.ndarray
    mass_interior: np.ndarray  # h at interior nodes
    mass_mu: np.ndarray  # beta * h at collar nodes
    tail_stiffness: np.ndarray  # analytic far-field term, interior nodes
    kernel_constant: float

    def __post_init__(self):
        for arr in (self.A_full, self.mass_interior, self.mass_mu, self.tail_stiffness):
            arr.setflags(write=False)

    @property
    def spec(self) -> DomainSpec:
        return self.grid.spec

    @property
    def h(self) -> float:
        return self.grid.h

    @cached_property
    def _interior_idx(self) -> np.ndarray:
        return np.where(self.grid.interior_mask)[0]

    @cached_property
    def _collar_idx(self) -> np.ndarray:
        return np.where(self.grid.collar_mask)[0]

    @cached_property
    def A_II(self) -> np.ndarray:
        return self.A_full[np.ix_(self._interior_idx, self._interior_idx)]

    @cached_property
    def A_IE(self) -> np.ndarray:
        return self.A_full[np.ix_(self._interior_idx, self._collar_idx)]

    @cached_property
    def A_EI(self) -> np.ndarray:
        return self.A_full[np.ix_(self._collar_idx, self._interior_idx)]

    @cached_property
    def A_EE(self) -> np.ndarray:
        return self.A_full[np.ix_(self._collar_idx, self._collar_idx)]

    @cached_property
    def _A_II_factor(self):
        return cho_factor(self.A_II)

    def solve_interior(self, rhs: np.ndarray) -> np.ndarray:
        """Solve A_II x = rhs with the cached Cholesky factorization."""
        return cho_solve(self._A_II_factor, rhs)


def assemble_form(grid: Grid1D, spec: DomainSpec, beta: BetaField) -> FormMatrices:
    """Assemble the discrete quadratic form on all nodes.

    Off-diagonal entries are -C h^2 |x_i - x_j|^(-1-2s) whenever the pair
    (i, j) is not collar-collar; those pairs carry no entry.  Diagonals are
    row sums, plus the analytic tail stiffness on interior rows in zero-tail
    mode, plus beta*h on collar rows.
    """
    if grid.spec != spec:
        raise GridConsistencyError("grid was built for a different domain description")
    if beta.values.shape != (grid.n_collar,):
        raise GridConsistencyError(
            f"beta has {beta.values.size} values for {grid.n_collar} collar nodes"
        )
    if spec.s > VALIDATED_S_MAX:
        warnings.warn(
            f"s={spec.s} exceeds the validated quadrature range (s <= {VALIDATED_S_MAX})",
            stacklevel=2,
        )

    x = grid.nodes
    h = grid.h
    s = spec.s
    C = normalization_constant(1, s)

    dist = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(dist, 1.0)
    W = C * h * h * dist ** (-1.0 - 2.0 * s)
    np.fill_diagonal(W, 0.0)
    ext = grid.collar_mask
    W[np.ix_(ext, ext)] = 0.0  # the form never pairs two exterior points

    A = -W
    np.fill_diagonal(A, W.sum(axis=1))

    # Analytic integral of the kernel beyond the outermost grid cells; pairs
    # (collar, far field) are excluded for the same reason as collar-collar.
    lo, hi = grid.outer_edges
    xi = grid.interior_nodes
    tail = C * h * ((xi - lo) ** (-2.0 * s) + (hi - xi) ** (-2.0 * s)) / (2.0 * s)
    if spec.tail.kind == "zero":
        idx = np.where(grid.interior_mask)[0]
        A[idx, idx] += tail
    # constant tail: rows already annihilate constants, the far field follows
    # the same constant and contributes nothing to the matrix

    mass_mu = beta.values * h
    cidx = np.where(ext)[0]
    A[cidx, cidx] += mass_mu

    return FormMatrices(
        grid=grid,
        beta=beta,
        A_full=A,
        mass_interior=np.full(grid.n_interior, h),
        mass_mu=mass_mu,
        tail_stiffness=tail,
        kernel_constant=C,
    )


def apply_fractional_laplacian(forms: FormMatrices, u: np.ndarray) -> np.ndarray:
    """Collocation value of the operator at interior nodes: (A_full u)_I / h.

    Collar entries of u are the exterior datum; beyond the collar the tail
    model applies.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (forms.grid.nodes.size,):
        raise ValueError(f"expected {forms.grid.nodes.size} node values, got {u.shape}")
    return (forms.A_full @ u)[forms.grid.interior_mask] / forms.h


def nonlocal_normal_derivative(forms: FormMatrices, u: np.ndarray) -> np.ndarray:
    """Flux-type derivative at collar nodes: C sum_j h (u_i - u_j) k_ij, j interior."""
    u = np.asarray(u, dtype=float)
    if u.shape != (forms.grid.nodes.size,):
        raise ValueError(f"expected {forms.grid.nodes.size} node values, got {u.shape}")
    uI = u[forms.grid.interior_mask]
    uE = u[forms.grid.collar_mask]
    # collar rows of A_full are (row sum of W_EI + beta h) on the diagonal and
    # -W_EI off it; removing the beta h part leaves exactly the kernel flux
    row_sum = -forms.A_EI.sum(axis=1)
    return (row_sum * uE + forms.A_EI @ uI) / forms.h


def robin_extension(forms: FormMatrices, u: np.ndarray, beta: BetaField) -> np.ndarray:
    """Extend interior values to the collar through the homogeneous Robin relation.

    u_R(x_i) = C sum_j h u_j k_ij / (C rho_h(x_i) + beta_i), with rho_h the
    same grid quadrature used by the flux so that the discrete relation
    N_h u_R + beta u_R = 0 holds to round-off.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (forms.grid.n_interior,):
        raise ValueError(f"expected {forms.grid.n_interior} interior values, got {u.shape}")
    W_EI = -forms.A_EI
    numerator = (W_EI @ u) / forms.h
    denominator = W_EI.sum(axis=1) / forms.h + beta.values
    if np.any(denominator <= 0) or not np.all(np.isfinite(denominator)):
        bad = np.where(denominator <= 0)[0]
        raise DegenerateSystemError(f"vanishing Robin denominator at collar nodes {bad.tolist()}")
    return numerator / denominator


def dual_norm(forms: FormMatrices, v: np.ndarray) -> float:
    """Discrete negative-order norm sqrt((Mv) . A_II^{-1} (Mv)) of an interior vector."""
    v = np.asarray(v, dtype=float)
    if v.shape != (forms.grid.n_interior,):
        raise ValueError(f"expected {forms.grid.n_interior} interior values, got {v.shape}")
    mv = forms.mass_interior * v
    return float(np.sqrt(mv @ forms.solve_interior(mv)))


def bilinear_form(forms: FormMatrices, u: np.ndarray, v: np.ndarray) -> float:
    """Full discrete form v . A_full u (kernel energy + tail + exterior mass)."""
    return float(np.asarray(v) @ (forms.A_full @ np.asarray(u)))


def norm_interior(forms: FormMatrices, v: np.ndarray) -> float:
    """Lumped L2 norm over the interval."""
    return float(np.sqrt(np.sum(forms.mass_interior * np.asarray(v) ** 2)))


def norm_mu(forms: FormMatrices, g: np.ndarray) -> float:
    """Lumped L2 norm over the collar weighted by beta."""
    return float(np.sqrt(np.sum(forms.mass_mu * np.asarray(g) ** 2)))


def norm_collar(forms: FormMatrices, g: np.ndarray) -> float:
    """Lumped, unweighted L2 norm over the collar."""
    return float(np.sqrt(forms.h * np.sum(np.asarray(g) ** 2)))
