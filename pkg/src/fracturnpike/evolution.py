"""Time stepping for the fractional heat equation with exterior data.

The Robin problem is an index-1 DAE: interior rows carry the mass dynamics,
collar rows the algebraic Robin relation (the collar block is diagonal, so
exterior values are slaved pointwise).  The Dirichlet problem steps interior
values only; the datum enters through the load -A_IE g.  The backward solvers
use the scheme whose theta=1 instance is the exact transpose of the forward
step, which is what makes the reduced gradients in the control module exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .operators import BetaField, FormMatrices, GridConsistencyError

__all__ = [
    "TimeGrid",
    "Trajectory",
    "solve_parabolic_robin",
    "solve_parabolic_dirichlet",
    "solve_adjoint",
    "control_operator_adjoint",
]


@dataclass(frozen=True)
class TimeGrid:
    """Horizon T split into K steps, theta-scheme parameter in [1/2, 1]."""

    T: float
    K: int
    theta: float = 1.0

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon must be positive, got {self.T}")
        if self.K < 2:
            raise ValueError(f"need at least 2 time steps, got {self.K}")
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [1/2, 1], got {self.theta}")

    @property
    def tau(self) -> float:
        return self.T / self.K

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.K + 1) * self.tau


@dataclass(frozen=True)
class Trajectory:
    """Discrete trajectory: states, controls and (optionally) adjoints.

    All series carry K+1 time slots.  Control slot 0 is a copy of slot 1 kept
    for plotting and averaging; the discrete cost and gradient use slots 1..K.
    Optimality trajectories have state slot 0 = 0 and adjoint slot K = 0.
    """

    variant: str
    times: np.ndarray
    state: np.ndarray
    control: np.ndarray | None = None
    adjoint: np.ndarray | None = None

    def __post_init__(self):
        for arr in (self.times, self.state, self.control, self.adjoint):
            if arr is not None:
                arr.setflags(write=False)


class RobinStepper:
    """Factorized theta-scheme for the Robin DAE on one (forms, tg) pair."""

    def __init__(self, forms: FormMatrices, tg: TimeGrid):
        self.forms = forms
        self.tg = tg
        grid = forms.grid
        n = grid.nodes.size
        self.mass_hat = np.zeros(n)
        self.mass_hat[grid.interior_mask] = forms.mass_interior
        th, tau = tg.theta, tg.tau
        lhs = th * forms.A_full.copy()
        lhs[np.diag_indices_from(lhs)] += self.mass_hat / tau
        self._lhs = cho_factor(lhs)
        self._rhs_mat = None
        if th < 1.0:
            rhs = -(1.0 - th) * forms.A_full
            rhs[np.diag_indices_from(rhs)] += self.mass_hat / tau
            self._rhs_mat = rhs
        self._interior = grid.interior_mask
        self._collar = grid.collar_mask

    def consistent_initial(self, u0_interior: np.ndarray, g0: np.ndarray) -> np.ndarray:
        """Full-node initial state: collar values solve the t=0 Robin relation."""
        forms = self.forms
        u = np.zeros(forms.grid.nodes.size)
        u[self._interior] = u0_interior
        W_EI = -forms.A_EI
        denom = W_EI.sum(axis=1) + forms.mass_mu
        u[self._collar] = (W_EI @ u0_interior + forms.mass_mu * g0) / denom
        return u

    def forward(self, g: np.ndarray, u0_interior: np.ndarray | None = None) -> np.ndarray:
        """March the DAE; g has K+1 collar slots, returns (K+1, n_all) states."""
        tg, forms = self.tg, self.forms
        n = forms.grid.nodes.size
        u = np.zeros((tg.K + 1, n))
        g0 = g[0] if tg.theta < 1.0 else np.zeros(forms.grid.n_collar)
        u[0] = self.consistent_initial(
            u0_interior if u0_interior is not None else np.zeros(forms.grid.n_interior), g0
        )
        th = tg.theta
        for k in range(tg.K):
            rhs = (
                (self.mass_hat / tg.tau) * u[k]
                if self._rhs_mat is None
                else self._rhs_mat @ u[k]
            )
            g_th = th * g[k + 1] + (1.0 - th) * g[k]
            rhs[self._collar] += forms.mass_mu * g_th
            u[k + 1] = cho_solve(self._lhs, rhs)
        return u

    def backward(self, source: np.ndarray, terminal: np.ndarray | None = None) -> np.ndarray:
        """March the adjoint DAE backward; source has K+1 interior slots.

        Computes slot k-1 from slot k using source slot k (theta=1: the exact
        transpose of the forward step); terminal interior values default to 0
        and are completed by the homogeneous Robin relation on the collar.
        """
        tg, forms = self.tg, self.forms
        n = forms.grid.nodes.size
        p = np.zeros((tg.K + 1, n))
        pK = terminal if terminal is not None else np.zeros(forms.grid.n_interior)
        p[tg.K] = self.consistent_initial(pK, np.zeros(forms.grid.n_collar))
        th = tg.theta
        ext = np.vstack([source, source[-1]])  # slot K+1 replicates slot K
        for k in range(tg.K, 0, -1):
            rhs = (
                (self.mass_hat / tg.tau) * p[k]
                if self._rhs_mat is None
                else self._rhs_mat @ p[k]
            )
            src_th = th * ext[k] + (1.0 - th) * ext[k + 1]
            rhs[self._interior] += forms.mass_interior * src_th
            p[k - 1] = cho_solve(self._lhs, rhs)
        return p


class DirichletStepper:
    """Factorized theta-scheme for the interior-only Dirichlet problem."""

    def __init__(self, forms: FormMatrices, tg: TimeGrid):
        self.forms = forms
        self.tg = tg
        th, tau = tg.theta, tg.tau
        lhs = th * forms.A_II.copy()
        lhs[np.diag_indices_from(lhs)] += forms.mass_interior / tau
        self._lhs = cho_factor(lhs)
        self._rhs_mat = None
        if th < 1.0:
            rhs = -(1.0 - th) * forms.A_II
            rhs[np.diag_indices_from(rhs)] += forms.mass_interior / tau
            self._rhs_mat = rhs

    def forward(self, g: np.ndarray, u0: np.ndarray | None = None) -> np.ndarray:
        tg, forms = self.tg, self.forms
        u = np.zeros((tg.K + 1, forms.grid.n_interior))
        if u0 is not None:
            u[0] = u0
        th = tg.theta
        for k in range(tg.K):
            rhs = (
                (forms.mass_interior / tg.tau) * u[k]
                if self._rhs_mat is None
                else self._rhs_mat @ u[k]
            )
            rhs -= forms.A_IE @ (th * g[k + 1] + (1.0 - th) * g[k])
            u[k + 1] = cho_solve(self._lhs, rhs)
        return u

    def backward(self, source: np.ndarray, terminal: np.ndarray | None = None) -> np.ndarray:
        tg, forms = self.tg, self.forms
        p = np.zeros((tg.K + 1, forms.grid.n_interior))
        if terminal is not None:
            p[tg.K] = terminal
        th = tg.theta
        ext = np.vstack([source, source[-1]])
        for k in range(tg.K, 0, -1):
            rhs = (
                (forms.mass_interior / tg.tau) * p[k]
                if self._rhs_mat is None
                else self._rhs_mat @ p[k]
            )
            rhs += forms.mass_interior * (th * ext[k] + (1.0 - th) * ext[k + 1])
            p[k - 1] = cho_solve(self._lhs, rhs)
        return p


def _check_series(g: np.ndarray, tg: TimeGrid, width: int, what: str) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.shape != (tg.K + 1, width):
        raise ValueError(f"{what} must have shape ({tg.K + 1}, {width}), got {g.shape}")
    return g


def solve_parabolic_robin(
    forms: FormMatrices,
    beta: BetaField,
    g: np.ndarray,
    u0: np.ndarray,
    tg: TimeGrid,
) -> Trajectory:
    """Solve the Robin heat problem driven by the collar control series g."""
    if beta is not forms.beta and not np.array_equal(beta.values, forms.beta.values):
        raise GridConsistencyError("beta field differs from the one the form was built with")
    g = _check_series(g, tg, forms.grid.n_collar, "control series")
    u0 = np.asarray(u0, dtype=float)
    stepper = RobinStepper(forms, tg)
    u = stepper.forward(g, u0)
    return Trajectory(
        variant="robin",
        times=tg.times,
        state=u[:, forms.grid.interior_mask].copy(),
        control=g.copy(),
    )


def solve_parabolic_dirichlet(forms: FormMatrices, g: np.ndarray, tg: TimeGrid) -> Trajectory:
    """Solve the Dirichlet heat problem with zero initial state."""
    g = _check_series(g, tg, forms.grid.n_collar, "control series")
    stepper = DirichletStepper(forms, tg)
    u = stepper.forward(g)
    return Trajectory(variant="dirichlet", times=tg.times, state=u, control=g.copy())


def solve_adjoint(
    variant: str,
    forms: FormMatrices,
    beta: BetaField | None,
    source: np.ndarray,
    tg: TimeGrid,
) -> np.ndarray:
    """Backward theta-scheme with zero terminal value; returns interior values.

    The source series (typically u_k - u_d) has K+1 interior slots; slot k
    drives the step producing slot k-1, so that at theta=1 the result is the
    exact transpose of the forward scheme.  Robin collar values satisfy the
    homogeneous Robin relation and can be recovered with robin_extension.
    """
    source = _check_series(source, tg, forms.grid.n_interior, "source series")
    if variant == "robin":
        if beta is None:
            raise ValueError("Robin adjoint requires the beta field")
        p = RobinStepper(forms, tg).backward(source)
        return p[:, forms.grid.interior_mask].copy()
    if variant == "dirichlet":
        return DirichletStepper(forms, tg).backward(source)
    raise ValueError(f"unknown variant {variant!r}")


def control_operator_adjoint(forms: FormMatrices, phi: np.ndarray) -> np.ndarray:
    """Adjoint of the Dirichlet control operator: -flux(A_II^{-1} M phi).

    Algebraically -A_EI A_II^{-1} M phi / h on the collar.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (forms.grid.n_interior,):
        raise ValueError("expected an interior vector")
    w = forms.solve_interior(forms.mass_interior * phi)
    return -(forms.A_EI @ w) / forms.h
