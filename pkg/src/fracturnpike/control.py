"""Finite-horizon linear-quadratic exterior control problems.

Discretize-then-optimize: the cost is the rectangle-rule sum paired with the
implicit-Euler step, so the backward solve is the exact transpose of the
forward one and the reduced gradient is exact to round-off.  The first-order
conditions of the discrete problem couple control slot k with adjoint slot
k-1; optimality residuals are evaluated with that exact pairing.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .evolution import DirichletStepper, RobinStepper, TimeGrid, Trajectory
from .operators import (
    BetaField,
    DomainSpec,
    FormMatrices,
    Grid1D,
    assemble_form,
)

__all__ = [
    "ControlProblem",
    "OptimalSolution",
    "ConvergenceError",
    "evaluate_cost",
    "reduced_gradient",
    "solve_optimal",
    "optimality_residual",
]


class ConvergenceError(RuntimeError):
    """Iteration budget exhausted; carries the last iterate and gradient norm."""

    def __init__(self, message: str, iterate: np.ndarray, grad_norm: float, iterations: int):
        super().__init__(message)
        self.iterate = iterate
        self.grad_norm = grad_norm
        self.iterations = iterations


@dataclass(frozen=True)
class ControlProblem:
    """One finite-horizon tracking problem (variant, geometry, target, solver knobs)."""

    variant: str
    spec: DomainSpec
    grid: Grid1D
    u_d: np.ndarray
    tg: TimeGrid
    beta: BetaField | None = None
    cg_tol: float = 1e-10
    max_iter: int = 500

    def __post_init__(self):
        if self.variant not in ("robin", "dirichlet"):
            raise ValueError(f"unknown variant {self.variant!r}")
        u_d = np.asarray(self.u_d, dtype=float)
        if not np.all(np.isfinite(u_d)):
            raise ValueError("target must be finite")
        if u_d.shape != (self.grid.n_interior,):
            raise ValueError("target dimension does not match the interior grid")
        if not self.cg_tol > 0:
            raise ValueError("cg_tol must be positive")
        if self.tg.theta != 1.0:
            raise ValueError("the rectangle-rule cost is paired with theta = 1 stepping")
        if self.variant == "robin" and self.beta is None:
            raise ValueError("Robin problems require a beta field")
        object.__setattr__(self, "u_d", u_d)
        u_d.setflags(write=False)

    @cached_property
    def forms(self) -> FormMatrices:
        beta = self.beta if self.beta is not None else BetaField.zero(self.grid)
        return assemble_form(self.grid, self.spec, beta)

    @cached_property
    def system(self) -> "_ReducedSystem":
        return _ReducedSystem(self)


@dataclass(frozen=True)
class OptimalSolution:
    """Optimizer output: trajectory with adjoint, cost and termination data."""

    trajectory: Trajectory
    cost: float
    grad_norm: float
    iterations: int


class _ReducedSystem:
    """Shared forward/backward machinery behind cost, gradient and probes.

    Control vectors live on the collar (all nodes for Dirichlet; entries at
    beta = 0 nodes are frozen to zero for Robin, where they carry no weight).
    """

    def __init__(self, problem: ControlProblem):
        self.problem = problem
        forms = problem.forms
        self.forms = forms
        self.tg = problem.tg
        if problem.variant == "robin":
            self.stepper = RobinStepper(forms, problem.tg)
            self.weights = forms.mass_mu.copy()
            self.active = forms.beta.values > 0
        else:
            self.stepper = DirichletStepper(forms, problem.tg)
            self.weights = np.full(forms.grid.n_collar, forms.h)
            self.active = np.ones(forms.grid.n_collar, dtype=bool)

    # -- elementary solves -------------------------------------------------

    def forward_states(self, g: np.ndarray, u0: np.ndarray | None = None) -> np.ndarray:
        """Interior states (K+1, nI) driven by the control series."""
        u = self.stepper.forward(g, u0)
        if self.problem.variant == "robin":
            return u[:, self.forms.grid.interior_mask]
        return u

    def adjoint_states(self, source: np.ndarray, terminal: np.ndarray | None = None):
        """Backward solve; returns (interior series, collar trace series).

        The trace at slot k is the variant's collar reading of the adjoint:
        its homogeneous Robin extension, or the kernel flux of its zero
        extension.  trace[k] pairs with control slot k+1.
        """
        p_full = self.stepper.backward(source, terminal)
        if self.problem.variant == "robin":
            p = p_full[:, self.forms.grid.interior_mask]
            trace = p_full[:, self.forms.grid.collar_mask]
        else:
            p = p_full
            trace = -(p_full @ self.forms.A_EI.T) / self.forms.h
        return p, trace

    def residual(
        self,
        g: np.ndarray,
        u0: np.ndarray | None = None,
        terminal: np.ndarray | None = None,
        track_target: bool = True,
    ):
        """First-order residual series r[k] = g[k] + trace[k-1] (slots 1..K).

        With u0 = terminal = None and the problem's target this is the
        reduced gradient; nonzero u0/terminal give the affine offsets used by
        the coupled-system probe.
        """
        u = self.forward_states(g, u0)
        source = u - (self.problem.u_d[None, :] if track_target else 0.0)
        p, trace = self.adjoint_states(source, terminal)
        r = np.zeros_like(g)
        r[1:] = g[1:] + np.where(self.active[None, :], trace[:-1], 0.0)
        return r, u, p, trace

    # -- weighted geometry ---------------------------------------------------

    def dot(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(self.tg.tau * np.sum(a[1:] * b[1:] * self.weights[None, :]))

    def norm(self, a: np.ndarray) -> float:
        return float(np.sqrt(max(self.dot(a, a), 0.0)))

    def zero_control(self) -> np.ndarray:
        return np.zeros((self.tg.K + 1, self.forms.grid.n_collar))

    # -- conjugate gradient ----------------------------------------------------

    def solve_cg(
        self,
        u0: np.ndarray | None = None,
        terminal: np.ndarray | None = None,
        track_target: bool = True,
        tol: float | None = None,
        max_iter: int | None = None,
    ):
        """Minimize the strictly convex reduced quadratic by CG.

        The residual map is affine with an SPD linear part (identity plus a
        nonnegative solution operator) in the weighted inner product, so CG
        applies verbatim; iteration order is fixed, making runs bit-for-bit
        reproducible.
        """
        tol = self.problem.cg_tol if tol is None else tol
        max_iter = self.problem.max_iter if max_iter is None else max_iter
        g = self.zero_control()
        r0, *_ = self.residual(g, u0, terminal, track_target)
        b = -r0
        r = b.copy()
        d = r.copy()
        rr = self.dot(r, r)
        iterations = 0
        while np.sqrt(rr) > tol * (1.0 + self.norm(g)) and iterations < max_iter:
            rd, *_ = self.residual(d, None, None, track_target=False)
            Hd = rd  # linear part: residual of d with zero data
            dHd = self.dot(d, Hd)
            alpha = rr / dHd
            g = g + alpha * d
            r = r - alpha * Hd
            rr_new = self.dot(r, r)
            d = r + (rr_new / rr) * d
            rr = rr_new
            iterations += 1
        grad_norm = float(np.sqrt(rr))
        if grad_norm > tol * (1.0 + self.norm(g)):
            raise ConvergenceError(
                f"CG did not reach tol={tol} within {max_iter} iterations "
                f"(gradient norm {grad_norm:.3e})",
                iterate=g,
                grad_norm=grad_norm,
                iterations=iterations,
            )
        return g, grad_norm, iterations


def evaluate_cost(problem: ControlProblem, g: np.ndarray) -> float:
    """Rectangle-rule cost of a control series (slots 1..K enter)."""
    sys = problem.system
    u = sys.forward_states(np.asarray(g, dtype=float))
    tau = problem.tg.tau
    track = np.sum(problem.forms.mass_interior[None, :] * (u[1:] - problem.u_d[None, :]) ** 2)
    penalty = np.sum(sys.weights[None, :] * np.asarray(g)[1:] ** 2)
    return 0.5 * tau * float(track + penalty)


def reduced_gradient(problem: ControlProblem, g: np.ndarray) -> np.ndarray:
    """Exact gradient of the discrete cost in the weighted control space."""
    r, *_ = problem.system.residual(np.asarray(g, dtype=float))
    return r


def solve_optimal(problem: ControlProblem) -> OptimalSolution:
    """Minimize the reduced cost; the returned trajectory carries the adjoint."""
    sys = problem.system
    g, grad_norm, iterations = sys.solve_cg()
    _, u, p, _ = sys.residual(g)
    g_out = g.copy()
    g_out[0] = g_out[1]  # plotting convention; slot 0 carries no unknown
    traj = Trajectory(
        variant=problem.variant,
        times=problem.tg.times,
        state=u.copy(),
        control=g_out,
        adjoint=p.copy(),
    )
    return OptimalSolution(
        trajectory=traj,
        cost=evaluate_cost(problem, g),
        grad_norm=grad_norm,
        iterations=iterations,
    )


def optimality_residual(problem: ControlProblem, sol: OptimalSolution) -> float:
    """Max over steps of the weighted collar norm of g_k + trace_{k-1}."""
    sys = problem.system
    g = sol.trajectory.control.copy()
    g[0] = 0.0
    r, *_ = sys.residual(g)
    per_step = np.sqrt(np.sum(sys.weights[None, :] * r[1:] ** 2, axis=1))
    return float(per_step.max())
