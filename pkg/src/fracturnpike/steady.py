"""Stationary exterior-value problems and their optimality systems.

Both variants minimize J(g) = 1/2 ||u - u_d||^2 + 1/2 ||g||^2 (the control
norm is beta-weighted for Robin, plain for Dirichlet) subject to the
stationary state equation.  The optimality systems are the exact first-order
conditions of the discrete cost, solved as one symmetric linear system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .operators import (
    BetaField,
    DegenerateSystemError,
    FormMatrices,
    nonlocal_normal_derivative,
)

__all__ = [
    "SteadyTriple",
    "solve_robin_steady",
    "dirichlet_map",
    "transposition_residual",
    "solve_steady_optimality",
]


@dataclass(frozen=True)
class SteadyTriple:
    """Optimal stationary state, control and adjoint.

    u_bar and adj_bar live on interior nodes, g_bar on collar nodes (zero at
    collar nodes carrying no control weight).
    """

    u_bar: np.ndarray
    g_bar: np.ndarray
    adj_bar: np.ndarray
    variant: str

    def __post_init__(self):
        for arr in (self.u_bar, self.g_bar, self.adj_bar):
            arr.setflags(write=False)


def _check_robin_solvable(forms: FormMatrices) -> None:
    # constants span the kernel when no tail stiffness and no exterior mass pin them
    if forms.spec.tail.kind == "constant" and not np.any(forms.beta.values > 0):
        dead = np.where(forms.beta.values == 0)[0]
        raise DegenerateSystemError(
            "singular Robin system: beta vanishes on the whole collar and the "
            f"constant-tail form annihilates constants (decoupled collar nodes {dead.tolist()})"
        )


def solve_robin_steady(forms: FormMatrices, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Solve the stationary Robin problem; returns values on all nodes.

    Interior rows carry the load h*f, collar rows the weighted datum beta*h*g.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    grid = forms.grid
    if f.shape != (grid.n_interior,) or g.shape != (grid.n_collar,):
        raise ValueError("load/datum dimensions do not match the grid")
    _check_robin_solvable(forms)
    rhs = np.zeros(grid.nodes.size)
    rhs[grid.interior_mask] = forms.h * f
    rhs[grid.collar_mask] = forms.mass_mu * g
    return cho_solve(cho_factor(forms.A_full), rhs)


def dirichlet_map(forms: FormMatrices, g: np.ndarray) -> np.ndarray:
    """Harmonic-type lifting of a collar datum: u_I = -A_II^{-1} A_IE g."""
    g = np.asarray(g, dtype=float)
    if g.shape != (forms.grid.n_collar,):
        raise ValueError("datum dimension does not match the collar")
    return forms.solve_interior(-forms.A_IE @ g)


def transposition_residual(
    forms: FormMatrices, u: np.ndarray, g: np.ndarray, v: np.ndarray
) -> float:
    """Defect of the very-weak identity for a test vector v with zero collar values.

    Returns |sum_I u * op(v) * h + sum_E g * flux(v) * h|; zero to round-off
    exactly when u is the lifting of g.
    """
    u = np.asarray(u, dtype=float)
    g = np.asarray(g, dtype=float)
    v = np.asarray(v, dtype=float)
    term_interior = u @ (forms.A_II @ v)
    term_collar = g @ (forms.A_EI @ v)
    return float(abs(term_interior + term_collar))


def _solve_robin_optimality(forms: FormMatrices, u_d: np.ndarray) -> SteadyTriple:
    _check_robin_solvable(forms)
    grid = forms.grid
    n = grid.nodes.size
    mass_hat = np.zeros(n)
    mass_hat[grid.interior_mask] = forms.mass_interior
    mu_embed = np.zeros(n)
    mu_embed[grid.collar_mask] = forms.mass_mu

    # after eliminating g = lambda|_collar (on beta > 0 nodes) the conditions
    # reduce to a symmetric saddle system in (x, lambda)
    K = np.block(
        [
            [np.diag(mass_hat), forms.A_full],
            [forms.A_full, -np.diag(mu_embed)],
        ]
    )
    rhs = np.zeros(2 * n)
    rhs[:n][grid.interior_mask] = forms.mass_interior * u_d
    sol = np.linalg.solve(K, rhs)
    x, lam = sol[:n], sol[n:]

    g_bar = np.where(forms.beta.values > 0, lam[grid.collar_mask], 0.0)
    psi = -lam
    return SteadyTriple(
        u_bar=x[grid.interior_mask].copy(),
        g_bar=g_bar,
        adj_bar=psi[grid.interior_mask].copy(),
        variant="robin",
    )


def _solve_dirichlet_optimality(forms: FormMatrices, u_d: np.ndarray) -> SteadyTriple:
    nI, nE = forms.grid.n_interior, forms.grid.n_collar
    h = forms.h
    Z = np.zeros
    K = np.block(
        [
            [np.diag(forms.mass_interior), Z((nI, nE)), forms.A_II],
            [Z((nE, nI)), h * np.eye(nE), forms.A_EI],
            [forms.A_II, forms.A_IE, Z((nI, nI))],
        ]
    )
    rhs = np.concatenate([forms.mass_interior * u_d, Z(nE), Z(nI)])
    sol = np.linalg.solve(K, rhs)
    u_bar = sol[:nI]
    g_bar = sol[nI : nI + nE]
    lam_bar = -sol[nI + nE :]  # flipped so that g_bar = flux(lam_bar)
    return SteadyTriple(u_bar=u_bar, g_bar=g_bar, adj_bar=lam_bar, variant="dirichlet")


def solve_steady_optimality(variant: str, forms: FormMatrices, u_d: np.ndarray) -> SteadyTriple:
    """Solve the stationary optimal-control system for the given variant.

    The returned triple satisfies the first-order conditions of the discrete
    cost to solver precision: g_bar = -adj_bar|_collar (Robin, through the
    homogeneous extension) or g_bar = flux(adj_bar) (Dirichlet).
    """
    u_d = np.asarray(u_d, dtype=float)
    if u_d.shape != (forms.grid.n_interior,):
        raise ValueError("target dimension does not match the interior grid")
    if variant == "robin":
        return _solve_robin_optimality(forms, u_d)
    if variant == "dirichlet":
        return _solve_dirichlet_optimality(forms, u_d)
    raise ValueError(f"unknown variant {variant!r}")


def steady_adjoint_trace(forms: FormMatrices, triple: SteadyTriple, beta: BetaField | None = None) -> np.ndarray:
    """Collar trace of the stationary adjoint, in the variant's sense.

    Robin: homogeneous Robin extension of adj_bar; Dirichlet: kernel flux of
    the zero-extended adjoint.
    """
    if triple.variant == "robin":
        from .operators import robin_extension

        return robin_extension(forms, triple.adj_bar, beta if beta is not None else forms.beta)
    full = np.zeros(forms.grid.nodes.size)
    full[forms.grid.interior_mask] = triple.adj_bar
    return nonlocal_normal_derivative(forms, full)
