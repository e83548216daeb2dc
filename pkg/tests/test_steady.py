"""Stationary solvers and their optimality systems."""

import numpy as np
import pytest

from fracturnpike import (
    BetaField,
    DegenerateSystemError,
    DomainSpec,
    TailMode,
    assemble_form,
    dirichlet_map,
    make_grid,
    norm_collar,
    norm_interior,
    norm_mu,
    robin_extension,
    solve_robin_steady,
    solve_steady_optimality,
    transposition_residual,
)
from fracturnpike.steady import steady_adjoint_trace


def build(n=64, s=0.5, tail=None, beta_val=1.0):
    spec = DomainSpec(-1.0, 1.0, 1.0, s, tail=tail or TailMode.zero())
    grid = make_grid(spec, n)
    beta = BetaField.constant(grid, beta_val)
    return grid, spec, beta, assemble_form(grid, spec, beta)


class TestRobinSteady:
    def test_zero_data_zero_solution(self):
        grid, *_, forms = build()
        x = solve_robin_steady(forms, np.zeros(grid.n_interior), np.zeros(grid.n_collar))
        assert np.max(np.abs(x)) <= 1e-14

    def test_constant_datum_constant_solution(self):
        c = 2.5
        grid, spec, beta, forms = build(tail=TailMode.constant(c), beta_val=0.8)
        x = solve_robin_steady(forms, np.zeros(grid.n_interior), np.full(grid.n_collar, c))
        assert np.max(np.abs(x - c)) <= 1e-10

    def test_generic_residual(self):
        grid, spec, beta, forms = build(n=96, beta_val=1.3)
        rng = np.random.default_rng(0)
        f = rng.standard_normal(grid.n_interior)
        g = rng.standard_normal(grid.n_collar)
        x = solve_robin_steady(forms, f, g)
        rhs = np.zeros(grid.nodes.size)
        rhs[grid.interior_mask] = forms.h * f
        rhs[grid.collar_mask] = forms.mass_mu * g
        res = forms.A_full @ x - rhs
        assert np.linalg.norm(res) <= 1e-10 * np.linalg.norm(rhs)

    def test_degenerate_system_is_named(self):
        grid, spec, _, _ = build(tail=TailMode.constant(0.0), beta_val=0.0)
        beta0 = BetaField.zero(grid)
        forms = assemble_form(grid, spec, beta0)
        with pytest.raises(DegenerateSystemError, match="collar"):
            solve_robin_steady(forms, np.zeros(grid.n_interior), np.zeros(grid.n_collar))


class TestDirichletMap:
    def test_zero(self):
        grid, *_, forms = build()
        assert np.max(np.abs(dirichlet_map(forms, np.zeros(grid.n_collar)))) == 0.0

    def test_constant_datum_constant_lift(self):
        grid, spec, beta, forms = build(tail=TailMode.constant(1.7))
        u = dirichlet_map(forms, np.full(grid.n_collar, 1.7))
        assert np.max(np.abs(u - 1.7)) <= 1e-10

    def test_maximum_principle(self):
        # rows are diagonally dominant with nonpositive off-diagonal entries,
        # so the lifting of data in [0, 1] stays in [0, 1]
        grid, *_, forms = build(n=48)
        rng = np.random.default_rng(1)
        for _ in range(5):
            g = rng.uniform(0.0, 1.0, grid.n_collar)
            u = dirichlet_map(forms, g)
            assert np.all(u >= -1e-12) and np.all(u <= 1.0 + 1e-12)

    def test_linearity_and_gain_stable_under_refinement(self):
        gains = []
        for n in (32, 64, 128, 256):
            grid, spec, beta, forms = build(n=n)
            g = np.exp(-((grid.collar_nodes - 1.25) ** 2) / 0.08)
            u = dirichlet_map(forms, g)
            u2 = dirichlet_map(forms, 2.0 * g)
            assert np.max(np.abs(u2 - 2.0 * u)) <= 1e-12 * max(1.0, np.max(np.abs(u2)))
            gains.append(norm_interior(forms, u) / norm_collar(forms, g))
        for g1, g2 in zip(gains, gains[1:]):
            assert 0.5 <= g2 / g1 <= 2.0


class TestTranspositionResidual:
    def test_lifting_annihilates_all_tests(self):
        grid, *_, forms = build(n=48)
        rng = np.random.default_rng(2)
        g = rng.standard_normal(grid.n_collar)
        u = dirichlet_map(forms, g)
        scale = norm_interior(forms, u) + norm_collar(forms, g)
        for _ in range(10):
            v = rng.standard_normal(grid.n_interior)
            assert transposition_residual(forms, u, g, v) <= 1e-12 * scale * np.linalg.norm(v)

    def test_zero_data(self):
        grid, *_, forms = build(n=16)
        z = np.zeros(grid.n_interior)
        assert transposition_residual(forms, z, np.zeros(grid.n_collar), z) == 0.0

    def test_perturbation_grows_linearly(self):
        grid, *_, forms = build(n=32)
        rng = np.random.default_rng(3)
        g = rng.standard_normal(grid.n_collar)
        u = dirichlet_map(forms, g)
        v = rng.standard_normal(grid.n_interior)
        res = []
        for delta in (1e-6, 1e-4, 1e-2):
            up = u.copy()
            up[5] += delta
            res.append(transposition_residual(forms, up, g, v))
        assert res[1] == pytest.approx(100.0 * res[0], rel=1e-3)
        assert res[2] == pytest.approx(100.0 * res[1], rel=1e-3)


class TestSteadyOptimality:
    @pytest.mark.parametrize("variant", ["robin", "dirichlet"])
    def test_zero_target_zero_triple(self, variant):
        grid, *_, forms = build(n=32)
        triple = solve_steady_optimality(variant, forms, np.zeros(grid.n_interior))
        for arr in (triple.u_bar, triple.g_bar, triple.adj_bar):
            assert np.max(np.abs(arr)) <= 1e-12

    @pytest.mark.parametrize("variant", ["robin", "dirichlet"])
    def test_minimizer_beats_zero_control(self, variant):
        grid, spec, beta, forms = build(n=48)
        xi = grid.interior_nodes
        u_d = np.exp(-(xi**2) / 0.08)
        triple = solve_steady_optimality(variant, forms, u_d)
        weights = forms.mass_mu if variant == "robin" else np.full(grid.n_collar, forms.h)
        cost = 0.5 * norm_interior(forms, triple.u_bar - u_d) ** 2 + 0.5 * np.sum(
            weights * triple.g_bar**2
        )
        assert cost <= 0.5 * norm_interior(forms, u_d) ** 2 + 1e-12

    @pytest.mark.parametrize("variant", ["robin", "dirichlet"])
    def test_even_target_gives_even_control(self, variant):
        grid, spec, beta, forms = build(n=48)
        xi = grid.interior_nodes
        u_d = np.exp(-(xi**2) / 0.1)
        triple = solve_steady_optimality(variant, forms, u_d)
        # node layout is reflection-symmetric, so an even target must produce
        # an even control (checked by reversing the collar ordering)
        assert np.max(np.abs(triple.g_bar - triple.g_bar[::-1])) <= 1e-10

    def test_robin_state_equation_and_first_order_condition(self):
        grid, spec, beta, forms = build(n=48, beta_val=0.9)
        rng = np.random.default_rng(4)
        u_d = rng.standard_normal(grid.n_interior)
        triple = solve_steady_optimality("robin", forms, u_d)
        # state equation: the optimal state is the Robin solve of g_bar
        x = solve_robin_steady(forms, np.zeros(grid.n_interior), triple.g_bar)
        assert np.max(np.abs(x[grid.interior_mask] - triple.u_bar)) <= 1e-9
        # adjoint equation: A psi = M (u - u_d) with homogeneous collar rows
        psi_full = np.zeros(grid.nodes.size)
        psi_full[grid.interior_mask] = triple.adj_bar
        psi_full[grid.collar_mask] = robin_extension(forms, triple.adj_bar, beta)
        res = forms.A_full @ psi_full
        res[grid.interior_mask] -= forms.mass_interior * (triple.u_bar - u_d)
        assert np.max(np.abs(res)) <= 1e-10 * (1.0 + np.max(np.abs(u_d)))
        # first-order condition g = -psi on the collar
        trace = steady_adjoint_trace(forms, triple)
        assert np.max(np.abs(triple.g_bar + trace)) <= 1e-9

    def test_dirichlet_state_equation_and_first_order_condition(self):
        grid, spec, beta, forms = build(n=48)
        rng = np.random.default_rng(5)
        u_d = rng.standard_normal(grid.n_interior)
        triple = solve_steady_optimality("dirichlet", forms, u_d)
        u = dirichlet_map(forms, triple.g_bar)
        assert np.max(np.abs(u - triple.u_bar)) <= 1e-9
        lam_res = forms.A_II @ triple.adj_bar - forms.mass_interior * (triple.u_bar - u_d)
        assert np.max(np.abs(lam_res)) <= 1e-10 * (1.0 + np.max(np.abs(u_d)))
        trace = steady_adjoint_trace(forms, triple)
        assert np.max(np.abs(triple.g_bar - trace)) <= 1e-9

    @pytest.mark.parametrize("variant", ["robin", "dirichlet"])
    def test_reduced_gradient_vanishes_at_optimum(self, variant):
        # the steady first-order system is the exact KKT system of the
        # discrete quadratic cost, so the reduced gradient is round-off small
        grid, spec, beta, forms = build(n=32)
        xi = grid.interior_nodes
        u_d = np.cos(1.5 * xi)
        triple = solve_steady_optimality(variant, forms, u_d)
        trace = steady_adjoint_trace(forms, triple)
        grad = triple.g_bar + trace if variant == "robin" else triple.g_bar - trace
        if variant == "robin":
            gnorm = norm_mu(forms, grad)
            ref = norm_mu(forms, triple.g_bar)
        else:
            gnorm = norm_collar(forms, grad)
            ref = norm_collar(forms, triple.g_bar)
        assert gnorm <= 1e-9 * (1.0 + ref)
