"""Turnpike diagnostics: averages, envelope fit, scaling weight, probes."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracturnpike import (
    BetaField,
    ControlProblem,
    DomainSpec,
    TimeGrid,
    Trajectory,
    assemble_form,
    deviation_curve,
    exp_convolution,
    fit_turnpike_rate,
    make_grid,
    scaled_deviation_check,
    scaling_function,
    solution_map_probe,
    solve_optimal,
    solve_steady_optimality,
    time_average,
)
from fracturnpike.turnpike import build_report


def build(n=48, beta_val=1.0):
    spec = DomainSpec(-1.0, 1.0, 1.0, 0.5)
    grid = make_grid(spec, n)
    beta = BetaField.constant(grid, beta_val)
    return grid, spec, beta, assemble_form(grid, spec, beta)


def optimal_run(variant, n=48, T=4.0, spu=8, target_width=0.2, beta_val=1.0):
    grid, spec, beta, forms = build(n=n, beta_val=beta_val)
    xi = grid.interior_nodes
    u_d = np.exp(-(xi**2) / (2 * target_width**2))
    problem = ControlProblem(
        variant=variant,
        spec=spec,
        grid=grid,
        u_d=u_d,
        tg=TimeGrid(T=T, K=int(round(spu * T))),
        beta=beta if variant == "robin" else None,
    )
    sol = solve_optimal(problem)
    steady = solve_steady_optimality(variant, problem.forms, u_d)
    return problem, sol, steady


class TestTimeAverage:
    def test_constant_trajectory(self):
        grid, *_ = build(n=16)
        tg = TimeGrid(T=2.0, K=8)
        v = np.linspace(0, 1, grid.n_interior)
        traj = Trajectory(
            variant="robin",
            times=tg.times,
            state=np.tile(v, (tg.K + 1, 1)),
            control=np.zeros((tg.K + 1, grid.n_collar)),
        )
        avg_state, avg_control = time_average(traj)
        assert np.max(np.abs(avg_state - v)) <= 1e-14
        assert np.max(np.abs(avg_control)) == 0.0

    def test_linear_in_time_is_exact(self):
        grid, *_ = build(n=16)
        tg = TimeGrid(T=3.0, K=12)
        v = np.ones(grid.n_interior)
        traj = Trajectory(
            variant="robin",
            times=tg.times,
            state=tg.times[:, None] * v[None, :],
            control=None,
        )
        avg_state, _ = time_average(traj)
        assert np.max(np.abs(avg_state - tg.T / 2.0)) <= 1e-13

    def test_averages_approach_steady_optimum_with_horizon(self):
        from fracturnpike import norm_interior, norm_mu

        dist_state, dist_control = [], []
        for T in (2.0, 4.0, 8.0, 16.0):
            problem, sol, steady = optimal_run("robin", n=48, T=T)
            avg_state, avg_control = time_average(sol.trajectory)
            forms = problem.forms
            dist_state.append(norm_interior(forms, avg_state - steady.u_bar))
            dist_control.append(norm_mu(forms, avg_control - steady.g_bar))
        assert all(b < a for a, b in zip(dist_state, dist_state[1:]))
        assert all(b < a for a, b in zip(dist_control, dist_control[1:]))


class TestDeviationCurve:
    def test_zero_target_gives_zero_curves(self):
        grid, spec, beta, forms = build(n=24)
        problem = ControlProblem(
            variant="robin",
            spec=spec,
            grid=grid,
            u_d=np.zeros(grid.n_interior),
            tg=TimeGrid(T=1.0, K=8),
            beta=beta,
        )
        sol = solve_optimal(problem)
        steady = solve_steady_optimality("robin", forms, problem.u_d)
        curves = deviation_curve(forms, sol.trajectory, steady, "l2")
        assert np.max(curves.state) == 0.0
        assert np.max(curves.adjoint) == 0.0
        assert np.max(curves.control) == 0.0

    def test_initial_state_deviation_is_steady_norm(self):
        from fracturnpike import norm_interior

        problem, sol, steady = optimal_run("robin", n=32, T=2.0)
        curves = deviation_curve(problem.forms, sol.trajectory, steady, "l2")
        assert curves.state[0] == pytest.approx(
            norm_interior(problem.forms, steady.u_bar), rel=1e-12
        )

    def test_u_shape(self):
        problem, sol, steady = optimal_run("robin", n=48, T=8.0)
        curves = deviation_curve(problem.forms, sol.trajectory, steady, "l2")
        interior_min = curves.state[4:-4].min()
        assert interior_min < min(curves.state[0], curves.state[-1])


class TestFitTurnpikeRate:
    def test_exact_model_recovery(self):
        T = 10.0
        t = np.linspace(0, T, 201)
        e = 2.0 * (np.exp(-3.0 * t) + np.exp(-3.0 * (T - t)))
        gamma, C, r2 = fit_turnpike_rate(e, T)
        assert gamma == pytest.approx(3.0, abs=1e-8)
        assert C == pytest.approx(2.0, abs=1e-8)
        assert r2 == pytest.approx(1.0, abs=1e-8)

    def test_flat_curve_gives_zero_rate(self):
        e = np.ones(101)
        gamma, C, r2 = fit_turnpike_rate(e, 5.0)
        assert gamma <= 1e-3
        assert C == pytest.approx(0.5, rel=1e-6)

    def test_all_floor_curve_returns_sentinel(self):
        e = np.full(50, 1e-15)
        gamma, C, r2 = fit_turnpike_rate(e, 2.0)
        assert math.isinf(gamma)
        assert r2 == 1.0

    def test_optimal_run_fits_well_at_moderate_horizon(self):
        problem, sol, steady = optimal_run("robin", n=64, T=8.0)
        curves = deviation_curve(problem.forms, sol.trajectory, steady, "l2")
        gamma, C, r2 = fit_turnpike_rate(curves.state, problem.tg.T)
        assert gamma > 0.0
        assert r2 >= 0.9


class TestScalingFunction:
    def test_midpoint_zero(self):
        assert scaling_function(5.0, 10.0, 1.7) == 0.0

    def test_reference_value(self):
        # frozen against a 50-digit evaluation
        assert scaling_function(0.0, 10.0, 1.0) == pytest.approx(
            -0.99990920426259513121, abs=1e-15
        )

    @given(
        st.floats(min_value=0.0, max_value=10.0),
        st.floats(min_value=0.0, max_value=5.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_antisymmetric_and_bounded(self, t, gamma):
        T = 10.0
        f1 = scaling_function(t, T, gamma)
        f2 = scaling_function(T - t, T, gamma)
        assert abs(f1 + f2) <= 1e-15
        assert abs(f1) <= 1.0


class TestScaledDeviation:
    def test_gamma_zero_halves_plain_norms(self):
        problem, sol, steady = optimal_run("robin", n=32, T=2.0)
        forms = problem.forms
        value0 = scaled_deviation_check(forms, sol.trajectory, steady, 0.0)
        curves = deviation_curve(forms, sol.trajectory, steady, "l2")
        quad = np.full(curves.times.size, problem.tg.tau)
        quad[0] *= 0.5
        quad[-1] *= 0.5
        plain = np.sqrt(np.sum(quad * curves.state**2)) + np.sqrt(
            np.sum(quad * curves.adjoint**2)
        )
        assert value0 == pytest.approx(0.5 * plain, rel=1e-12)

    def test_zero_target(self):
        grid, spec, beta, forms = build(n=24)
        problem = ControlProblem(
            variant="robin",
            spec=spec,
            grid=grid,
            u_d=np.zeros(grid.n_interior),
            tg=TimeGrid(T=1.0, K=8),
            beta=beta,
        )
        sol = solve_optimal(problem)
        steady = solve_steady_optimality("robin", forms, problem.u_d)
        assert scaled_deviation_check(forms, sol.trajectory, steady, 0.4) == 0.0

    def test_bounded_across_horizon_sweep_below_threshold(self):
        # for gamma under the probe threshold the scaled deviations stay
        # uniformly bounded in T
        gamma = 0.05
        values = []
        for T in (2.0, 4.0, 8.0, 16.0):
            problem, sol, steady = optimal_run("robin", n=32, T=T)
            values.append(scaled_deviation_check(problem.forms, sol.trajectory, steady, gamma))
        assert max(values) <= 3.0 * min(values)


class TestSolutionMapProbe:
    def test_deterministic_under_seed(self):
        grid, spec, beta, forms = build(n=24)
        tg = TimeGrid(T=2.0, K=8)
        r1 = solution_map_probe(forms, beta, tg, samples=3, seed=11)
        r2 = solution_map_probe(forms, beta, tg, samples=3, seed=11)
        assert r1 == r2

    def test_solves_the_coupled_system(self):
        # verify the probe machinery satisfies both equations and the coupling
        from fracturnpike.control import ControlProblem as CP

        grid, spec, beta, forms = build(n=24)
        tg = TimeGrid(T=1.0, K=8)
        problem = CP(
            variant="robin",
            spec=spec,
            grid=grid,
            u_d=np.zeros(grid.n_interior),
            tg=tg,
            beta=beta,
            cg_tol=1e-12,
        )
        sys = problem.system
        rng = np.random.default_rng(0)
        w0 = rng.standard_normal(grid.n_interior)
        phiT = rng.standard_normal(grid.n_interior)
        q, grad_norm, _ = sys.solve_cg(u0=w0, terminal=phiT, track_target=False)
        r, w, phi, trace = sys.residual(q, u0=w0, terminal=phiT, track_target=False)
        # coupling: control equals minus the adjoint trace at matched slots
        assert sys.norm(r) <= 1e-10 * (1.0 + sys.norm(q))
        # endpoint data honored
        assert np.max(np.abs(w[0] - w0)) <= 1e-12
        assert np.max(np.abs(phi[-1] - phiT)) <= 1e-12

    @pytest.mark.parametrize("variant", ["robin", "dirichlet"])
    def test_ratio_stable_when_horizon_doubles(self, variant):
        grid, spec, beta, forms = build(n=32)
        b = beta if variant == "robin" else None
        r_T = solution_map_probe(forms, b, TimeGrid(T=2.0, K=16), 8, seed=0, variant=variant)
        r_2T = solution_map_probe(forms, b, TimeGrid(T=4.0, K=32), 8, seed=0, variant=variant)
        assert 0.5 <= r_2T / r_T <= 2.0

    def test_neumann_series_threshold_keeps_scaled_deviations_bounded(self):
        grid, spec, beta, forms = build(n=32)
        probe = solution_map_probe(forms, beta, TimeGrid(T=4.0, K=32), 4, seed=1)
        gamma = 0.5 / probe
        values = []
        for T in (2.0, 4.0, 8.0, 16.0):
            problem, sol, steady = optimal_run("robin", n=32, T=T)
            values.append(scaled_deviation_check(problem.forms, sol.trajectory, steady, gamma))
        assert max(values) <= 3.0 * min(values)


class TestExpConvolution:
    def test_matches_direct_sum(self):
        rng = np.random.default_rng(1)
        eta = rng.standard_normal(40)
        tau, k = 0.1, 2.0
        h = exp_convolution(eta, tau, k)
        m = 25
        direct = sum(tau * eta[j] * math.exp(-k * (m - j) * tau) for j in range(m + 1))
        assert h[m] == pytest.approx(direct, rel=1e-12)

    def test_lp_bound_uniform_in_horizon(self):
        # |h|_p <= C |eta|_1 for p in {1, 2, inf}; one C = max(1/k, 1/sqrt(k), 1)
        # covers every horizon, so the single constant 1 works here (k = 3/2)
        k = 1.5
        consts = {1: [], 2: [], np.inf: []}
        for T in (2.0, 4.0, 8.0, 16.0):
            K = int(50 * T)
            tau = T / K
            t = np.arange(K + 1) * tau
            eta = np.cos(3.0 * t) + 0.5  # synthetic integrable signal
            h = exp_convolution(eta, tau, k)
            l1 = tau * np.sum(np.abs(eta))
            consts[1].append(tau * np.sum(np.abs(h)) / l1)
            consts[2].append(np.sqrt(tau * np.sum(h**2)) / l1)
            consts[np.inf].append(np.max(np.abs(h)) / l1)
        for vals in consts.values():
            assert max(vals) <= 1.0


class TestBuildReport:
    def test_report_fields_consistent(self):
        problem, sol, steady = optimal_run("robin", n=48, T=4.0)
        report = build_report(problem.forms, problem, sol, steady)
        assert report.T == 4.0
        assert np.all(report.curves.state >= 0.0)
        assert 0.0 <= report.r2 <= 1.0
        assert report.avg_err_state > 0.0
        assert isinstance(report.envelope_pass, bool)
