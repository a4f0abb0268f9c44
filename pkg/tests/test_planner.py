import math

import numpy as np
import pytest

from mfglab import (
    Grid,
    SolverParams,
    density_uniform,
    planner_cost,
    social_cost,
    solve_mfg,
    solve_planner_descent,
    solve_planner_system,
    weighted_average,
)
from mfglab.mfg import feedback_drift
from mfglab.model import coupling_spatial
from mfglab.planner import ControlObjective

from conftest import make_problem

TWO_PI = 2.0 * np.pi


class TestPlannerCost:
    def test_trivial_zero(self, grid32):
        prob = make_problem(grid32, "zero", amplitude=0.0)
        shape = (grid32.nt + 1, grid32.n)
        assert planner_cost(np.ones(shape), np.zeros(shape), prob) == 0.0

    def test_constant_control_unit_mass(self, grid32, rng):
        # running kinetic cost integrates to (T - t0) |a|^2 / 2 whatever m is
        prob = make_problem(grid32, "zero", amplitude=0.0)
        shape = (grid32.nt + 1, grid32.n)
        a = 0.73
        m = np.ones(shape)
        cost = planner_cost(m, np.full(shape, a), prob)
        assert cost == pytest.approx((grid32.T - grid32.t0) * a**2 / 2, rel=1e-13)

    def test_against_fsum_requadrature(self, rng):
        # independent extended-precision summation of the same integrand
        g = Grid(n=32, nt=16)
        prob = make_problem(g, "potential", lam=0.7)
        m = np.stack([np.ones(g.n) + 0.3 * np.cos(TWO_PI * g.xs() + k * 0.1)
                      for k in range(g.nt + 1)])
        m /= (m.sum(axis=1) * g.dx)[:, None]
        a = rng.standard_normal((g.nt + 1, g.n))
        x = g.xs()
        terms = []
        for k in range(g.nt):
            kin = math.fsum(float(v) for v in 0.5 * a[k] ** 2 * m[k]) * g.dx
            terms.append(g.dt * (kin + weighted_average(prob.coupling, m[k])))
        oracle = math.fsum(terms)
        assert planner_cost(m, a, prob) == pytest.approx(oracle, rel=1e-12)

    def test_shape_check(self, grid32):
        prob = make_problem(grid32, "zero", amplitude=0.0)
        with pytest.raises(ValueError):
            planner_cost(np.ones((3, grid32.n)), np.zeros((3, grid32.n)), prob)


class TestAdjointGradient:
    @pytest.mark.parametrize("label,term_lam", [("convolution", 0.0),
                                                ("potential", 0.0),
                                                ("xfree", 0.6)])
    def test_matches_finite_differences(self, label, term_lam, rng):
        g = Grid(n=16, nt=8, T=0.5)
        term = coupling_spatial(g, lambda x: np.sin(TWO_PI * x), lam=term_lam)
        prob = make_problem(g, label, lam=0.8, amplitude=0.3, terminal=term)
        obj = ControlObjective(prob)
        a = 0.5 + 0.3 * rng.standard_normal((g.nt + 1, g.n))  # stay off the upwind kink
        grad = obj.gradient(a)
        h = 1e-6
        for _ in range(25):
            k = int(rng.integers(0, g.nt + 1))
            i = int(rng.integers(0, g.n))
            ap, am = a.copy(), a.copy()
            ap[k, i] += h
            am[k, i] -= h
            fd = (obj.objective(ap) - obj.objective(am)) / (2 * h)
            assert grad[k, i] == pytest.approx(fd, rel=1e-5, abs=1e-12)

    def test_terminal_level_is_inert(self, rng):
        g = Grid(n=16, nt=8)
        prob = make_problem(g, "convolution", lam=0.5, amplitude=0.3)
        obj = ControlObjective(prob)
        a = rng.standard_normal((g.nt + 1, g.n))
        assert np.all(obj.gradient(a)[g.nt] == 0.0)
        b = a.copy()
        b[g.nt] += 3.0
        assert obj.objective(a) == obj.objective(b)


class TestPlannerSystem:
    def test_decoupled_equals_mfg(self, grid64, fast_params):
        prob = make_problem(grid64, "zero", amplitude=0.5)
        mfg = solve_mfg(prob, fast_params)
        plan = solve_planner_system(prob, fast_params)
        np.testing.assert_array_equal(plan.u_hat.values, mfg.u.values)
        np.testing.assert_array_equal(plan.m_hat.values, mfg.m.values)

    def test_potential_source_cancels_coupling(self, grid64, fast_params):
        # the optimality source equals -F for a potential coupling, so the
        # planner value function is identically zero and the optimum is the
        # drift-free heat flow with zero cost
        prob = make_problem(grid64, "potential", lam=0.5)
        plan = solve_planner_system(prob, fast_params)
        assert np.abs(plan.u_hat.values).max() < 1e-12
        assert abs(plan.cost) < 1e-12

    def test_efficient_structure_matches_equilibrium(self, grid64, fast_params):
        prob = make_problem(grid64, "efficient", lam=1.0)
        mfg = solve_mfg(prob, fast_params)
        plan = solve_planner_system(prob, fast_params)
        du = feedback_drift(prob, mfg.u.values)
        duh = feedback_drift(prob, plan.u_hat.values)
        assert np.abs(du - duh).max() <= 1e-6

    def test_efficient_with_spatial_terminal_shifts_by_average(self, grid64, fast_params):
        # m-independent G satisfies the terminal structure condition; the
        # planner value differs from the equilibrium one by int G dm(T)
        term = coupling_spatial(grid64, lambda x: np.cos(TWO_PI * x), lam=0.4)
        prob = make_problem(grid64, "efficient", lam=1.0, terminal=term)
        mfg = solve_mfg(prob, fast_params)
        plan = solve_planner_system(prob, fast_params)
        c = float(prob.terminal.eval(mfg.m.values[-1]) @ mfg.m.values[-1]) * grid64.dx
        diff = mfg.u.values - plan.u_hat.values
        assert np.abs(diff - c).max() <= 1e-10

    def test_flux_consistency(self, grid64, fast_params):
        # w_hat + m_hat * dp_h0(x, Du_hat) = 0: the representation formula
        prob = make_problem(grid64, "convolution", lam=1.0)
        plan = solve_planner_system(prob, fast_params)
        u = plan.u_hat.values
        du = (np.roll(u, -1, axis=1) - np.roll(u, 1, axis=1)) / (2 * grid64.dx)
        dp = prob.hamiltonian.dp_h0(grid64.xs()[None, :], du)
        defect = plan.w_hat.values[..., 0] + plan.m_hat.values * dp
        assert np.abs(defect).max() <= 1e-10

    def test_cost_field_matches_quadrature(self, grid64, fast_params):
        prob = make_problem(grid64, "convolution", lam=1.0)
        plan = solve_planner_system(prob, fast_params)
        drift = feedback_drift(prob, plan.u_hat.values)
        assert plan.cost == planner_cost(plan.m_hat.values, drift, prob)


class TestPlannerDescent:
    def test_decoupled_stays_at_zero(self, grid64, fast_params):
        prob = make_problem(grid64, "zero", amplitude=0.5)
        plan = solve_planner_descent(prob, fast_params)
        assert abs(plan.cost) < 1e-14
        assert np.abs(plan.control.values).max() < 1e-12

    def test_mutual_oracle_agreement(self, grid64, fast_params):
        for label, lam in [("potential", 0.5), ("convolution", 1.0)]:
            prob = make_problem(grid64, label, lam=lam)
            syst = solve_planner_system(prob, fast_params)
            desc = solve_planner_descent(prob, fast_params)
            scale = 1.0 + max(abs(syst.cost), abs(desc.cost))
            assert abs(syst.cost - desc.cost) <= 1e-3 * scale

    def test_monotone_objective_history(self, grid64, fast_params):
        prob = make_problem(grid64, "convolution", lam=1.0)
        plan = solve_planner_descent(prob, fast_params)
        hist = np.array(plan.objective_history)
        assert np.all(np.diff(hist) <= 1e-15 * (1 + np.abs(hist[:-1])))

    def test_never_exceeds_equilibrium_cost(self, grid64, fast_params):
        prob = make_problem(grid64, "xfree", lam=1.0)
        mfg = solve_mfg(prob, fast_params)
        plan = solve_planner_descent(prob, fast_params, init=mfg.alpha_star)
        assert plan.cost <= social_cost(mfg, prob) + 1e-15
        assert plan.objective_history[0] == pytest.approx(social_cost(mfg, prob), rel=1e-14)

    def test_cost_field_matches_quadrature(self, grid64, fast_params):
        prob = make_problem(grid64, "potential", lam=0.5)
        plan = solve_planner_descent(prob, fast_params)
        assert plan.cost == planner_cost(plan.m_hat.values, plan.control.values, prob)

    def test_bad_init_shape_rejected(self, grid64, fast_params):
        prob = make_problem(grid64, "zero", amplitude=0.0)
        with pytest.raises(ValueError):
            solve_planner_descent(prob, fast_params, init=np.zeros((3, grid64.n)))
