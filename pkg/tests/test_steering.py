import cvxpy as cp
import numpy as np
import pytest
from scipy.stats import norm

from beliefroadmap.beliefs import GaussianBelief
from beliefroadmap.conic import ConicProgram, default_backend
from beliefroadmap.field import FieldConfig, build_wind_field
from beliefroadmap.lifting import build_triple_integrator, causal_mask, lift, open_loop_covariance
from beliefroadmap.mathutil import psd_factor, symmetrize
from beliefroadmap.steering import (
    PolytopeConstraints,
    chance_constraint_residuals,
    chance_constraint_rows,
    generate_sigma_points,
    mean_steering_guess,
    sigma_second_moment,
    solve_min_coverage_edge,
    solve_robust_edge,
)

STATE_BOUNDS = {0: (0, 10), 1: (0, 10), 2: (-10, 10), 3: (-10, 10), 4: (-100, 100), 5: (-100, 100)}


@pytest.fixture(scope="module")
def field():
    return build_wind_field(FieldConfig())


@pytest.fixture(scope="module")
def blk6():
    return lift(build_triple_integrator(0.1), 6)


@pytest.fixture(scope="module")
def constraints():
    return PolytopeConstraints.from_box_bounds(6, 2, STATE_BOUNDS)


@pytest.fixture(scope="module")
def center_edge(blk6, field, constraints):
    belief = GaussianBelief(mean=[5, 5, 0, 0, 0, 0], cov=0.1 * np.eye(6))
    goal = np.array([6, 5, 0, 0, 0, 0.0])
    return belief, goal, solve_min_coverage_edge(blk6, belief, goal, field, constraints)


class TestPolytopeConstraints:
    def test_counts_from_boxes(self, constraints):
        assert constraints.n_state_rows == 12
        assert constraints.n_control_rows == 0

    def test_epsilon_validation(self):
        with pytest.raises(ValueError):
            PolytopeConstraints.from_box_bounds(6, 2, {0: (0, 1)}, eps=0.6)
        with pytest.raises(ValueError):
            PolytopeConstraints.from_box_bounds(6, 2, {0: (0, 1)}, eps=0.0)
        # the boundary value 0.5 degrades gracefully to a mean constraint
        PolytopeConstraints.from_box_bounds(6, 2, {0: (0, 1)}, eps=0.5)


class TestChanceConstraintRows:
    def _program_pieces(self, blk):
        V = cp.Variable(blk.nu)
        L = cp.Variable((blk.nu, blk.nx))
        x_mean = np.zeros(blk.nx) + blk.B_blk @ V
        s_half = np.eye(blk.nx)
        return V, L, x_mean, s_half

    def test_row_count(self, blk6):
        cons = PolytopeConstraints.from_box_bounds(
            6, 2, STATE_BOUNDS, control_bounds={0: (-50, 50), 1: (-50, 50)}
        )
        V, L, x_mean, s_half = self._program_pieces(blk6)
        rows = chance_constraint_rows(blk6, x_mean, V, L, s_half, cons)
        assert len(rows) == (blk6.N + 1) * 12 + blk6.N * 4

    def test_median_epsilon_reduces_to_mean_row(self, blk6):
        cons = PolytopeConstraints.from_box_bounds(6, 2, {0: (0, 10)}, eps=0.5)
        V, L, x_mean, s_half = self._program_pieces(blk6)
        rows = chance_constraint_rows(blk6, x_mean, V, L, s_half, cons)
        # with quantile 0 the cone coefficient vanishes; residuals equal the
        # mean-only slack
        res = chance_constraint_residuals(
            blk6, np.zeros(blk6.nx), np.zeros(blk6.nu), np.zeros((blk6.nu, blk6.nx)), s_half, cons
        )
        assert np.allclose(res[::2], 10.0)
        assert np.allclose(res[1::2], 0.0)
        assert len(rows) == (blk6.N + 1) * 2

    def test_quantile_coefficient(self):
        assert norm.ppf(1 - 0.05) == pytest.approx(1.6449, abs=1e-4)


class TestMinCoverageEdge:
    def test_success_and_mean_exactness(self, center_edge, blk6):
        _, goal, sol = center_edge
        assert sol.success
        assert np.max(np.abs(sol.terminal_mean - goal)) <= 1e-6
        assert np.allclose(sol.terminal_cov, sol.cost * np.eye(6))

    def test_objective_matches_recomputed_spectral_norm(self, center_edge, blk6, field):
        belief, _, sol = center_edge
        S = open_loop_covariance(blk6, belief.cov, sol.disturbance.w_cov)
        closed = np.eye(blk6.nx) + blk6.B_blk @ sol.policy.L
        mat = psd_factor(S).T @ closed.T[:, blk6.x_slice(blk6.N)]
        norm2 = float(np.linalg.norm(mat, 2))
        assert abs(sol.objective - norm2) <= 1e-5 * max(1.0, norm2)
        # factor truncation error is amplified by the closed-loop gain
        assert sol.cost == pytest.approx(norm2**2, rel=1e-4)

    def test_solution_satisfies_rows_posthoc(self, center_edge, blk6, field, constraints):
        belief, _, sol = center_edge
        S = open_loop_covariance(blk6, belief.cov, sol.disturbance.w_cov)
        x_mean = sol.policy.x_mean
        res = chance_constraint_residuals(
            blk6, x_mean, sol.policy.V, sol.policy.L, psd_factor(S), constraints
        )
        assert res.min() >= -1e-6

    def test_causality_pattern_on_returned_gain(self, center_edge, blk6):
        _, _, sol = center_edge
        mask = causal_mask(blk6.N, blk6.n, blk6.m)
        assert np.allclose(sol.policy.L[~mask], 0.0)
        assert np.allclose(sol.policy.K[~mask], 0.0)

    def test_deterministic_belief_and_field_gives_zero_cost(self, blk6):
        field0 = build_wind_field(FieldConfig(variance=0.0))
        belief = GaussianBelief(mean=[5, 5, 0, 0, 0, 0], cov=np.zeros((6, 6)))
        cons = PolytopeConstraints.from_box_bounds(6, 2, STATE_BOUNDS)
        sol = solve_min_coverage_edge(blk6, belief, [6, 5, 0, 0, 0, 0], field0, cons)
        assert sol.success
        assert sol.cost <= 1e-10

    def test_goal_outside_box_infeasible(self, blk6, field, constraints):
        belief = GaussianBelief(mean=[5, 5, 0, 0, 0, 0], cov=0.1 * np.eye(6))
        sol = solve_min_coverage_edge(blk6, belief, [11.5, 5, 0, 0, 0, 0], field, constraints)
        assert sol.status == "infeasible"

    def test_dual_route_cost_agreement(self, center_edge, blk6, field, constraints):
        # re-solve the identical program under a perturbed objective scaling
        # and require matching reported costs
        belief, goal, sol = center_edge
        again = solve_min_coverage_edge(
            blk6, belief, goal, field, constraints, rescale=0.5
        )
        assert again.success
        assert abs(again.cost - sol.cost) / max(again.cost, sol.cost) <= 1e-4

    def test_funnel_monotonicity(self, blk6, field, constraints):
        # growing the initial covariance cannot shrink the optimal cost
        belief_small = GaussianBelief(mean=[4, 4, 0, 0, 0, 0], cov=0.05 * np.eye(6))
        belief_large = GaussianBelief(mean=[4, 4, 0, 0, 0, 0], cov=0.1 * np.eye(6))
        goal = np.array([5, 4.5, 0, 0, 0, 0.0])
        c_small = solve_min_coverage_edge(blk6, belief_small, goal, field, constraints)
        c_large = solve_min_coverage_edge(blk6, belief_large, goal, field, constraints)
        assert c_small.success and c_large.success
        assert c_large.cost >= c_small.cost - 1e-6


class TestSigmaPoints:
    def test_count_is_four_n(self, blk6, field):
        belief = GaussianBelief(mean=[5, 5, 0, 0, 0, 0], cov=0.1 * np.eye(6))
        u = mean_steering_guess(blk6, belief.mean, np.array([6, 5, 0, 0, 0, 0.0]))
        points = generate_sigma_points(belief, blk6, field, u)
        assert len(points) == 24

    def test_states_average_to_mean_and_sit_on_contour(self, blk6, field):
        rng = np.random.default_rng(12)
        root = rng.normal(size=(6, 6))
        cov = symmetrize(root @ root.T) * 0.02 + 0.01 * np.eye(6)
        mean = np.array([5, 5, 0.2, -0.1, 0, 0.0])
        belief = GaussianBelief(mean=mean, cov=cov)
        u = np.zeros(blk6.nu)
        points = generate_sigma_points(belief, blk6, field, u)
        states = {p.x0.tobytes(): p.x0 for p in points}.values()
        states = np.array(list(states))
        assert states.shape == (12, 6)
        assert np.allclose(states.mean(axis=0), mean, atol=1e-12)
        inv = np.linalg.inv(cov)
        for x0 in states:
            val = (x0 - mean) @ inv @ (x0 - mean)
            assert val == pytest.approx(6.0, abs=1e-8)

    def test_second_moment_zero_offset(self, blk6):
        w_cov = 0.1 * np.eye(blk6.nw)
        mean = np.zeros(6)
        w_mean = np.ones(blk6.nw)
        s = sigma_second_moment(blk6, mean, mean, w_mean, w_cov, w_mean)
        assert np.allclose(s, blk6.G_blk @ w_cov @ blk6.G_blk.T)

    def test_second_moment_rank_one(self, blk6):
        x0 = np.array([1, 0, 0, 0, 0, 0.0])
        s = sigma_second_moment(
            blk6, x0, np.zeros(6), np.zeros(blk6.nw), np.zeros((blk6.nw, blk6.nw)), np.zeros(blk6.nw)
        )
        assert np.linalg.matrix_rank(s, tol=1e-10) <= 1

    def test_second_moment_psd(self, blk6):
        rng = np.random.default_rng(3)
        for _ in range(5):
            root = rng.normal(size=(blk6.nw, blk6.nw))
            w_cov = symmetrize(root @ root.T)
            s = sigma_second_moment(
                blk6,
                rng.normal(size=6),
                rng.normal(size=6),
                rng.normal(size=blk6.nw),
                w_cov,
                rng.normal(size=blk6.nw),
            )
            assert np.linalg.eigvalsh(s)[0] >= -1e-9 * np.linalg.norm(s)


class TestRobustEdge:
    def test_success_and_lossless_gap(self, blk6, field, constraints):
        belief = GaussianBelief(mean=[5, 5, 0, 0, 0, 0], cov=0.1 * np.eye(6))
        sol = solve_robust_edge(blk6, belief, [6, 5, 0, 0, 0, 0], field, constraints)
        assert sol.success
        assert sol.lossless_gap <= 1e-4
        assert np.allclose(sol.terminal_cov, sol.cost * np.eye(6))
        assert sol.cost == pytest.approx(float(np.linalg.eigvalsh(sol.sigma_f)[-1]), rel=1e-9)

    def test_degenerate_initial_belief_matches_min_coverage(self, blk6, constraints):
        uniform = build_wind_field(FieldConfig(flow_gain=0.0))
        belief = GaussianBelief(mean=[5, 5, 0, 0, 0, 0], cov=np.zeros((6, 6)))
        goal = np.array([5.8, 5.1, 0, 0, 0, 0.0])
        robust = solve_robust_edge(blk6, belief, goal, uniform, constraints)
        base = solve_min_coverage_edge(blk6, belief, goal, uniform, constraints)
        assert robust.success and base.success
        assert abs(robust.cost - base.cost) / max(robust.cost, base.cost) <= 1e-3

    def test_psd_block_enumeration(self, blk6, field):
        # one Schur block per sigma point plus the objective epigraph
        belief = GaussianBelief(mean=[5, 5, 0, 0, 0, 0], cov=0.1 * np.eye(6))
        u = mean_steering_guess(blk6, belief.mean, np.array([6, 5, 0, 0, 0, 0.0]))
        points = generate_sigma_points(belief, blk6, field, u)
        assert len(points) + 1 == 4 * blk6.n + 1


class TestConicProgram:
    def test_validate_rejects_undeclared_variable(self):
        x = cp.Variable(3, name="x")
        y = cp.Variable(3, name="y")
        program = ConicProgram(
            variables={"x": x},
            objective=cp.Minimize(cp.sum(x)),
            equalities=[x + y == 1],
        )
        with pytest.raises(ValueError):
            program.validate()

    def test_backend_statuses(self):
        x = cp.Variable(2, name="x")
        ok = ConicProgram(
            variables={"x": x},
            objective=cp.Minimize(cp.sum_squares(x)),
            equalities=[cp.sum(x) == 1],
        )
        res = default_backend().solve(ok)
        assert res.status == "success"
        assert res.objective == pytest.approx(0.5, abs=1e-6)
        bad = ConicProgram(
            variables={"x": x},
            objective=cp.Minimize(cp.sum(x)),
            equalities=[cp.sum(x) == 1],
            soc_constraints=[cp.sum(x) <= 0],
        )
        res = default_backend().solve(bad)
        assert res.status == "infeasible"
