"""Covariance-steering edge controllers.

Two controllers steer a Gaussian belief to a goal mean over the lifted
horizon, both returning an isotropic planned goal covariance sized by their
optimal cost:

* min-coverage: minimizes the spectral norm of the terminal covariance
  factor, so the goal covariance mouth is as small as possible;
* robust: approximates the initial distribution by sigma points carrying
  their own disturbance linearizations and minimizes the worst-case largest
  eigenvalue of the terminal second moment over all of them.

Both enforce polytopic state/control chance constraints convexified through
the normal quantile, and an exact terminal mean equality.
"""

from dataclasses import dataclass, replace

import cvxpy as cp
import numpy as np
from scipy.stats import norm as normal_dist

from .beliefs import GaussianBelief
from .conic import ConicProgram, default_backend
from .field import discretize_along
from .lifting import FeedbackPolicy, open_loop_covariance, rollout_nominal
from .mathutil import psd_factor, psd_sqrt, symmetrize

__all__ = [
    "PolytopeConstraints",
    "SigmaPoint",
    "EdgeSolution",
    "chance_constraint_rows",
    "chance_constraint_residuals",
    "solve_min_coverage_edge",
    "generate_sigma_points",
    "sigma_second_moment",
    "solve_robust_edge",
    "EdgeController",
    "mean_steering_guess",
]

VERIFY_SLACK = 1e-6
ROLLOUT_TOL = 1e-9
ROLLOUT_MAX_ITER = 50


def _check_epsilons(eps):
    eps = np.asarray(eps, dtype=float)
    if eps.size and (np.any(eps <= 0.0) or np.any(eps > 0.5)):
        raise ValueError("chance levels must lie in (0, 0.5]")
    return eps


@dataclass(frozen=True)
class PolytopeConstraints:
    """Rows alpha^T z <= beta held with probability 1 - eps, per state step
    and per control step."""

    alpha_x: np.ndarray
    beta_x: np.ndarray
    eps_x: np.ndarray
    alpha_u: np.ndarray
    beta_u: np.ndarray
    eps_u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha_x", np.atleast_2d(np.asarray(self.alpha_x, dtype=float)))
        object.__setattr__(self, "beta_x", np.asarray(self.beta_x, dtype=float).reshape(-1))
        object.__setattr__(self, "eps_x", _check_epsilons(self.eps_x).reshape(-1))
        object.__setattr__(self, "alpha_u", np.atleast_2d(np.asarray(self.alpha_u, dtype=float)))
        object.__setattr__(self, "beta_u", np.asarray(self.beta_u, dtype=float).reshape(-1))
        object.__setattr__(self, "eps_u", _check_epsilons(self.eps_u).reshape(-1))
        if not (len(self.alpha_x) == self.beta_x.size == self.eps_x.size):
            raise ValueError("state rows must have matching alpha/beta/eps counts")
        if not (len(self.alpha_u) == self.beta_u.size == self.eps_u.size):
            raise ValueError("control rows must have matching alpha/beta/eps counts")

    @property
    def n_state_rows(self):
        return self.beta_x.size

    @property
    def n_control_rows(self):
        return self.beta_u.size

    @classmethod
    def from_box_bounds(cls, n, m, state_bounds, control_bounds=None, eps=0.05):
        """Axis bounds to polytope rows.

        ``state_bounds`` maps a state index to (lo, hi); each bounded index
        produces the two rows  e_i^T x <= hi  and  -e_i^T x <= -lo.
        """
        ax, bx = [], []
        for idx, (lo, hi) in sorted(state_bounds.items()):
            row = np.zeros(n)
            row[idx] = 1.0
            ax.extend([row, -row])
            bx.extend([hi, -lo])
        au, bu = [], []
        for idx, (lo, hi) in sorted((control_bounds or {}).items()):
            row = np.zeros(m)
            row[idx] = 1.0
            au.extend([row, -row])
            bu.extend([hi, -lo])
        ax = np.array(ax).reshape(-1, n)
        au = np.array(au).reshape(-1, m)
        return cls(
            alpha_x=ax,
            beta_x=np.array(bx),
            eps_x=np.full(len(bx), eps),
            alpha_u=au,
            beta_u=np.array(bu),
            eps_u=np.full(len(bu), eps),
        )


@dataclass(frozen=True)
class SigmaPoint:
    """Initial state on the sqrt(n) covariance contour paired with one
    disturbance linearization and its second-moment contribution.

    ``dx`` is the exact signed offset from the belief mean used to place the
    point; the symmetric partner carries ``-dx`` bit for bit.
    """

    x0: np.ndarray
    w_mean_i: np.ndarray
    w_cov_i: np.ndarray
    s_matrix: np.ndarray
    dx: np.ndarray


@dataclass(frozen=True)
class EdgeSolution:
    """Outcome of one edge solve.

    ``cost`` is the largest eigenvalue of the planned goal covariance, so
    ``terminal_cov == cost * I`` on success. ``objective`` is the raw solver
    objective (the spectral norm for the min-coverage controller, the
    worst-case eigenvalue for the robust one).
    """

    status: str  # success | infeasible | solver-error
    policy: FeedbackPolicy | None = None
    terminal_mean: np.ndarray | None = None
    terminal_cov: np.ndarray | None = None
    cost: float | None = None
    objective: float | None = None
    sigma_f: np.ndarray | None = None
    disturbance: object | None = None
    nominal: object | None = None
    lossless_gap: float | None = None

    @property
    def success(self):
        return self.status == "success"


def _failure(status):
    return EdgeSolution(status=status)


def _row_bases(blk, mats, tol=1e-12):
    """Per-step orthonormal bases of the subspace the gain actually acts on.

    The gain's block row k multiplies only the first (k+1)n rows of each
    matrix in ``mats``; components of the row orthogonal to their combined
    range never enter the program, so the gain is parametrized on the range
    alone. This removes the free null directions without changing the
    feasible set of any program expression.
    """
    stacked = np.hstack(mats)
    bases = []
    for k in range(blk.N):
        head = stacked[: (k + 1) * blk.n, :]
        u, s, _ = np.linalg.svd(head, full_matrices=False)
        rank = int(np.sum(s > tol * max(s[0] if s.size else 0.0, tol)))
        # keep at least one direction so downstream variables stay nonempty
        bases.append(u[:, : max(rank, 1)])
    return bases


def _causal_L_expr(blk, bases):
    """Block-lower-triangular gain, each row expressed on its active basis."""
    rows = []
    variables = {}
    for k in range(blk.N):
        basis = bases[k]
        var = cp.Variable((blk.m, basis.shape[1]), name=f"L{k}")
        variables[f"L{k}"] = var
        pad = np.zeros((blk.m, blk.nx - (k + 1) * blk.n))
        row = var @ basis.T
        rows.append(cp.hstack([row, pad]) if pad.size else row)
    return cp.vstack(rows), variables


def _assemble_L(blk, values, bases):
    L = np.zeros((blk.nu, blk.nx))
    for k in range(blk.N):
        block = values[f"L{k}"] @ bases[k].T
        L[k * blk.m : (k + 1) * blk.m, : (k + 1) * blk.n] = block
    return L


def chance_constraint_rows(blk, x_mean_expr, V_expr, L_expr, s_half, constraints):
    """Second-order-cone rows enforcing every polytope face at its level.

    One row per (step k, state face j) for k = 0..N and per (step k, control
    face i) for k = 0..N-1. ``s_half`` is any factor with
    s_half @ s_half.T == S; the norm terms carry the normal quantile of each
    face's level. The mean control is the feedforward ``V_expr``.
    """
    _check_epsilons(constraints.eps_x)
    _check_epsilons(constraints.eps_u)
    rows = []
    spread_gain = s_half.T @ L_expr.T  # shared across every cone row
    for k in range(blk.N + 1):
        for j in range(constraints.n_state_rows):
            alpha = constraints.alpha_x[j]
            quant = float(normal_dist.ppf(1.0 - constraints.eps_x[j]))
            a = np.zeros(blk.nx)
            a[blk.x_slice(k)] = alpha
            b = blk.B_blk.T @ a
            spread = s_half.T @ a + spread_gain @ b
            rows.append(
                a @ x_mean_expr + quant * cp.norm(spread, 2) <= constraints.beta_x[j]
            )
    for k in range(blk.N):
        for i in range(constraints.n_control_rows):
            alpha = constraints.alpha_u[i]
            quant = float(normal_dist.ppf(1.0 - constraints.eps_u[i]))
            e = np.zeros(blk.nu)
            e[blk.u_slice(k)] = alpha
            rows.append(
                e @ V_expr + quant * cp.norm(spread_gain @ e, 2) <= constraints.beta_u[i]
            )
    return rows


def chance_constraint_residuals(blk, x_mean, V, L, s_half, constraints):
    """Numeric slack (beta - lhs) of every chance row; negative = violated."""
    x_mean = np.asarray(x_mean, dtype=float)
    V = np.asarray(V, dtype=float)
    L = np.asarray(L, dtype=float)
    closed_T = (np.eye(blk.nx) + blk.B_blk @ L).T
    slacks = []
    for k in range(blk.N + 1):
        for j in range(constraints.n_state_rows):
            alpha = constraints.alpha_x[j]
            quant = float(normal_dist.ppf(1.0 - constraints.eps_x[j]))
            a = np.zeros(blk.nx)
            a[blk.x_slice(k)] = alpha
            spread = s_half.T @ (closed_T @ a)
            lhs = a @ x_mean + quant * float(np.linalg.norm(spread))
            slacks.append(constraints.beta_x[j] - lhs)
    for k in range(blk.N):
        for i in range(constraints.n_control_rows):
            alpha = constraints.alpha_u[i]
            quant = float(normal_dist.ppf(1.0 - constraints.eps_u[i]))
            e = np.zeros(blk.nu)
            e[blk.u_slice(k)] = alpha
            spread = s_half.T @ (L.T @ e)
            lhs = e @ V + quant * float(np.linalg.norm(spread))
            slacks.append(constraints.beta_u[i] - lhs)
    return np.array(slacks)


def _pair_groups(alphas):
    """Group face indices so that +a/-a pairs share one index group.

    Returns a list of (canonical_direction, [(face_index, sign), ...]).
    """
    groups = []
    lookup = {}
    for j, alpha in enumerate(alphas):
        key_pos = alpha.tobytes()
        key_neg = (-alpha).tobytes()
        if key_pos in lookup:
            groups[lookup[key_pos]][1].append((j, 1.0))
        elif key_neg in lookup:
            groups[lookup[key_neg]][1].append((j, -1.0))
        else:
            lookup[key_pos] = len(groups)
            groups.append((alpha, [(j, 1.0)]))
    return groups


def _solver_chance_rows(blk, belief, x_mean_expr, V_expr, L_expr, s_half, constraints):
    """Chance rows in solver-friendly form.

    Mathematically identical to :func:`chance_constraint_rows` but:
    faces sharing a +/- direction share one norm epigraph instead of two
    cones, and step-0 state rows (which contain no decision variables since
    x_0 is the fixed initial belief) are evaluated numerically up front.

    Returns (constraints, epigraph variables, min step-0 slack).
    """
    rows = []
    tvars = {}
    pre_slack = np.inf
    spread_gain = s_half.T @ L_expr.T
    state_groups = _pair_groups(constraints.alpha_x)
    for k in range(blk.N + 1):
        for direction, members in state_groups:
            a = np.zeros(blk.nx)
            a[blk.x_slice(k)] = direction
            if k == 0:
                base = float(direction @ belief.mean)
                nrm = float(np.linalg.norm(s_half.T @ a))
                for j, sign in members:
                    quant = float(normal_dist.ppf(1.0 - constraints.eps_x[j]))
                    pre_slack = min(
                        pre_slack, constraints.beta_x[j] - (sign * base + quant * nrm)
                    )
                continue
            b = blk.B_blk.T @ a
            spread = s_half.T @ a + spread_gain @ b
            t = cp.Variable(name=f"tx_{k}_{len(tvars)}")
            tvars[t.name()] = t
            rows.append(cp.norm(spread, 2) <= t)
            mean_term = a @ x_mean_expr
            for j, sign in members:
                quant = float(normal_dist.ppf(1.0 - constraints.eps_x[j]))
                rows.append(sign * mean_term + quant * t <= constraints.beta_x[j])
    control_groups = _pair_groups(constraints.alpha_u)
    for k in range(blk.N):
        for direction, members in control_groups:
            e = np.zeros(blk.nu)
            e[blk.u_slice(k)] = direction
            spread = spread_gain @ e
            t = cp.Variable(name=f"tu_{k}_{len(tvars)}")
            tvars[t.name()] = t
            rows.append(cp.norm(spread, 2) <= t)
            mean_term = e @ V_expr
            for j, sign in members:
                quant = float(normal_dist.ppf(1.0 - constraints.eps_u[j]))
                rows.append(sign * mean_term + quant * t <= constraints.beta_u[j])
    return rows, tvars, pre_slack


def mean_steering_guess(blk, mu_I, mu_G):
    """Least-norm control steering the disturbance-free mean to the goal."""
    head = blk.A_blk[blk.x_slice(blk.N), :]
    reach = blk.B_blk[blk.x_slice(blk.N), :]
    target = np.asarray(mu_G, dtype=float) - head @ np.asarray(mu_I, dtype=float)
    return np.linalg.pinv(reach) @ target


def _prepare_nominal(blk, field, mu_I, mu_G, u_nom=None):
    if u_nom is None:
        u_nom = mean_steering_guess(blk, mu_I, mu_G)
    nominal = rollout_nominal(blk, field, mu_I, u_nom, tol=ROLLOUT_TOL, max_iter=ROLLOUT_MAX_ITER)
    if not nominal.converged:
        return None, None
    stats = discretize_along(field, blk.states(nominal.x_nom))
    return nominal, stats


def _build_common(blk, belief, stats, extra_mats=()):
    S = open_loop_covariance(blk, belief.cov, stats.w_cov)
    s_half = psd_factor(S)
    bases = _row_bases(blk, [s_half, *extra_mats])
    V = cp.Variable(blk.nu, name="V")
    L_expr, L_vars = _causal_L_expr(blk, bases)
    x_const = blk.A_blk @ belief.mean + blk.G_blk @ stats.w_mean
    x_mean_expr = x_const + blk.B_blk @ V
    return V, L_expr, L_vars, bases, x_mean_expr, S, s_half


def _verify_solution(blk, x_mean, V, L, s_half, constraints, mu_G, slack=VERIFY_SLACK):
    if np.max(np.abs(x_mean[blk.x_slice(blk.N)] - mu_G)) > slack:
        return False
    residuals = chance_constraint_residuals(blk, x_mean, V, L, s_half, constraints)
    return residuals.size == 0 or float(residuals.min()) >= -slack


def _objective_scale(open_loop_terminal_lmax):
    """Rescale factor bringing the zero-feedback terminal size to O(1).

    Interior-point termination behaves far better when the optimal value is
    neither huge nor vanishing; the open-loop terminal covariance bounds the
    optimum from above, so dividing by its root normalizes the objective into
    (0, 1].
    """
    return 1.0 / np.sqrt(max(open_loop_terminal_lmax, 1e-12))


def solve_min_coverage_edge(
    blk, belief, mu_G, field, constraints, solver=None, u_nom=None, rescale=1.0
):
    """Steer to the goal mean minimizing the terminal covariance spectral norm.

    On success the planned goal covariance is cost * I with cost equal to the
    largest eigenvalue of the closed-loop terminal covariance (the squared
    spectral-norm objective). ``rescale`` multiplies the internal objective
    normalization; solving the identical program under a perturbed scaling is
    the cross-check route for validating reported costs.
    """
    solver = solver or default_backend()
    mu_G = np.asarray(mu_G, dtype=float).reshape(blk.n)
    nominal, stats = _prepare_nominal(blk, field, belief.mean, mu_G, u_nom)
    if nominal is None:
        return _failure("solver-error")
    V, L_expr, L_vars, bases, x_mean_expr, S, s_half = _build_common(blk, belief, stats)

    EN = blk.x_slice(blk.N)
    EN_B = blk.B_blk[EN, :]
    open_term = s_half[EN, :] @ s_half[EN, :].T
    scale = rescale * _objective_scale(float(np.linalg.eigvalsh(symmetrize(open_term))[-1]))
    terminal_factor = scale * (s_half[EN, :] + EN_B @ (L_expr @ s_half))
    objective = cp.Minimize(cp.sigma_max(terminal_factor))

    rows, tvars, pre_slack = _solver_chance_rows(
        blk, belief, x_mean_expr, V, L_expr, s_half, constraints
    )
    if pre_slack < 0:
        return _failure("infeasible")
    program = ConicProgram(
        variables={"V": V, **L_vars, **tvars},
        objective=objective,
        equalities=[x_mean_expr[EN] == mu_G],
        soc_constraints=rows,
    )
    result = solver.solve(program)
    if result.status != "success":
        return _failure(result.status)

    L = _assemble_L(blk, result.values, bases)
    V_val = np.asarray(result.values["V"], dtype=float).reshape(blk.nu)
    x_mean = blk.A_blk @ belief.mean + blk.B_blk @ V_val + blk.G_blk @ stats.w_mean
    if not _verify_solution(blk, x_mean, V_val, L, s_half, constraints, mu_G):
        return _failure("solver-error")

    # factor form: squaring after the closed-loop map stays accurate for
    # large gains, unlike the direct sandwich product
    term_factor = s_half[EN, :] + EN_B @ (L @ s_half)
    cost = float(np.linalg.eigvalsh(symmetrize(term_factor @ term_factor.T))[-1])
    policy = FeedbackPolicy.from_solution(blk, L, V_val, stats.w_mean, belief.mean)
    return EdgeSolution(
        status="success",
        policy=policy,
        terminal_mean=x_mean[EN],
        terminal_cov=cost * np.eye(blk.n),
        cost=cost,
        objective=float(result.objective) / scale,
        disturbance=stats,
        nominal=nominal,
    )


def sigma_second_moment(blk, x0_i, x0_mean, w_mean_i, w_cov_i, w_mean_shared):
    """Second-moment contribution of one sigma point: the disturbance term
    plus the rank-1 offset carrying its initial-state and mean-field shift."""
    q = blk.A_blk @ (np.asarray(x0_i) - np.asarray(x0_mean)) + blk.G_blk @ (
        np.asarray(w_mean_i) - np.asarray(w_mean_shared)
    )
    s = blk.G_blk @ np.asarray(w_cov_i) @ blk.G_blk.T + np.outer(q, q)
    return symmetrize(s)


def generate_sigma_points(belief, blk, field, u_nom, shared=None):
    """Sigma points on the sqrt(n) covariance contour of the initial belief.

    2n symmetric initial states, each paired with two disturbance
    linearizations: one along the shared nominal trajectory and one along the
    trajectory rolled out from the sigma state itself. Points that fail to
    produce a converged rollout fall back to the shared statistics.
    """
    if shared is None:
        nominal = rollout_nominal(blk, field, belief.mean, u_nom, tol=ROLLOUT_TOL, max_iter=ROLLOUT_MAX_ITER)
        stats = discretize_along(field, blk.states(nominal.x_nom))
    else:
        nominal, stats = shared
    n = belief.dim
    root = psd_sqrt(belief.cov)
    offsets = np.sqrt(n) * root
    shared_disturbance = symmetrize(blk.G_blk @ stats.w_cov @ blk.G_blk.T)

    points = []
    for j in range(n):
        dx = offsets[:, j]
        # under the shared linearization the +/- pair contributes the same
        # second moment (the rank-1 offset term is sign-invariant), so both
        # points carry one matrix
        q = blk.A_blk @ dx
        shared_s = symmetrize(shared_disturbance + np.outer(q, q))
        for sign in (1.0, -1.0):
            signed_dx = sign * dx
            x0 = belief.mean + signed_dx
            own = rollout_nominal(blk, field, x0, u_nom, tol=ROLLOUT_TOL, max_iter=ROLLOUT_MAX_ITER)
            own_stats = discretize_along(field, blk.states(own.x_nom)) if own.converged else stats
            points.append(
                SigmaPoint(
                    x0=x0,
                    w_mean_i=own_stats.w_mean,
                    w_cov_i=own_stats.w_cov,
                    s_matrix=sigma_second_moment(
                        blk, x0, belief.mean, own_stats.w_mean, own_stats.w_cov, stats.w_mean
                    ),
                    dx=signed_dx,
                )
            )
            points.append(
                SigmaPoint(
                    x0=x0,
                    w_mean_i=stats.w_mean,
                    w_cov_i=stats.w_cov,
                    s_matrix=shared_s,
                    dx=signed_dx,
                )
            )
    return points


def solve_robust_edge(blk, belief, mu_G, field, constraints, solver=None, u_nom=None):
    """Robust sigma-point steering: minimize the worst-case largest eigenvalue
    of the terminal second moment over all sigma points."""
    solver = solver or default_backend()
    mu_G = np.asarray(mu_G, dtype=float).reshape(blk.n)
    if u_nom is None:
        u_nom = mean_steering_guess(blk, belief.mean, mu_G)
    nominal, stats = _prepare_nominal(blk, field, belief.mean, mu_G, u_nom)
    if nominal is None:
        return _failure("solver-error")
    points = generate_sigma_points(belief, blk, field, u_nom, shared=(nominal, stats))
    # the shared-linearization +/- pairs carry one matrix object; solve each
    # distinct block once
    distinct = list({id(p.s_matrix): p.s_matrix for p in points}.values())
    factors = [psd_factor(s) for s in distinct]

    # Sigma-mean equality: average terminal mean over sigma points must also
    # hit the goal. The signed offsets cancel exactly; the field shift from
    # the per-point linearizations stays.
    count = len(points)
    sum_dx = sum(p.dx for p in points)
    sum_dw = sum(p.w_mean_i - stats.w_mean for p in points)
    shift = blk.A_blk @ sum_dx + blk.G_blk @ sum_dw

    V, L_expr, L_vars, bases, x_mean_expr, S, s_half = _build_common(
        blk, belief, stats, extra_mats=[*factors, shift.reshape(-1, 1)]
    )
    sigma_f = cp.Variable((blk.n, blk.n), symmetric=True, name="sigma_f")

    EN = blk.x_slice(blk.N)
    EN_B = blk.B_blk[EN, :]
    scale = _objective_scale(
        max(
            float(np.linalg.eigvalsh(symmetrize(f[EN, :] @ f[EN, :].T))[-1])
            for f in factors
        )
    )
    psd_blocks = []
    for fac in factors:
        sfac = scale * fac
        m_i = sfac[EN, :] + EN_B @ (L_expr @ sfac)
        psd_blocks.append(
            cp.bmat(
                [
                    [np.eye(fac.shape[1]), m_i.T],
                    [m_i, sigma_f],
                ]
            )
            >> 0
        )

    equalities = [x_mean_expr[EN] == mu_G]
    # The sigma-averaged terminal mean must also hit the goal. When the
    # aggregate field shift vanishes (affine mean fields), this row is the
    # nominal mean equality again; adding the duplicate only degrades the
    # solver, and the post-solve verification below asserts it regardless.
    if np.max(np.abs(shift)) > 1e-12:
        sigma_mean_expr = (
            x_mean_expr[EN] + (shift[EN] + EN_B @ (L_expr @ shift)) / count
        )
        equalities.append(sigma_mean_expr == mu_G)

    rows, tvars, pre_slack = _solver_chance_rows(
        blk, belief, x_mean_expr, V, L_expr, s_half, constraints
    )
    if pre_slack < 0:
        return _failure("infeasible")
    program = ConicProgram(
        variables={"V": V, "sigma_f": sigma_f, **L_vars, **tvars},
        objective=cp.Minimize(cp.lambda_max(sigma_f)),
        equalities=equalities,
        soc_constraints=rows,
        psd_constraints=psd_blocks,
    )
    result = solver.solve(program)
    if result.status != "success":
        return _failure(result.status)

    L = _assemble_L(blk, result.values, bases)
    V_val = np.asarray(result.values["V"], dtype=float).reshape(blk.nu)
    # sigma_f was solved against scale^2-sized second moments
    sigma_f_val = symmetrize(np.asarray(result.values["sigma_f"], dtype=float)) / scale**2
    x_mean = blk.A_blk @ belief.mean + blk.B_blk @ V_val + blk.G_blk @ stats.w_mean
    if not _verify_solution(blk, x_mean, V_val, L, s_half, constraints, mu_G):
        return _failure("solver-error")
    closed_row = np.eye(blk.nx)[EN, :] + EN_B @ L
    sigma_means = x_mean[EN] + (closed_row @ shift) / count
    if np.max(np.abs(sigma_means - mu_G)) > VERIFY_SLACK:
        return _failure("solver-error")

    worst = 0.0
    for fac in factors:
        m_i = closed_row @ fac
        worst = max(worst, float(np.linalg.eigvalsh(symmetrize(m_i @ m_i.T))[-1]))
    cost = float(np.linalg.eigvalsh(sigma_f_val)[-1])
    gap = abs(cost - worst) / max(cost, 1e-300)

    policy = FeedbackPolicy.from_solution(blk, L, V_val, stats.w_mean, belief.mean)
    return EdgeSolution(
        status="success",
        policy=policy,
        terminal_mean=x_mean[EN],
        terminal_cov=cost * np.eye(blk.n),
        cost=cost,
        objective=float(result.objective) / scale**2,
        sigma_f=sigma_f_val,
        disturbance=stats,
        nominal=nominal,
        lossless_gap=gap,
    )


@dataclass(frozen=True)
class EdgeController:
    """Callable edge controller binding the horizon, field and constraints.

    ``kind`` selects the program: "min_coverage" or "robust". Instances are
    immutable and safe to share across concurrent solves.
    """

    blk: object
    field: object
    constraints: PolytopeConstraints
    kind: str = "min_coverage"
    solver: object = None

    def __call__(self, belief, mu_G):
        solver = self.solver or default_backend()
        if self.kind == "min_coverage":
            return solve_min_coverage_edge(self.blk, belief, mu_G, self.field, self.constraints, solver)
        if self.kind == "robust":
            return solve_robust_edge(self.blk, belief, mu_G, self.field, self.constraints, solver)
        raise ValueError(f"unknown edge controller kind {self.kind!r}")
