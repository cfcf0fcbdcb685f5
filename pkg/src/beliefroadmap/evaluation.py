"""Monte Carlo execution of plans and the accuracy/cost metrics.

Rollouts run the solved state-history feedback policies either against
sampled field realizations (ground truth) or against the per-edge
linearized disturbance model (the distribution the planner assumed). Each
rollout derives its own seed from the master seed with a fixed, versioned
mixing, so batches are reproducible and order-independent.
"""

from dataclasses import dataclass

import numpy as np

from .beliefs import GaussianBelief
from .field import bilinear_weights, sample_realization
from .mathutil import assert_psd, psd_factor, psd_sqrt, symmetrize

__all__ = [
    "derive_seed",
    "RolloutBatch",
    "EmpiricalGaussian",
    "MetricsReport",
    "execute_plan",
    "monte_carlo",
    "empirical_gaussian",
    "wasserstein2",
    "mse",
    "violation_rate",
    "ViolationReport",
    "coverage_property_check",
]


def derive_seed(master_seed, index):
    """Versioned per-rollout seed derivation: SeedSequence([master, index]).

    The mixing is part of the artifact contract; changing it changes every
    reported Monte Carlo number.
    """
    return np.random.SeedSequence([int(master_seed), int(index)])


@dataclass(frozen=True)
class RolloutBatch:
    """Final states (one per rollout) plus optional full histories."""

    final_states: np.ndarray
    trajectories: np.ndarray | None
    controls: np.ndarray | None
    master_seed: int

    def __post_init__(self):
        if self.final_states.ndim != 2:
            raise ValueError("final_states must be (n_rollouts, n)")

    @property
    def n_rollouts(self):
        return self.final_states.shape[0]


@dataclass(frozen=True)
class EmpiricalGaussian:
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class MetricsReport:
    w2: float
    mse: float
    planned_lambda_max: float
    violation_step_max: float
    violation_traj_max: float

    def __post_init__(self):
        for name in ("w2", "mse", "planned_lambda_max"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def _edge_dims(edge, n):
    steps = edge.policy.x_mean.size // n - 1
    m = edge.policy.V.size // steps
    return steps, m


def _edge_disturbance_world(edge, rngs):
    """One linearized-world disturbance draw per rollout for this edge."""
    fac = psd_factor(edge.w_cov)
    z = np.stack([rng.standard_normal(fac.shape[1]) for rng in rngs])
    return edge.w_mean + z @ fac.T


def _evaluate_realizations(field, realized, positions):
    """Per-rollout bilinear field values at per-rollout positions."""
    idx, w = bilinear_weights(field.grid, positions)
    rows = np.arange(positions.shape[0])[:, None]
    gathered = realized[rows, idx]  # (B, 4, 2)
    return np.einsum("bk,bkc->bc", w, gathered)


def _run_batch(plan, model, field, x0, realized=None, edge_draws=None, record=False):
    """Vectorized rollout of a plan for a batch of initial states.

    ``realized`` gives per-rollout field realizations (ground-truth world);
    ``edge_draws`` gives per-edge stacked disturbance draws (linearized
    world). Exactly one must be provided.

    The state-history law u_k = sum K_{k,i}(x_i - xbar_i) + v_k is applied
    in its equivalent disturbance-feedback form: the gain acts on the
    purified signal d = A_blk dx0 + G_blk dW, reconstructed by a forward
    recursion from the initial deviation and the applied disturbances. The
    signal never passes through the feedback loop, so no gain inversion and
    no catastrophic cancellation occur even for very large optimal gains.
    """
    batch = np.atleast_2d(np.asarray(x0, dtype=float))
    B, n = batch.shape
    states = [batch.copy()] if record else None
    controls = [] if record else None
    x = batch.copy()
    for e_idx, edge in enumerate(plan.edges):
        steps, m = _edge_dims(edge, n)
        x_bar = edge.policy.x_mean.reshape(steps + 1, n)
        w_bar = edge.w_mean.reshape(steps + 1, model.d)
        L = edge.policy.L
        V = edge.policy.V
        purified = np.zeros((B, (steps + 1) * n))
        purified[:, :n] = x - x_bar[0]
        free_resp = x - x_bar[0]  # A^k dx0 plus the propagated disturbance terms
        for k in range(steps):
            Lk = L[k * m : (k + 1) * m, : (k + 1) * n]
            u = purified[:, : (k + 1) * n] @ Lk.T + V[k * m : (k + 1) * m]
            if realized is not None:
                w = _evaluate_realizations(field, realized, x[:, :2])
            else:
                w = edge_draws[e_idx][:, k * model.d : (k + 1) * model.d]
            x = x @ model.A.T + u @ model.B.T + w @ model.G.T
            free_resp = free_resp @ model.A.T + (w - w_bar[k]) @ model.G.T
            purified[:, (k + 1) * n : (k + 2) * n] = free_resp
            if record:
                states.append(x.copy())
                controls.append(u.copy())
    trajectories = np.stack(states, axis=1) if record else None
    ctrl = np.stack(controls, axis=1) if record and controls else None
    return x, trajectories, ctrl


def execute_plan(plan, model, field, realization, x0):
    """Roll one trajectory through every edge of a plan.

    Controls follow each edge's own planned mean trajectory through the
    state-history gain; the disturbance is the realization evaluated at the
    actual position. Each edge's terminal state seeds the next edge.
    """
    final, traj, _ = _run_batch(
        plan,
        model,
        field,
        np.asarray(x0, dtype=float).reshape(1, -1),
        realized=realization.realized_samples[None, :, :],
        record=True,
    )
    return traj[0]


def monte_carlo(
    plan,
    model,
    field,
    initial,
    n_rollouts,
    master_seed,
    world="field",
    record_trajectories=False,
):
    """Independent rollouts of a plan; deterministic per master seed.

    Rollout r draws its initial state and its disturbances from
    ``derive_seed(master_seed, r)``. ``world`` selects the ground-truth field
    ("field") or the per-edge linearized disturbance model ("linearized").
    """
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    n = initial.dim
    root = psd_factor(initial.cov)
    rngs = [np.random.default_rng(derive_seed(master_seed, r)) for r in range(n_rollouts)]
    x0 = initial.mean + np.stack([rng.standard_normal(root.shape[1]) for rng in rngs]) @ root.T

    if world == "field":
        fac = field.sampling_factor()
        z = np.stack([rng.standard_normal(fac.shape[1]) for rng in rngs])
        realized = (field.grid.mean_samples.reshape(-1) + z @ fac.T).reshape(
            n_rollouts, -1, 2
        )
        finals, trajs, ctrl = _run_batch(
            plan, model, field, x0, realized=realized, record=record_trajectories
        )
    elif world == "linearized":
        edge_draws = [_edge_disturbance_world(edge, rngs) for edge in plan.edges]
        finals, trajs, ctrl = _run_batch(
            plan, model, field, x0, edge_draws=edge_draws, record=record_trajectories
        )
    else:
        raise ValueError(f"unknown world {world!r}")
    return RolloutBatch(
        final_states=finals,
        trajectories=trajs,
        controls=ctrl,
        master_seed=int(master_seed),
    )


def empirical_gaussian(batch):
    """Sample mean and unbiased sample covariance of the final states."""
    x = batch.final_states
    mean = x.mean(axis=0)
    centered = x - mean
    cov = symmetrize(centered.T @ centered / max(x.shape[0] - 1, 1))
    return EmpiricalGaussian(mean=mean, cov=cov)


def wasserstein2(g1, g2):
    """Quadratic Wasserstein distance between two Gaussians (closed form)."""
    mean1, cov1 = np.asarray(g1.mean, dtype=float), np.asarray(g1.cov, dtype=float)
    mean2, cov2 = np.asarray(g2.mean, dtype=float), np.asarray(g2.cov, dtype=float)
    assert_psd(cov1, tol=1e-8, name="first covariance")
    assert_psd(cov2, tol=1e-8, name="second covariance")
    root2 = psd_sqrt(cov2)
    cross = psd_sqrt(root2 @ cov1 @ root2)
    squared = float(np.sum((mean1 - mean2) ** 2) + np.trace(cov1 + cov2 - 2.0 * cross))
    return float(np.sqrt(max(squared, 0.0)))


def mse(batch, mu_goal):
    """Mean squared final-state error against the goal mean."""
    if batch.n_rollouts == 0:
        raise ValueError("empty rollout batch")
    diff = batch.final_states - np.asarray(mu_goal, dtype=float)
    return float(np.mean(np.sum(diff * diff, axis=1)))


@dataclass(frozen=True)
class ViolationReport:
    """Chance-constraint violation rates per state row.

    ``step_rates[j, k]`` is the fraction of rollouts violating row j at step
    k; ``trajectory_rates[j]`` the fraction violating row j at any step.
    """

    step_rates: np.ndarray
    trajectory_rates: np.ndarray

    @property
    def max_step_rate(self):
        return float(self.step_rates.max()) if self.step_rates.size else 0.0

    @property
    def max_trajectory_rate(self):
        return float(self.trajectory_rates.max()) if self.trajectory_rates.size else 0.0


def violation_rate(batch, constraints):
    """Per-row violation rates of the recorded trajectories."""
    if batch.trajectories is None:
        raise ValueError("batch was run without trajectory recording")
    traj = batch.trajectories  # (B, T+1, n)
    rows = constraints.alpha_x
    if rows.size == 0:
        return ViolationReport(np.zeros((0, traj.shape[1])), np.zeros(0))
    values = np.einsum("jn,btn->jbt", rows, traj)
    violated = values > constraints.beta_x[:, None, None] + 1e-12
    step_rates = violated.mean(axis=1)
    trajectory_rates = violated.any(axis=2).mean(axis=1)
    return ViolationReport(step_rates=step_rates, trajectory_rates=trajectory_rates)


def coverage_property_check(pi, initial, n_nodes, seeds, sampler=None, blk=None):
    """Paired-run check: same-seed plain and rewired trees must have equal
    mean multisets with nodewise non-larger covariance spectral radius.

    Returns a per-seed report; failures are entries, not exceptions.
    """
    from .roadmap import build_baseline, build_revise

    results = []
    for seed in seeds:
        base = build_baseline(pi, initial, n_nodes, seed=seed, sampler=sampler)
        revised = build_revise(pi, initial, n_nodes, seed=seed, sampler=sampler, blk=blk)
        ids = sorted(base.nodes)
        means_equal = sorted(base.nodes) == sorted(revised.nodes) and all(
            np.max(
                np.abs(base.nodes[i].belief.mean - revised.nodes[i].belief.mean)
            )
            <= 1e-9
            for i in ids
        )
        gaps = [
            float(
                np.linalg.eigvalsh(revised.nodes[i].belief.cov)[-1]
                - np.linalg.eigvalsh(base.nodes[i].belief.cov)[-1]
            )
            for i in ids
        ]
        max_gap = max(gaps) if gaps else 0.0
        results.append(
            {
                "seed": seed,
                "means_equal": bool(means_equal),
                "draws_equal": base.sampling_draws == revised.sampling_draws,
                "max_lambda_gap": max_gap,
                "n_improved": sum(1 for g in gaps if g < -1e-12),
                "passed": bool(means_equal) and max_gap <= 1e-8,
            }
        )
    return results
