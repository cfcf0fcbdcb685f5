"""Experiment drivers: roadmap construction, goal answering, Monte Carlo
evaluation, and artifact export (metrics CSV, distribution JSON, roadmaps)."""

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .beliefs import GaussianBelief
from .config import METHOD_MATRIX, ExperimentConfig
from .evaluation import empirical_gaussian, monte_carlo, violation_rate, wasserstein2
from .field import build_wind_field
from .lifting import build_triple_integrator, lift
from .roadmap import (
    make_edge_executor,
    SamplerConfig,
    build_baseline,
    build_revise,
    extract_plan,
    save_tree,
    try_connect_goal,
    _solve_batch,
)
from .steering import EdgeController, PolytopeConstraints

__all__ = [
    "ProblemSetup",
    "build_setup",
    "build_roadmap",
    "plan_to_goal",
    "run_multi_query",
    "run_single_query",
    "METRICS_FIELDS",
]

METRICS_FIELDS = [
    "experiment",
    "method",
    "seed",
    "goal_index",
    "goal_x",
    "goal_y",
    "reached",
    "w2",
    "mse",
    "planned_lambda_max",
    "violation_step_max",
    "violation_traj_max",
    "n_rollouts",
]

DISTRIBUTIONS_SCHEMA = "beliefroadmap/distributions-v1"
TRACE_LIMIT = 50


class ProblemSetup:
    """Everything derived from a config: model, lifted blocks, field, rows."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.model = build_triple_integrator(cfg.dynamics.dt)
        self.blk = lift(self.model, cfg.dynamics.horizon)
        self.field = build_wind_field(cfg.field)
        bounds = {
            0: cfg.constraints.position,
            1: cfg.constraints.position,
            2: cfg.constraints.velocity,
            3: cfg.constraints.velocity,
            4: cfg.constraints.acceleration,
            5: cfg.constraints.acceleration,
        }
        control = None
        if cfg.constraints.control is not None:
            control = {0: cfg.constraints.control, 1: cfg.constraints.control}
        self.constraints = PolytopeConstraints.from_box_bounds(
             self.model.n, self.model.m, bounds, control_bounds=control, eps=cfg.constraints.epsilon
        )
        self.sampler = SamplerConfig(
            r_min=cfg.roadmap.r_min,
            r_max=cfg.roadmap.r_max,
            v_max=cfg.roadmap.v_max,
            workspace_lo=tuple(cfg.field.origin),
            workspace_hi=tuple(np.asarray(cfg.field.origin) + np.asarray(cfg.field.extent)),
            r_near=cfg.roadmap.r_near,
            max_attempts=cfg.roadmap.max_attempts,
        )
        self.initial = GaussianBelief(
            np.asarray(cfg.evaluation.initial_mean, dtype=float),
            cfg.evaluation.initial_cov_scale * np.eye(self.model.n),
        )

    def controller(self, kind):
        return EdgeController(
            blk=self.blk, field=self.field, constraints=self.constraints, kind=kind
        )


def build_setup(cfg):
    return ProblemSetup(cfg)


def build_roadmap(setup, method, seed, on_insert=None, n_jobs=1):
    """Construct the roadmap named by the ablation grid."""
    construction, controller_kind = METHOD_MATRIX[method]
    pi = setup.controller(controller_kind)
    echo = {**setup.cfg.to_dict(), "method": method}
    if construction == "plain":
        return build_baseline(
            pi,
            setup.initial,
            setup.cfg.roadmap.n_nodes,
            seed=seed,
            sampler=setup.sampler,
            on_insert=on_insert,
            config_echo=echo,
        )
    return build_revise(
        pi,
        setup.initial,
        setup.cfg.roadmap.n_nodes,
        seed=seed,
        sampler=setup.sampler,
        on_insert=on_insert,
        config_echo=echo,
        n_jobs=n_jobs,
        blk=setup.blk,
    )


def plan_to_goal(tree, goal_mean, pi, n_connect=5, executor=None):
    """Answer a goal mean: steer from the nearest nodes, keep the cheapest.

    Returns the winning plan or None when every attempt fails.
    """
    goal_mean = np.asarray(goal_mean, dtype=float)
    ranked = sorted(
        tree.sorted_nodes(), key=lambda node: (np.linalg.norm(node.position - goal_mean[:2]), node.id)
    )
    attempts = ranked[:n_connect]
    solutions = _solve_batch(pi, [(node.belief, goal_mean) for node in attempts], executor)
    best = None
    for node, solution in zip(attempts, solutions):
        if solution.success and (best is None or solution.cost < best[0]):
            best = (solution.cost, node.id, solution)
    if best is None:
        return None
    _, node_id, solution = best
    return extract_plan(tree, node_id, goal_solution=solution)


def _mc_master_seed(cfg_seed, tag, *indexes):
    """Versioned mixing for per-batch Monte Carlo master seeds."""
    ss = np.random.SeedSequence([int(cfg_seed), int(tag), *[int(i) for i in indexes]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _evaluate_plan(setup, plan, goal_mean, mc_master, n_rollouts):
    """Ground-truth Monte Carlo of one plan plus the summary metrics."""
    batch = monte_carlo(
        plan,
        setup.model,
        setup.field,
        setup.initial,
        n_rollouts,
        master_seed=mc_master,
        world="field",
        record_trajectories=True,
    )
    emp = empirical_gaussian(batch)
    planned = type(emp)(mean=np.asarray(plan.terminal_mean), cov=np.asarray(plan.terminal_cov))
    report = violation_rate(batch, setup.constraints)
    metrics = {
        "w2": wasserstein2(planned, emp),
        "mse": float(np.mean(np.sum((batch.final_states - goal_mean) ** 2, axis=1))),
        "planned_lambda_max": float(np.linalg.eigvalsh(plan.terminal_cov)[-1]),
        "violation_step_max": report.max_step_rate,
        "violation_traj_max": report.max_trajectory_rate,
        "n_rollouts": n_rollouts,
    }
    traces = batch.trajectories[:TRACE_LIMIT, :, :2]
    planned_path = np.concatenate(
        [edge.policy.x_mean.reshape(-1, setup.model.n)[:, :2] for edge in plan.edges]
    ) if plan.edges else np.empty((0, 2))
    entry = {
        "planned_mean_path": planned_path.tolist(),
        "planned_terminal_mean": np.asarray(plan.terminal_mean).tolist(),
        "planned_terminal_cov": np.asarray(plan.terminal_cov).tolist(),
        "empirical_terminal_mean": emp.mean.tolist(),
        "empirical_terminal_cov": emp.cov.tolist(),
        "final_states": batch.final_states.tolist(),
        "rollout_traces": traces.tolist(),
    }
    return metrics, entry


def _write_metrics(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=METRICS_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _write_distributions(path, cfg, entries, warnings):
    doc = {
        "schema": DISTRIBUTIONS_SCHEMA,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "warnings": warnings,
        "entries": entries,
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle)


def run_multi_query(cfg, out_dir=None, log=print):
    """Multi-query experiment: shared-seed roadmaps per method, goal means
    reachable from every roadmap, Monte Carlo metrics per (method, goal)."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    setup = build_setup(cfg)
    methods = cfg.methods()
    t0 = time.time()

    trees = {}
    for method in methods:
        t_build = time.time()
        trees[method] = build_roadmap(setup, method, cfg.seed, n_jobs=cfg.roadmap.n_jobs)
        save_tree(trees[method], out / f"roadmap_{method}.json")
        log(f"[multi-query] built {method} roadmap in {time.time() - t_build:.1f}s")

    controllers = {m: setup.controller(METHOD_MATRIX[m][1]) for m in methods}
    goal_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 3]))
    lo = np.asarray(setup.sampler.workspace_lo)
    hi = np.asarray(setup.sampler.workspace_hi)

    executors = {
        m: make_edge_executor(controllers[m], cfg.roadmap.n_jobs) for m in methods
    }
    warnings = []
    rows = []
    entries = []
    try:
        accepted = 0
        attempts = 0
        budget = max(1, cfg.evaluation.n_goals * cfg.evaluation.goal_attempt_factor)
        while accepted < cfg.evaluation.n_goals and attempts < budget:
            attempts += 1
            goal = np.zeros(setup.model.n)
            goal[0] = goal_rng.uniform(lo[0], hi[0])
            goal[1] = goal_rng.uniform(lo[1], hi[1])
            plans = {}
            for method in methods:
                plan = plan_to_goal(
                    trees[method],
                    goal,
                    controllers[method],
                    n_connect=cfg.evaluation.n_connect,
                    executor=executors[method],
                )
                if plan is None:
                    break
                plans[method] = plan
            if len(plans) < len(methods):
                continue
            for m_idx, method in enumerate(methods):
                metrics, entry = _evaluate_plan(
                    setup,
                    plans[method],
                    goal,
                    _mc_master_seed(cfg.seed, 1, accepted, m_idx),
                    cfg.evaluation.n_rollouts,
                )
                rows.append(
                    {
                        "experiment": "multi_query",
                        "method": method,
                        "seed": cfg.seed,
                        "goal_index": accepted,
                        "goal_x": goal[0],
                        "goal_y": goal[1],
                        "reached": True,
                        **metrics,
                    }
                )
                entry.update(
                    {
                        "experiment": "multi_query",
                        "method": method,
                        "seed": cfg.seed,
                        "goal_index": accepted,
                        "goal_mean": goal.tolist(),
                    }
                )
                entries.append(entry)
            accepted += 1
            log(f"[multi-query] goal {accepted}/{cfg.evaluation.n_goals} evaluated")
        if accepted < cfg.evaluation.n_goals:
            warnings.append(
                f"goal quota not met: {accepted}/{cfg.evaluation.n_goals} "
                f"reachable goals after {attempts} attempts"
            )
    finally:
        for pool in executors.values():
            if pool is not None:
                pool.shutdown()

    _write_metrics(out / "metrics.csv", rows)
    _write_distributions(out / "distributions.json", cfg, entries, warnings)
    summary = {
        "experiment": "multi_query",
        "config": cfg.to_dict(),
        "warnings": warnings,
        "wall_time_s": time.time() - t0,
        "accepted_goals": accepted,
    }
    with open(out / "summary.json", "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2)
    return summary


def _single_query_task(cfg_doc, method, seed):
    """Worker: build one single-query roadmap with goal checking."""
    cfg = ExperimentConfig.from_dict(cfg_doc)
    setup = build_setup(cfg)
    goal = GaussianBelief(
        np.asarray(cfg.evaluation.goal_mean, dtype=float),
        cfg.evaluation.goal_cov_scale * np.eye(setup.model.n),
    )
    construction, controller_kind = METHOD_MATRIX[method]
    pi = setup.controller(controller_kind)
    hits = []

    def on_insert(tree, node_id):
        if construction == "plain" and hits:
            return  # stop goal checks after the first feasible path
        solution = try_connect_goal(tree, node_id, goal, pi)
        if solution is not None:
            hits.append((solution.cost, node_id, solution))

    tree = build_roadmap(setup, method, seed, on_insert=on_insert)
    row = {
        "experiment": "single_query",
        "method": method,
        "seed": seed,
        "goal_index": 0,
        "goal_x": goal.mean[0],
        "goal_y": goal.mean[1],
        "reached": bool(hits),
        "w2": "",
        "mse": "",
        "planned_lambda_max": "",
        "violation_step_max": "",
        "violation_traj_max": "",
        "n_rollouts": 0,
    }
    entry = None
    if hits:
        cost, node_id, solution = min(hits, key=lambda h: (h[0], h[1]))
        plan = extract_plan(tree, node_id, goal_solution=solution)
        metrics, entry = _evaluate_plan(
            setup,
            plan,
            goal.mean,
            _mc_master_seed(cfg.seed, 2, seed, list(METHOD_MATRIX).index(method)),
            cfg.evaluation.n_rollouts,
        )
        row.update(metrics)
        entry.update(
            {
                "experiment": "single_query",
                "method": method,
                "seed": seed,
                "goal_index": 0,
                "goal_mean": goal.mean.tolist(),
            }
        )
    from .roadmap import tree_to_dict

    return row, entry, tree_to_dict(tree)


def run_single_query(cfg, out_dir=None, log=print):
    """Single-query experiment over seeds: goal feasibility is checked at
    every node insertion; plain constructions stop checking after the first
    feasible path; metrics per (method, seed)."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    methods = cfg.methods()
    seeds = list(cfg.evaluation.seeds)
    t0 = time.time()

    tasks = [(method, seed) for seed in seeds for method in methods]
    rows, entries = [], []
    cfg_doc = cfg.to_dict()
    if cfg.roadmap.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.roadmap.n_jobs) as pool:
            futures = [pool.submit(_single_query_task, cfg_doc, m, s) for m, s in tasks]
            results = [f.result() for f in futures]
    else:
        results = [_single_query_task(cfg_doc, m, s) for m, s in tasks]

    for (method, seed), (row, entry, tree_doc) in zip(tasks, results):
        rows.append(row)
        if entry is not None:
            entries.append(entry)
        with open(out / f"roadmap_{method}_seed{seed}.json", "w", encoding="utf-8") as handle:
            json.dump(tree_doc, handle)
        log(f"[single-query] {method} seed {seed}: reached={row['reached']}")

    warnings = [
        f"{row['method']} seed {row['seed']} never reached the goal"
        for row in rows
        if not row["reached"]
    ]
    _write_metrics(out / "metrics.csv", rows)
    _write_distributions(out / "distributions.json", cfg, entries, warnings)
    summary = {
        "experiment": "single_query",
        "config": cfg.to_dict(),
        "warnings": warnings,
        "wall_time_s": time.time() - t0,
    }
    with open(out / "summary.json", "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2)
    return summary
