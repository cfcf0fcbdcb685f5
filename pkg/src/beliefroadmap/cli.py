"""Command-line interface.

Subcommands compose through file artifacts: ``build`` writes a roadmap JSON,
``plan`` answers a goal query against a roadmap, ``evaluate`` runs Monte
Carlo on a stored plan, and ``experiment`` drives the full multi-query or
single-query pipelines. Exit codes: 0 success, 2 infeasible/no plan, 1 error.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .beliefs import GaussianBelief
from .config import METHOD_MATRIX, ConfigError, ExperimentConfig, load_config
from .evaluation import empirical_gaussian, monte_carlo, violation_rate, wasserstein2
from .experiments import (
    METRICS_FIELDS,
    build_roadmap,
    build_setup,
    plan_to_goal,
    run_multi_query,
    run_single_query,
)
from .lifting import FeedbackPolicy, gain_from_L
from .roadmap import BeliefEdge, PlanResult, load_tree, save_tree

PLAN_SCHEMA = "beliefroadmap/plan-v1"


def _fail(message, code=1):
    print(f"error: {message}", file=sys.stderr)
    return code


def plan_to_dict(plan, cfg_doc, goal_mean):
    segments = []
    for edge in plan.edges:
        segments.append(
            {
                "from": edge.from_id,
                "to": edge.to_id,
                "L": edge.policy.L.reshape(-1).tolist(),
                "V": edge.policy.V.tolist(),
                "x_mean": edge.policy.x_mean.tolist(),
                "w_mean": edge.w_mean.tolist(),
                "w_cov": edge.w_cov.reshape(-1).tolist(),
                "cost": edge.cost,
                "planned_terminal_cov": edge.planned_terminal_cov.reshape(-1).tolist(),
            }
        )
    return {
        "schema": PLAN_SCHEMA,
        "config": cfg_doc,
        "goal_mean": list(np.asarray(goal_mean, dtype=float)),
        "node_ids": list(plan.node_ids),
        "segments": segments,
        "terminal_mean": np.asarray(plan.terminal_mean).tolist(),
        "terminal_cov": np.asarray(plan.terminal_cov).tolist(),
        "total_steps": plan.total_steps,
    }


def plan_from_dict(doc, blk):
    if doc.get("schema") != PLAN_SCHEMA:
        raise ValueError(f"unsupported plan schema {doc.get('schema')!r}")
    edges = []
    for idx, seg in enumerate(doc["segments"]):
        L = np.asarray(seg["L"], dtype=float).reshape(blk.nu, blk.nx)
        policy = FeedbackPolicy(
            L=L,
            V=np.asarray(seg["V"], dtype=float),
            K=gain_from_L(blk, L),
            x_mean=np.asarray(seg["x_mean"], dtype=float),
        )
        edges.append(
            BeliefEdge(
                id=idx,
                from_id=seg["from"],
                to_id=seg["to"],
                policy=policy,
                planned_terminal_cov=np.asarray(seg["planned_terminal_cov"], dtype=float).reshape(
                    blk.n, blk.n
                ),
                cost=float(seg["cost"]),
                w_mean=np.asarray(seg["w_mean"], dtype=float),
                w_cov=np.asarray(seg["w_cov"], dtype=float).reshape(blk.nw, blk.nw),
            )
        )
    return PlanResult(
        node_ids=list(doc["node_ids"]),
        edges=edges,
        terminal_mean=np.asarray(doc["terminal_mean"], dtype=float),
        terminal_cov=np.asarray(doc["terminal_cov"], dtype=float),
    )


def cmd_build(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    setup = build_setup(cfg)
    for method in cfg.methods():
        tree = build_roadmap(setup, method, cfg.seed, n_jobs=cfg.roadmap.n_jobs)
        path = out / f"roadmap_{method}.json"
        save_tree(tree, path)
        print(f"wrote {path} ({tree.n_nodes()} nodes)")
    return 0


def _load_roadmap_with_setup(path):
    with open(path, encoding="utf-8") as handle:
        doc = json.load(handle)
    cfg = ExperimentConfig.from_dict(doc.get("config", {}))
    setup = build_setup(cfg)
    tree = load_tree(path, setup.blk)
    return cfg, setup, tree


def cmd_plan(args):
    cfg, setup, tree = _load_roadmap_with_setup(args.roadmap)
    goal_values = [float(v) for v in args.goal.split(",")]
    goal = np.zeros(setup.model.n)
    goal[: len(goal_values)] = goal_values
    method = cfg.method if cfg.method != "all" else "baseline"
    pi = setup.controller(METHOD_MATRIX[method][1])
    plan = plan_to_goal(tree, goal, pi, n_connect=cfg.evaluation.n_connect)
    if plan is None:
        print("no plan: goal not reachable from this roadmap")
        return 2
    out = Path(args.out or "plan.json")
    with open(out, "w", encoding="utf-8") as handle:
        json.dump(plan_to_dict(plan, tree.config_echo, goal), handle)
    print(f"wrote {out} ({len(plan.edges)} edges, cost {plan.edges[-1].cost:.6g})")
    return 0


def cmd_evaluate(args):
    if args.rollouts < 1:
        return _fail("--rollouts must be a positive integer")
    with open(args.plan, encoding="utf-8") as handle:
        doc = json.load(handle)
    cfg = ExperimentConfig.from_dict(doc.get("config", {}))
    setup = build_setup(cfg)
    plan = plan_from_dict(doc, setup.blk)
    goal = np.asarray(doc["goal_mean"], dtype=float)
    master = args.seed if args.seed is not None else cfg.seed
    batch = monte_carlo(
        plan,
        setup.model,
        setup.field,
        setup.initial,
        args.rollouts,
        master_seed=master,
        world="field",
        record_trajectories=True,
    )
    emp = empirical_gaussian(batch)
    planned = type(emp)(
        mean=np.asarray(plan.terminal_mean), cov=np.asarray(plan.terminal_cov)
    )
    report = violation_rate(batch, setup.constraints)
    row = {
        "experiment": "evaluate",
        "method": cfg.method,
        "seed": master,
        "goal_index": 0,
        "goal_x": goal[0],
        "goal_y": goal[1],
        "reached": True,
        "w2": wasserstein2(planned, emp),
        "mse": float(np.mean(np.sum((batch.final_states - goal) ** 2, axis=1))),
        "planned_lambda_max": float(np.linalg.eigvalsh(plan.terminal_cov)[-1]),
        "violation_step_max": report.max_step_rate,
        "violation_traj_max": report.max_trajectory_rate,
        "n_rollouts": args.rollouts,
    }
    out = Path(args.out or "evaluation.json")
    payload = {
        "metrics": row,
        "empirical_terminal_mean": emp.mean.tolist(),
        "empirical_terminal_cov": emp.cov.tolist(),
        "final_states": batch.final_states.tolist(),
        "config": cfg.to_dict(),
    }
    with open(out, "w", encoding="utf-8") as handle:
        json.dump(payload, handle)
    print(
        f"wrote {out}: w2={row['w2']:.6g} mse={row['mse']:.6g} "
        f"planned_lambda_max={row['planned_lambda_max']:.6g}"
    )
    return 0


def cmd_experiment(args):
    cfg = load_config(args.config)
    overrides = {}
    if args.method:
        overrides["method"] = args.method
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), **overrides})
    out = args.out or cfg.output_dir
    if cfg.evaluation.kind == "multi_query":
        summary = run_multi_query(cfg, out_dir=out)
    else:
        summary = run_single_query(cfg, out_dir=out)
    for warning in summary.get("warnings", []):
        print(f"warning: {warning}")
    print(f"experiment complete in {summary['wall_time_s']:.1f}s; artifacts in {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="beliefroadmap",
        description="Belief roadmap planning through a correlated disturbance field",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build", help="construct roadmap file(s) from a config")
    p_build.add_argument("--config", required=True)
    p_build.add_argument("--seed", type=int, default=None)
    p_build.add_argument("--out", default=None)
    p_build.set_defaults(func=cmd_build)

    p_plan = sub.add_parser("plan", help="answer a goal query against a roadmap")
    p_plan.add_argument("--roadmap", required=True)
    p_plan.add_argument("--goal", required=True, help='comma list, e.g. "6.0,5.0"')
    p_plan.add_argument("--out", default=None)
    p_plan.set_defaults(func=cmd_plan)

    p_eval = sub.add_parser("evaluate", help="Monte Carlo evaluation of a stored plan")
    p_eval.add_argument("--plan", required=True)
    p_eval.add_argument("--rollouts", type=int, required=True)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(func=cmd_evaluate)

    p_exp = sub.add_parser("experiment", help="run the configured experiment")
    p_exp.add_argument("--config", required=True)
    p_exp.add_argument("--method", default=None, choices=[*METHOD_MATRIX, "all"])
    p_exp.add_argument("--seed", type=int, default=None)
    p_exp.add_argument("--out", default=None)
    p_exp.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; exit code 2 is reserved for
        # infeasible/no-plan, so usage problems map to the generic error code
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as err:
        return _fail(str(err))
    except (ValueError, KeyError, json.JSONDecodeError) as err:
        return _fail(f"malformed input: {err}")


if __name__ == "__main__":
    sys.exit(main())
