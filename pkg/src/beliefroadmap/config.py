"""Experiment configuration: versioned JSON schema with strict key checking."""

import json
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from .field import FieldConfig, KernelSpec, VarianceBox

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "METHOD_MATRIX",
    "METHOD_ORDER",
]

SCHEMA_VERSION = 1

# method -> (construction, controller). The rewired construction with the
# robust controller is the full algorithm; the other cells are its ablations.
METHOD_MATRIX = {
    "baseline": ("plain", "min_coverage"),
    "robust": ("plain", "robust"),
    "rewired": ("rewired", "min_coverage"),
    "revise": ("rewired", "robust"),
}
METHOD_ORDER = ("baseline", "robust", "rewired", "revise")


class ConfigError(ValueError):
    """Raised for malformed or unknown configuration content."""


def _take(mapping, allowed, context):
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {context}")
    return {key: mapping[key] for key in mapping}


@dataclass(frozen=True)
class DynamicsSection:
    dt: float = 0.1
    horizon: int = 6

    def validate(self):
        if self.dt <= 0 or self.horizon < 1:
            raise ConfigError("dynamics needs dt > 0 and horizon >= 1")


@dataclass(frozen=True)
class ConstraintsSection:
    position: tuple = (0.0, 10.0)
    velocity: tuple = (-10.0, 10.0)
    acceleration: tuple = (-100.0, 100.0)
    control: tuple | None = None
    epsilon: float = 0.05

    def validate(self):
        if not 0 < self.epsilon <= 0.5:
            raise ConfigError("epsilon must lie in (0, 0.5]")
        for name in ("position", "velocity", "acceleration"):
            lo, hi = getattr(self, name)
            if hi <= lo:
                raise ConfigError(f"{name} bounds must satisfy lo < hi")


@dataclass(frozen=True)
class RoadmapSection:
    n_nodes: int = 100
    r_min: float = 0.3
    r_max: float = 1.5
    v_max: float = 1.0
    r_near: float = 2.0
    max_attempts: int = 100
    n_jobs: int = 1

    def validate(self):
        if self.n_nodes < 1:
            raise ConfigError("n_nodes must be >= 1")


@dataclass(frozen=True)
class EvaluationSection:
    kind: str = "multi_query"
    n_goals: int = 25
    n_rollouts: int = 100
    n_connect: int = 5
    goal_attempt_factor: int = 8
    seeds: tuple = (0, 1, 2, 3, 4)
    initial_mean: tuple = (5.0, 5.0, 0.0, 0.0, 0.0, 0.0)
    initial_cov_scale: float = 0.1
    goal_mean: tuple = (8.0, 8.0, 0.0, 0.0, 0.0, 0.0)
    goal_cov_scale: float = 0.2

    def validate(self):
        if self.kind not in ("multi_query", "single_query"):
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.n_rollouts < 0 or self.n_goals < 0:
            raise ConfigError("n_goals and n_rollouts must be nonnegative")
        if self.n_connect < 1:
            raise ConfigError("n_connect must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    field: FieldConfig = dc_field(default_factory=FieldConfig)
    dynamics: DynamicsSection = dc_field(default_factory=DynamicsSection)
    constraints: ConstraintsSection = dc_field(default_factory=ConstraintsSection)
    roadmap: RoadmapSection = dc_field(default_factory=RoadmapSection)
    evaluation: EvaluationSection = dc_field(default_factory=EvaluationSection)
    method: str = "baseline"
    seed: int = 0
    output_dir: str = "out"

    def validate(self):
        if self.method not in (*METHOD_MATRIX, "all"):
            raise ConfigError(f"unknown method {self.method!r}")
        self.dynamics.validate()
        self.constraints.validate()
        self.roadmap.validate()
        self.evaluation.validate()
        self.field.validate()
        return self

    def methods(self):
        return list(METHOD_ORDER) if self.method == "all" else [self.method]

    def to_dict(self):
        doc = {
            "version": SCHEMA_VERSION,
            "method": self.method,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "field": {
                "origin": list(self.field.origin),
                "extent": list(self.field.extent),
                "spacing": self.field.spacing,
                "flow_center": list(self.field.flow_center),
                "flow_gain": self.field.flow_gain,
                "variance": self.field.variance,
                "variance_boxes": [
                    {"lo": list(b.lo), "hi": list(b.hi), "value": b.value}
                    for b in self.field.variance_boxes
                ],
                "kernel": {
                    "base": self.field.kernel.base,
                    "length_scale": self.field.kernel.length_scale,
                },
            },
            "dynamics": asdict(self.dynamics),
            "constraints": {
                "position": list(self.constraints.position),
                "velocity": list(self.constraints.velocity),
                "acceleration": list(self.constraints.acceleration),
                "control": list(self.constraints.control) if self.constraints.control else None,
                "epsilon": self.constraints.epsilon,
            },
            "roadmap": asdict(self.roadmap),
            "evaluation": {
                "kind": self.evaluation.kind,
                "n_goals": self.evaluation.n_goals,
                "n_rollouts": self.evaluation.n_rollouts,
                "n_connect": self.evaluation.n_connect,
                "goal_attempt_factor": self.evaluation.goal_attempt_factor,
                "seeds": list(self.evaluation.seeds),
                "initial_mean": list(self.evaluation.initial_mean),
                "initial_cov_scale": self.evaluation.initial_cov_scale,
                "goal_mean": list(self.evaluation.goal_mean),
                "goal_cov_scale": self.evaluation.goal_cov_scale,
            },
        }
        return doc

    @classmethod
    def from_dict(cls, doc):
        doc = _take(
            dict(doc),
            (
                "version",
                "method",
                "seed",
                "output_dir",
                "field",
                "dynamics",
                "constraints",
                "roadmap",
                "evaluation",
            ),
            "config",
        )
        version = doc.pop("version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config version {version}")

        field_doc = _take(
            dict(doc.pop("field", {})),
            (
                "origin",
                "extent",
                "spacing",
                "flow_center",
                "flow_gain",
                "variance",
                "variance_boxes",
                "kernel",
            ),
            "field",
        )
        kernel_doc = _take(dict(field_doc.pop("kernel", {})), ("base", "length_scale"), "field.kernel")
        boxes = []
        for i, box in enumerate(field_doc.pop("variance_boxes", [])):
            box = _take(dict(box), ("lo", "hi", "value"), f"field.variance_boxes[{i}]")
            try:
                boxes.append(VarianceBox(lo=tuple(box["lo"]), hi=tuple(box["hi"]), value=box["value"]))
            except KeyError as missing:
                raise ConfigError(f"variance box missing {missing}") from None
        field_cfg = FieldConfig(
            origin=tuple(field_doc.get("origin", (0.0, 0.0))),
            extent=tuple(field_doc.get("extent", (10.0, 10.0))),
            spacing=field_doc.get("spacing", 1.0),
            flow_center=tuple(field_doc.get("flow_center", (5.0, 5.0))),
            flow_gain=field_doc.get("flow_gain", 0.25),
            variance=field_doc.get("variance", 0.2),
            variance_boxes=tuple(boxes),
            kernel=KernelSpec(
                base=kernel_doc.get("base", 0.3),
                length_scale=kernel_doc.get("length_scale", 10.0 * np.sqrt(2.0)),
            ),
        )

        dyn_doc = _take(dict(doc.pop("dynamics", {})), ("dt", "horizon"), "dynamics")
        cons_doc = _take(
            dict(doc.pop("constraints", {})),
            ("position", "velocity", "acceleration", "control", "epsilon"),
            "constraints",
        )
        road_doc = _take(
            dict(doc.pop("roadmap", {})),
            ("n_nodes", "r_min", "r_max", "v_max", "r_near", "max_attempts", "n_jobs"),
            "roadmap",
        )
        eval_doc = _take(
            dict(doc.pop("evaluation", {})),
            (
                "kind",
                "n_goals",
                "n_rollouts",
                "n_connect",
                "goal_attempt_factor",
                "seeds",
                "initial_mean",
                "initial_cov_scale",
                "goal_mean",
                "goal_cov_scale",
            ),
            "evaluation",
        )
        control = cons_doc.get("control")
        cfg = cls(
            field=field_cfg,
            dynamics=DynamicsSection(**dyn_doc),
            constraints=ConstraintsSection(
                position=tuple(cons_doc.get("position", (0.0, 10.0))),
                velocity=tuple(cons_doc.get("velocity", (-10.0, 10.0))),
                acceleration=tuple(cons_doc.get("acceleration", (-100.0, 100.0))),
                control=tuple(control) if control else None,
                epsilon=cons_doc.get("epsilon", 0.05),
            ),
            roadmap=RoadmapSection(**road_doc),
            evaluation=EvaluationSection(
                kind=eval_doc.get("kind", "multi_query"),
                n_goals=eval_doc.get("n_goals", 25),
                n_rollouts=eval_doc.get("n_rollouts", 100),
                n_connect=eval_doc.get("n_connect", 5),
                goal_attempt_factor=eval_doc.get("goal_attempt_factor", 8),
                seeds=tuple(eval_doc.get("seeds", (0, 1, 2, 3, 4))),
                initial_mean=tuple(eval_doc.get("initial_mean", (5.0, 5.0, 0.0, 0.0, 0.0, 0.0))),
                initial_cov_scale=eval_doc.get("initial_cov_scale", 0.1),
                goal_mean=tuple(eval_doc.get("goal_mean", (8.0, 8.0, 0.0, 0.0, 0.0, 0.0))),
                goal_cov_scale=eval_doc.get("goal_cov_scale", 0.2),
            ),
            method=doc.get("method", "baseline"),
            seed=doc.get("seed", 0),
            output_dir=doc.get("output_dir", "out"),
        )
        return cfg.validate()


def load_config(path):
    try:
        with open(path, encoding="utf-8") as handle:
            doc = json.load(handle)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from None
    return ExperimentConfig.from_dict(doc)
