import json

import numpy as np
import pytest

from beliefroadmap.config import (
    METHOD_MATRIX,
    METHOD_ORDER,
    ConfigError,
    ExperimentConfig,
    load_config,
)


class TestSchema:
    def test_defaults_round_trip(self):
        cfg = ExperimentConfig().validate()
        back = ExperimentConfig.from_dict(cfg.to_dict())
        assert back.to_dict() == cfg.to_dict()

    def test_unknown_top_level_key_rejected(self):
        doc = ExperimentConfig().to_dict()
        doc["wind"] = {}
        with pytest.raises(ConfigError, match="unknown keys"):
            ExperimentConfig.from_dict(doc)

    def test_unknown_nested_key_rejected(self):
        doc = ExperimentConfig().to_dict()
        doc["field"]["turbulence"] = 3
        with pytest.raises(ConfigError, match="field"):
            ExperimentConfig.from_dict(doc)
        doc = ExperimentConfig().to_dict()
        doc["roadmap"]["branching"] = 2
        with pytest.raises(ConfigError, match="roadmap"):
            ExperimentConfig.from_dict(doc)

    def test_version_checked(self):
        doc = ExperimentConfig().to_dict()
        doc["version"] = 99
        with pytest.raises(ConfigError, match="version"):
            ExperimentConfig.from_dict(doc)

    def test_bad_values_rejected(self):
        doc = ExperimentConfig().to_dict()
        doc["method"] = "fastest"
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(doc)
        doc = ExperimentConfig().to_dict()
        doc["constraints"]["epsilon"] = 0.9
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(doc)
        doc = ExperimentConfig().to_dict()
        doc["dynamics"]["dt"] = -0.1
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(doc)

    def test_load_reports_json_errors(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(bad)

    def test_variance_box_parsing(self):
        doc = ExperimentConfig().to_dict()
        doc["field"]["variance_boxes"] = [{"lo": [3, 3], "hi": [7, 7], "value": 6.0}]
        cfg = ExperimentConfig.from_dict(doc)
        assert cfg.field.variance_boxes[0].value == 6.0
        doc["field"]["variance_boxes"] = [{"low": [3, 3], "hi": [7, 7], "value": 6.0}]
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(doc)


class TestAblationGrid:
    def test_method_matrix_mapping(self):
        assert METHOD_MATRIX["baseline"] == ("plain", "min_coverage")
        assert METHOD_MATRIX["robust"] == ("plain", "robust")
        assert METHOD_MATRIX["rewired"] == ("rewired", "min_coverage")
        assert METHOD_MATRIX["revise"] == ("rewired", "robust")

    def test_all_expands_in_fixed_order(self):
        doc = ExperimentConfig().to_dict()
        doc["method"] = "all"
        cfg = ExperimentConfig.from_dict(doc)
        assert tuple(cfg.methods()) == METHOD_ORDER

    def test_config_echo_embeds_seed(self):
        doc = ExperimentConfig().to_dict()
        doc["seed"] = 42
        cfg = ExperimentConfig.from_dict(doc)
        assert cfg.to_dict()["seed"] == 42
        assert json.loads(json.dumps(cfg.to_dict())) == cfg.to_dict()


class TestExperimentScales:
    def test_paper_scale_multi_query_echo(self):
        doc = ExperimentConfig().to_dict()
        doc["dynamics"] = {"dt": 0.1, "horizon": 6}
        doc["roadmap"]["n_nodes"] = 500
        doc["evaluation"].update({"kind": "multi_query", "n_goals": 100, "n_rollouts": 200})
        cfg = ExperimentConfig.from_dict(doc)
        echo = cfg.to_dict()
        assert echo["dynamics"] == {"dt": 0.1, "horizon": 6}
        assert echo["roadmap"]["n_nodes"] == 500
        assert echo["evaluation"]["n_goals"] == 100
        assert echo["evaluation"]["n_rollouts"] == 200

    def test_paper_scale_single_query_echo(self):
        doc = ExperimentConfig().to_dict()
        doc["dynamics"] = {"dt": 0.2, "horizon": 6}
        doc["roadmap"]["n_nodes"] = 200
        doc["field"]["variance_boxes"] = [{"lo": [3, 3], "hi": [7, 7], "value": 6.0}]
        doc["evaluation"].update(
            {
                "kind": "single_query",
                "seeds": list(range(20)),
                "initial_mean": [2, 2, 0, 0, 0, 0],
                "initial_cov_scale": 0.1,
                "goal_mean": [8, 8, 0, 0, 0, 0],
                "goal_cov_scale": 0.2,
            }
        )
        cfg = ExperimentConfig.from_dict(doc)
        echo = cfg.to_dict()
        assert echo["field"]["variance_boxes"] == [{"lo": [3, 3], "hi": [7, 7], "value": 6.0}]
        assert echo["evaluation"]["goal_mean"] == [8, 8, 0, 0, 0, 0]
        assert echo["evaluation"]["goal_cov_scale"] == 0.2
        assert len(echo["evaluation"]["seeds"]) == 20

    def test_desk_scale_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.roadmap.n_nodes == 100
        assert cfg.evaluation.n_goals == 25
        assert cfg.evaluation.n_rollouts == 100
        assert len(cfg.evaluation.seeds) == 5
