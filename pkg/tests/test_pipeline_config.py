import json

import numpy as np
import pytest

from quassim.config import config_from_dict, load_config, load_config_list
from quassim.errors import ConfigValidationError


def lorenz_doc(method="qvpf"):
    return {
        "seed": 7,
        "method": method,
        "out_dir": "out",
        "problem": {
            "model": {"kind": "lorenz63", "dt": 0.02, "substeps": 5},
            "window": 8,
            "truth_init": [1.2, 1.8, 22.0],
            "background_cov": {"diag": [4.0, 4.0, 4.0]},
            "obs_cov": {"diag": [1.0, 1.0, 1.0]},
            "process_noise": {"diag": [0.25, 0.25, 0.25]},
        },
        "encoding": {
            "bits_per_dim": 4,
            "lower": [-25.0, -30.0, 0.0],
            "upper": [25.0, 30.0, 50.0],
        },
        "params": {"particles": 256, "depth": 2},
    }


class TestValidation:
    def test_valid_config_parses(self):
        cfg = config_from_dict(lorenz_doc())
        assert cfg.method == "qvpf"
        assert cfg.problem.window == 8
        assert cfg.encoding.num_qubits == 12

    def test_missing_fields_all_reported(self):
        with pytest.raises(ConfigValidationError) as err:
            config_from_dict({"problem": {}})
        text = str(err.value)
        assert "seed" in text
        assert "method" in text
        assert "problem.model" in text
        assert "problem.window" in text

    def test_unknown_method(self):
        doc = lorenz_doc()
        doc["method"] = "enkf"
        with pytest.raises(ConfigValidationError) as err:
            config_from_dict(doc)
        assert "enkf" in str(err.value)

    def test_encoding_required_for_table_methods(self):
        doc = lorenz_doc("qaoa")
        del doc["encoding"]
        with pytest.raises(ConfigValidationError) as err:
            config_from_dict(doc)
        assert "encoding" in str(err.value)

    def test_encoding_cap_enforced(self):
        doc = lorenz_doc()
        doc["encoding"]["bits_per_dim"] = 6  # 18 qubits > 16-qubit table cap
        with pytest.raises(ConfigValidationError) as err:
            config_from_dict(doc)
        assert "cap" in str(err.value)

    def test_unknown_param_reported(self):
        doc = lorenz_doc()
        doc["params"]["ensemble_inflation"] = 1.1
        with pytest.raises(ConfigValidationError) as err:
            config_from_dict(doc)
        assert "ensemble_inflation" in str(err.value)

    def test_bad_covariance_dimension(self):
        doc = lorenz_doc()
        doc["problem"]["background_cov"] = {"diag": [1.0, 1.0]}
        with pytest.raises(ConfigValidationError) as err:
            config_from_dict(doc)
        assert "background_cov" in str(err.value)

    def test_pf_without_encoding_is_fine(self):
        doc = lorenz_doc("pf")
        del doc["encoding"]
        cfg = config_from_dict(doc)
        assert cfg.encoding is None


class TestFiles:
    def test_round_trip_equality(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(lorenz_doc()))
        first = load_config(path)
        path2 = tmp_path / "echo.json"
        path2.write_text(json.dumps(first.to_dict()))
        second = load_config(path2)
        assert first == second

    def test_syntax_error_reports_line(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "seed": 7,\n  "method": qvpf\n}\n')
        with pytest.raises(ConfigValidationError) as err:
            load_config(path)
        assert "line 3" in str(err.value)

    def test_config_list(self, tmp_path):
        path = tmp_path / "list.json"
        docs = [lorenz_doc("fourdvar"), lorenz_doc("pf")]
        for d in docs:
            d["params"] = {"particles": 64}
        path.write_text(json.dumps({"configs": docs}))
        configs = load_config_list(path)
        assert [c.method for c in configs] == ["fourdvar", "pf"]

    def test_config_list_collects_violations(self, tmp_path):
        path = tmp_path / "list.json"
        bad = lorenz_doc("pf")
        del bad["seed"]
        path.write_text(json.dumps([lorenz_doc("fourdvar"), bad]))
        with pytest.raises(ConfigValidationError) as err:
            load_config_list(path)
        assert "configs[1].seed" in str(err.value)

    def test_echo_is_verbatim(self):
        doc = lorenz_doc()
        cfg = config_from_dict(doc)
        assert cfg.to_dict() == doc
