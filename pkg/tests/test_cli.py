"""CLI commands: exit codes, CSV artifacts, determinism."""

import numpy as np
import pytest
import yaml

from smoothmpc.cli import main
from smoothmpc.config import config_hash, default_config, load_config, validate_config

TINY = {
    "system": {"A": [[1.0, 1.0], [0.0, 1.0]], "B": [[0.0], [1.0]]},
    "cost": {"Q": [[1.0, 0.0], [0.0, 1.0]], "R": [[0.01]], "horizon": 10},
    "constraints": {"state_box": 10.0, "input_box": 1.0},
    "pieces": {"resolution": 41},
    "bounds": {"eta_grid": [0.1], "n_states": 3, "with_hessian": False},
    "smoothness": {"eta_grid": [1.0], "sigma_grid": [0.1, 2.0], "n_samples": 150},
    "imitation": {"N": 3, "K": 5, "seeds": [0], "n_levels": 1, "n_eval": 2,
                  "expert_samples": 100,
                  "train": {"steps": 40, "batch_size": 15, "width": 8}},
    "matrix_selftest": {"instances": 40},
    "seed": 0,
}


@pytest.fixture()
def tiny_cfg(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(TINY))
    return path


def test_config_defaults_and_hash():
    cfg = validate_config({})
    assert cfg == default_config() | {}
    h1 = config_hash(cfg)
    h2 = config_hash(validate_config({}))
    assert h1 == h2 and len(h1) == 12
    assert config_hash(validate_config({"seed": 1})) != h1


def test_config_validation_errors(tmp_path):
    with pytest.raises(ValueError):
        validate_config({"cost": {"horizon": 0}})
    with pytest.raises(ValueError):
        validate_config({"smoothness": {"eta_grid": []}})
    bad = tmp_path / "bad.yaml"
    bad.write_text("- just\n- a list\n")
    with pytest.raises(ValueError):
        load_config(bad)


def test_cli_invalid_config_exit_3(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"cost": {"horizon": 0}}))
    assert main(["pieces", "--config", str(bad), "--out", str(tmp_path)]) == 3


def test_cli_pieces(tmp_path, capsys):
    # scalar clip system: exactly 3 pieces, stable at any resolution
    cfg = dict(TINY)
    cfg["system"] = {"A": [[2.0]], "B": [[1.0]]}
    cfg["cost"] = {"Q": [[1.0]], "R": [[1e-4]], "horizon": 1}
    cfg["constraints"] = {"state_box": 100.0, "input_box": 1.0}
    path = tmp_path / "clip.yaml"
    path.write_text(yaml.safe_dump(cfg))
    out = tmp_path / "out"
    code = main(["pieces", "--config", str(path), "--out", str(out)])
    assert code == 0
    rows = (out / "pieces.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 3
    text = (out / "piece_counts.csv").read_text()
    assert text.startswith("# config=")
    assert "stable across resolutions: True" in capsys.readouterr().out


def test_cli_pieces_unstable_count_exit_2(tiny_cfg, tmp_path):
    # the benchmark count has not converged at toy resolutions
    code = main(["pieces", "--config", str(tiny_cfg), "--out", str(tmp_path / "o"),
                 "--resolution", "21"])
    assert code == 2


def test_cli_bounds_and_determinism(tiny_cfg, tmp_path):
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["bounds", "--config", str(tiny_cfg), "--out", str(out1)]) == 0
    assert main(["bounds", "--config", str(tiny_cfg), "--out", str(out2)]) == 0
    assert (out1 / "bounds_sweep.csv").read_bytes() == (out2 / "bounds_sweep.csv").read_bytes()
    assert (out1 / "bound_reports.csv").exists()


def test_cli_bounds_corrupt_exit_2(tiny_cfg, tmp_path):
    code = main(["bounds", "--config", str(tiny_cfg), "--out", str(tmp_path / "o"),
                 "--corrupt", "error_upper"])
    assert code == 2


def test_cli_smoothness(tiny_cfg, tmp_path):
    out = tmp_path / "out"
    assert main(["smoothness", "--config", str(tiny_cfg), "--out", str(out)]) == 0
    lines = (out / "smoothness.csv").read_text().strip().splitlines()
    assert lines[1].split(",")[0] == "kind"
    assert len(lines) == 2 + 3  # comment, header, 1 barrier + 2 randomized rows


def test_cli_imitate(tiny_cfg, tmp_path):
    out = tmp_path / "out"
    assert main(["imitate", "--config", str(tiny_cfg), "--out", str(out)]) == 0
    lines = (out / "imitation.csv").read_text().strip().splitlines()
    assert len(lines) == 2 + 2  # one level x {barrier, randomized} x one seed


def test_cli_imitate_reproducible(tiny_cfg, tmp_path):
    o1, o2 = tmp_path / "a", tmp_path / "b"
    assert main(["imitate", "--config", str(tiny_cfg), "--out", str(o1)]) == 0
    assert main(["imitate", "--config", str(tiny_cfg), "--out", str(o2)]) == 0
    assert (o1 / "imitation.csv").read_bytes() == (o2 / "imitation.csv").read_bytes()


def test_cli_matrix_selftest(tiny_cfg, tmp_path, capsys):
    assert main(["matrix-selftest", "--config", str(tiny_cfg),
                 "--out", str(tmp_path)]) == 0
    assert "0 failures" in capsys.readouterr().out
