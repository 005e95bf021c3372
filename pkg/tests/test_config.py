import json

import pytest

from singular.mcmc.config import (
    ExperimentConfig,
    FigureKind,
    GeometricLadder,
    Mode,
    dump_config,
    load_config,
    parse_config,
)
from singular.mcmc.errors import ConfigError


def test_defaults():
    config = parse_config('{"seed": 1}')
    assert config.model == "w2w2"
    assert config.coords == [1, 2]
    assert config.n_grid[0] == 1e4
    assert config.resolved_burn_in == 100_000
    assert config.ladder_values()[:3] == [1.0, 10.0, 100.0]
    assert config.ladder_values()[-1] == pytest.approx(1e10)
    assert config.mode == Mode.sample


def test_round_trip():
    config = ExperimentConfig(
        model="w2w4",
        coords=[2],
        n_grid=[1e4, 1e6],
        sigma_grid=[10.0, 1000.0],
        sweeps=5000,
        ladder=[1.0, 100.0],
        seed=42,
        mode="figure",
        figure="fig2",
    )
    again = parse_config(dump_config(config))
    assert again == config
    assert again.figure == FigureKind.fig2

    geometric = ExperimentConfig(seed=3, ladder=GeometricLadder(n_min=1.0, n_max=1e4, per_decade=2))
    assert parse_config(dump_config(geometric)) == geometric
    assert len(geometric.ladder_values()) == 9


def test_field_error_has_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "seed": 1,\n  "sweeps": 0\n}\n')
    with pytest.raises(ConfigError) as excinfo:
        load_config(path)
    assert excinfo.value.line == 3
    assert "sweeps" in str(excinfo.value)
    assert str(excinfo.value).startswith(f"{path}:3:")


def test_json_syntax_error_has_line():
    with pytest.raises(ConfigError) as excinfo:
        parse_config('{\n  "seed": 1,\n  "model": \n}')
    assert excinfo.value.line == 4


def test_unknown_field():
    with pytest.raises(ConfigError) as excinfo:
        parse_config('{"seed": 1, "sweep": 10}')
    assert excinfo.value.line == 1


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


@pytest.mark.parametrize("mode", ["sample", "tune", "schedule", "figure"])
def test_stochastic_modes_need_seed(mode):
    with pytest.raises(ConfigError):
        parse_config(json.dumps({"mode": mode, "target_u": 0.5}))


@pytest.mark.parametrize("mode", ["theory", "oracle", "fit"])
def test_deterministic_modes_without_seed(mode):
    assert parse_config(json.dumps({"mode": mode})).seed is None


def test_tune_needs_target():
    with pytest.raises(ConfigError):
        parse_config('{"mode": "tune", "seed": 1}')
    assert parse_config('{"mode": "tune", "seed": 1, "target_u": 0.2}').target_u == 0.2


invalid_documents = {
    "coord_label": {"seed": 1, "coords": [3]},
    "coord_zero": {"seed": 1, "coords": [0]},
    "no_coords": {"seed": 1, "coords": []},
    "ladder_order": {"seed": 1, "ladder": [10.0, 1.0]},
    "ladder_negative": {"seed": 1, "ladder": [-1.0, 1.0]},
    "geometric_range": {"seed": 1, "ladder": {"n_min": 100.0, "n_max": 10.0}},
    "negative_sigma": {"seed": 1, "sigma_grid": [-1.0]},
    "empty_grid": {"seed": 1, "n_grid": []},
    "seed_range": {"seed": -1},
    "burn_in": {"seed": 1, "sweeps": 100, "burn_in": 100},
    "unknown_model": {"seed": 1, "model": "w3w3"},
    "target_range": {"seed": 1, "target_u": 1.0},
    "swap_interval": {"seed": 1, "swap_interval": 0},
}


@pytest.mark.parametrize("document", invalid_documents.values(), ids=invalid_documents.keys())
def test_invalid_documents(document):
    with pytest.raises(ConfigError):
        parse_config(json.dumps(document))


def test_overrides():
    config = parse_config('{"model": "w2w2", "seed": 1}', {"model": "W2W4", "seed": None, "sweeps": 10})
    assert config.model == "w2w4"
    assert config.seed == 1
    assert config.sweeps == 10


def test_overrides_without_file():
    config = load_config(None, {"mode": "theory", "coords": [2]})
    assert config.mode == Mode.theory
    assert config.coords == [2]


def test_echo_resolves_defaults():
    echo = parse_config('{"seed": 5, "sweeps": 1000, "ladder": [1.0, 10.0]}').echo()
    assert echo["burn_in"] == 100
    assert echo["ladder_values"] == [1.0, 10.0]
    assert echo["mode"] == "sample"
