import io
from pathlib import Path

import pytest
import yaml

from config import (
    RESOLVED_NAME,
    apply_overrides,
    build_scenario,
    draw_seed,
    load_scenario,
    parse_gamma,
    parse_values,
    read_scenario_file,
    resolved_settings,
    weighted_params,
    write_resolved,
)
from errors import ConfigError
from version import VERSION

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def _write(tmp_path, text, name="scenario.yaml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


@pytest.mark.parametrize("name", sorted(p.name for p in SCENARIOS.glob("*.yaml")))
def test_bundled_scenarios_load(name):
    scenario, _ = load_scenario(SCENARIOS / name, {})
    assert scenario.scenario_id
    scenario.script.build()


def test_beta_sweep_file():
    scenario, sweep = load_scenario(SCENARIOS / "beta_sweep.yaml", {})
    assert scenario.seed == 11
    assert sweep.axis == "alpha_beta"
    assert sweep.values == [0.0, 0.05, 0.10, 0.15]


def test_gamma_values_from_file(tmp_path):
    path = _write(tmp_path, "seed: 1\nsweep: {axis: gamma, values: [[1, 1], [2, 3]]}\n")
    _, sweep = load_scenario(path, {})
    assert sweep.values == [(1.0, 1.0), (2.0, 3.0)]


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        read_scenario_file("/nonexistent/scenario.yaml")


@pytest.mark.parametrize("text", ["seed: [1, 2\n", "- a list\n- not a mapping\n"])
def test_bad_yaml(tmp_path, text):
    with pytest.raises(ConfigError):
        read_scenario_file(_write(tmp_path, text))


def test_empty_file_is_all_defaults(tmp_path):
    assert read_scenario_file(_write(tmp_path, "")) == {}


@pytest.mark.parametrize(
    "text, expected", [("2:3", (2.0, 3.0)), ("1", (1.0, 1.0)), ("0.5:0.5", (0.5, 0.5))]
)
def test_parse_gamma(text, expected):
    assert parse_gamma(text) == expected


@pytest.mark.parametrize("text", ["3:2", "0:1", "a:b", "1:2:3", "-1"])
def test_parse_gamma_rejects(text):
    with pytest.raises(ConfigError):
        parse_gamma(text)


def test_parse_values():
    assert parse_values("0, 0.05,0.1", "alpha_beta") == [0.0, 0.05, 0.1]
    assert parse_values("1,2:3", "gamma") == [(1.0, 1.0), (2.0, 3.0)]
    with pytest.raises(ConfigError):
        parse_values("0.1,x", "compensation")
    with pytest.raises(ConfigError):
        parse_values(" , ", "alpha_beta")


def test_flags_override_file():
    raw = {"seed": 3, "weighted": {"alpha": 0.9, "beta": 0.1, "sign": "minus"}}
    merged = apply_overrides(raw, {"seed": 8, "beta": 0.2, "planner": None, "compensation": 0.7})
    assert merged["seed"] == 8
    assert merged["weighted"] == {"alpha": 0.8, "beta": 0.2, "sign": "minus"}
    assert merged["plant"] == {"compensation": 0.7}
    assert "planner" not in merged
    assert raw["weighted"]["beta"] == 0.1


def test_weighted_params_from_flags():
    assert weighted_params(None, None).beta == 0.1
    assert weighted_params(0.7, None).beta == pytest.approx(0.3)
    with pytest.raises(ConfigError):
        weighted_params(0.7, 0.7)


def test_unknown_planner_lists_valid_names():
    with pytest.raises(ConfigError, match="weighted.*lasso"):
        build_scenario({"planner": "neural"})


def test_out_of_range_plant():
    with pytest.raises(ConfigError):
        build_scenario({"plant": {"compensation": 1.5}})


def test_seed_is_drawn_when_missing(caplog):
    with caplog.at_level("INFO"):
        scenario, _ = load_scenario(None, {})
    assert 0 <= scenario.seed < 2**63
    assert str(scenario.seed) in caplog.text


def test_draw_seed_range():
    assert all(0 <= draw_seed() < 2**63 for _ in range(20))


def test_resolved_echo():
    scenario, sweep = load_scenario(SCENARIOS / "beta_sweep.yaml", {"seed": 4})
    sink = io.StringIO()
    write_resolved(sink, "sweep", resolved_settings(scenario, sweep))
    echoed = yaml.safe_load(sink.getvalue())
    assert list(echoed)[:3] == ["windward_version", "command", "seed"]
    assert echoed["windward_version"] == VERSION
    assert echoed["seed"] == 4
    assert echoed["scenario"]["wind"]["noise_scale"] == 0.8
    assert echoed["sweep"]["values"] == [0.0, 0.05, 0.1, 0.15]
    assert RESOLVED_NAME == "config.resolved.yaml"
