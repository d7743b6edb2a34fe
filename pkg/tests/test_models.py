import json
import logging

import pytest

from src.continuum.errors import InfeasibleMargins, ScenarioError
from src.continuum.models import dump_scenario, load_scenario, parse_scenario
from src.continuum.netsim import FollowerMode
from tests.helpers import quick_scenario, quick_scenario_dict


def test_defaults_fill_unspecified_sections():
    sc = quick_scenario()
    assert sc.control_hz == 400
    assert sc.link.rate_hz == 60.0 and sc.link.latency_s == pytest.approx(0.040)
    assert sc.gains.kp_pos == 1.0
    assert sc.follower_mode is FollowerMode.GLOBAL_REFERENCE
    assert sc.monitor.warmup_s == 1.0


def test_dump_and_parse_agree():
    sc = quick_scenario(faults=[{"agent": "4", "start_s": 2.0, "duration_s": 0.2}])
    again = parse_scenario(dump_scenario(sc))
    assert again == sc


def test_unknown_key_rejected():
    with pytest.raises(ScenarioError, match="wind_speed"):
        parse_scenario(quick_scenario_dict(link={"wind_speed": 3.0}))


def test_invalid_json_rejected():
    with pytest.raises(ScenarioError):
        parse_scenario("{not json")


def test_geometry_must_be_unambiguous():
    data = quick_scenario_dict(formation={"follower_positions_m": {"4": [0.0, 0.0], "5": [1.0, 0.0]}})
    with pytest.raises(ScenarioError, match="exactly one of weights"):
        parse_scenario(data)


def test_collinear_leaders_are_configuration_errors():
    data = quick_scenario_dict()
    data["formation"] = {
        "leader_positions_m": {"1": [0.0, 0.0], "2": [1.0, 0.0], "3": [2.0, 0.0]},
        "follower_positions_m": {"4": [0.5, 0.1], "5": [1.5, 0.1]},
    }
    with pytest.raises(ScenarioError, match="formation"):
        parse_scenario(data)


def test_infeasible_margins_keep_their_safety_type():
    with pytest.raises(InfeasibleMargins):
        parse_scenario(quick_scenario_dict(formation={"epsilon_m": 0.9}))


def test_fault_agent_must_exist():
    with pytest.raises(ScenarioError, match="unknown agent"):
        parse_scenario(quick_scenario_dict(faults=[{"agent": "9", "start_s": 1.0, "duration_s": 0.1}]))


def test_control_rate_must_be_integral():
    with pytest.raises(ScenarioError):
        parse_scenario(quick_scenario_dict(dt_s=0.003))


def test_explicit_geometry_derives_weights():
    data = quick_scenario_dict()
    data["formation"] = {
        "leader_positions_m": {"1": [-2.0, -1.0], "2": [2.0, -1.0], "3": [0.0, 2.5]},
        "follower_positions_m": {"4": [-0.6, 0.0], "5": [0.6, 0.0]},
    }
    spec = parse_scenario(data).formation_spec()
    assert sum(spec.weights["4"]) == pytest.approx(1.0)
    assert spec.initial_positions["5"] == (0.6, 0.0)


@pytest.mark.parametrize("name", ["paper_global", "paper_local_wind"])
def test_bundled_scenarios_load(bundled_path, name):
    sc = load_scenario(bundled_path(name))
    assert sc.name == name
    assert sc.plan().duration > 20.0


def test_missing_file_is_configuration_error(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "absent.scenario")


def test_loaded_file_matches_dict(write_scenario):
    path = write_scenario(quick_scenario_dict(seed=42))
    sc = load_scenario(path)
    assert sc.seed == 42
    assert json.loads(dump_scenario(sc))["formation"]["equilateral_edge_m"] == 4.72


def test_fractional_link_rate_rejected_at_load():
    with pytest.raises(ScenarioError, match="positive integers"):
        parse_scenario(quick_scenario_dict(link={"rate_hz": 59.5}))


def test_latency_off_the_tick_grid_is_rounded(caplog):
    with caplog.at_level(logging.WARNING, logger="src.continuum.netsim"):
        parse_scenario(quick_scenario_dict(link={"latency_s": 0.0401}))
    assert "rounded" in caplog.text


@pytest.mark.parametrize("section,value", [
    ("formation", {"centroid_m": [float("inf"), 0.0]}),
    ("formation", {"equilateral_edge_m": None,
                   "leader_positions_m": {"1": [float("nan"), 0.0], "2": [4.0, 0.0], "3": [2.0, 3.0]}}),
    ("gains", {"kp_pos": float("inf")}),
    ("disturbance", {"wind_speed_mps": float("nan")}),
])
def test_non_finite_numbers_rejected(section, value):
    text = json.dumps(quick_scenario_dict(**{section: value}))
    assert "Infinity" in text or "NaN" in text
    with pytest.raises(ScenarioError):
        parse_scenario(text)


def test_mission_has_no_altitude():
    with pytest.raises(ScenarioError, match="altitude_m"):
        parse_scenario(quick_scenario_dict(mission={"altitude_m": 1.5}))
