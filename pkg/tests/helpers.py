import copy

from src.continuum.models import parse_scenario

QUICK = {
    "name": "quick",
    "seed": 1,
    "follower_mode": "GlobalReference",
    "formation": {
        "equilateral_edge_m": 4.72,
        "weights": {"4": [0.5, 0.134, 0.366], "5": [0.5, 0.134, 0.366]},
    },
    "mission": {"kind": "paper", "segment_duration_s": 2.5, "hold_s": 1.0},
    "link": {"drop_probability": 0.05},
    "disturbance": {"noise_std_mps2": 0.1},
}


def quick_scenario_dict(**sections):
    """Short five-agent mission; keyword arguments replace top-level keys or merge into sections."""
    data = copy.deepcopy(QUICK)
    for key, value in sections.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key].update(value)
        else:
            data[key] = value
    return data


def quick_scenario(**sections):
    return parse_scenario(quick_scenario_dict(**sections))
