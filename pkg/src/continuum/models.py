# continuum/models.py
"""Scenario file schema. Every physical quantity carries its unit in the key."""
import json
import logging
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ContinuumError, NetworkError, SafetyError, ScenarioError
from .formation import FormationSpec, build_formation, equilateral_triangle
from .guidance import LeaderPlan, paper_mission, square_mission
from .netsim import Clock, FollowerMode, LinkModel
from .vehicle import ControllerGains, DisturbanceModel

logger = logging.getLogger(__name__)

Point = Tuple[float, float]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)


class FormationConfig(_Section):
    leaders: List[str] = ["1", "2", "3"]
    # either explicit leader positions or an equilateral triangle
    leader_positions_m: Optional[Dict[str, Point]] = None
    equilateral_edge_m: Optional[float] = Field(None, gt=0.0)
    centroid_m: Point = (0.0, 0.0)
    followers: List[str] = ["4", "5"]
    topology: Dict[str, Tuple[str, str, str]] = {"4": ("1", "3", "5"), "5": ("2", "3", "4")}
    # either explicit weights (positions derived) or follower positions (weights derived)
    weights: Optional[Dict[str, Tuple[float, float, float]]] = None
    follower_positions_m: Optional[Dict[str, Point]] = None
    epsilon_m: float = Field(0.28, gt=0.0)
    delta_m: float = Field(0.40, gt=0.0)

    @model_validator(mode="after")
    def _one_geometry(self):
        if (self.leader_positions_m is None) == (self.equilateral_edge_m is None):
            raise ValueError("give exactly one of leader_positions_m or equilateral_edge_m")
        if (self.weights is None) == (self.follower_positions_m is None):
            raise ValueError("give exactly one of weights or follower_positions_m")
        return self

    def leader_positions(self) -> Dict[str, Point]:
        if self.leader_positions_m is not None:
            return dict(self.leader_positions_m)
        if len(self.leaders) != 3:
            raise ScenarioError(f"exactly 3 leaders required, got {len(self.leaders)}")
        verts = equilateral_triangle(self.equilateral_edge_m, self.centroid_m)
        return {k: tuple(v) for k, v in zip(self.leaders, verts)}

    def to_spec(self, delta_m: Optional[float] = None) -> FormationSpec:
        return build_formation(
            leaders=self.leaders,
            leader_positions=self.leader_positions(),
            followers=self.followers,
            topology=self.topology,
            epsilon=self.epsilon_m,
            delta=self.delta_m if delta_m is None else delta_m,
            follower_positions=self.follower_positions_m,
            weights=self.weights,
        )


class WaypointConfig(_Section):
    leg: int = Field(ge=0, description="mission leg index, hold/settle legs not counted")
    fraction: float = Field(0.5, gt=0.0, lt=1.0)


class MissionConfig(_Section):
    kind: Literal["paper", "square"] = "paper"
    segment_duration_s: float = Field(3.75, gt=0.0)
    variant: Literal["rest_to_rest", "midpoint_velocity"] = "rest_to_rest"
    v_max_mps: float = Field(0.5, ge=0.0)
    square_edge_m: float = Field(1.0, ge=0.0)
    contraction: Optional[float] = Field(None, gt=0.0, description="default: certified lambda_min")
    intermediate_waypoint: Optional[WaypointConfig] = None
    hold_s: float = Field(0.0, ge=0.0)
    settle_s: float = Field(0.0, ge=0.0)

    def build_plan(self, spec: FormationSpec) -> LeaderPlan:
        wp = None
        if self.intermediate_waypoint is not None:
            wp = (self.intermediate_waypoint.leg, self.intermediate_waypoint.fraction)
        common = dict(
            segment_duration=self.segment_duration_s,
            square_edge=self.square_edge_m,
            variant=self.variant,
            v_max=self.v_max_mps,
            intermediate_waypoint=wp,
            hold_s=self.hold_s,
            settle_s=self.settle_s,
        )
        if self.kind == "square":
            return square_mission(spec, **common)
        return paper_mission(spec, contraction=self.contraction, **common)


class SensingConfig(_Section):
    estimate_delay_s: float = Field(0.0, ge=0.0, description="onboard delay on top of the link latency")


class MonitorConfig(_Section):
    warmup_s: float = Field(1.0, ge=0.0)
    stall_threshold_s: float = Field(0.1, gt=0.0)
    certificate_rate_hz: float = Field(100.0, gt=0.0)


class FaultConfig(_Section):
    """Controller stall: the agent's controller does not run for duration_s."""

    agent: str
    start_s: float = Field(ge=0.0)
    duration_s: float = Field(gt=0.0)


class OutputConfig(_Section):
    trace_decimation: int = Field(4, ge=1)
    report_rate_hz: float = Field(60.0, gt=0.0)


class Scenario(_Section):
    name: str
    seed: int = 0
    dt_s: float = Field(0.0025, gt=0.0)
    follower_mode: FollowerMode = FollowerMode.GLOBAL_REFERENCE
    formation: FormationConfig
    mission: MissionConfig = MissionConfig()
    link: LinkModel = LinkModel(latency_s=0.040)
    disturbance: DisturbanceModel = DisturbanceModel()
    gains: ControllerGains = ControllerGains()
    sensing: SensingConfig = SensingConfig()
    monitor: MonitorConfig = MonitorConfig()
    faults: List[FaultConfig] = []
    output: OutputConfig = OutputConfig()
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _cross_checks(self):
        rate = 1.0 / self.dt_s
        if abs(rate - round(rate)) > 1e-6:
            raise ValueError(f"1/dt_s must be an integer rate in Hz, got {rate}")
        try:
            clock = Clock(round(rate), self.link.rate_hz)
        except NetworkError as exc:
            raise ValueError(f"link: {exc}") from exc
        clock.to_ticks(self.link.latency_s, "latency")
        agents = set(self.formation.leaders) | set(self.formation.followers)
        for fault in self.faults:
            if fault.agent not in agents:
                raise ValueError(f"fault names unknown agent {fault.agent!r}")
        return self

    @property
    def control_hz(self) -> int:
        return int(round(1.0 / self.dt_s))

    def formation_spec(self) -> FormationSpec:
        return self.formation.to_spec()

    def plan(self, spec: Optional[FormationSpec] = None) -> LeaderPlan:
        return self.mission.build_plan(spec or self.formation_spec())

    def validate_modules(self) -> None:
        """Build the formation and plan so module invariants surface at load time."""
        try:
            self.plan(self.formation_spec())
        except SafetyError:
            raise
        except ContinuumError as exc:
            raise ScenarioError(f"{exc.module}: {exc}") from exc
        except ValueError as exc:
            raise ScenarioError(f"invalid scenario: {exc}") from exc


def parse_scenario(data: Union[str, bytes, dict]) -> Scenario:
    try:
        if isinstance(data, (str, bytes)):
            data = json.loads(data)
        scenario = Scenario.model_validate(data)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    except ValidationError as exc:
        raise ScenarioError(f"invalid scenario: {exc}") from exc
    scenario.validate_modules()
    return scenario


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    scenario = parse_scenario(text)
    logger.info("loaded scenario %s from %s", scenario.name, path)
    return scenario


def dump_scenario(scenario: Scenario) -> str:
    return scenario.model_dump_json(indent=2)
