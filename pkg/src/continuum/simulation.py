"""Discrete-event flight simulation: ground-station broadcast, per-message
delivery and the vehicles' control loop, all on one integer tick clock."""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import simpy

from .formation import FormationSpec, HomogeneousTransform, Vec2, local_desired_position, transform_from_leaders
from .guidance import LeaderPlan, Leg, leader_desired, phase_at
from .models import Scenario
from .netsim import Clock, DeliveryRecord, GroundStation, Link, Message, broadcast_tick, spawn_link_rngs
from .vehicle import DisturbanceStream, Vehicle

logger = logging.getLogger(__name__)


@dataclass
class SimTrace:
    """One row per control tick; arrays are (samples, agents[, 2])."""

    agents: Tuple[str, ...]
    control_hz: int
    clock: Clock
    ticks: np.ndarray
    t: np.ndarray
    phase: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    setpoints: np.ndarray
    local_desired: np.ndarray
    global_desired: np.ndarray
    controller_ran: np.ndarray
    rx_count: np.ndarray
    transforms: List[HomogeneousTransform]
    legs: Tuple[Leg, ...] = ()
    deliveries: List[DeliveryRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t)


class _Recorder:
    def __init__(self):
        self.rows: Dict[str, list] = {k: [] for k in (
            "ticks", "t", "phase", "positions", "velocities", "setpoints",
            "local_desired", "global_desired", "controller_ran", "rx_count")}
        self.transforms: List[HomogeneousTransform] = []

    def add(self, **row):
        for k, v in row.items():
            self.rows[k].append(v)

    def build(self, agents, control_hz, clock, legs, deliveries) -> SimTrace:
        arr = {k: np.array(v) for k, v in self.rows.items()}
        return SimTrace(
            agents=tuple(agents),
            control_hz=control_hz,
            clock=clock,
            ticks=arr["ticks"].astype(np.int64),
            t=arr["t"].astype(float),
            phase=arr["phase"].astype(np.int64),
            positions=arr["positions"].reshape(-1, len(agents), 2),
            velocities=arr["velocities"].reshape(-1, len(agents), 2),
            setpoints=arr["setpoints"].reshape(-1, len(agents), 2),
            local_desired=arr["local_desired"].reshape(-1, len(agents), 2),
            global_desired=arr["global_desired"].reshape(-1, len(agents), 2),
            controller_ran=arr["controller_ran"].astype(bool).reshape(-1, len(agents)),
            rx_count=arr["rx_count"].astype(np.int64).reshape(-1, len(agents)),
            transforms=self.transforms,
            legs=tuple(legs),
            deliveries=deliveries,
        )


class FlightSimulation:
    """Owns the vehicles, links and ground station of one scenario run."""

    def __init__(self, scenario: Scenario, spec: Optional[FormationSpec] = None,
                 plan: Optional[LeaderPlan] = None):
        self.scenario = scenario
        self.spec = spec or scenario.formation_spec()
        self.plan = plan or scenario.plan(self.spec)
        self.clock = Clock(scenario.control_hz, scenario.link.rate_hz)
        self.dt = 1.0 / self.clock.control_hz
        agents = self.spec.agents

        link_seq, dist_seq = np.random.SeedSequence(scenario.seed).spawn(2)
        link_rngs = spawn_link_rngs(link_seq, agents, scenario.link)
        if scenario.disturbance.seed is not None:
            dist_seq = np.random.SeedSequence(scenario.disturbance.seed)
        dist_rngs = [np.random.default_rng(s) for s in dist_seq.spawn(len(agents))]

        self.links: Dict[str, Link] = {
            a: Link(a, scenario.link, self.clock, link_rngs[a]) for a in agents
        }
        self.vehicles: Dict[str, Vehicle] = {
            a: Vehicle(a, self.spec.initial_positions[a], scenario.gains,
                       DisturbanceStream(scenario.disturbance, rng),
                       estimate_delay_s=scenario.sensing.estimate_delay_s,
                       sample_period_s=1.0 / self.clock.broadcast_hz)
            for a, rng in zip(agents, dist_rngs)
        }
        self.station = GroundStation(self.spec, scenario.follower_mode, self.clock)
        # follower setpoint and feedforward as last received
        self.held: Dict[str, Tuple[Vec2, Vec2]] = {
            f: (self.spec.initial_positions[f], Vec2.zero()) for f in self.spec.followers
        }
        self.rx: Dict[str, int] = {a: 0 for a in agents}
        self.deliveries: List[DeliveryRecord] = []
        self.stalls = [
            (f.agent, self.clock.to_ticks(f.start_s, "fault start"),
             self.clock.to_ticks(f.start_s, "fault start") + self.clock.to_ticks(f.duration_s, "fault duration"))
            for f in scenario.faults
        ]
        self.end_tick = self.clock.to_ticks(self.plan.t_end, "plan end")
        self._recorder = _Recorder()

    def _stalled(self, agent: str, tick: int) -> bool:
        return any(a == agent and start <= tick < stop for a, start, stop in self.stalls)

    def _leader_targets(self, t: float):
        pos, vel = leader_desired(self.plan, min(t, self.plan.t_end))
        return dict(zip(self.spec.leaders, pos)), dict(zip(self.spec.leaders, vel))

    def _receive(self, env: simpy.Environment, msg: Message) -> None:
        t = self.clock.to_seconds(env.now)
        self.vehicles[msg.destination].receive(t, msg.pose)
        self.rx[msg.destination] += 1
        if msg.setpoint is not None and msg.destination in self.held:
            self.held[msg.destination] = (msg.setpoint, msg.setpoint_velocity or Vec2.zero())

    def _broadcast(self, env: simpy.Environment):
        tick = 0
        while tick <= self.end_tick:
            t = self.clock.to_seconds(tick)
            poses = {a: v.position for a, v in self.vehicles.items()}
            lead_pos, lead_vel = self._leader_targets(t)
            setpoints = self.station.compose(poses, lead_pos, lead_vel)
            deliveries, records = broadcast_tick(self.clock, tick, poses, setpoints,
                                                 phase_at(self.plan, min(t, self.plan.t_end)), self.links)
            self.deliveries.extend(records)
            for deliver_tick, msg in deliveries:
                ev = env.timeout(deliver_tick - tick)
                ev.callbacks.append(lambda _ev, m=msg: self._receive(env, m))
            yield env.timeout(self.clock.broadcast_period)
            tick += self.clock.broadcast_period

    def _control(self, env: simpy.Environment):
        spec = self.spec
        initial = spec.leader_initial
        tick = 0
        while tick <= self.end_tick:
            t = self.clock.to_seconds(tick)
            lead_pos, lead_vel = self._leader_targets(t)
            transform = transform_from_leaders(initial, [lead_pos[k] for k in spec.leaders])
            truth = {a: v.position for a, v in self.vehicles.items()}
            positions, velocities, setpoints, local, glob, ran = [], [], [], [], [], []
            for a in spec.agents:
                veh = self.vehicles[a]
                if a in lead_pos:
                    sp, ff = lead_pos[a], lead_vel[a]
                    local_des = sp
                else:
                    sp, ff = self.held[a]
                    local_des = local_desired_position(spec.weights[a], [truth[n] for n in spec.topology[a]])
                positions.append(veh.position)
                velocities.append(veh.velocity)
                setpoints.append(sp)
                local.append(local_des)
                glob.append(transform.apply(spec.initial_positions[a]))
                ran.append(veh.control(t, sp, ff, self.dt, stalled=self._stalled(a, tick)))
            for veh in self.vehicles.values():
                veh.advance(self.dt)
            self._recorder.add(
                ticks=tick, t=t, phase=phase_at(self.plan, min(t, self.plan.t_end)),
                positions=positions, velocities=velocities, setpoints=setpoints,
                local_desired=local, global_desired=glob, controller_ran=ran,
                rx_count=[self.rx[a] for a in spec.agents],
            )
            self._recorder.transforms.append(transform)
            yield env.timeout(self.clock.control_period)
            tick += self.clock.control_period

    def run(self) -> SimTrace:
        env = simpy.Environment()
        # process creation order fixes the order of equal-time events
        env.process(self._broadcast(env))
        env.process(self._control(env))
        env.run(until=self.end_tick + 1)
        trace = self._recorder.build(self.spec.agents, self.clock.control_hz, self.clock,
                                     self.plan.legs, self.deliveries)
        logger.info("simulated %s: %d control ticks, %d messages (%d dropped)",
                    self.scenario.name, len(trace), len(self.deliveries),
                    sum(1 for r in self.deliveries if r.dropped))
        return trace


def simulate(scenario: Scenario, spec: Optional[FormationSpec] = None,
             plan: Optional[LeaderPlan] = None) -> SimTrace:
    return FlightSimulation(scenario, spec, plan).run()
