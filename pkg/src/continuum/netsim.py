"""Ground-station broadcast network: 60 Hz pose/setpoint messages with
Bernoulli or bursty loss, fixed latency and inter-arrival statistics.

Time is kept in integer ticks of a Clock so inter-arrival gaps are exact
multiples of the broadcast period.
"""
import logging
import math
from collections import Counter, deque
from dataclasses import dataclass
from enum import Enum
from typing import Deque, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import EmptyLog, NetworkError
from .formation import FormationSpec, Vec2, leader_weights, local_desired_position
from .vehicle import FILTER_TAPS, derivative_filter

logger = logging.getLogger(__name__)


class FollowerMode(str, Enum):
    GLOBAL_REFERENCE = "GlobalReference"
    LOCAL_COMMUNICATION = "LocalCommunication"


class BurstModel(BaseModel):
    """Two-state (good/bad) loss channel."""

    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    p_good_to_bad: float = Field(0.01, ge=0.0, le=1.0)
    p_bad_to_good: float = Field(0.3, ge=0.0, le=1.0)
    loss_in_bad: float = Field(1.0, ge=0.0, le=1.0)


class LinkModel(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    rate_hz: float = Field(60.0, gt=0.0)
    latency_s: float = Field(0.040, ge=0.0)
    drop_probability: float = Field(0.0, ge=0.0, le=1.0)
    jitter_std_s: float = Field(0.0, ge=0.0)
    seed: Optional[int] = None
    burst: Optional[BurstModel] = None


class Clock:
    """Integer tick clock at lcm(control rate, broadcast rate)."""

    def __init__(self, control_hz: float, broadcast_hz: float):
        rates = []
        for rate in (control_hz, broadcast_hz):
            if rate <= 0 or abs(rate - round(rate)) > 1e-9:
                raise NetworkError(f"rates must be positive integers in Hz, got {rate}")
            rates.append(int(round(rate)))
        self.control_hz, self.broadcast_hz = rates
        self.hz = math.lcm(*rates)
        self.control_period = self.hz // self.control_hz
        self.broadcast_period = self.hz // self.broadcast_hz

    def to_ticks(self, seconds: float, what: str = "duration") -> int:
        exact = seconds * self.hz
        ticks = int(round(exact))
        if abs(exact - ticks) > 1e-6:
            logger.warning("%s %.6f s rounded to %d ticks (%.6f s)", what, seconds, ticks, ticks / self.hz)
        return ticks

    def to_seconds(self, ticks: int) -> float:
        return ticks / self.hz


@dataclass(frozen=True)
class Message:
    destination: str
    seq: int
    send_tick: int
    send_time: float
    pose: Vec2
    setpoint: Optional[Vec2] = None
    setpoint_velocity: Optional[Vec2] = None
    phase: int = 0


@dataclass(frozen=True)
class DeliveryRecord:
    destination: str
    seq: int
    send_tick: int
    send_time: float
    deliver_tick: Optional[int]
    deliver_time: Optional[float]
    dropped: bool


class Link:
    """Ground station to one agent. Owns its random stream and counters."""

    def __init__(self, destination: str, model: LinkModel, clock: Clock, rng: np.random.Generator):
        self.destination = destination
        self.model = model
        self.clock = clock
        self.rng = rng
        self.latency_ticks = clock.to_ticks(model.latency_s, "latency")
        self.sent = 0
        self.delivered = 0
        self.dropped = 0
        self._bad = False
        self._last_deliver_tick = -1

    def _lost(self) -> bool:
        burst = self.model.burst
        if burst is not None:
            flip = self.rng.random()
            if self._bad:
                self._bad = flip >= burst.p_bad_to_good
            else:
                self._bad = flip < burst.p_good_to_bad
            p = burst.loss_in_bad if self._bad else self.model.drop_probability
        else:
            p = self.model.drop_probability
        return self.rng.random() < p

    def transmit(self, send_tick: int) -> Optional[int]:
        """Return the delivery tick, or None when the message is lost."""
        self.sent += 1
        if self._lost():
            self.dropped += 1
            return None
        latency = self.latency_ticks
        if self.model.jitter_std_s > 0.0:
            latency += int(round(self.rng.normal(0.0, self.model.jitter_std_s) * self.clock.hz))
        deliver = max(send_tick + max(latency, 0), self._last_deliver_tick)
        self._last_deliver_tick = deliver
        self.delivered += 1
        return deliver


def broadcast_tick(clock: Clock, tick: int, poses: Mapping[str, Vec2],
                   setpoints: Mapping[str, Tuple[Vec2, Vec2]], phase: int,
                   links: Mapping[str, Link]) -> Tuple[List[Tuple[int, Message]], List[DeliveryRecord]]:
    """One message per destination, in link order. Returns scheduled deliveries and log records."""
    if tick % clock.broadcast_period:
        raise NetworkError(f"tick {tick} is not a broadcast instant")
    deliveries: List[Tuple[int, Message]] = []
    records: List[DeliveryRecord] = []
    t = clock.to_seconds(tick)
    for dest, link in links.items():
        seq = link.sent
        sp = setpoints.get(dest)
        msg = Message(dest, seq, tick, t, poses[dest],
                      sp[0] if sp else None, sp[1] if sp else None, phase)
        deliver = link.transmit(tick)
        if deliver is None:
            records.append(DeliveryRecord(dest, seq, tick, t, None, None, True))
        else:
            deliveries.append((deliver, msg))
            records.append(DeliveryRecord(dest, seq, tick, t, deliver, clock.to_seconds(deliver), False))
    return deliveries, records


def follower_setpoint(mode: FollowerMode, spec: FormationSpec, follower: str,
                      data: Mapping[str, Vec2], previous: Optional[Vec2] = None) -> Optional[Vec2]:
    """Weighted sum of leader desired data (GlobalReference) or of in-neighbor
    actual data (LocalCommunication). Holds `previous` while a source is missing."""
    if mode == FollowerMode.GLOBAL_REFERENCE:
        sources, weights = spec.leaders, leader_weights(spec, follower)
    else:
        sources, weights = spec.topology[follower], spec.weights[follower]
    try:
        values = [data[s] for s in sources]
    except KeyError:
        return previous
    return local_desired_position(weights, values)


class GroundStation:
    """Samples ground truth at the broadcast rate and composes follower setpoints."""

    def __init__(self, spec: FormationSpec, mode: FollowerMode, clock: Clock):
        self.spec = spec
        self.mode = FollowerMode(mode)
        self.clock = clock
        self.history: Dict[str, Deque[Vec2]] = {a: deque(maxlen=FILTER_TAPS) for a in spec.agents}
        self.setpoints: Dict[str, Tuple[Vec2, Vec2]] = {}

    def observe(self, poses: Mapping[str, Vec2]) -> None:
        for agent, r in poses.items():
            self.history[agent].append(r)

    def velocity(self, agent: str) -> Vec2:
        hist = list(self.history[agent])
        if not hist:
            return Vec2.zero()
        hist = [hist[0]] * (FILTER_TAPS - len(hist)) + hist
        return derivative_filter(hist, 1.0 / self.clock.broadcast_hz)

    def compose(self, poses: Mapping[str, Vec2], leader_desired: Mapping[str, Vec2],
                leader_velocity: Mapping[str, Vec2]) -> Dict[str, Tuple[Vec2, Vec2]]:
        """Setpoint and feedforward velocity for every follower."""
        self.observe(poses)
        if self.mode == FollowerMode.GLOBAL_REFERENCE:
            pos_data, vel_data = leader_desired, leader_velocity
        else:
            pos_data = poses
            vel_data = {a: self.velocity(a) for a in self.spec.agents}
        for f in self.spec.followers:
            prev = self.setpoints.get(f)
            sp = follower_setpoint(self.mode, self.spec, f, pos_data, prev[0] if prev else None)
            ff = follower_setpoint(self.mode, self.spec, f, vel_data, prev[1] if prev else None)
            if sp is not None:
                self.setpoints[f] = (sp, ff if ff is not None else Vec2.zero())
        return dict(self.setpoints)


class DestinationStatistics(BaseModel):
    sent: int
    delivered: int
    dropped: int
    gap_histogram: Dict[int, int]
    unquantized_gaps: int = 0
    mean_gap_s: Optional[float] = None
    max_gap_s: Optional[float] = None


class LinkStatistics(BaseModel):
    rate_hz: float
    sent: int
    delivered: int
    dropped: int
    quantized: bool
    destinations: Dict[str, DestinationStatistics]


def link_statistics(records: Sequence[DeliveryRecord], clock: Clock) -> LinkStatistics:
    """Inter-arrival histogram per destination, keyed by the multiple k of the broadcast period."""
    if not records:
        raise EmptyLog("delivery log is empty")
    period = clock.broadcast_period
    by_dest: Dict[str, List[DeliveryRecord]] = {}
    for r in records:
        by_dest.setdefault(r.destination, []).append(r)

    dests = {}
    quantized = True
    for dest, recs in by_dest.items():
        arrivals = sorted(r.deliver_tick for r in recs if not r.dropped)
        gaps = [b - a for a, b in zip(arrivals, arrivals[1:])]
        hist: Counter = Counter()
        odd = 0
        for g in gaps:
            if g > 0 and g % period == 0:
                hist[g // period] += 1
            else:
                odd += 1
        quantized = quantized and odd == 0
        dests[dest] = DestinationStatistics(
            sent=len(recs),
            delivered=len(arrivals),
            dropped=sum(1 for r in recs if r.dropped),
            gap_histogram=dict(sorted(hist.items())),
            unquantized_gaps=odd,
            mean_gap_s=clock.to_seconds(sum(gaps)) / len(gaps) if gaps else None,
            max_gap_s=clock.to_seconds(max(gaps)) if gaps else None,
        )
    stats = LinkStatistics(
        rate_hz=clock.broadcast_hz,
        sent=sum(d.sent for d in dests.values()),
        delivered=sum(d.delivered for d in dests.values()),
        dropped=sum(d.dropped for d in dests.values()),
        quantized=quantized,
        destinations=dests,
    )
    if not quantized:
        logger.info("inter-arrival gaps are not all multiples of the broadcast period")
    return stats


def pooled_gap_histogram(stats: LinkStatistics) -> Dict[int, int]:
    total: Counter = Counter()
    for d in stats.destinations.values():
        total.update(d.gap_histogram)
    return dict(sorted(total.items()))


def spawn_link_rngs(master: np.random.SeedSequence, agents: Iterable[str],
                    model: LinkModel) -> Dict[str, np.random.Generator]:
    """Independent stream per link; an explicit link seed overrides the master seed."""
    agents = list(agents)
    seq = np.random.SeedSequence(model.seed) if model.seed is not None else master
    return {a: np.random.default_rng(child) for a, child in zip(agents, seq.spawn(len(agents)))}
