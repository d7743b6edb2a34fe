"""Simulated quadrotor: planar double integrator, cascaded position/velocity
PID, delayed mocap measurements and wind/downwash disturbances."""
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import BufferUnderrun, InsufficientSamples, VehicleError
from .formation import Vec2

logger = logging.getLogger(__name__)

BUFFER_DEPTH = 64
FILTER_TAPS = 5
TIME_TOL = 1e-9


class ControllerGains(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    kp_pos: float = Field(1.0, ge=0.0, description="1/s")
    kp_vel: float = Field(2.0, ge=0.0, description="1/s")
    ki_vel: float = Field(0.5, ge=0.0, description="1/s^2")
    kd_vel: float = Field(0.0, ge=0.0)
    accel_limit_mps2: float = Field(5.0, gt=0.0)
    integrator_limit_mps2: float = Field(0.5, ge=0.0)


class DisturbanceModel(BaseModel):
    """Constant wind bias plus white acceleration noise (downwash, turbulence)."""

    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    wind_speed_mps: float = Field(0.0, ge=0.0)
    wind_heading_deg: float = Field(0.0, description="degrees from +X")
    wind_force_gain: float = Field(0.0, ge=0.0, description="1/s, acceleration per unit wind speed")
    noise_std_mps2: float = Field(0.0, ge=0.0)
    seed: Optional[int] = None

    def wind_velocity(self) -> Vec2:
        a = math.radians(self.wind_heading_deg)
        return Vec2(self.wind_speed_mps * math.cos(a), self.wind_speed_mps * math.sin(a))

    def bias(self) -> Vec2:
        return self.wind_velocity() * self.wind_force_gain


class DisturbanceStream:
    """Per-vehicle realization of a DisturbanceModel."""

    def __init__(self, model: DisturbanceModel, rng: Optional[np.random.Generator] = None):
        self.model = model
        self.rng = rng if rng is not None else np.random.default_rng(model.seed or 0)
        self._bias = model.bias()

    def sample(self) -> Vec2:
        if self.model.noise_std_mps2 == 0.0:
            return self._bias
        nx, ny = self.rng.normal(0.0, self.model.noise_std_mps2, size=2)
        return Vec2(self._bias.x + float(nx), self._bias.y + float(ny))


@dataclass(frozen=True)
class VehicleState:
    position: Vec2
    velocity: Vec2 = Vec2(0.0, 0.0)
    # (receipt time, position), oldest first
    measurement_buffer: Tuple[Tuple[float, Vec2], ...] = ()
    integrator_state: Vec2 = Vec2(0.0, 0.0)
    last_command: Vec2 = Vec2(0.0, 0.0)
    prev_velocity_error: Optional[Vec2] = None


@dataclass(frozen=True)
class ControlOutput:
    command: Vec2
    desired_velocity: Vec2
    state: VehicleState


def receive_sample(state: VehicleState, t: float, position: Vec2) -> VehicleState:
    buf = state.measurement_buffer
    if buf and t < buf[-1][0]:
        raise VehicleError(f"measurement at t={t} is older than the buffer head t={buf[-1][0]}")
    buf = (buf + ((t, Vec2.of(*position)),))[-BUFFER_DEPTH:]
    return replace(state, measurement_buffer=buf)


def _sample_at(buf: Sequence[Tuple[float, Vec2]], t: float) -> Optional[Vec2]:
    for ts, r in reversed(buf):
        if ts <= t + TIME_TOL:
            return r
    return None


def measurement(state: VehicleState, now: float, delay: float = 0.0) -> Vec2:
    """Latest sample received at or before now - delay (zero-order hold)."""
    r = _sample_at(state.measurement_buffer, now - delay)
    if r is None:
        raise BufferUnderrun(f"no measurement at or before t={now - delay:.4f}")
    return r


def derivative_filter(samples: Sequence[Vec2], period: float) -> Vec2:
    """Five-tap differentiator over r(t-4T) .. r(t), oldest first."""
    if len(samples) != FILTER_TAPS:
        raise InsufficientSamples(f"derivative filter needs {FILTER_TAPS} samples, got {len(samples)}")
    if not period > 0.0:
        raise InsufficientSamples(f"sample period must be positive, got {period}")
    s0, s1, _, s3, s4 = samples
    return (2.0 * (s3 - s1) + (s4 - s0)) / (8.0 * period)


def velocity_estimate(state: VehicleState, now: float, delay: float, period: float) -> Vec2:
    """Resample the buffer at now - delay - k * period (k = 4..0) and differentiate.

    Instants older than the first sample hold the first sample.
    """
    buf = state.measurement_buffer
    if not buf:
        raise BufferUnderrun("measurement buffer is empty")
    base = now - delay
    first = buf[0][1]
    samples = []
    for k in range(FILTER_TAPS - 1, -1, -1):
        r = _sample_at(buf, base - k * period)
        samples.append(first if r is None else r)
    return derivative_filter(samples, period)


def _clamp(v: float, limit: float) -> float:
    return max(-limit, min(limit, v))


def controller_step(state: VehicleState, setpoint: Vec2, feedforward: Vec2, gains: ControllerGains,
                    dt: float, now: Optional[float] = None, delay: float = 0.0,
                    period: float = 1.0 / 60.0) -> ControlOutput:
    """Position P loop feeding a velocity PID; returns the saturated acceleration command.

    `now` defaults to the newest buffered sample time.
    """
    if not dt > 0.0:
        raise VehicleError(f"dt must be positive, got {dt}")
    if now is None:
        if not state.measurement_buffer:
            raise BufferUnderrun("measurement buffer is empty")
        now = state.measurement_buffer[-1][0]
    r_meas = measurement(state, now, delay)
    v_est = velocity_estimate(state, now, delay, period)

    v_des = (Vec2.of(*setpoint) - r_meas) * gains.kp_pos + feedforward
    ev = v_des - v_est
    lim = gains.integrator_limit_mps2
    integ = Vec2(
        _clamp(state.integrator_state.x + gains.ki_vel * ev.x * dt, lim),
        _clamp(state.integrator_state.y + gains.ki_vel * ev.y * dt, lim),
    )
    deriv = Vec2.zero() if state.prev_velocity_error is None else (ev - state.prev_velocity_error) / dt
    u = ev * gains.kp_vel + integ + deriv * gains.kd_vel
    norm = u.norm()
    if norm > gains.accel_limit_mps2:
        u = u * (gains.accel_limit_mps2 / norm)
    new_state = replace(state, integrator_state=integ, last_command=u, prev_velocity_error=ev)
    return ControlOutput(u, v_des, new_state)


def dynamics_step(state: VehicleState, command: Vec2, disturbance: Vec2, dt: float) -> VehicleState:
    """Semi-implicit Euler: v += (u + w) dt, then r += v dt."""
    if not dt > 0.0:
        raise VehicleError(f"dt must be positive, got {dt}")
    v = state.velocity + (command + disturbance) * dt
    return replace(state, velocity=v, position=state.position + v * dt)


class Vehicle:
    """One simulated agent; stepped by the simulation loop."""

    def __init__(self, agent_id: str, initial_position: Vec2, gains: ControllerGains,
                 disturbance: DisturbanceStream, estimate_delay_s: float = 0.0,
                 sample_period_s: float = 1.0 / 60.0):
        self.agent_id = agent_id
        self.state = VehicleState(position=Vec2.of(*initial_position))
        self.gains = gains
        self.disturbance = disturbance
        self.estimate_delay_s = estimate_delay_s
        self.sample_period_s = sample_period_s
        self.desired_velocity = Vec2.zero()

    @property
    def position(self) -> Vec2:
        return self.state.position

    @property
    def velocity(self) -> Vec2:
        return self.state.velocity

    @property
    def command(self) -> Vec2:
        return self.state.last_command

    def receive(self, t: float, pose: Vec2) -> None:
        self.state = receive_sample(self.state, t, pose)

    def control(self, now: float, setpoint: Vec2, feedforward: Vec2, dt: float, stalled: bool = False) -> bool:
        """Run one controller update; returns False when the controller did not run."""
        if stalled:
            return False
        try:
            out = controller_step(self.state, setpoint, feedforward, self.gains, dt, now=now,
                                  delay=self.estimate_delay_s, period=self.sample_period_s)
        except BufferUnderrun:
            # warm-up: no pose yet, command nothing
            self.state = replace(self.state, last_command=Vec2.zero())
            self.desired_velocity = Vec2.zero()
            return True
        self.state = out.state
        self.desired_velocity = out.desired_velocity
        return True

    def advance(self, dt: float) -> None:
        self.state = dynamics_step(self.state, self.state.last_command, self.disturbance.sample(), dt)
