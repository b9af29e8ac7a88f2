"""
Longitudinal two-car dynamics at the intersection approach.

Positions are the signed distance of the rear bumper to the intersection, negative while
approaching. Car 0 is the leader (closest to the intersection), car 1 the follower.
"""
import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from app.errors import ConfigurationError, SimulationError

ATTACK_KINDS = ("none", "step", "piecewise")
NOISE_DISTRIBUTIONS = ("uniform", "truncated-gaussian")


@dataclass(frozen=True, slots=True)
class VehicleParams:
    tau: float
    length: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigurationError("Engine time constant must be positive", {"tau": self.tau})
        if not self.length > 0:
            raise ConfigurationError("Car length must be positive", {"length": self.length})


@dataclass(frozen=True, slots=True)
class VehicleState:
    p: float
    v: float
    a: float

    def __post_init__(self):
        if not (math.isfinite(self.p) and math.isfinite(self.v) and math.isfinite(self.a)):
            raise SimulationError("Non-finite vehicle state", {"p": self.p, "v": self.v, "a": self.a})

    @classmethod
    def from_array(cls, x) -> "VehicleState":
        return cls(float(x[0]), float(x[1]), float(x[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.v, self.a])


@dataclass(frozen=True, slots=True)
class CaccGains:
    h: float
    r_standstill: float
    kp: float
    kd: float

    def __post_init__(self):
        if not self.h > 0:
            raise ConfigurationError("Time headway must be positive", {"h": self.h})
        if not self.r_standstill >= 0:
            raise ConfigurationError("Standstill distance must be non-negative", {"r": self.r_standstill})
        if not (self.kp > 0 and self.kd > 0):
            raise ConfigurationError("Controller gains must be positive", {"kp": self.kp, "kd": self.kd})

    def desired_gap(self, v: float) -> float:
        return self.r_standstill + self.h * v


def piecewise_constant(samples, t: float, default: float = 0.0) -> float:
    """Value of a (time, value) table held from each time stamp until the next one."""
    if not samples:
        return default
    times = [s[0] for s in samples]
    idx = bisect_right(times, t)
    if idx == 0:
        return default
    return float(samples[idx - 1][1])


@dataclass(frozen=True)
class AttackSignal:
    """Additive corruption of the communicated leader input, bounded by delta_bar."""

    kind: str = "none"
    onset: float = 0.0
    magnitude: float = 0.0
    samples: tuple = ()
    delta_bar: float = 10.0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigurationError(f"Unknown attack kind '{self.kind}'", {"supported": list(ATTACK_KINDS)})
        object.__setattr__(self, "samples", tuple(sorted((float(a), float(b)) for a, b in self.samples)))
        peak = abs(self.magnitude) if self.kind == "step" else 0.0
        if self.kind == "piecewise" and self.samples:
            peak = max(abs(v) for _, v in self.samples)
        if peak > self.delta_bar:
            raise ConfigurationError(
                "Attack magnitude exceeds the assumed bound",
                {"magnitude": peak, "delta_bar": self.delta_bar},
            )

    def value(self, t: float) -> float:
        if self.kind == "step":
            return self.magnitude if t >= self.onset else 0.0
        if self.kind == "piecewise":
            return piecewise_constant(self.samples, t)
        return 0.0


@dataclass(frozen=True)
class NoiseSpec:
    bound_per_channel: tuple
    distribution: str = "uniform"
    seed: int = 0
    bound: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        bound = np.asarray(self.bound_per_channel, dtype=float)
        if bound.ndim != 1 or np.any(~np.isfinite(bound)) or np.any(bound <= 0):
            raise ConfigurationError("Noise bounds must be finite and positive", {"bound": bound.tolist()})
        if self.distribution not in NOISE_DISTRIBUTIONS:
            raise ConfigurationError(
                f"Unknown noise distribution '{self.distribution}'", {"supported": list(NOISE_DISTRIBUTIONS)}
            )
        object.__setattr__(self, "bound", bound)

    def generator(self, seed: int | None = None) -> np.random.Generator:
        return np.random.default_rng(self.seed if seed is None else seed)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if self.distribution == "uniform":
            return rng.uniform(-self.bound, self.bound)
        # sigma = bound / 2, truncated at two sigma
        return stats.truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=self.bound / 2.0, random_state=rng)


def car_derivative(state: VehicleState, u: float, params: VehicleParams) -> np.ndarray:
    """(p', v', a') = (v, a, (u - a) / tau)."""
    if not math.isfinite(u):
        raise SimulationError("Non-finite commanded acceleration", {"u": u})
    return np.array([state.v, state.a, (u - state.a) / params.tau])


def spacing_error(follower: VehicleState, leader: VehicleState, gains: CaccGains, length: float):
    """
    Spacing error and its derivative for the gap-keeping law.

    The gap runs from the follower front to the leader rear, so ``length`` is the
    follower's own length. eps1 > 0 means the follower is closer than desired.
    """
    gap = leader.p - follower.p - length
    eps1 = gains.desired_gap(follower.v) - gap
    eps1_dot = (follower.v - leader.v) + gains.h * follower.a
    return eps1, eps1_dot


def cacc_control(
    follower: VehicleState,
    leader: VehicleState,
    u_prev: float,
    received_leader_input: float,
    gains: CaccGains,
    length: float,
) -> float:
    """Rate of the follower input: u' = -(u + kp*eps1 + kd*eps1' - u_leader_received) / h."""
    eps1, eps1_dot = spacing_error(follower, leader, gains, length)
    return -(u_prev + gains.kp * eps1 + gains.kd * eps1_dot - received_leader_input) / gains.h


def apply_attack(u_leader: float, attack: AttackSignal, t: float) -> float:
    if t < 0:
        raise ConfigurationError("Attack evaluated at negative time", {"t": t})
    du = attack.value(t)
    if abs(du) > attack.delta_bar:
        raise ConfigurationError("Attack exceeds the assumed bound", {"du": du, "delta_bar": attack.delta_bar})
    return u_leader + du


def measure(follower: VehicleState, leader: VehicleState, length: float, noise) -> np.ndarray:
    """Follower measurement [p1 - p0 - L, v1 - v0, v1, a1] plus sensor noise."""
    y = np.array([
        follower.p - leader.p - length,
        follower.v - leader.v,
        follower.v,
        follower.a,
    ])
    return y + np.asarray(noise, dtype=float)


def is_crash(follower: VehicleState, leader: VehicleState, entry: float = -4.0, exit: float = 0.0) -> bool:
    """Follower front has reached the intersection while the leader still occupies it."""
    return follower.p >= entry and entry < leader.p < exit
