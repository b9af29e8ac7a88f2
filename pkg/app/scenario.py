"""
Scenario configuration and model assembly.

Defaults reproduce the two-car intersection experiment; `[default.scenario]` in
settings.toml and JSON scenario files override individual keys.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import orjson
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.bounds import (
    AsymptoticLimits,
    Detectability,
    HealthyBounds,
    asymptotic_limits,
    attack_envelope,
    detectability,
    healthy_bounds,
)
from app.config import logger, settings
from app.errors import AssumptionViolation, ConfigurationError
from app.model import (
    CanonicalModel,
    UncertainModel,
    ZeroReport,
    assemble_uncertain,
    canonical_transform,
    check_invariant_zeros,
    check_matching_rank,
    require_stable_zeros,
)
from app.observer import GainCheck, ObserverGains, estimation_accuracy, validate_switching_gain
from app.vehicle import ATTACK_KINDS, NOISE_DISTRIBUTIONS, AttackSignal, CaccGains, NoiseSpec, VehicleParams


class AttackConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    kind: str = "step"
    onset: float = Field(0.5, ge=0)
    magnitude: float = 2.0
    samples: list[tuple[float, float]] = Field(default_factory=list)

    @field_validator("kind")
    @classmethod
    def _known_kind(cls, value):
        if value not in ATTACK_KINDS:
            raise ValueError(f"kind must be one of {list(ATTACK_KINDS)}")
        return value


class NoiseConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    bound: list[float] = Field(default_factory=lambda: [0.15, 0.3, 0.03, 0.15])
    distribution: str = "uniform"
    seed: int = 0

    @field_validator("bound")
    @classmethod
    def _four_positive(cls, value):
        if len(value) != 4 or any(b <= 0 for b in value):
            raise ValueError("bound needs four positive entries")
        return value

    @field_validator("distribution")
    @classmethod
    def _known_distribution(cls, value):
        if value not in NOISE_DISTRIBUTIONS:
            raise ValueError(f"distribution must be one of {list(NOISE_DISTRIBUTIONS)}")
        return value


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    leader_initial: tuple[float, float, float] = (-40.0, 8.0, 0.0)
    follower_initial: tuple[float, float, float] = (-50.0, 10.0, 0.0)
    tau0: float = Field(0.11, gt=0)
    tau1: float = Field(0.1, gt=0)
    L0: float = Field(4.0, gt=0)
    L1: float = Field(4.0, gt=0)
    r_tau: float = Field(0.9, gt=0)
    h: float = Field(0.7, gt=0)
    r: float = Field(1.5, ge=0)
    kp: float = Field(0.2, gt=0)
    kd: float = Field(0.7, gt=0)
    delta_bar: float = Field(10.0, ge=0)
    eta_bar: float = Field(1.0, ge=0)
    M: list[float] = Field(default_factory=lambda: [0.5, 11.5, 0.2, 2.0])
    K: list[float] = Field(default_factory=lambda: [1.0, 1.0, 1.0, 1.0])
    A22s: float = Field(-0.1, lt=0)
    boundary_layer: float = Field(0.0, ge=0)
    e1_init_bound: float = Field(0.5, ge=0)
    dt: float = Field(0.001, gt=0)
    measurement_rate: float = Field(100.0, gt=0)
    duration: float = Field(10.0, gt=0)
    ic_trigger: float = Field(50.0, gt=0)
    dwell: float = Field(0.05, ge=0)
    intersection_entry: float = -4.0
    intersection_exit: float = 0.0
    leader_input: list[tuple[float, float]] = Field(default_factory=list)
    attack: AttackConfig = Field(default_factory=AttackConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    output_dir: str = "results"

    @field_validator("M", "K")
    @classmethod
    def _diagonal(cls, value):
        if len(value) != 4 or any(g <= 0 for g in value):
            raise ValueError("needs four positive entries")
        return value

    @model_validator(mode="after")
    def _consistent(self):
        ratio = 1.0 / (self.measurement_rate * self.dt)
        if abs(ratio - round(ratio)) > 1e-6 or round(ratio) < 1:
            raise ValueError("measurement period must be an integer multiple of dt")
        if self.intersection_entry >= self.intersection_exit:
            raise ValueError("intersection_entry must lie before intersection_exit")
        if self.attack.kind == "step" and abs(self.attack.magnitude) > self.delta_bar:
            raise ValueError("attack magnitude exceeds delta_bar")
        if self.attack.kind == "piecewise" and any(abs(v) > self.delta_bar for _, v in self.attack.samples):
            raise ValueError("piecewise attack sample exceeds delta_bar")
        return self

    @property
    def steps_per_measurement(self) -> int:
        return int(round(1.0 / (self.measurement_rate * self.dt)))

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def hold_period(self) -> float:
        return 1.0 / self.measurement_rate

    def attack_signal(self) -> AttackSignal:
        return AttackSignal(
            kind=self.attack.kind,
            onset=self.attack.onset,
            magnitude=self.attack.magnitude,
            samples=tuple(self.attack.samples),
            delta_bar=self.delta_bar,
        )

    def noise_spec(self) -> NoiseSpec:
        return NoiseSpec(tuple(self.noise.bound), self.noise.distribution, self.noise.seed)

    def cacc_gains(self) -> CaccGains:
        return CaccGains(h=self.h, r_standstill=self.r, kp=self.kp, kd=self.kd)

    def healthy(self) -> "ScenarioConfig":
        return self.model_copy(update={"attack": AttackConfig(kind="none", onset=0.0, magnitude=0.0)})


def _validation_details(exc: ValidationError) -> list:
    return [{"loc": list(e["loc"]), "msg": e["msg"]} for e in exc.errors()]


def _settings_overrides() -> dict:
    overrides = settings.get("scenario", {}) or {}
    return {str(k).lower(): v for k, v in dict(overrides).items()}


def _merge(base: dict, overrides: dict) -> dict:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def scenario_from_dict(data: dict) -> ScenarioConfig:
    """Validate a (partial) scenario document on top of the configured defaults."""
    base = ScenarioConfig().model_dump()
    merged = _merge(_merge(base, _settings_overrides()), data or {})
    try:
        return ScenarioConfig.model_validate(merged)
    except ValidationError as exc:
        raise ConfigurationError("Invalid scenario configuration", _validation_details(exc)) from exc


def default_scenario() -> ScenarioConfig:
    return scenario_from_dict({})


def load_scenario(path: str | Path | None) -> ScenarioConfig:
    if path is None:
        return default_scenario()
    path = Path(path)
    try:
        data = orjson.loads(path.read_bytes())
    except OSError as exc:
        raise ConfigurationError(f"Cannot read scenario file {path}", str(exc)) from exc
    except orjson.JSONDecodeError as exc:
        raise ConfigurationError(f"Scenario file {path} is not valid JSON", str(exc)) from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"Scenario file {path} must hold a JSON object")
    return scenario_from_dict(data)


@dataclass(frozen=True)
class ScenarioBundle:
    config: ScenarioConfig
    leader: VehicleParams
    follower: VehicleParams
    uncertain: UncertainModel
    canonical: CanonicalModel
    gains: ObserverGains
    zeros: ZeroReport
    matching: np.ndarray
    healthy: HealthyBounds
    e1_tilde: np.ndarray
    gain_check: GainCheck
    limits: AsymptoticLimits
    detectability: Detectability
    accuracy: float


def build_model(config: ScenarioConfig):
    """Vehicle parameters, uncertain model, canonical form and observer gains for a scenario."""
    leader = VehicleParams(tau=config.tau0, length=config.L0)
    follower = VehicleParams(tau=config.tau1, length=config.L1)
    uncertain = assemble_uncertain(
        leader,
        follower,
        r_tau=config.r_tau,
        eta_bar=config.eta_bar,
        delta_bar=config.delta_bar,
        zeta_bar=config.noise.bound,
    )
    canonical = canonical_transform(uncertain)
    gains = ObserverGains.from_diagonals(config.A22s, config.M, config.K, config.boundary_layer)
    if gains.M.shape[0] != canonical.n2:
        raise ConfigurationError("Observer gains do not match the number of outputs", {"outputs": canonical.n2})
    return (leader, follower), uncertain, canonical, gains


def build_scenario(config: ScenarioConfig) -> ScenarioBundle:
    """Assemble every model object and run the structural checks the observer relies on."""
    (leader, follower), uncertain, canonical, gains = build_model(config)
    logger.info(f"A11 eigenvalues {np.round(np.linalg.eigvals(canonical.A11), 6).tolist()}")

    zeros = check_invariant_zeros(uncertain)
    logger.info(f"Invariant zeros of (A, F, C): {np.round(zeros.zeros, 6).tolist()}")
    require_stable_zeros(zeros)

    matching_ok, G = check_matching_rank(canonical)
    if not matching_ok:
        raise AssumptionViolation("Attack matching matrix is rank deficient", {"matrix": G.tolist()})

    healthy = healthy_bounds(canonical, gains, config.e1_init_bound, config.hold_period)
    e1_tilde = healthy.e1_sup + attack_envelope(canonical)
    gain_check = validate_switching_gain(canonical, gains, e1_tilde)
    limits = asymptotic_limits(canonical, gains, healthy)
    detect = detectability(canonical, limits)
    logger.info(
        f"EOI thresholds {np.round(limits.nu_fil_bar, 4).tolist()}, "
        f"smallest detectable constant attack {detect.min_constant_attack:.4f}"
    )
    return ScenarioBundle(
        config=config,
        leader=leader,
        follower=follower,
        uncertain=uncertain,
        canonical=canonical,
        gains=gains,
        zeros=zeros,
        matching=G,
        healthy=healthy,
        e1_tilde=e1_tilde,
        gain_check=gain_check,
        limits=limits,
        detectability=detect,
        accuracy=estimation_accuracy(canonical),
    )


def _complex(values) -> list:
    return [{"re": float(np.real(z)), "im": float(np.imag(z))} for z in np.atleast_1d(values)]


def _array(values) -> list:
    return np.asarray(values, dtype=float).tolist()


def model_report(bundle: ScenarioBundle) -> dict:
    cm = bundle.canonical
    return {
        "partitions": {
            "n_unobservable": cm.n_unobservable,
            "n1": cm.n1,
            "n2": cm.n2,
            **{
                name: _array(getattr(cm, name))
                for name in ("A11", "A12", "A21", "A22", "B1", "B2", "E1", "E2", "F1", "F2", "c")
            },
        },
        "a11_eigenvalues": _complex(np.linalg.eigvals(cm.A11)),
        "invariant_zeros": _complex(bundle.zeros.zeros),
        "unobservable_modes": _complex(bundle.zeros.unobservable_modes),
        "zeros_degenerate": bundle.zeros.degenerate,
        "matching": {"full_column_rank": True, "matrix": _array(bundle.matching)},
        "gain_check": {
            "passed": bundle.gain_check.passed.tolist(),
            "margin": _array(bundle.gain_check.margin),
            "rhs": _array(bundle.gain_check.rhs),
            "e1_tilde": _array(bundle.e1_tilde),
        },
        "bounds": {
            "e1_inf": _array(bundle.healthy.e1_inf),
            "e1_sup": _array(bundle.healthy.e1_sup),
            "e2_tilde": _array(bundle.healthy.e2_tilde),
            "rate_sup": _array(bundle.healthy.rate_sup),
            "clamped": bundle.healthy.clamped.tolist(),
        },
        "limits": {
            "U_bar": _array(bundle.limits.U_bar),
            "t_bar_star": _array(bundle.limits.t_bar_star),
            "nu_fil_bar": _array(bundle.limits.nu_fil_bar),
            "upper_inf": _array(bundle.limits.upper_inf),
            "lower_inf": _array(bundle.limits.lower_inf),
        },
        "detectability": {
            "delta": _array(bundle.detectability.delta),
            "attack_gain": _array(bundle.detectability.attack_gain),
            "min_constant_attack": bundle.detectability.min_constant_attack,
        },
        "estimation_accuracy": bundle.accuracy,
    }
