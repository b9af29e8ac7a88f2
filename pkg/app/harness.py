"""
Closed-loop simulation of the two-car approach with the observer and both detectors.

Plant, follower input and observer are integrated together with RK4 at `dt`. Measurements,
the innovation and the switching term are refreshed every `steps_per_measurement` steps
and held in between. A run is a pure function of (config, seed).
"""
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from app.config import logger
from app.detect import (
    AlarmTracker,
    EoiDetectorState,
    NovelDetectorState,
    check_novel_detection,
    eoi_threshold_check,
    propagate_bounds,
    reset_bounds_at_measurement,
)
from app.errors import ConfigurationError, IcguardError, SimulationError
from app.observer import ObserverState, eoi_filter, estimate_attack, innovation, observer_rates, switching_term
from app.scenario import ScenarioBundle, ScenarioConfig, build_scenario
from app.utils.integrate import rk4_step
from app.utils.process_timeseries import run_frame, write_csv
from app.vehicle import (
    VehicleState,
    apply_attack,
    cacc_control,
    car_derivative,
    is_crash,
    measure,
    piecewise_constant,
)

N_CHANNELS = 4


@dataclass
class SimState:
    """Continuous state [p0 v0 a0 p1 v1 a1 | u1 | x1_hat | x2_hat] and the held signals."""

    t: float
    x: np.ndarray
    u1: float
    observer: ObserverState | None = None
    active: bool = False


@dataclass(frozen=True)
class StepInputs:
    u_leader: float
    u_received: float
    e_y: np.ndarray | None
    nu: np.ndarray | None


def _vector_field(state: SimState, inputs: StepInputs, bundle: ScenarioBundle):
    config = bundle.config
    gains = config.cacc_gains()
    model = bundle.canonical
    n1 = model.n1
    has_observer = state.observer is not None

    def f(_t, y):
        leader = VehicleState.from_array(y[0:3])
        follower = VehicleState.from_array(y[3:6])
        u1 = y[6]
        d = np.empty_like(y)
        d[0:3] = car_derivative(leader, inputs.u_leader, bundle.leader)
        d[3:6] = car_derivative(follower, u1, bundle.follower)
        if state.active:
            d[6] = cacc_control(follower, leader, u1, inputs.u_received, gains, config.L1)
        else:
            d[6] = 0.0
        if has_observer:
            x1_hat = y[7:7 + n1]
            x2_hat = y[7 + n1:]
            dx1, dx2 = observer_rates(
                x1_hat, x2_hat, np.array([inputs.u_received, u1]), inputs.e_y, inputs.nu, model, bundle.gains
            )
            d[7:7 + n1] = dx1
            d[7 + n1:] = dx2
        return d

    return f


def step_scenario(state: SimState, inputs: StepInputs, bundle: ScenarioBundle, dt: float) -> SimState:
    """Advance plant, follower input and observer by one RK4 step with the inputs held."""
    if dt <= 0:
        raise SimulationError("Integration step must be positive", {"dt": dt})
    parts = [state.x, [state.u1]]
    if state.observer is not None:
        parts += [state.observer.x1_hat, state.observer.x2_hat]
    y = np.concatenate(parts)
    try:
        y_next = rk4_step(_vector_field(state, inputs, bundle), state.t, y, dt)
    except SimulationError as exc:
        raise SimulationError(exc.message, {"t": state.t, "state": y.tolist()}) from exc
    if not np.all(np.isfinite(y_next)):
        raise SimulationError("Non-finite state after integration step", {"t": state.t, "state": y_next.tolist()})

    observer = state.observer
    if observer is not None:
        n1 = bundle.canonical.n1
        observer.x1_hat = y_next[7:7 + n1]
        observer.x2_hat = y_next[7 + n1:]
        observer.nu_fil = eoi_filter(observer.nu_fil, inputs.nu, bundle.gains.k, dt)
    return SimState(t=state.t + dt, x=y_next[:6], u1=float(y_next[6]), observer=observer, active=state.active)


@dataclass
class RunResult:
    seed: int
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    du_attack: np.ndarray
    e_y: np.ndarray
    e2_upper: np.ndarray
    e2_lower: np.ndarray
    nu_fil: np.ndarray
    alarm_novel: np.ndarray
    alarm_eoi: np.ndarray
    du_hat: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    eta: np.ndarray
    events: list
    crash_time: float | None
    init_time: float | None
    attack_onset: float | None
    estimate_accuracy: float
    thresholds: np.ndarray
    novel: AlarmTracker = field(repr=False, default=None)
    eoi: AlarmTracker = field(repr=False, default=None)

    @property
    def crashed(self) -> bool:
        return self.crash_time is not None

    def metrics(self) -> dict:
        novel_p = self.novel.first_persistent_time
        eoi_p = self.eoi.first_persistent_time

        def latency(t):
            if t is None or self.attack_onset is None:
                return None
            return t - self.attack_onset

        return {
            "seed": self.seed,
            "crash": self.crashed,
            "crash_time": self.crash_time,
            "novel_first_alarm": self.novel.first_alarm_time,
            "novel_first_persistent": novel_p,
            "novel_channel": self.novel.first_persistent_channel(),
            "novel_events": len(self.novel.events),
            "novel_latency": latency(novel_p),
            "eoi_first_alarm": self.eoi.first_alarm_time,
            "eoi_first_persistent": eoi_p,
            "eoi_channel": self.eoi.first_persistent_channel(),
            "eoi_events": len(self.eoi.events),
            "eoi_latency": latency(eoi_p),
            "attack_onset": self.attack_onset,
            "estimate_accuracy": self.estimate_accuracy,
            "du_hat_final": float(self.du_hat[-1]) if np.isfinite(self.du_hat[-1]) else None,
        }


def _attack_onset(config: ScenarioConfig) -> float | None:
    if config.attack.kind == "step" and config.attack.magnitude != 0:
        return config.attack.onset
    if config.attack.kind == "piecewise":
        nonzero = [t for t, v in sorted(config.attack.samples) if v != 0]
        return nonzero[0] if nonzero else None
    return None


def run_scenario(config: ScenarioConfig, seed: int, bundle: ScenarioBundle | None = None) -> RunResult:
    bundle = bundle or build_scenario(config)
    model = bundle.canonical
    attack = config.attack_signal()
    noise = config.noise_spec()
    rng = noise.generator(seed)
    gains = bundle.gains
    n = config.n_steps
    dt = config.dt
    spm = config.steps_per_measurement
    zeta_bar = model.zeta_bar
    e2_tilde = bundle.healthy.e2_tilde
    thresholds = EoiDetectorState(nu_fil_upper=bundle.limits.nu_fil_bar)
    logger.info(f"Run start: seed={seed}, duration={config.duration}s, attack={config.attack.kind}")

    times = np.arange(n + 1) * dt
    rec = {
        "states": np.full((n + 1, 6), np.nan),
        "inputs": np.full((n + 1, 2), np.nan),
        "du": np.zeros(n + 1),
        "e_y": np.full((n + 1, N_CHANNELS), np.nan),
        "up": np.full((n + 1, N_CHANNELS), np.nan),
        "lo": np.full((n + 1, N_CHANNELS), np.nan),
        "nu_fil": np.full((n + 1, N_CHANNELS), np.nan),
        "novel": np.zeros(n + 1, dtype=int),
        "eoi": np.zeros(n + 1, dtype=int),
        "e1": np.full((n + 1, model.n1), np.nan),
        "e2": np.full((n + 1, N_CHANNELS), np.nan),
        "eta": np.zeros(n + 1),
    }

    state = SimState(
        t=0.0,
        x=np.concatenate([config.leader_initial, config.follower_initial]).astype(float),
        u1=0.0,
    )
    detector = NovelDetectorState.initial(N_CHANNELS)
    novel_tracker = AlarmTracker("novel", N_CHANNELS, config.dwell)
    eoi_tracker = AlarmTracker("eoi", N_CHANNELS, config.dwell)
    rates_up = rates_lo = None
    init_step = None
    novel_flags = np.zeros(N_CHANNELS, dtype=bool)
    e_y = nu = None
    crossed = False
    crash_time = None

    for k in range(n + 1):
        t = times[k]
        leader = VehicleState.from_array(state.x[0:3])
        follower = VehicleState.from_array(state.x[3:6])
        if not state.active and leader.p >= -config.ic_trigger and follower.p >= -config.ic_trigger:
            state.active = True
            logger.info(f"Intersection control active at t={t:.3f}s")

        u_leader = piecewise_constant(config.leader_input, t)
        u_received = apply_attack(u_leader, attack, t)

        if k % spm == 0:
            sample = noise.sample(rng)
            if state.active:
                y = measure(follower, leader, config.L1, sample)
                if state.observer is None:
                    state.observer = ObserverState.initial(model, y)
                    init_step = k
                    rates_up, rates_lo = bundle.healthy.tabulate(dt, n - k + 1)
                e_y = innovation(state.observer.x2_hat, y, model)
                nu = switching_term(e_y, gains)
                state.observer.last_e_y = e_y
                state.observer.nu = nu
                reset_bounds_at_measurement(detector, e_y, zeta_bar, t=t, e2_tilde=e2_tilde)
                novel_flags = check_novel_detection(detector)
                novel_tracker.update(t, novel_flags)

        observer = state.observer
        rec["states"][k] = state.x
        rec["inputs"][k] = (u_leader, state.u1)
        rec["du"][k] = u_received - u_leader
        rec["eta"][k] = bundle.uncertain.eta(u_leader, state.x[2])
        if observer is not None:
            eoi_flags = eoi_threshold_check(observer.nu_fil, thresholds)
            eoi_tracker.update(t, eoi_flags)
            x1_true, x2_true = model.split(state.x)
            rec["e_y"][k] = e_y
            rec["up"][k] = detector.e2_upper
            rec["lo"][k] = detector.e2_lower
            rec["nu_fil"][k] = observer.nu_fil
            rec["novel"][k] = int(np.any(novel_flags))
            rec["eoi"][k] = int(np.any(eoi_flags))
            rec["e1"][k] = observer.x1_hat - x1_true
            rec["e2"][k] = observer.x2_hat - x2_true

        if k == n:
            break

        state = step_scenario(state, StepInputs(u_leader, u_received, e_y, nu), bundle, dt)

        if observer is not None:
            j = k - init_step
            propagate_bounds(detector, (rates_up[j], rates_lo[j]), dt, rates_next=(rates_up[j + 1], rates_lo[j + 1]))

        if not crossed and state.x[3] >= config.intersection_entry:
            crossed = True
            leader = VehicleState.from_array(state.x[0:3])
            follower = VehicleState.from_array(state.x[3:6])
            if is_crash(follower, leader, config.intersection_entry, config.intersection_exit):
                crash_time = float(state.t)
                logger.warning(f"Crash at t={crash_time:.3f}s: leader still inside the intersection")

    novel_tracker.finish()
    eoi_tracker.finish()
    estimate = estimate_attack(np.nan_to_num(rec["nu_fil"], nan=0.0), model)
    du_hat = np.where(np.isnan(rec["nu_fil"][:, 0]), np.nan, estimate.value)

    result = RunResult(
        seed=seed,
        times=times,
        states=rec["states"],
        inputs=rec["inputs"],
        du_attack=rec["du"],
        e_y=rec["e_y"],
        e2_upper=rec["up"],
        e2_lower=rec["lo"],
        nu_fil=rec["nu_fil"],
        alarm_novel=rec["novel"],
        alarm_eoi=rec["eoi"],
        du_hat=du_hat,
        e1=rec["e1"],
        e2=rec["e2"],
        eta=rec["eta"],
        events=sorted(novel_tracker.events + eoi_tracker.events, key=lambda e: (e.time, e.detector, e.channel)),
        crash_time=crash_time,
        init_time=None if init_step is None else float(times[init_step]),
        attack_onset=_attack_onset(config),
        estimate_accuracy=estimate.accuracy,
        thresholds=thresholds.nu_fil_upper,
        novel=novel_tracker,
        eoi=eoi_tracker,
    )
    logger.info(
        f"Run end: seed={seed}, crash={crash_time}, "
        f"novel={novel_tracker.first_persistent_time}, eoi={eoi_tracker.first_persistent_time}"
    )
    return result


@dataclass
class MetricsSummary:
    runs: list
    failures: list

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.runs)

    def to_dict(self) -> dict:
        df = self.frame()
        if df.empty:
            return {"n_runs": 0, "n_failures": len(self.failures), "failures": self.failures}

        def median(column):
            values = df[column].dropna()
            return float(values.median()) if len(values) else None

        novel = df["novel_first_persistent"].astype(float).fillna(np.inf)
        eoi = df["eoi_first_persistent"].astype(float).fillna(np.inf)
        crash = df["crash_time"].astype(float).fillna(np.inf)
        detected = np.isfinite(novel)
        return {
            "n_runs": int(len(df)),
            "n_failures": len(self.failures),
            "runs_with_novel_alarm": int((df["novel_events"] > 0).sum()),
            "runs_with_eoi_alarm": int((df["eoi_events"] > 0).sum()),
            "crash_rate": float(df["crash"].mean()),
            "median_novel_latency": median("novel_latency"),
            "median_eoi_latency": median("eoi_latency"),
            "median_crash_time": median("crash_time"),
            "novel_before_eoi": int((detected & (novel < eoi)).sum()),
            "novel_before_crash": int((detected & (novel < crash)).sum()),
            "eoi_before_crash": int((np.isfinite(eoi) & (eoi < crash)).sum()),
            "failures": self.failures,
        }


def _run_metrics(config_data: dict, seed: int) -> dict:
    config = ScenarioConfig.model_validate(config_data)
    return run_scenario(config, seed).metrics()


def _record_failure(failures: list, seed: int, exc: Exception) -> None:
    if isinstance(exc, IcguardError):
        logger.error(f"Run seed={seed} failed: {exc.message}")
        failures.append({"seed": seed, "error": exc.message})
    else:
        logger.exception(f"Run seed={seed} failed unexpectedly")
        failures.append({"seed": seed, "error": f"{type(exc).__name__}: {exc}"})


def monte_carlo(config: ScenarioConfig, n_runs: int, seed_base: int = 0, workers: int = 1) -> MetricsSummary:
    """Independent seeded runs; a failing run is recorded and the sweep goes on."""
    if n_runs < 1:
        raise ConfigurationError("Monte Carlo needs at least one run", {"runs": n_runs})
    bundle = build_scenario(config)
    seeds = [seed_base + i for i in range(n_runs)]
    runs, failures = [], []

    if workers <= 1:
        for seed in seeds:
            try:
                runs.append(run_scenario(config, seed, bundle).metrics())
            except Exception as exc:
                _record_failure(failures, seed, exc)
            logger.debug(f"Monte Carlo {len(runs) + len(failures)}/{n_runs}")
    else:
        data = config.model_dump()
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(_run_metrics, data, seed): seed for seed in seeds}
            for future in as_completed(futures):
                seed = futures[future]
                try:
                    runs.append(future.result())
                except Exception as exc:
                    _record_failure(failures, seed, exc)
                logger.debug(f"Monte Carlo {len(runs) + len(failures)}/{n_runs}")
        runs.sort(key=lambda m: m["seed"])
        failures.sort(key=lambda f: f["seed"])
    return MetricsSummary(runs=runs, failures=failures)


def export_csv(result: RunResult, path) -> Path:
    """Header-first CSV of a run, one row per integration step."""
    return write_csv(run_frame(result), path)
