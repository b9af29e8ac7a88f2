"""
Analytic envelopes of the observer error in healthy and attacked operation.

All |.| on matrices are elementwise. Healthy bounds are stated as functions of the time
since observer initialisation. The hold period T_h accounts for the innovation and the
switching term being updated only at measurement instants: with T_h = 0 every quantity
reduces to its continuous-time counterpart (e2_tilde = zeta_bar).
"""
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from app.config import logger
from app.errors import ConfigurationError
from app.model import CanonicalModel, matching_matrix
from app.observer import ObserverGains
from app.vehicle import AttackSignal


@dataclass(frozen=True)
class AttackResponse:
    times: np.ndarray
    r_delta: np.ndarray
    r: np.ndarray


@dataclass(frozen=True)
class AsymptoticLimits:
    e1_inf: np.ndarray
    U_bar: np.ndarray
    t_bar_star: np.ndarray
    nu_fil_bar: np.ndarray
    upper_inf: np.ndarray
    lower_inf: np.ndarray


@dataclass(frozen=True)
class Detectability:
    delta: np.ndarray
    attack_gain: np.ndarray
    min_constant_attack: float


def _e1_drive(model: CanonicalModel, zeta_bar, eta_bar) -> np.ndarray:
    return np.abs(model.A12) @ np.asarray(zeta_bar, dtype=float) + np.abs(model.E1) * eta_bar


def e1_limit(model: CanonicalModel, zeta_bar, eta_bar) -> np.ndarray:
    return -np.linalg.solve(model.A11, _e1_drive(model, zeta_bar, eta_bar))


def e1_healthy_bounds(model: CanonicalModel, zeta_bar, eta_bar, e1_init_bound, t: float):
    """
    Upper and lower envelope of e1 for a healthy run:
    e^{A11 t} e1(0) - A11^{-1} (I - e^{A11 t}) (|A12| zeta_bar + |E1| eta_bar),
    with e1(0) replaced by +bound for the upper and -bound for the lower envelope.
    """
    n1 = model.n1
    b = np.broadcast_to(np.asarray(e1_init_bound, dtype=float), (n1,))
    phi = linalg.expm(model.A11 * t)
    forced = -np.linalg.solve(model.A11, (np.eye(n1) - phi) @ _e1_drive(model, zeta_bar, eta_bar))
    upper = phi @ b + forced
    lower = -phi @ b - forced
    return upper, lower


def attack_envelope(model: CanonicalModel) -> np.ndarray:
    """Worst-case |r_delta| over all attacks bounded by delta_bar: int_0^inf |e^{A11 s} F1| ds * delta_bar."""
    F1 = np.reshape(model.F1, (model.n1,))
    integral, _ = integrate.quad_vec(lambda s: np.abs(linalg.expm(model.A11 * s) @ F1), 0.0, np.inf)
    return integral * model.delta_bar


class HealthyBounds:
    """
    e1 envelopes, the confinement width e2_tilde and the rate envelopes of e2 used by
    the bound-intersection detector.
    """

    def __init__(self, model: CanonicalModel, gains: ObserverGains, e1_init_bound, hold_period: float = 0.0):
        if hold_period < 0:
            raise ConfigurationError("Hold period must be non-negative", {"hold_period": hold_period})
        self.model = model
        self.gains = gains
        self.e1_init_bound = np.broadcast_to(np.asarray(e1_init_bound, dtype=float), (model.n1,)).copy()
        self.hold_period = hold_period
        self.e1_inf = e1_limit(model, model.zeta_bar, model.eta_bar)
        self.e1_sup = self._e1_sup()

        A22s_abs = np.abs(gains.A22s)
        A22ms_abs = np.abs(model.A22 - gains.A22s)
        zeta = model.zeta_bar
        self._a21_abs = np.abs(model.A21)

        coupling = hold_period * (A22s_abs + A22ms_abs)
        spectral_radius = float(np.max(np.abs(np.linalg.eigvals(coupling)))) if coupling.size else 0.0
        if spectral_radius >= 1.0:
            raise ConfigurationError(
                "Measurement period too long for the observer gains; the rate bound does not close",
                {"hold_period": hold_period, "spectral_radius": spectral_radius},
            )
        rhs = (
            gains.m
            + self._a21_abs @ self.e1_sup
            + np.abs(model.E2) * model.eta_bar
            + (A22ms_abs + A22s_abs) @ zeta
        )
        self.rate_sup = np.linalg.solve(np.eye(model.n2) - coupling, rhs)
        self.e2_tilde = zeta + hold_period * self.rate_sup
        self.w = A22ms_abs @ self.e2_tilde + A22s_abs @ self.e2_tilde + np.abs(model.E2) * model.eta_bar

        worst_lower = gains.m - self.w - self._a21_abs @ self.e1_sup
        self.clamped = worst_lower <= 0
        if np.any(self.clamped):
            logger.warning(
                f"Rate lower bound clamped at zero on channels {np.flatnonzero(self.clamped).tolist()}"
            )

    def _e1_sup(self) -> np.ndarray:
        slowest = float(np.min(np.abs(np.linalg.eigvals(self.model.A11).real)))
        grid = np.concatenate([[0.0], np.geomspace(1e-4, 50.0 / slowest, 400)])
        sup = np.maximum(np.abs(self.e1_init_bound), np.abs(self.e1_inf))
        for t in grid:
            sup = np.maximum(sup, self.e1_tilde(t))
        return sup

    def e1_upper(self, t: float) -> np.ndarray:
        return e1_healthy_bounds(self.model, self.model.zeta_bar, self.model.eta_bar, self.e1_init_bound, t)[0]

    def e1_lower(self, t: float) -> np.ndarray:
        return e1_healthy_bounds(self.model, self.model.zeta_bar, self.model.eta_bar, self.e1_init_bound, t)[1]

    def e1_tilde(self, t: float) -> np.ndarray:
        upper, lower = e1_healthy_bounds(self.model, self.model.zeta_bar, self.model.eta_bar, self.e1_init_bound, t)
        return np.maximum(np.abs(upper), np.abs(lower))

    def _rates_from_e1(self, e1_tilde: np.ndarray):
        upper = self.gains.m + self.w + self._a21_abs @ e1_tilde
        lower = np.maximum(self.gains.m - self.w - self._a21_abs @ e1_tilde, 0.0)
        return upper, lower

    def e2dot_upper0(self, t: float) -> np.ndarray:
        return self._rates_from_e1(self.e1_tilde(t))[0]

    def e2dot_lower0(self, t: float) -> np.ndarray:
        return self._rates_from_e1(self.e1_tilde(t))[1]

    def tabulate(self, dt: float, n: int):
        """Rate envelopes at t = 0, dt, ..., n dt, by exact discretisation of the e1 envelope."""
        model = self.model
        n1 = model.n1
        phi = linalg.expm(model.A11 * dt)
        gamma = np.linalg.solve(model.A11, (phi - np.eye(n1)) @ _e1_drive(model, model.zeta_bar, model.eta_bar))
        up = np.empty((n + 1, model.n2))
        lo = np.empty((n + 1, model.n2))
        e_up = self.e1_init_bound.copy()
        e_lo = -self.e1_init_bound
        for k in range(n + 1):
            up[k], lo[k] = self._rates_from_e1(np.maximum(np.abs(e_up), np.abs(e_lo)))
            e_up = phi @ e_up + gamma
            e_lo = phi @ e_lo - gamma
        return up, lo


def healthy_bounds(model: CanonicalModel, gains: ObserverGains, e1_init_bound, hold_period: float = 0.0) -> HealthyBounds:
    return HealthyBounds(model, gains, e1_init_bound, hold_period)


def e2dot_healthy_bounds(model: CanonicalModel, gains: ObserverGains, bounds: HealthyBounds, t: float):
    """Rate envelopes (upper0, lower0) of |e2'| at time t since initialisation; lower0 is clamped at 0."""
    return bounds.e2dot_upper0(t), bounds.e2dot_lower0(t)


def r_delta_convolution(model: CanonicalModel, attack: AttackSignal, t: float, step: float) -> AttackResponse:
    """
    r_delta(t) = int_0^t e^{A11 (t - s)} F1 du(s) ds with the attack held over each step,
    and r = A21 r_delta + F2 du.
    """
    if step <= 0:
        raise ConfigurationError("Quadrature step must be positive", {"step": step})
    n = int(round(t / step))
    times = np.arange(n + 1) * step
    du = np.array([attack.value(s) for s in times])
    F1 = np.reshape(model.F1, (model.n1,))
    phi = linalg.expm(model.A11 * step)
    weight = 0.5 * step * (phi + np.eye(model.n1)) @ F1
    r_delta = np.zeros((n + 1, model.n1))
    for k in range(n):
        r_delta[k + 1] = phi @ r_delta[k] + weight * du[k]
    r = r_delta @ model.A21.T + np.outer(du, model.F2)
    return AttackResponse(times=times, r_delta=r_delta, r=r)


def asymptotic_limits(model: CanonicalModel, gains: ObserverGains, bounds: HealthyBounds) -> AsymptoticLimits:
    e1_inf = np.abs(bounds.e1_inf)
    a21_e1 = np.abs(model.A21) @ e1_inf
    upper_inf = gains.m + bounds.w + a21_e1
    lower_inf = gains.m - bounds.w - a21_e1
    if np.any(lower_inf <= 0):
        raise ConfigurationError(
            "Healthy rate lower bound is not positive; raise the switching gain M on these channels",
            {"channels": np.flatnonzero(lower_inf <= 0).tolist(), "lower_inf": lower_inf.tolist()},
        )
    # |A12| enters through its transpose so that the term lives on the output channels
    U_bar = (
        np.abs(model.A12).T @ e1_inf
        + np.abs(model.A22 - gains.A22s) @ model.zeta_bar
        + np.abs(model.E2) * model.eta_bar
        + np.abs(gains.A22s) @ bounds.e2_tilde
    )
    t_bar_star = 2.0 * bounds.e2_tilde / lower_inf
    decay = np.exp(-gains.k * t_bar_star)
    nu_fil_bar = decay * U_bar + (1.0 - decay) * gains.m
    return AsymptoticLimits(
        e1_inf=e1_inf,
        U_bar=U_bar,
        t_bar_star=t_bar_star,
        nu_fil_bar=nu_fil_bar,
        upper_inf=upper_inf,
        lower_inf=lower_inf,
    )


def detectability(model: CanonicalModel, limits: AsymptoticLimits) -> Detectability:
    """Per-channel width of the healthy rate band and the smallest constant attack that exceeds it."""
    delta = limits.upper_inf - limits.lower_inf
    gain = np.abs(np.reshape(matching_matrix(model), (model.n2, -1))[:, 0])
    mask = gain > 0
    min_attack = float(np.min(delta[mask] / gain[mask])) if np.any(mask) else float("inf")
    return Detectability(delta=delta, attack_gain=gain, min_constant_attack=min_attack)
