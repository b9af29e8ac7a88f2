"""
Sliding-mode observer on the canonical (x1, x2) coordinates, the equivalent output
injection (EOI) filter and the attack estimate recovered from it.
"""
from dataclasses import dataclass

import numpy as np

from app.config import logger
from app.errors import ConfigurationError
from app.model import CanonicalModel, matching_matrix


@dataclass(frozen=True)
class ObserverGains:
    A22s: np.ndarray
    M: np.ndarray
    K: np.ndarray
    boundary_layer: float = 0.0

    def __post_init__(self):
        A22s = np.atleast_2d(np.asarray(self.A22s, dtype=float))
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        n = A22s.shape[0]
        if A22s.shape != (n, n) or M.shape != (n, n) or K.shape != (n, n):
            raise ConfigurationError(
                "Observer gains must be square and of matching size",
                {"A22s": A22s.shape, "M": M.shape, "K": K.shape},
            )
        if np.any(np.linalg.eigvals(A22s).real >= 0):
            raise ConfigurationError("A22s must be stable", {"eigenvalues": [str(z) for z in np.linalg.eigvals(A22s)]})
        for name, G in (("M", M), ("K", K)):
            off_diagonal = G - np.diag(np.diag(G))
            if np.any(off_diagonal != 0) or np.any(np.diag(G) <= 0):
                raise ConfigurationError(f"{name} must be diagonal with positive entries", {name: G.tolist()})
        if self.boundary_layer < 0:
            raise ConfigurationError("Boundary layer width must be non-negative", {"boundary_layer": self.boundary_layer})
        object.__setattr__(self, "A22s", A22s)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "K", K)

    @classmethod
    def from_diagonals(cls, a22s: float, m, k, boundary_layer: float = 0.0) -> "ObserverGains":
        m = np.asarray(m, dtype=float)
        return cls(
            A22s=a22s * np.eye(m.size),
            M=np.diag(m),
            K=np.diag(np.asarray(k, dtype=float)),
            boundary_layer=boundary_layer,
        )

    @property
    def m(self) -> np.ndarray:
        return np.diag(self.M).copy()

    @property
    def k(self) -> np.ndarray:
        return np.diag(self.K).copy()


@dataclass
class ObserverState:
    x1_hat: np.ndarray
    x2_hat: np.ndarray
    nu_fil: np.ndarray
    last_e_y: np.ndarray
    nu: np.ndarray

    @classmethod
    def initial(cls, model: CanonicalModel, y: np.ndarray) -> "ObserverState":
        """x1_hat = 0 and x2_hat = y - c, so the first innovation is exactly zero."""
        n2 = model.n2
        return cls(
            x1_hat=np.zeros(model.n1),
            x2_hat=np.asarray(y, dtype=float) - model.c,
            nu_fil=np.zeros(n2),
            last_e_y=np.zeros(n2),
            nu=np.zeros(n2),
        )


@dataclass(frozen=True)
class GainCheck:
    passed: np.ndarray
    margin: np.ndarray
    rhs: np.ndarray

    @property
    def ok(self) -> bool:
        return bool(np.all(self.passed))


@dataclass(frozen=True)
class AttackEstimate:
    value: float | np.ndarray | None
    accuracy: float

    @property
    def available(self) -> bool:
        return self.value is not None


def innovation(x2_hat: np.ndarray, y: np.ndarray, model: CanonicalModel) -> np.ndarray:
    return x2_hat + model.c - y


def switching_term(e_y: np.ndarray, gains: ObserverGains) -> np.ndarray:
    """nu = -M sgn(e_y), or -M sat(e_y / width) inside an optional boundary layer."""
    if gains.boundary_layer > 0:
        s = np.clip(e_y / gains.boundary_layer, -1.0, 1.0)
    else:
        s = np.sign(e_y)
    return -gains.M @ s


def validate_switching_gain(model: CanonicalModel, gains: ObserverGains, e1_tilde) -> GainCheck:
    """Compare diag(M) against |A21| e1_tilde + |A22| zeta_bar + |E2| eta_bar + |F2| delta_bar."""
    e1_tilde = np.asarray(e1_tilde, dtype=float)
    if np.any(e1_tilde < 0):
        raise ConfigurationError("e1_tilde must be non-negative", {"e1_tilde": e1_tilde.tolist()})
    rhs = (
        np.abs(model.A21) @ e1_tilde
        + np.abs(model.A22) @ model.zeta_bar
        + np.abs(model.E2) * model.eta_bar
        + np.abs(model.F2) * model.delta_bar
    )
    margin = gains.m - rhs
    check = GainCheck(passed=margin > 0, margin=margin, rhs=rhs)
    if not check.ok:
        logger.warning(
            f"Switching gain below the sliding requirement on channels "
            f"{np.flatnonzero(~check.passed).tolist()}, margins {np.round(margin, 4).tolist()}"
        )
    else:
        logger.info(f"Switching gain margins {np.round(margin, 4).tolist()}")
    return check


def observer_rates(
    x1_hat: np.ndarray,
    x2_hat: np.ndarray,
    u: np.ndarray,
    e_y: np.ndarray,
    nu: np.ndarray,
    model: CanonicalModel,
    gains: ObserverGains,
):
    """Observer vector field for a given (possibly held) innovation and injection."""
    dx1 = model.A11 @ x1_hat + model.A12 @ x2_hat + model.B1 @ u - model.A12 @ e_y
    dx2 = (
        model.A21 @ x1_hat
        + model.A22 @ x2_hat
        + model.B2 @ u
        - (model.A22 - gains.A22s) @ e_y
        + nu
    )
    return dx1, dx2


def observer_derivative(obs: ObserverState, y, u, model: CanonicalModel, gains: ObserverGains):
    """Continuous-time observer: innovation and injection evaluated at the current estimate."""
    e_y = innovation(obs.x2_hat, np.asarray(y, dtype=float), model)
    nu = switching_term(e_y, gains)
    dx1, dx2 = observer_rates(obs.x1_hat, obs.x2_hat, np.asarray(u, dtype=float), e_y, nu, model, gains)
    return dx1, dx2, nu


def eoi_filter(nu_fil: np.ndarray, nu: np.ndarray, k: np.ndarray, dt: float) -> np.ndarray:
    """Exact update of nu_fil' = K (nu - nu_fil) for nu held over dt."""
    if dt <= 0:
        raise ConfigurationError("Filter step must be positive", {"dt": dt})
    return nu + (nu_fil - nu) * np.exp(-np.asarray(k) * dt)


def estimation_accuracy(model: CanonicalModel) -> float:
    G_pinv = np.linalg.pinv(matching_matrix(model))
    E1 = np.reshape(model.E1, (model.n1,))
    coupling = np.abs(model.A21 @ np.linalg.inv(model.A11)) @ np.abs(E1) if model.n1 else 0.0
    return float(np.max(np.abs(G_pinv) @ (coupling + np.abs(model.E2)) * model.eta_bar))


def estimate_attack(nu_fil, model: CanonicalModel, matching_ok: bool = True) -> AttackEstimate:
    """
    Least-squares attack estimate from the EOI. Accepts one EOI vector or a series of
    them stacked along the first axis.
    """
    if not matching_ok:
        return AttackEstimate(value=None, accuracy=float("inf"))
    G_pinv = np.linalg.pinv(matching_matrix(model))
    nu_fil = np.asarray(nu_fil, dtype=float)
    est = nu_fil @ G_pinv.T
    if est.shape[-1] == 1:
        est = est[..., 0]
    value = float(est) if np.ndim(est) == 0 else est
    return AttackEstimate(value=value, accuracy=estimation_accuracy(model))
