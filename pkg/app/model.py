"""
Coupled leader/follower model, its uncertain reformulation and the canonical observer form.

The canonical form splits the state as z = T x = [x_u; x1; x2] where x2 = C x is the
measured part, x1 spans the remaining observable directions and x_u is the unobservable
subspace (the common absolute position of both cars for the intersection model). The
observer and every bound work on (x1, x2); x_u is carried only so that T is square.
"""
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from app.config import logger
from app.errors import AssumptionViolation, ConfigurationError
from app.vehicle import VehicleParams

RANK_TOL = 1e-9
ROUND_TRIP_TOL = 1e-10


@dataclass(frozen=True)
class CoupledModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    c: np.ndarray


@dataclass(frozen=True)
class UncertainModel:
    coupled: CoupledModel
    E: np.ndarray
    F: np.ndarray
    eta_bar: float
    delta_bar: float
    zeta_bar: np.ndarray
    r_tau: float
    tau_hat: float

    def eta(self, u_leader: float, a_leader: float) -> float:
        """Model-uncertainty signal (r_tau - 1)(u - a) seen through the nominal time constant."""
        return (self.r_tau - 1.0) * (u_leader - a_leader)


@dataclass(frozen=True)
class CanonicalModel:
    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    c: np.ndarray
    T: np.ndarray
    T_inv: np.ndarray
    n_unobservable: int
    unobservable_modes: np.ndarray
    zeta_bar: np.ndarray
    eta_bar: float
    delta_bar: float

    @property
    def n1(self) -> int:
        return self.A11.shape[0]

    @property
    def n2(self) -> int:
        return self.A22.shape[0]

    def split(self, x: np.ndarray):
        """Observable coordinates (x1, x2) of an original state vector."""
        z = self.T @ x
        nu = self.n_unobservable
        return z[nu:nu + self.n1], z[nu + self.n1:]


@dataclass(frozen=True)
class ZeroReport:
    zeros: np.ndarray
    unobservable_modes: np.ndarray
    degenerate: bool

    @property
    def stable(self) -> bool:
        if self.degenerate:
            return False
        if np.any(self.zeros.real >= 0):
            return False
        return not np.any(self.unobservable_modes.real > RANK_TOL)


def _car_blocks(params: VehicleParams):
    A = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0 / params.tau]])
    B = np.array([0.0, 0.0, 1.0 / params.tau])
    return A, B


def coupled_model(leader: VehicleParams, follower: VehicleParams) -> CoupledModel:
    """State [p0 v0 a0 p1 v1 a1], inputs [u0, u1], output [p1-p0-L1, v1-v0, v1, a1] - c."""
    A0, B0 = _car_blocks(leader)
    A1, B1 = _car_blocks(follower)
    B = np.zeros((6, 2))
    B[:3, 0] = B0
    B[3:, 1] = B1
    C = np.array([
        [-1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    ])
    c = np.array([-follower.length, 0.0, 0.0, 0.0])
    return CoupledModel(A=linalg.block_diag(A0, A1), B=B, C=C, c=c)


def assemble_uncertain(
    leader: VehicleParams,
    follower: VehicleParams,
    r_tau: float,
    eta_bar: float,
    delta_bar: float,
    zeta_bar,
) -> UncertainModel:
    """
    Replace the leader time constant by its nominal value r_tau * tau0 and expose the
    mismatch as eta through E, and the attack through F = -E.
    """
    if not r_tau > 0:
        raise ConfigurationError("Nominal time-constant ratio must be positive", {"r_tau": r_tau})
    zeta_bar = np.asarray(zeta_bar, dtype=float)
    if eta_bar < 0 or delta_bar < 0 or np.any(zeta_bar < 0):
        raise ConfigurationError("Uncertainty bounds must be non-negative")
    tau_hat = r_tau * leader.tau
    coupled = coupled_model(VehicleParams(tau=tau_hat, length=leader.length), follower)
    E = np.zeros(6)
    E[2] = 1.0 / tau_hat
    return UncertainModel(
        coupled=coupled,
        E=E,
        F=-E,
        eta_bar=float(eta_bar),
        delta_bar=float(delta_bar),
        zeta_bar=zeta_bar,
        r_tau=float(r_tau),
        tau_hat=tau_hat,
    )


def _positive_first(basis: np.ndarray) -> np.ndarray:
    """Flip columns so the first non-negligible entry is positive."""
    basis = basis.copy()
    for j in range(basis.shape[1]):
        col = basis[:, j]
        nz = np.flatnonzero(np.abs(col) > RANK_TOL)
        if nz.size and col[nz[0]] < 0:
            basis[:, j] = -col
    return basis


def observability_matrix(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    blocks = [C]
    for _ in range(A.shape[0] - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def unobservable_subspace(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    return _positive_first(linalg.null_space(observability_matrix(A, C), rcond=RANK_TOL))


def canonical_transform(m: UncertainModel) -> CanonicalModel:
    A, B, C = m.coupled.A, m.coupled.B, m.coupled.C
    n, p = A.shape[0], C.shape[0]

    sv = linalg.svdvals(C)
    if sv.size < p or sv[-1] <= RANK_TOL * sv[0]:
        raise AssumptionViolation("Output map must have full row rank", {"singular_values": sv.tolist()})

    U = unobservable_subspace(A, C)
    null_c = linalg.null_space(C, rcond=RANK_TOL)
    if U.shape[1]:
        null_c = (np.eye(n) - U @ U.T) @ null_c
    N = _positive_first(linalg.orth(null_c, rcond=RANK_TOL)) if null_c.size else np.zeros((n, 0))
    if U.shape[1] + N.shape[1] + p != n:
        raise AssumptionViolation(
            "Could not complete the output map to a state transformation",
            {"unobservable": U.shape[1], "x1": N.shape[1], "outputs": p},
        )

    T = np.vstack([U.T, N.T, C])
    T_inv = np.hstack([U, N, np.linalg.pinv(C)])
    round_trip = np.max(np.abs(T @ T_inv - np.eye(n)))
    if round_trip > ROUND_TRIP_TOL:
        raise AssumptionViolation("Transformation is ill-conditioned", {"round_trip_error": float(round_trip)})

    At = T @ A @ T_inv
    Bt = T @ B
    Et = T @ m.E
    Ft = T @ m.F
    nu, n1 = U.shape[1], N.shape[1]
    o1, o2 = slice(nu, nu + n1), slice(nu + n1, n)

    if nu and np.max(np.abs(At[nu:, :nu])) > ROUND_TRIP_TOL:
        raise AssumptionViolation("Unobservable subspace is not invariant under the dynamics")
    unobservable_modes = linalg.eigvals(At[:nu, :nu]) if nu else np.zeros(0, dtype=complex)
    if np.any(unobservable_modes.real > RANK_TOL):
        raise AssumptionViolation(
            "Unstable unobservable mode",
            {"modes": [str(z) for z in unobservable_modes]},
        )
    if np.any(np.abs(unobservable_modes.real) <= RANK_TOL):
        logger.warning(
            f"Marginal unobservable modes {np.round(unobservable_modes, 6).tolist()} "
            "are decoupled from the output error and left unestimated"
        )

    A11 = At[o1, o1]
    eig_a11 = linalg.eigvals(A11) if n1 else np.zeros(0)
    if np.any(eig_a11.real >= 0):
        raise AssumptionViolation(
            "A11 is not Hurwitz; the reduced error dynamics would not decay",
            {"eigenvalues": [str(z) for z in eig_a11]},
        )

    return CanonicalModel(
        A11=A11,
        A12=At[o1, o2],
        A21=At[o2, o1],
        A22=At[o2, o2],
        B1=Bt[o1],
        B2=Bt[o2],
        E1=Et[o1],
        E2=Et[o2],
        F1=Ft[o1],
        F2=Ft[o2],
        c=m.coupled.c.copy(),
        T=T,
        T_inv=T_inv,
        n_unobservable=nu,
        unobservable_modes=unobservable_modes,
        zeta_bar=m.zeta_bar,
        eta_bar=m.eta_bar,
        delta_bar=m.delta_bar,
    )


def _deflate_outputs(A, B, C, D, tol):
    """
    Row-compress D and remove the state directions seen only by outputs that carry
    no direct feedthrough, until D has full row rank.
    """
    while True:
        n = A.shape[0]
        p, m = D.shape
        if n == 0 or p == 0:
            return A, B, C, D
        u, s, _ = np.linalg.svd(D, full_matrices=True)
        rank = int(np.sum(s > tol))
        t = p - rank
        if t == 0:
            return A, B, C, D
        Ct = (u.T @ C)[rank:]
        mm = int(np.sum(np.linalg.svd(Ct, compute_uv=False) > tol))
        vc = np.linalg.svd(Ct, full_matrices=True)[2]
        Tm = np.roll(vc.T, -mm, axis=1)
        sysmat = linalg.block_diag(Tm, u).T @ np.block([[A, B], [C, D]]) @ linalg.block_diag(Tm, np.eye(m))
        sysmat = np.delete(sysmat, np.s_[p + n - t:], 0)
        sysmat = np.delete(sysmat, np.s_[n - mm:n], 1)
        k = n - mm
        A, B, C, D = sysmat[:k, :k], sysmat[:k, k:], sysmat[k:, :k], sysmat[k:, k:]


def invariant_zeros(A, B, C, D=None) -> np.ndarray:
    """
    Finite invariant zeros of (A, B, C, D).

    Non-square pencils are deflated (outputs, then the dual system) until the
    Rosenbrock pencil [A B; C D] - s [I 0; 0 0] is square, then solved by QZ.
    Raises ValueError when the pencil stays non-square (normal-rank deficient system).
    """
    A, B, C = (np.atleast_2d(np.asarray(X, dtype=float)) for X in (A, B, C))
    n, m, p = A.shape[0], B.shape[1], C.shape[0]
    D = np.zeros((p, m)) if D is None else np.atleast_2d(np.asarray(D, dtype=float))
    if n == 0:
        return np.zeros(0, dtype=complex)
    tol = RANK_TOL * max(1.0, np.linalg.norm(np.block([[A, B], [C, D]]), 2))

    A, B, C, D = _deflate_outputs(A, B, C, D, tol)
    if A.shape[0] and D.shape[0] != D.shape[1]:
        A, B, C, D = _deflate_outputs(A.T, C.T, B.T, D.T, tol)
    n = A.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex)
    p, m = D.shape
    if p != m:
        raise ValueError(f"Pencil remains non-square after deflation ({p} outputs, {m} inputs)")

    L = np.block([[A, B], [C, D]])
    Mx = np.zeros((n + p, n + m))
    Mx[:n, :n] = np.eye(n)
    z = linalg.eigvals(L, Mx)
    z = z[np.isfinite(z)]
    return z[np.abs(z) < 1.0 / tol]


def check_invariant_zeros(m: UncertainModel) -> ZeroReport:
    """Invariant zeros of (A, F, C) on the observable realization plus the unobservable modes."""
    A, C = m.coupled.A, m.coupled.C
    F = np.reshape(m.F, (A.shape[0], -1))
    U = unobservable_subspace(A, C)
    W = linalg.null_space(U.T) if U.shape[1] else np.eye(A.shape[0])
    modes = linalg.eigvals(U.T @ A @ U) if U.shape[1] else np.zeros(0, dtype=complex)
    try:
        zeros = invariant_zeros(W.T @ A @ W, W.T @ F, C @ W)
        degenerate = False
    except (ValueError, np.linalg.LinAlgError) as exc:
        logger.warning(f"Rosenbrock pencil is degenerate: {exc}")
        zeros = np.zeros(0, dtype=complex)
        degenerate = True
    return ZeroReport(zeros=np.asarray(zeros, dtype=complex), unobservable_modes=modes, degenerate=degenerate)


def require_stable_zeros(report: ZeroReport):
    if report.stable:
        return
    raise AssumptionViolation(
        "Invariant zeros of (A, F, C) must lie in the open left half-plane",
        {
            "zeros": [str(z) for z in report.zeros],
            "unobservable_modes": [str(z) for z in report.unobservable_modes],
            "degenerate": report.degenerate,
        },
    )


def matching_matrix(model: CanonicalModel) -> np.ndarray:
    """F2 - A21 A11^+ F1 as a column matrix."""
    F1 = np.reshape(model.F1, (model.n1, -1))
    F2 = np.reshape(model.F2, (model.n2, -1))
    if model.n1 == 0:
        return F2
    return F2 - model.A21 @ np.linalg.pinv(model.A11) @ F1


def check_matching_rank(model: CanonicalModel):
    """Full-column-rank verdict of F2 - A21 A11^+ F1, from its singular values."""
    G = matching_matrix(model)
    sv = linalg.svdvals(G)
    if sv.size == 0 or sv[0] == 0.0:
        return False, G
    rank = int(np.sum(sv > RANK_TOL * sv[0]))
    return rank == G.shape[1], G
