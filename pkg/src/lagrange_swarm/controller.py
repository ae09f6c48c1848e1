"""Per-agent adaptive internal-model control law.

Inputs are strictly local: the agent's own plant state, its observer state
and the observer derivatives (which need neighbour observer values). The
parameter vector layout is ``omega_hat = (Theta_hat | rho (x) Theta block |
rho block)`` of length ``5 + 5 l + l``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .errors import DimensionMismatch
from .internal_model import AgentCompensatorData
from .plant import DEFAULT_GRAVITY

N_THETA = 5


def _arr(x, shape=None, name="array"):
    x = np.ascontiguousarray(x, dtype=float)
    if shape is not None and x.shape != shape:
        raise DimensionMismatch(f"{name} must have shape {shape}, got {x.shape}")
    return x


def n_params(l: int) -> int:
    return N_THETA + 6 * l


@dataclass
class ControllerState:
    xi: np.ndarray
    zeta: np.ndarray
    omega_hat: np.ndarray

    @classmethod
    def zeros(cls, data: AgentCompensatorData):
        return cls(np.zeros(data.n_i), np.zeros((data.n_i, N_THETA)), np.zeros(n_params(data.l)))


@dataclass(frozen=True)
class Gains:
    K: np.ndarray
    Lambda: np.ndarray
    alpha: float

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        Lam = np.asarray(self.Lambda, dtype=float)
        if Lam.ndim == 2:
            if np.any(Lam != np.diag(np.diag(Lam))):
                raise ValueError("Lambda must be diagonal")
            Lam = np.diag(Lam)
        if np.any(np.linalg.eigvalsh(0.5 * (K + K.T)) <= 0):
            raise ValueError("K must have a positive definite symmetric part")
        if np.any(Lam <= 0):
            raise ValueError("Lambda entries must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "Lambda", Lam)
        object.__setattr__(self, "alpha", float(self.alpha))


@dataclass(frozen=True)
class ReferenceSignals:
    qr_dot: np.ndarray
    qr_ddot: np.ndarray
    s: np.ndarray


def reference_signals(q, qdot, S, eta, S_dot, eta_dot, alpha) -> ReferenceSignals:
    q = _arr(q, name="q")
    n = q.size
    args = [q, _arr(qdot, (n,), "qdot"), _arr(S, (n, n), "S"), _arr(eta, (n,), "eta"),
            _arr(S_dot, (n, n), "S_dot"), _arr(eta_dot, (n,), "eta_dot")]
    return ReferenceSignals(*_k.reference_signals(*args, float(alpha)))


def _motion(q, qdot, s, v_ref, a_ref):
    return (_arr(q, (2,), "q"), _arr(qdot, (2,), "qdot"), _arr(s, (2,), "s"),
            _arr(v_ref, (2,), "v_ref"), _arr(a_ref, (2,), "a_ref"))


def build_P(data: AgentCompensatorData, q, qdot, s, v_ref, a_ref, gravity=DEFAULT_GRAVITY):
    """Regressor with ``P Theta = M N Ms + N C s - N Mdot s + N Y Theta``."""
    q, qd, s, v, a = _motion(q, qdot, s, v_ref, a_ref)
    return _k.build_P(_arr(data.M), _arr(data.N), q, qd, s, v, a, float(gravity))


def build_Q(data: AgentCompensatorData, q, qdot, s, v_ref, a_ref, gravity=DEFAULT_GRAVITY):
    """Regressor with ``Q Theta = A N M s - Y Theta``."""
    q, qd, s, v, a = _motion(q, qdot, s, v_ref, a_ref)
    return _k.build_Q(_arr(data.A), _arr(data.N), q, qd, s, v, a, float(gravity))


def build_rho(data: AgentCompensatorData, q, qdot, s, v_ref, a_ref, zeta, xi,
              gravity=DEFAULT_GRAVITY):
    """``[A zeta + Q | E o (zeta + N L) | E o xi]``, shape ``(n, 5 + 6 l)``."""
    q, qd, s, v, a = _motion(q, qdot, s, v_ref, a_ref)
    zeta = _arr(zeta, (data.n_i, N_THETA), "zeta")
    xi = _arr(xi, (data.n_i,), "xi")
    return _k.build_rho(_arr(data.A), _arr(data.N), _arr(data.E_stack), q, qd, s, v, a,
                        float(gravity), zeta, xi)


def control_and_adaptation(gains: Gains, rho, s, omega_hat, xi, A):
    """Return ``(tau, omega_hat_dot)``.

    ``tau = -K s - rho omega_hat + A xi`` and
    ``omega_hat_dot = Lambda^{-1} rho^T s``.
    """
    rho = np.asarray(rho, dtype=float)
    s = np.asarray(s, dtype=float)
    omega_hat = np.asarray(omega_hat, dtype=float)
    if rho.shape != (s.size, omega_hat.size) or gains.Lambda.size != omega_hat.size:
        raise DimensionMismatch(
            f"rho {rho.shape}, s {s.shape}, omega_hat {omega_hat.shape}, "
            f"Lambda {gains.Lambda.shape} are inconsistent")
    tau = -gains.K @ s - rho @ omega_hat + np.asarray(A) @ np.asarray(xi)
    return tau, (rho.T @ s) / gains.Lambda


def compensator_rhs(data: AgentCompensatorData, xi, tau):
    return data.M @ np.asarray(xi, dtype=float) + data.N @ np.asarray(tau, dtype=float)


def aux_rhs(data: AgentCompensatorData, zeta, P):
    return data.M @ np.asarray(zeta, dtype=float) + np.asarray(P, dtype=float)


def true_omega(theta, rho_small) -> np.ndarray:
    """Parameter vector that makes ``rho @ omega`` the exact uncertainty term.

    The middle block carries a minus sign: expanding the sliding dynamics
    gives ``-E (zeta + N M s) Theta``, while ``rho`` keeps that block
    positive. Test oracle only.
    """
    theta = np.asarray(theta, dtype=float)
    rho_small = np.asarray(rho_small, dtype=float)
    return np.concatenate([theta, -np.kron(rho_small, theta), rho_small])
