"""Leaderless distributed observer and the group model it converges to.

Each agent holds a matrix estimate ``S_i`` and a trajectory estimate
``eta_i`` and only mixes them with in-neighbour values:

    S_i'   = mu1 * sum_j a_ij (S_j - S_i)
    eta_i' = S_i eta_i + mu2 * sum_j a_ij (eta_j - eta_i)
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .errors import DimensionMismatch
from .numerics import expm

log = logging.getLogger(__name__)


@dataclass
class ObserverState:
    """Network-wide observer state: ``S`` is (N, n, n), ``eta`` is (N, n)."""

    S: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        self.S = np.ascontiguousarray(self.S, dtype=float)
        self.eta = np.ascontiguousarray(self.eta, dtype=float)
        N, n = self.eta.shape
        if self.S.shape != (N, n, n):
            raise DimensionMismatch(
                f"S has shape {self.S.shape}, expected {(N, n, n)}")


@dataclass(frozen=True)
class GroupModel:
    S_star: np.ndarray
    decay_rate_S: float = math.nan


@dataclass(frozen=True)
class GainReport:
    mu1_ok: bool
    mu2_ok: bool
    mu1_bound: float
    mu2_bound: float


def observer_rhs(state: ObserverState, weights, mu1: float, mu2: float):
    """Return ``(S_dot, eta_dot)`` stacked like the inputs."""
    W = np.ascontiguousarray(weights, dtype=float)
    if W.shape != (state.eta.shape[0],) * 2:
        raise DimensionMismatch(
            f"weights {W.shape} do not match {state.eta.shape[0]} agents")
    return _k.observer_rhs(state.S, state.eta, W, float(mu1), float(mu2))


def s_star(initial_S, u, mu1=math.nan, lambda1=math.nan) -> GroupModel:
    S0 = np.asarray(initial_S, dtype=float)
    u = np.asarray(u, dtype=float)
    if S0.shape[0] != u.size:
        raise DimensionMismatch(f"{S0.shape[0]} matrices but {u.size} weights")
    return GroupModel(np.tensordot(u, S0, axes=1), mu1 * lambda1)


def s_exact_solution(initial_S, L, mu1: float, t: float) -> np.ndarray:
    """Closed form of the stacked S dynamics, ``exp(-mu1 (L (x) I) t) S(0)``.

    ``exp(-mu1 (L (x) I) t) = exp(-mu1 L t) (x) I`` so the small factor is
    exponentiated and applied blockwise.
    """
    S0 = np.asarray(initial_S, dtype=float)
    Phi = expm(-mu1 * np.asarray(L, dtype=float), t)
    return np.tensordot(Phi, S0, axes=1)


def max_disagreement(X) -> float:
    """Largest pairwise Frobenius (or Euclidean) distance between agents."""
    X = np.asarray(X, dtype=float).reshape(len(X), -1)
    diff = X[:, None, :] - X[None, :, :]
    return float(np.sqrt((diff ** 2).sum(axis=-1)).max())


def check_gain_conditions(mu1, mu2, L_norm, lambda1, S_star_norm) -> GainReport:
    """Sufficient observer gain conditions.

    ``mu1 >= 2 (mu2 ||L|| + ||S*||) / lambda1`` and ``mu2 > ||S*|| / lambda1``.
    Failing them does not imply divergence.
    """
    mu1_bound = 2.0 * (mu2 * L_norm + S_star_norm) / lambda1
    mu2_bound = S_star_norm / lambda1
    return GainReport(mu1 >= mu1_bound, mu2 > mu2_bound, mu1_bound, mu2_bound)


def unstable_group_model(S_star, tol=1e-6) -> bool:
    return bool(np.any(np.linalg.eigvals(S_star).real > tol))
