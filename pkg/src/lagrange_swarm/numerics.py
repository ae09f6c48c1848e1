"""Small dense linear-algebra kernels and the fixed-step RK4 integrator."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NonFiniteState, NotHurwitz, Overflow, SpectraOverlap

# scipy's Pade scaling-and-squaring keeps full accuracy far beyond this; past
# it the entries of exp(At) overflow double precision for generic A.
EXPM_MAX_NORM = 700.0


@dataclass(frozen=True)
class OdeSystem:
    dimension: int
    rhs: Callable[[float, np.ndarray], np.ndarray]


def solve_sylvester(Phi, M, RHS) -> np.ndarray:
    """Solve ``T @ Phi - M @ T = RHS`` for ``T``.

    Uses the Kronecker form ``(Phi^T (x) I - I (x) M) vec(T) = vec(RHS)``;
    the systems here have order at most a handful.
    """
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    RHS = np.atleast_2d(np.asarray(RHS, dtype=float))
    r, p = M.shape[0], Phi.shape[0]
    if Phi.shape != (p, p) or M.shape != (r, r) or RHS.shape != (r, p):
        raise DimensionMismatch(
            f"incompatible shapes Phi{Phi.shape}, M{M.shape}, RHS{RHS.shape}")
    K = np.kron(Phi.T, np.eye(r)) - np.kron(np.eye(p), M)
    s = np.linalg.svd(K, compute_uv=False)
    if s[-1] <= 1e-12 * max(s[0], 1.0):
        raise SpectraOverlap("spectra of Phi and M intersect")
    vec_t = np.linalg.solve(K, RHS.reshape(-1, order="F"))
    return vec_t.reshape((r, p), order="F")


def is_hurwitz(M, margin=1e-12) -> bool:
    return bool(np.all(np.linalg.eigvals(M).real < -margin))


def solve_lyapunov(M) -> np.ndarray:
    """Symmetric positive definite Q with ``Q @ M + M.T @ Q = -I``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not is_hurwitz(M):
        raise NotHurwitz("matrix has an eigenvalue with nonnegative real part")
    Q = scipy.linalg.solve_continuous_lyapunov(M.T, -np.eye(M.shape[0]))
    return 0.5 * (Q + Q.T)


def expm(A, t=1.0) -> np.ndarray:
    At = np.atleast_2d(np.asarray(A, dtype=float)) * t
    if not np.all(np.isfinite(At)):
        raise Overflow("non-finite entries in A*t")
    if At.size and np.linalg.norm(At, 1) > EXPM_MAX_NORM:
        raise Overflow(f"||A t||_1 exceeds {EXPM_MAX_NORM}")
    return scipy.linalg.expm(At)


def rk4_step(sys: OdeSystem, t: float, x: np.ndarray, dt: float) -> np.ndarray:
    if dt <= 0:
        raise ValueError("dt must be positive")
    k1 = sys.rhs(t, x)
    k2 = sys.rhs(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = sys.rhs(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = sys.rhs(t + dt, x + dt * k3)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        bad = int(np.flatnonzero(~np.isfinite(out))[0])
        raise NonFiniteState(t=t + dt, component=f"x[{bad}]", index=bad)
    return out


def integrate(sys: OdeSystem, x0, dt: float, n_steps: int, t0=0.0) -> np.ndarray:
    """Trajectory of ``n_steps`` RK4 steps, shape ``(n_steps + 1, dim)``."""
    x = np.asarray(x0, dtype=float)
    out = np.empty((n_steps + 1, x.size))
    out[0] = x
    for k in range(n_steps):
        x = rk4_step(sys, t0 + k * dt, x, dt)
        out[k + 1] = x
    return out


def tracy_singh_row(blocks, Z) -> np.ndarray:
    """``row(E_1 Z, ..., E_l Z)``; an empty block list gives zero columns."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    blocks = [np.atleast_2d(np.asarray(E, dtype=float)) for E in blocks]
    if not blocks:
        return np.zeros((0, 0))
    n = blocks[0].shape[0]
    for E in blocks:
        if E.shape[0] != n or E.shape[1] != Z.shape[0]:
            raise DimensionMismatch(
                f"block {E.shape} does not conform with Z {Z.shape}")
    return np.hstack([E @ Z for E in blocks])


def controllability_matrix(M, N) -> np.ndarray:
    M = np.atleast_2d(M)
    N = np.asarray(N, dtype=float).reshape(M.shape[0], -1)
    cols = [N]
    for _ in range(M.shape[0] - 1):
        cols.append(M @ cols[-1])
    return np.hstack(cols)
