"""Sinusoidal disturbances and the internal-model compensator data.

A channel ``d(t) = b + sum_k psi_k sin(sigma_k t + phi_k)`` is generated by
the companion system ``vartheta' = Phi vartheta, d = Psi vartheta`` with
``vartheta = (d, d', ..., d^(r-1))``. For a Hurwitz, controllable ``(M, N)``
the Sylvester solution ``T Phi - M T = N Psi`` gives ``theta = -T vartheta``
and ``d = -Psi T^{-1} theta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import (DimensionMismatch, DuplicateFrequency, NotControllable,
                     NotHurwitz, SingularT)
from .numerics import controllability_matrix, is_hurwitz, solve_sylvester

SINGULAR_COND = 1e12


@dataclass(frozen=True)
class SineTerm:
    amp: float
    freq: float
    phase: float = 0.0


@dataclass(frozen=True)
class DisturbanceChannel:
    bias: float = 0.0
    terms: tuple = ()

    def __post_init__(self):
        terms = tuple(t if isinstance(t, SineTerm) else SineTerm(*t) for t in self.terms)
        object.__setattr__(self, "terms", terms)
        if not math.isfinite(self.bias):
            raise ValueError("bias must be finite")
        freqs = []
        for term in terms:
            if not (math.isfinite(term.amp) and math.isfinite(term.phase)):
                raise ValueError("amplitude and phase must be finite")
            if not (term.freq > 0 and math.isfinite(term.freq)):
                raise ValueError(f"frequency must be positive, got {term.freq}")
            freqs.append(term.freq)
        if len(set(freqs)) != len(freqs):
            raise DuplicateFrequency(f"repeated frequency in {freqs}")
        if self.bias == 0.0 and not terms:
            raise ValueError("channel needs a bias or at least one sinusoid")

    @property
    def has_bias(self) -> bool:
        return self.bias != 0.0


class CompanionForm(NamedTuple):
    r: int
    Phi: np.ndarray
    Psi: np.ndarray
    c: np.ndarray


@dataclass(frozen=True)
class ChannelInternalModel:
    r: int
    Phi_sigma: np.ndarray
    Psi: np.ndarray
    M: np.ndarray
    N: np.ndarray
    T_sigma: np.ndarray
    T_zero: np.ndarray
    c: np.ndarray
    uncertain: tuple  # indices k of c that depend on the frequencies
    cond_T_sigma: float = math.nan
    cond_T_zero: float = math.nan


@dataclass(frozen=True)
class AgentCompensatorData:
    M: np.ndarray
    N: np.ndarray
    Psi: np.ndarray
    T_sigma: np.ndarray
    T_zero: np.ndarray
    A: np.ndarray
    B: np.ndarray
    E_blocks: list
    rho_small: np.ndarray
    n_i: int
    l: int
    channels: list = field(default_factory=list)

    @property
    def E_stack(self) -> np.ndarray:
        """E blocks as one ``(l, n, n_i)`` array."""
        n = self.A.shape[0]
        if not self.E_blocks:
            return np.zeros((0, n, self.n_i))
        return np.stack(self.E_blocks)


def eval_disturbance(ch: DisturbanceChannel, t: float) -> float:
    return ch.bias + sum(term.amp * math.sin(term.freq * t + term.phase) for term in ch.terms)


def disturbance_derivatives(ch: DisturbanceChannel, t: float, r: int) -> np.ndarray:
    """``(d, d', ..., d^(r-1))`` at ``t`` from the closed form."""
    out = np.zeros(r)
    if r:
        out[0] = ch.bias
    for term in ch.terms:
        for k in range(r):
            out[k] += term.amp * term.freq ** k * math.sin(
                term.freq * t + term.phase + 0.5 * k * math.pi)
    return out


def _min_poly_low_coeffs(ch: DisturbanceChannel) -> np.ndarray:
    """Coefficients of ``s^b prod(s^2 + sigma^2)`` below the leading term, low order first."""
    poly = np.array([1.0])  # high order first
    for term in ch.terms:
        poly = np.polymul(poly, [1.0, 0.0, term.freq ** 2])
    if ch.has_bias:
        poly = np.polymul(poly, [1.0, 0.0])
    return poly[1:][::-1]


def companion_form(ch: DisturbanceChannel) -> CompanionForm:
    low = _min_poly_low_coeffs(ch)
    r = low.size
    c = -low
    Phi = np.zeros((r, r))
    Phi[:-1, 1:] = np.eye(r - 1)
    Phi[-1, :] = c
    Psi = np.zeros((1, r))
    Psi[0, 0] = 1.0
    return CompanionForm(r, Phi, Psi, c)


def _uncertain_indices(ch: DisturbanceChannel) -> tuple:
    # min poly is s^b q(s^2); the frequency-dependent coefficients sit on
    # s^(b + 2j), j < #terms
    b = 1 if ch.has_bias else 0
    return tuple(b + 2 * j for j in range(len(ch.terms)))


def default_pair(r: int):
    """Companion ``M`` and ``N = e_r`` for a channel of order ``r``.

    The characteristic polynomial is ``(s^2 + 2 s + 3)^(r // 2)``, times
    ``(s + 1)`` when ``r`` is odd, so ``r = 2`` gives
    ``M = [[0, 1], [-3, -2]]``, ``N = [0, 1]^T``.
    """
    poly = np.array([1.0])
    for _ in range(r // 2):
        poly = np.polymul(poly, [1.0, 2.0, 3.0])
    if r % 2:
        poly = np.polymul(poly, [1.0, 1.0])
    M = np.zeros((r, r))
    M[:-1, 1:] = np.eye(r - 1)
    M[-1, :] = -poly[1:][::-1]
    N = np.zeros((r, 1))
    N[-1, 0] = 1.0
    return M, N


def synthesize_channel(ch: DisturbanceChannel, M=None, N=None) -> ChannelInternalModel:
    cf = companion_form(ch)
    r = cf.r
    if M is None and N is None:
        M, N = default_pair(r)
    elif M is None or N is None:
        raise ValueError("M and N must be overridden together")
    M = np.atleast_2d(np.asarray(M, dtype=float))
    N = np.asarray(N, dtype=float).reshape(-1, 1)
    if M.shape != (r, r) or N.shape != (r, 1):
        raise DimensionMismatch(
            f"channel order {r} needs M {r}x{r} and N {r}x1, got {M.shape}, {N.shape}")
    if not is_hurwitz(M):
        raise NotHurwitz("M must be Hurwitz")
    ctrb = controllability_matrix(M, N)
    if np.linalg.matrix_rank(ctrb, tol=1e-9 * max(np.linalg.norm(ctrb, 2), 1.0)) < r:
        raise NotControllable("(M, N) is not controllable")
    rhs = N @ cf.Psi
    T_sigma = solve_sylvester(cf.Phi, M, rhs)
    Phi_zero = np.zeros((r, r))
    Phi_zero[:-1, 1:] = np.eye(r - 1)
    T_zero = solve_sylvester(Phi_zero, M, rhs)
    conds = []
    for name, T in (("T_sigma", T_sigma), ("T_zero", T_zero)):
        cnd = np.linalg.cond(T)
        if not cnd < SINGULAR_COND:
            raise SingularT(f"{name} is singular (cond={cnd:.3g})")
        conds.append(float(cnd))
    return ChannelInternalModel(r, cf.Phi, cf.Psi, M, N, T_sigma, T_zero, cf.c,
                                _uncertain_indices(ch), *conds)


def assemble_agent(channels) -> AgentCompensatorData:
    """Stack per-coordinate channel models into the agent's compensator data.

    The frequency-dependent part ``E = A - B`` is linear in the uncertain
    companion coefficients: by Ackermann's formula
    ``Psi T^{-1} = -e_r^T C^{-1} p(M)`` with ``C`` the controllability matrix
    and ``p`` the disturbance minimal polynomial, and the nominal polynomial
    is ``s^r``. Hence ``E = sum_k (-c_k) e_r^T C^{-1} M^k`` with one term per
    coefficient that depends on the frequencies.
    """
    channels = list(channels)
    if not channels:
        raise DimensionMismatch("need at least one channel")
    n = len(channels)
    blocks = lambda attr: scipy.linalg.block_diag(*[getattr(c, attr) for c in channels])
    M, N, Psi = blocks("M"), blocks("N"), blocks("Psi")
    T_sigma, T_zero = blocks("T_sigma"), blocks("T_zero")
    n_i = M.shape[0]
    A = np.zeros((n, n_i))
    B = np.zeros((n, n_i))
    E_blocks, rho = [], []
    off = 0
    for s, ch in enumerate(channels):
        r = ch.r
        sl = slice(off, off + r)
        A[s, sl] = np.linalg.solve(ch.T_zero.T, ch.Psi[0])
        B[s, sl] = np.linalg.solve(ch.T_sigma.T, ch.Psi[0])
        F = np.linalg.solve(controllability_matrix(ch.M, ch.N).T, np.eye(r)[-1])
        for k in ch.uncertain:
            Ej = np.zeros((n, n_i))
            Ej[s, sl] = F @ np.linalg.matrix_power(ch.M, k)
            E_blocks.append(Ej)
            rho.append(-ch.c[k])
        off += r
    return AgentCompensatorData(M, N, Psi, T_sigma, T_zero, A, B, E_blocks,
                                np.array(rho), n_i, len(E_blocks), channels)


def theta_oracle(ch: DisturbanceChannel, im: ChannelInternalModel, t: float) -> np.ndarray:
    """``theta(t) = -T_sigma vartheta(t)``; test-only, reads the true disturbance."""
    return -im.T_sigma @ disturbance_derivatives(ch, t, im.r)


def agent_theta(channels, data: AgentCompensatorData, t: float) -> np.ndarray:
    return np.concatenate([theta_oracle(ch, im, t) for ch, im in zip(channels, data.channels)])


def agent_disturbance(channels, t: float) -> np.ndarray:
    return np.array([eval_disturbance(ch, t) for ch in channels])
