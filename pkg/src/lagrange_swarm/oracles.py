"""Verification quantities that need the true plant and disturbance data.

Nothing in the control path imports this module. It reconstructs the
analysis-only signals (theta, xi_hat, the Lyapunov function) from a finished
run so the closed loop can be checked against the stability argument.
"""
from __future__ import annotations

import numpy as np

from . import sim
from .controller import build_rho, true_omega
from .numerics import solve_lyapunov


def _mass_batch(theta, q):
    c2 = np.cos(q[:, 1])
    M = np.empty((len(q), 2, 2))
    M[:, 0, 0] = theta[0] + theta[1] + 2 * theta[2] * c2
    M[:, 0, 1] = M[:, 1, 0] = theta[1] + theta[2] * c2
    M[:, 1, 1] = theta[1]
    return M


def _vartheta_batch(channels, comp, t):
    """Stacked ``(d, d', ...)`` per channel for every time in ``t``, shape (T, n_i)."""
    cols = []
    for ch, im in zip(channels, comp.channels):
        block = np.zeros((len(t), im.r))
        if im.r:
            block[:, 0] = ch.bias
        for term in ch.terms:
            for k in range(im.r):
                block[:, k] += term.amp * term.freq ** k * np.sin(
                    term.freq * t + term.phase + 0.5 * k * np.pi)
        cols.append(block)
    return np.hstack(cols)


def theta_series(sc, i, t):
    comp = sc.compensators[i]
    return -_vartheta_batch(sc.agents[i].channels, comp, np.asarray(t)) @ comp.T_sigma.T


def xi_hat_series(sc, out):
    """``xi - theta - N M(q) s - zeta Theta`` per agent, list of (T, n_i) arrays."""
    res = []
    for i in range(sc.n_agents):
        comp = sc.compensators[i]
        theta = sc.agents[i].params.theta
        xi = out.states[:, out.layout.slice(i, "xi")]
        zeta = out.states[:, out.layout.slice(i, "zeta")].reshape(len(out.t), 5, comp.n_i)
        zeta = zeta.transpose(0, 2, 1)
        q = out.states[:, out.layout.slice(i, "q")]
        s = out.s[:, i, :]
        Ms = np.einsum("tij,tj->ti", _mass_batch(theta, q), s)
        res.append(xi - theta_series(sc, i, out.t) - Ms @ comp.N.T - zeta @ theta)
    return res


def error_system_defect(sc, out):
    """``(t, r)`` with ``r`` the largest ``|central diff(xi_hat) - M xi_hat|``
    over agents and components at each interior sample.

    ``out`` must hold every integration step (stride 1).
    """
    h = out.t[1] - out.t[0]
    worst = np.zeros(len(out.t) - 2)
    for i, xh in enumerate(xi_hat_series(sc, out)):
        fd = (xh[2:] - xh[:-2]) / (2 * h)
        err = np.abs(fd - xh[1:-1] @ sc.compensators[i].M.T).max(axis=1)
        worst = np.maximum(worst, err)
    return out.t[1:-1], worst


def refinement_ratios(coarse, fine):
    """Defect ratios for a dt-halving pair, compared on the coarse grid.

    Returns ``(rms_ratio, sup_ratio)``. Both runs' defects come from
    ``error_system_defect``; the fine series is subsampled at the coarse
    instants so both norms measure the same set of times.
    """
    (tc, rc), (tf, rf) = coarse, fine
    rf = rf[1::2][:len(rc)]
    if not np.allclose(tf[1::2][:len(rc)], tc, atol=1e-12, rtol=0):
        raise ValueError("fine run must use exactly half the coarse step")
    rms = np.sqrt(np.mean(rc ** 2)) / np.sqrt(np.mean(rf ** 2))
    return float(rms), float(rc.max() / rf.max())


def lyapunov_weights(sc, i):
    """``(epsilon, Q)`` with ``epsilon = ||B||^2 / lambda_min(K)`` and ``Q M + M^T Q = -I``."""
    comp = sc.compensators[i]
    K = sc.agent_gains[i].K
    eps = np.linalg.norm(comp.B, 2) ** 2 / np.linalg.eigvalsh(0.5 * (K + K.T)).min()
    return float(eps), solve_lyapunov(comp.M)


def lyapunov_series(sc, out):
    """V_i(t) for every stored row, shape (T, N)."""
    V = np.empty((len(out.t), sc.n_agents))
    xh_all = xi_hat_series(sc, out)
    for i in range(sc.n_agents):
        comp = sc.compensators[i]
        a = sc.agents[i]
        eps, Q = lyapunov_weights(sc, i)
        lam = sc.agent_gains[i].Lambda
        w = true_omega(a.params.theta, comp.rho_small)
        wt = out.states[:, out.layout.slice(i, "omega")] - w
        q = out.states[:, out.layout.slice(i, "q")]
        s = out.s[:, i, :]
        xh = xh_all[i]
        sMs = np.einsum("ti,tij,tj->t", s, _mass_batch(a.params.theta, q), s)
        V[:, i] = eps * np.einsum("ti,ij,tj->t", xh, Q, xh) + 0.5 * (
            sMs + np.einsum("ti,i,ti->t", wt, lam, wt))
    return V


def dissipation_bound(sc, out):
    """Right-hand side ``-(eps/2)|xi_hat|^2 - s^T K s / 2`` per row and agent."""
    res = np.empty((len(out.t), sc.n_agents))
    xh_all = xi_hat_series(sc, out)
    for i in range(sc.n_agents):
        eps, _ = lyapunov_weights(sc, i)
        K = sc.agent_gains[i].K
        s = out.s[:, i, :]
        res[:, i] = -0.5 * eps * (xh_all[i] ** 2).sum(axis=1) - 0.5 * np.einsum(
            "ti,ij,tj->t", s, K, s)
    return res


def adaptation_passivity_gap(sc, t, x):
    """``|d/dt (w~^T Lambda w~ / 2) - w~^T rho^T s|`` per agent, with the
    derivative taken from the simulator's omega_hat rate."""
    layout = sc.layout
    f = sim.global_rhs(sc, t, x)
    diag = sim.diagnostics(sc, t, x)
    A = layout.unpack(x)
    D = layout.unpack(f)
    gaps = []
    for i in range(sc.n_agents):
        a, d = A[i], D[i]
        comp = sc.compensators[i]
        spec = sc.agents[i]
        s = diag[i, 2:4]
        qr_dot = a["qd"] - s
        qr_ddot = _qr_ddot(a, d, sc.gains.alpha)
        rho = build_rho(comp, a["q"], a["qd"], s, qr_dot, qr_ddot, a["zeta"], a["xi"],
                        spec.params.gravity)
        wt = a["omega"] - true_omega(spec.params.theta, comp.rho_small)
        lam = sc.agent_gains[i].Lambda
        lhs = wt @ (lam * d["omega"])
        rhs = wt @ (rho.T @ s)
        gaps.append((abs(lhs - rhs), max(abs(lhs), abs(rhs), 1.0)))
    return gaps


def _qr_ddot(a, d, alpha):
    return d["S"] @ a["eta"] + a["S"] @ d["eta"] - alpha * (a["qd"] - d["eta"])
