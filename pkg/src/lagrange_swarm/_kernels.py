"""Compiled closed-loop kernels.

The public modules (plant, observer, controller) wrap these so the library
API and the simulator evaluate literally the same arithmetic. Matrix products
are written out as loops: operands are at most a few entries wide and often
non-contiguous slices of padded per-agent storage.
"""
import numpy as np
from numba import njit, prange

_opts = dict(cache=True, fastmath=False, nogil=True)


@njit(**_opts)
def mm(A, B):
    n, k = A.shape
    m = B.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for p in range(k):
                acc += A[i, p] * B[p, j]
            out[i, j] = acc
    return out


@njit(**_opts)
def mv(A, x):
    n, k = A.shape
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for p in range(k):
            acc += A[i, p] * x[p]
        out[i] = acc
    return out


# ---------------------------------------------------------------- plant --

@njit(**_opts)
def mass_matrix(theta, q):
    c2 = np.cos(q[1])
    out = np.empty((2, 2))
    out[0, 0] = theta[0] + theta[1] + 2.0 * theta[2] * c2
    out[0, 1] = theta[1] + theta[2] * c2
    out[1, 0] = out[0, 1]
    out[1, 1] = theta[1]
    return out


@njit(**_opts)
def mass_matrix_dot(theta, q, qd):
    # M depends on q only through q[1]
    k = -theta[2] * np.sin(q[1]) * qd[1]
    out = np.empty((2, 2))
    out[0, 0] = 2.0 * k
    out[0, 1] = k
    out[1, 0] = k
    out[1, 1] = 0.0
    return out


@njit(**_opts)
def coriolis_matrix(theta, q, qd):
    h = theta[2] * np.sin(q[1])
    out = np.empty((2, 2))
    out[0, 0] = -h * qd[1]
    out[0, 1] = -h * (qd[0] + qd[1])
    out[1, 0] = h * qd[0]
    out[1, 1] = 0.0
    return out


@njit(**_opts)
def gravity_vector(theta, g, q):
    c12 = np.cos(q[0] + q[1])
    out = np.empty(2)
    out[0] = theta[3] * g * np.cos(q[0]) + theta[4] * g * c12
    out[1] = theta[4] * g * c12
    return out


@njit(**_opts)
def regressor_Y(q, qd, v, a, g):
    """Y(q, qd, v, a) @ Theta == M(q) a + C(q, qd) v + G(q)."""
    c2 = np.cos(q[1])
    s2 = np.sin(q[1])
    out = np.zeros((2, 5))
    out[0, 0] = a[0]
    out[0, 1] = a[0] + a[1]
    out[0, 2] = c2 * (2.0 * a[0] + a[1]) - s2 * qd[1] * v[0] - s2 * (qd[0] + qd[1]) * v[1]
    out[0, 3] = g * np.cos(q[0])
    out[0, 4] = g * np.cos(q[0] + q[1])
    out[1, 1] = a[0] + a[1]
    out[1, 2] = c2 * a[0] + s2 * qd[0] * v[0]
    out[1, 4] = g * np.cos(q[0] + q[1])
    return out


@njit(**_opts)
def regressor_L(q, s):
    c2 = np.cos(q[1])
    out = np.zeros((2, 5))
    out[0, 0] = s[0]
    out[0, 1] = s[0] + s[1]
    out[0, 2] = c2 * (2.0 * s[0] + s[1])
    out[1, 1] = s[0] + s[1]
    out[1, 2] = c2 * s[0]
    return out


@njit(**_opts)
def regressor_Cs(q, qd, s):
    s2 = np.sin(q[1])
    out = np.zeros((2, 5))
    out[0, 2] = -s2 * qd[1] * s[0] - s2 * (qd[0] + qd[1]) * s[1]
    out[1, 2] = s2 * qd[0] * s[0]
    return out


@njit(**_opts)
def regressor_Mdot_s(q, qd, s):
    k = -np.sin(q[1]) * qd[1]
    out = np.zeros((2, 5))
    out[0, 2] = k * (2.0 * s[0] + s[1])
    out[1, 2] = k * s[0]
    return out


@njit(**_opts)
def plant_accel(theta, g, q, qd, tau, d):
    Mq = mass_matrix(theta, q)
    C = coriolis_matrix(theta, q, qd)
    G = gravity_vector(theta, g, q)
    f0 = tau[0] + d[0] - (C[0, 0] * qd[0] + C[0, 1] * qd[1]) - G[0]
    f1 = tau[1] + d[1] - (C[1, 0] * qd[0] + C[1, 1] * qd[1]) - G[1]
    det = Mq[0, 0] * Mq[1, 1] - Mq[0, 1] * Mq[1, 0]
    out = np.empty(2)
    if not det > 0.0:
        out[0] = np.nan
        out[1] = np.nan
        return out
    out[0] = (Mq[1, 1] * f0 - Mq[0, 1] * f1) / det
    out[1] = (Mq[0, 0] * f1 - Mq[1, 0] * f0) / det
    return out


# ------------------------------------------------------------ observer --

@njit(**_opts)
def observer_rhs(S, eta, W, mu1, mu2):
    """Stacked observer derivatives; S is (N, n, n), eta is (N, n)."""
    N, n = eta.shape
    S_dot = np.zeros_like(S)
    eta_dot = np.zeros_like(eta)
    for i in range(N):
        for j in range(N):
            a = W[i, j]
            if a != 0.0:
                for r in range(n):
                    for c in range(n):
                        S_dot[i, r, c] += a * (S[j, r, c] - S[i, r, c])
                    eta_dot[i, r] += a * (eta[j, r] - eta[i, r])
        for r in range(n):
            for c in range(n):
                S_dot[i, r, c] *= mu1
            acc = 0.0
            for c in range(n):
                acc += S[i, r, c] * eta[i, c]
            eta_dot[i, r] = acc + mu2 * eta_dot[i, r]
    return S_dot, eta_dot


# ---------------------------------------------------------- controller --

@njit(**_opts)
def reference_signals(q, qd, S, eta, S_dot, eta_dot, alpha):
    n = q.size
    qr_d = np.empty(n)
    qr_dd = np.empty(n)
    s = np.empty(n)
    for r in range(n):
        a1 = 0.0
        a2 = 0.0
        for c in range(n):
            a1 += S[r, c] * eta[c]
            a2 += S_dot[r, c] * eta[c] + S[r, c] * eta_dot[c]
        qr_d[r] = a1 - alpha * (q[r] - eta[r])
        qr_dd[r] = a2 - alpha * (qd[r] - eta_dot[r])
        s[r] = qd[r] - qr_d[r]
    return qr_d, qr_dd, s


@njit(**_opts)
def build_P(M, N, q, qd, s, v, a, g):
    NL = mm(N, regressor_L(q, s))
    rest = regressor_Cs(q, qd, s) - regressor_Mdot_s(q, qd, s) + regressor_Y(q, qd, v, a, g)
    return mm(M, NL) + mm(N, rest)


@njit(**_opts)
def build_Q(A, N, q, qd, s, v, a, g):
    return mm(A, mm(N, regressor_L(q, s))) - regressor_Y(q, qd, v, a, g)


@njit(**_opts)
def build_rho(A, N, E, q, qd, s, v, a, g, zeta, xi):
    """[A zeta + Q | E o (zeta + N L) | E o xi] with E of shape (l, n, n_i)."""
    l = E.shape[0]
    n = A.shape[0]
    ni = A.shape[1]
    L = regressor_L(q, s)
    NL = mm(N, L)
    Y = regressor_Y(q, qd, v, a, g)
    rho = np.zeros((n, 5 + 6 * l))
    AzQ = mm(A, zeta) + mm(A, NL) - Y
    rho[:, :5] = AzQ
    for j in range(l):
        for r in range(n):
            for c in range(5):
                acc = 0.0
                for p in range(ni):
                    acc += E[j, r, p] * (zeta[p, c] + NL[p, c])
                rho[r, 5 + 5 * j + c] = acc
            acc = 0.0
            for p in range(ni):
                acc += E[j, r, p] * xi[p]
            rho[r, 5 + 5 * l + j] = acc
    return rho


# ----------------------------------------------------------- simulator --
# data tuple layout, all per-agent arrays padded to the largest agent:
#   0 W (N, N)          1 theta (N, 5)      2 grav (N,)
#   3 M (N, nm, nm)     4 Nin (N, nm, 2)    5 A (N, 2, nm)
#   6 E (N, lm, 2, nm)  7 K (N, 2, 2)       8 laminv (N, pm)
#   9 bias (N, 2)      10 amp (N, 2, km)   11 freq (N, 2, km)
#  12 phase (N, 2, km) 13 ni (N,) int      14 li (N,) int
#  15 base (N + 1,) int offsets into the flat state
# params: (mu1, mu2, alpha)


@njit(**_opts)
def agent_rhs(i, t, x, out, diag, data, params):
    W, theta, grav, Mall, Nall, Aall, Eall, Kall, laminv, bias, amp, freq, phase, niv, liv, base = data
    mu1, mu2, alpha = params
    nag = W.shape[0]
    b = base[i]
    ni = niv[i]
    li = liv[i]
    q = x[b:b + 2].copy()
    qd = x[b + 2:b + 4].copy()
    S = np.empty((2, 2))
    for c in range(2):
        for r in range(2):
            S[r, c] = x[b + 4 + 2 * c + r]
    eta = x[b + 8:b + 10].copy()

    # observer, neighbours in increasing index order
    S_dot = np.zeros((2, 2))
    eta_cpl = np.zeros(2)
    for j in range(nag):
        w = W[i, j]
        if w != 0.0:
            bj = base[j]
            for c in range(2):
                for r in range(2):
                    S_dot[r, c] += w * (x[bj + 4 + 2 * c + r] - S[r, c])
            for r in range(2):
                eta_cpl[r] += w * (x[bj + 8 + r] - eta[r])
    eta_dot = np.empty(2)
    for r in range(2):
        for c in range(2):
            S_dot[r, c] *= mu1
        eta_dot[r] = S[r, 0] * eta[0] + S[r, 1] * eta[1] + mu2 * eta_cpl[r]

    qr_d, qr_dd, s = reference_signals(q, qd, S, eta, S_dot, eta_dot, alpha)

    xi = x[b + 10:b + 10 + ni].copy()
    zeta = np.empty((ni, 5))
    zb = b + 10 + ni
    for c in range(5):
        for r in range(ni):
            zeta[r, c] = x[zb + ni * c + r]
    ob = zb + 5 * ni
    npar = 5 + 6 * li
    omega = x[ob:ob + npar].copy()

    M = Mall[i, :ni, :ni]
    Nm = Nall[i, :ni, :]
    A = Aall[i, :, :ni]
    E = Eall[i, :li, :, :ni]
    g = grav[i]

    P = build_P(M, Nm, q, qd, s, qr_d, qr_dd, g)
    rho = build_rho(A, Nm, E, q, qd, s, qr_d, qr_dd, g, zeta, xi)

    tau = np.empty(2)
    Axi = mv(A, xi)
    rw = mv(rho, omega)
    for r in range(2):
        tau[r] = -(Kall[i, r, 0] * s[0] + Kall[i, r, 1] * s[1]) - rw[r] + Axi[r]

    dist = np.empty(2)
    for ch in range(2):
        acc = bias[i, ch]
        for k in range(amp.shape[2]):
            if amp[i, ch, k] != 0.0:
                acc += amp[i, ch, k] * np.sin(freq[i, ch, k] * t + phase[i, ch, k])
        dist[ch] = acc
    qdd = plant_accel(theta[i], g, q, qd, tau, dist)

    out[b] = qd[0]
    out[b + 1] = qd[1]
    out[b + 2] = qdd[0]
    out[b + 3] = qdd[1]
    for c in range(2):
        for r in range(2):
            out[b + 4 + 2 * c + r] = S_dot[r, c]
    out[b + 8] = eta_dot[0]
    out[b + 9] = eta_dot[1]
    Mxi = mv(M, xi)
    for r in range(ni):
        out[b + 10 + r] = Mxi[r] + Nm[r, 0] * tau[0] + Nm[r, 1] * tau[1]
    Mz = mm(M, zeta)
    for c in range(5):
        for r in range(ni):
            out[zb + ni * c + r] = Mz[r, c] + P[r, c]
    for k in range(npar):
        out[ob + k] = laminv[i, k] * (rho[0, k] * s[0] + rho[1, k] * s[1])

    # tau, s, eta_dot, d
    for r in range(2):
        diag[i, r] = tau[r]
        diag[i, 2 + r] = s[r]
        diag[i, 4 + r] = eta_dot[r]
        diag[i, 6 + r] = dist[r]


@njit(**_opts)
def network_rhs(t, x, data, params):
    nag = data[0].shape[0]
    out = np.empty_like(x)
    diag = np.empty((nag, 8))
    for i in range(nag):
        agent_rhs(i, t, x, out, diag, data, params)
    return out, diag


@njit(parallel=True, cache=True, nogil=True)
def network_rhs_parallel(t, x, data, params):
    nag = data[0].shape[0]
    out = np.empty_like(x)
    diag = np.empty((nag, 8))
    for i in prange(nag):
        agent_rhs(i, t, x, out, diag, data, params)
    return out, diag


@njit(**_opts)
def _all_finite(x):
    for v in x:
        if not np.isfinite(v):
            return False
    return True


@njit(**_opts)
def rk4_loop(x0, n_steps, dt, stride, data, params, states, diags):
    """Integrate; store every ``stride``-th state and its diagnostics.

    Returns the number of completed steps; less than ``n_steps`` means a
    non-finite state appeared at step ``returned + 1``.
    """
    x = x0.copy()
    h = 0.5 * dt
    k1, d0 = network_rhs(0.0, x, data, params)
    states[0] = x
    diags[0] = d0
    row = 1
    for step in range(n_steps):
        t = step * dt
        if step > 0:
            k1, _ = network_rhs(t, x, data, params)
        k2, _ = network_rhs(t + h, x + h * k1, data, params)
        k3, _ = network_rhs(t + h, x + h * k2, data, params)
        k4, _ = network_rhs(t + dt, x + dt * k3, data, params)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not _all_finite(x):
            return step
        if (step + 1) % stride == 0:
            _, d1 = network_rhs((step + 1) * dt, x, data, params)
            if not _all_finite(d1.ravel()):
                return step
            states[row] = x
            diags[row] = d1
            row += 1
    return n_steps


@njit(parallel=True, cache=True, nogil=True)
def rk4_loop_parallel(x0, n_steps, dt, stride, data, params, states, diags):
    x = x0.copy()
    h = 0.5 * dt
    k1, d0 = network_rhs_parallel(0.0, x, data, params)
    states[0] = x
    diags[0] = d0
    row = 1
    for step in range(n_steps):
        t = step * dt
        if step > 0:
            k1, _ = network_rhs_parallel(t, x, data, params)
        k2, _ = network_rhs_parallel(t + h, x + h * k1, data, params)
        k3, _ = network_rhs_parallel(t + h, x + h * k2, data, params)
        k4, _ = network_rhs_parallel(t + dt, x + dt * k3, data, params)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not _all_finite(x):
            return step
        if (step + 1) % stride == 0:
            _, d1 = network_rhs_parallel((step + 1) * dt, x, data, params)
            if not _all_finite(d1.ravel()):
                return step
            states[row] = x
            diags[row] = d1
            row += 1
    return n_steps
