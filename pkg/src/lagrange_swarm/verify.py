"""Property suites run by ``lagrange-swarm verify``.

Every check compares the library against an independent evaluation (direct
matrix formulas, closed forms, or a second integration path) and reports the
worst observed error next to its tolerance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import controller, graph, internal_model as im, numerics, observer, plant, sim

SUITES = ("plant", "im", "observer", "controller")


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    value: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value < self.tol)


# direct formulas for the two-link arm, kept separate from the compiled kernels
def direct_M(th, q):
    c2 = math.cos(q[1])
    return np.array([[th[0] + th[1] + 2 * th[2] * c2, th[1] + th[2] * c2],
                     [th[1] + th[2] * c2, th[1]]])


def direct_Mdot(th, q, qd):
    s2 = math.sin(q[1])
    return -th[2] * s2 * qd[1] * np.array([[2.0, 1.0], [1.0, 0.0]])


def direct_C(th, q, qd):
    s2 = math.sin(q[1])
    return np.array([[-th[2] * s2 * qd[1], -th[2] * s2 * (qd[0] + qd[1])],
                     [th[2] * s2 * qd[0], 0.0]])


def direct_G(th, q, g=plant.DEFAULT_GRAVITY):
    c1, c12 = math.cos(q[0]), math.cos(q[0] + q[1])
    return np.array([th[3] * g * c1 + th[4] * g * c12, th[4] * g * c12])


def _sec5_thetas():
    doc = sim.parse_document(sim.BUNDLED_SCENARIO.read_text())
    return [np.array(a["Theta"], dtype=float) for a in doc["agents"]]


def plant_suite(rng, n=500):
    thetas = _sec5_thetas()
    skew = ident_Y = ident_L = ident_C = ident_Md = 0.0
    for _ in range(2 * n):
        th = rng.uniform(0.05, 2.0, 5)
        q, qd, x = rng.uniform(-3, 3, (3, 2))
        skew = max(skew, abs(x @ (direct_Mdot(th, q, qd) - 2 * direct_C(th, q, qd)) @ x))
    for _ in range(n):
        th = rng.uniform(-2, 2, 5)
        q, qd, v, a, s = rng.uniform(-3, 3, (5, 2))
        Y = plant.regressor_Y(q, qd, v, a)
        ident_Y = max(ident_Y, np.abs(Y @ th - (direct_M(th, q) @ a + direct_C(th, q, qd) @ v
                                               + direct_G(th, q))).max())
        ident_L = max(ident_L, np.abs(plant.regressor_L(q, s) @ th - direct_M(th, q) @ s).max())
        ident_C = max(ident_C, np.abs(plant.regressor_Cs(q, qd, s) @ th
                                      - direct_C(th, q, qd) @ s).max())
        ident_Md = max(ident_Md, np.abs(plant.regressor_Mdot_s(q, qd, s) @ th
                                        - direct_Mdot(th, q, qd) @ s).max())
    # positive definiteness over a (q2) grid; M does not depend on q1 or qdot
    grid = np.linspace(-np.pi, np.pi, 721)
    min_eig = min(np.linalg.eigvalsh(direct_M(th, (0.0, g2))).min()
                  for th in thetas for g2 in grid)
    return [
        Check("plant", "skew symmetry |x'(Mdot-2C)x|", skew, 1e-12),
        Check("plant", "Y Theta = M a + C v + G", ident_Y, 1e-10),
        Check("plant", "L Theta = M s", ident_L, 1e-10),
        Check("plant", "Cs Theta = C s", ident_C, 1e-10),
        Check("plant", "Mdot_s Theta = Mdot s", ident_Md, 1e-10),
        Check("plant", "M positive definite (-min eig)", -min_eig, 0.0),
    ]


def random_channel(rng, max_terms=2):
    n_terms = int(rng.integers(0, max_terms + 1))
    bias = float(rng.uniform(-3, 3)) if (n_terms == 0 or rng.random() < 0.5) else 0.0
    freqs = np.sort(rng.uniform(0.05, 3.0, n_terms))
    while n_terms > 1 and np.min(np.diff(freqs)) < 0.05:
        freqs = np.sort(rng.uniform(0.05, 3.0, n_terms))
    terms = [im.SineTerm(float(rng.uniform(0.2, 8)), float(f), float(rng.uniform(-np.pi, np.pi)))
             for f in freqs]
    return im.DisturbanceChannel(bias, terms)


def im_suite(rng, n=100, n_grid=500):
    sigma_closed = t_zero = 0.0
    M2 = np.array([[0.0, 1.0], [-3.0, -2.0]])
    for sig in (0.1, 0.2):
        ch = im.DisturbanceChannel(0.0, [im.SineTerm(1.0, sig, 0.0)])
        m = im.synthesize_channel(ch, M2, [0.0, 1.0])
        a = 3 - sig ** 2
        closed = np.array([[a, -2.0], [2 * sig ** 2, a]]) / (a ** 2 + 4 * sig ** 2)
        sigma_closed = max(sigma_closed, np.abs(m.T_sigma - closed).max())
        t_zero = max(t_zero, np.abs(m.T_zero - np.array([[3, -2], [0, 3]]) / 9).max())
    syl = param = repro = 0.0
    tgrid = np.linspace(0.0, 50.0, n_grid)
    for _ in range(n):
        chans = [random_channel(rng) for _ in range(2)]
        models = [im.synthesize_channel(c) for c in chans]
        for m in models:
            syl = max(syl, np.linalg.norm(m.T_sigma @ m.Phi_sigma - m.M @ m.T_sigma
                                          - m.N @ m.Psi))
        data = im.assemble_agent(models)
        Esum = sum((E * r for E, r in zip(data.E_blocks, data.rho_small)),
                   np.zeros_like(data.A))
        param = max(param, np.linalg.norm(data.A - data.B - Esum))
        for t in tgrid:
            d = im.agent_disturbance(chans, t)
            th = im.agent_theta(chans, data, t)
            repro = max(repro, (np.abs(d + data.B @ th) / (1 + np.abs(d))).max())
    return [
        Check("im", "T_sigma vs closed form", sigma_closed, 1e-12),
        Check("im", "T_zero vs (1/9)[[3,-2],[0,3]]", t_zero, 1e-12),
        Check("im", "Sylvester residual", syl, 1e-10),
        Check("im", "||A - B - sum E_j rho_j||", param, 1e-10),
        Check("im", "|d + B theta| / (1 + |d|)", repro, 1e-9),
    ]


def observer_suite(sc=None, t_end=20.0, dt=1e-3):
    sc = sc or sim.load_scenario_file(sim.BUNDLED_SCENARIO)
    S0 = np.array([a.S0 for a in sc.agents])
    eta0 = np.array([a.eta0 for a in sc.agents])
    W = sc.graph.weights
    mu1, mu2 = sc.gains.mu1, sc.gains.mu2
    N = sc.n_agents

    def rhs(t, x):
        st = observer.ObserverState(x[:4 * N].reshape(N, 2, 2), x[4 * N:].reshape(N, 2))
        Sd, ed = observer.observer_rhs(st, W, mu1, mu2)
        return np.concatenate([Sd.ravel(), ed.ravel()])

    sys = numerics.OdeSystem(6 * N, rhs)
    x = np.concatenate([S0.ravel(), eta0.ravel()])
    L = sc.analysis.laplacian
    worst = 0.0
    n_steps = int(round(t_end / dt))
    for k in range(n_steps):
        x = numerics.rk4_step(sys, k * dt, x, dt)
        if (k + 1) % 1000 == 0:
            exact = observer.s_exact_solution(S0, L, mu1, (k + 1) * dt)
            worst = max(worst, np.abs(x[:4 * N].reshape(N, 2, 2) - exact).max())
    u = graph.left_null_vector(L)
    S_star = np.tensordot(u, S0, axes=1)
    S_end = x[:4 * N].reshape(N, 2, 2)
    return [
        Check("observer", "RK4 vs expm (S dynamics)", worst, 1e-6),
        Check("observer", "||u'L||_inf", np.abs(u @ L).max(), 1e-10),
        Check("observer", f"max ||S_i({t_end:g}) - S*||_F",
              max(np.linalg.norm(S - S_star) for S in S_end), 1e-8),
    ]


def controller_suite(rng, n=500, sc=None, t_end=2.0):
    from . import oracles

    P_err = Q_err = rho_err = 0.0
    for _ in range(n):
        chans = [random_channel(rng, 1) for _ in range(2)]
        data = im.assemble_agent([im.synthesize_channel(c) for c in chans])
        th = rng.uniform(-2, 2, 5)
        q, qd, s, v, a = rng.uniform(-3, 3, (5, 2))
        zeta = rng.normal(size=(data.n_i, 5))
        xi = rng.normal(size=data.n_i)
        Ms = direct_M(th, q) @ s
        Yth = direct_M(th, q) @ a + direct_C(th, q, qd) @ v + direct_G(th, q)
        P = controller.build_P(data, q, qd, s, v, a)
        P_direct = (data.M @ data.N @ Ms + data.N @ (direct_C(th, q, qd) @ s)
                    - data.N @ (direct_Mdot(th, q, qd) @ s) + data.N @ Yth)
        P_err = max(P_err, np.abs(P @ th - P_direct).max())
        Q = controller.build_Q(data, q, qd, s, v, a)
        Q_err = max(Q_err, np.abs(Q @ th - (data.A @ data.N @ Ms - Yth)).max())
        rho = controller.build_rho(data, q, qd, s, v, a, zeta, xi)
        w = np.concatenate([th, np.kron(data.rho_small, th), data.rho_small])
        E = data.A - data.B
        direct = data.A @ zeta @ th + Q @ th + E @ (zeta @ th + data.N @ Ms) + E @ xi
        rho_err = max(rho_err, np.abs(rho @ w - direct).max())
    checks = [
        Check("controller", "P Theta identity", P_err, 1e-10),
        Check("controller", "Q Theta identity", Q_err, 1e-10),
        Check("controller", "rho omega contract", rho_err, 1e-10),
    ]
    sc = sc or sim.load_scenario_file(sim.BUNDLED_SCENARIO)
    res = []
    for dt in (1e-3, 5e-4):
        out = sim.run(sc, stride=1, t_end=t_end, dt=dt)
        res.append(oracles.error_system_defect(sc, out))
    ratio, _ = oracles.refinement_ratios(*res)
    checks.append(Check("controller", "error-system order |rms ratio - 4|",
                        abs(ratio - 4.0), 0.5))
    gaps = [g for k in range(0, len(out.t), max(1, len(out.t) // 20))
            for g in oracles.adaptation_passivity_gap(sc, out.t[k], out.states[k])]
    checks.append(Check("controller", "adaptation passivity (relative)",
                        max(g / m for g, m in gaps), 1e-12))
    return checks


def run_suites(names=("all",), seed=0):
    if "all" in names:
        names = SUITES
    rng = np.random.default_rng(seed)
    table = []
    for name in names:
        if name == "plant":
            table += plant_suite(rng)
        elif name == "im":
            table += im_suite(rng)
        elif name == "observer":
            table += observer_suite()
        elif name == "controller":
            table += controller_suite(rng)
        else:
            raise ValueError(f"unknown suite {name!r}")
    return table


def format_table(checks) -> str:
    width = max(len(c.name) for c in checks) if checks else 10
    lines = [f"{'suite':<11}{'check':<{width + 2}}{'value':>12}{'tol':>10}  result"]
    for c in checks:
        lines.append(f"{c.suite:<11}{c.name:<{width + 2}}{c.value:>12.3e}{c.tol:>10.0e}  "
                     f"{'PASS' if c.passed else 'FAIL'}")
    return "\n".join(lines)
