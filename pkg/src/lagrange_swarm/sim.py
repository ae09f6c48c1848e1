"""Scenario loading, state layout and closed-loop network simulation."""
from __future__ import annotations

import copy
import io
import json
import logging
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as _k
from .controller import Gains, n_params
from .errors import (LagrangeSwarmError, NoSpanningTree, NonFiniteState, ParseError,
                     ValidationError)
from .graph import DirectedGraph, LaplacianAnalysis, analyze
from .internal_model import (AgentCompensatorData, DisturbanceChannel, SineTerm,
                             assemble_agent, synthesize_channel)
from .numerics import OdeSystem, rk4_step
from .observer import (GainReport, GroupModel, check_gain_conditions, max_disagreement,
                       s_star, unstable_group_model)
from .plant import DEFAULT_GRAVITY, ArmParameters, inertia_bounds

log = logging.getLogger(__name__)

N_Q = 2
THREADS_ENV = "LAGRANGE_SWARM_THREADS"
# below this many agents thread start-up costs more than it saves
PARALLEL_MIN_AGENTS = 16
BUNDLED_SCENARIO = Path(__file__).parent / "data" / "scenario_paper_sec5.json"


@dataclass
class AgentSpec:
    params: ArmParameters
    channels: list
    q0: np.ndarray
    qdot0: np.ndarray
    S0: np.ndarray
    eta0: np.ndarray
    overrides: list  # per channel (M, N) or None
    omega_hat0: np.ndarray | None = None


@dataclass(frozen=True)
class GainSet:
    mu1: float
    mu2: float
    alpha: float
    K: np.ndarray
    Lambda: object  # scalar or per-parameter vector

    def for_agent(self, l: int) -> Gains:
        lam = np.asarray(self.Lambda, dtype=float)
        p = n_params(l)
        if lam.ndim == 0:
            lam = np.full(p, float(lam))
        elif lam.shape != (p,):
            raise ValidationError("gains.Lambda", f"needs {p} diagonal entries, got {lam.size}")
        return Gains(self.K, lam, self.alpha)


@dataclass(frozen=True)
class IntegratorSettings:
    dt: float
    t_end: float
    output_stride: int

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.t_end / self.dt + 1e-9))


class StateLayout:
    """Per-agent contiguous blocks: q, qd, vec(S), eta, xi, vec(zeta), omega_hat.

    ``vec`` stacks columns.
    """

    FIELDS = ("q", "qd", "S", "eta", "xi", "zeta", "omega")

    def __init__(self, n_i, l):
        self.n_i = [int(v) for v in n_i]
        self.l = [int(v) for v in l]
        self.base = [0]
        self.sizes = []
        for ni, li in zip(self.n_i, self.l):
            sizes = {"q": N_Q, "qd": N_Q, "S": N_Q * N_Q, "eta": N_Q, "xi": ni,
                     "zeta": 5 * ni, "omega": n_params(li)}
            self.sizes.append(sizes)
            self.base.append(self.base[-1] + sum(sizes.values()))
        self.dim = self.base[-1]

    @property
    def n_agents(self):
        return len(self.n_i)

    def slice(self, i, name):
        off = self.base[i]
        for f in self.FIELDS:
            if f == name:
                return slice(off, off + self.sizes[i][f])
            off += self.sizes[i][f]
        raise KeyError(name)

    def unpack(self, x):
        """List of per-agent dicts; matrices come back in their natural shape."""
        out = []
        for i in range(self.n_agents):
            d = {f: np.array(x[self.slice(i, f)]) for f in self.FIELDS}
            d["S"] = d["S"].reshape((N_Q, N_Q), order="F")
            d["zeta"] = d["zeta"].reshape((self.n_i[i], 5), order="F")
            out.append(d)
        return out

    def pack(self, agents):
        x = np.zeros(self.dim)
        for i, d in enumerate(agents):
            for f in self.FIELDS:
                x[self.slice(i, f)] = np.asarray(d[f], dtype=float).reshape(-1, order="F")
        return x

    def locate(self, index):
        for i in range(self.n_agents):
            for f in self.FIELDS:
                sl = self.slice(i, f)
                if sl.start <= index < sl.stop:
                    return i, f"{f}[{index - sl.start}]"
        raise IndexError(index)


@dataclass
class Scenario:
    name: str
    graph: DirectedGraph
    agents: list
    gains: GainSet
    integrator: IntegratorSettings
    outputs: dict
    document: dict
    analysis: LaplacianAnalysis = None
    compensators: list = field(default_factory=list)
    agent_gains: list = field(default_factory=list)
    group_model: GroupModel = None
    gain_report: GainReport = None
    inertia_bounds: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def n_agents(self):
        return self.graph.n_agents

    @property
    def layout(self) -> StateLayout:
        return StateLayout([c.n_i for c in self.compensators], [c.l for c in self.compensators])

    def initial_state(self) -> np.ndarray:
        blocks = []
        for a, comp in zip(self.agents, self.compensators):
            omega = a.omega_hat0 if a.omega_hat0 is not None else np.zeros(n_params(comp.l))
            blocks.append({"q": a.q0, "qd": a.qdot0, "S": a.S0, "eta": a.eta0,
                           "xi": np.zeros(comp.n_i), "zeta": np.zeros((comp.n_i, 5)),
                           "omega": omega})
        return self.layout.pack(blocks)


# ----------------------------------------------------------------- loading --

def _num(value, fieldname, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(fieldname, f"expected a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ValidationError(fieldname, "must be finite")
    if positive and not v > 0:
        raise ValidationError(fieldname, "must be positive")
    if nonneg and v < 0:
        raise ValidationError(fieldname, "must be nonnegative")
    return v


def _matrix(value, shape, fieldname):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(fieldname, "expected a numeric array") from None
    if arr.size != shape[0] * shape[1]:
        raise ValidationError(fieldname, f"expected {shape[0]}x{shape[1]} entries")
    arr = arr.reshape(shape)  # flat input is row-major
    if not np.all(np.isfinite(arr)):
        raise ValidationError(fieldname, "entries must be finite")
    return arr


def _vector(value, n, fieldname):
    return _matrix(value, (n, 1), fieldname).ravel()


def _require(doc, key, where):
    if not isinstance(doc, dict) or key not in doc:
        raise ValidationError(f"{where}.{key}" if where else key, "missing")
    return doc[key]


def parse_document(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", 1, 1)
    return doc


def _parse_channel(raw, where):
    if not isinstance(raw, dict):
        raise ValidationError(where, "expected an object")
    bias = _num(raw.get("bias", 0.0), f"{where}.bias")
    terms = []
    for k, t in enumerate(raw.get("terms", [])):
        tw = f"{where}.terms[{k}]"
        terms.append(SineTerm(_num(_require(t, "amp", tw), f"{tw}.amp"),
                              _num(_require(t, "freq", tw), f"{tw}.freq", positive=True),
                              _num(t.get("phase", 0.0), f"{tw}.phase")))
    try:
        ch = DisturbanceChannel(bias, tuple(terms))
    except ValueError as exc:
        raise ValidationError(where, str(exc)) from None
    override = None
    if "M" in raw or "N" in raw:
        if "M" not in raw or "N" not in raw:
            raise ValidationError(where, "M and N must be given together")
        M = np.atleast_2d(np.array(raw["M"], dtype=float))
        r = int(round(math.sqrt(M.size)))
        override = (_matrix(raw["M"], (r, r), f"{where}.M"), _vector(raw["N"], r, f"{where}.N"))
    return ch, override


def _parse_agent(raw, i):
    where = f"agents[{i}]"
    theta = _vector(_require(raw, "Theta", where), 5, f"{where}.Theta")
    grav = _num(raw.get("gravity", DEFAULT_GRAVITY), f"{where}.gravity")
    params = ArmParameters(theta, grav)
    lo, _ = inertia_bounds(params)
    if not lo > 0:
        raise ValidationError(f"{where}.Theta", "inertia matrix is not positive definite")
    dist = _require(raw, "disturbance", where)
    if not isinstance(dist, list) or len(dist) != N_Q:
        raise ValidationError(f"{where}.disturbance", f"need one channel per joint ({N_Q})")
    parsed = [_parse_channel(c, f"{where}.disturbance[{s}]") for s, c in enumerate(dist)]
    omega0 = raw.get("omega_hat0")
    return AgentSpec(
        params=params,
        channels=[p[0] for p in parsed],
        q0=_vector(raw.get("q0", [0.0] * N_Q), N_Q, f"{where}.q0"),
        qdot0=_vector(raw.get("qdot0", [0.0] * N_Q), N_Q, f"{where}.qdot0"),
        S0=_matrix(_require(raw, "S0", where), (N_Q, N_Q), f"{where}.S0"),
        eta0=_vector(_require(raw, "eta0", where), N_Q, f"{where}.eta0"),
        overrides=[p[1] for p in parsed],
        omega_hat0=None if omega0 is None else np.array(omega0, dtype=float),
    )


def graph_from_document(document) -> DirectedGraph:
    """Only the communication graph of a scenario, without any synthesis."""
    doc = parse_document(document) if isinstance(document, str) else document
    graph_raw = _require(doc, "graph", "")
    agents_raw = _require(doc, "agents", "")
    if not isinstance(agents_raw, list) or not agents_raw:
        raise ValidationError("agents", "expected a non-empty list")
    n = len(agents_raw)
    n_decl = graph_raw.get("n_agents", n)
    if n_decl != n:
        raise ValidationError("graph.n_agents", f"declares {n_decl} agents, {n} given")
    edges = graph_raw.get("edges", [])
    try:
        return DirectedGraph.from_edges(n, [tuple(e) for e in edges])
    except (ValueError, TypeError) as exc:
        raise ValidationError("graph.edges", str(exc)) from None


def load_scenario(document) -> Scenario:
    """Validate a scenario document (JSON text or an already parsed dict)."""
    doc = parse_document(document) if isinstance(document, str) else copy.deepcopy(document)

    g = graph_from_document(doc)
    agents_raw = doc["agents"]

    gr = _require(doc, "gains", "")
    K_raw = _require(gr, "K", "gains")
    K = (np.eye(N_Q) * _num(K_raw, "gains.K", positive=True)
         if isinstance(K_raw, (int, float)) else _matrix(K_raw, (N_Q, N_Q), "gains.K"))
    lam_raw = _require(gr, "Lambda", "gains")
    lam = (_num(lam_raw, "gains.Lambda", positive=True) if isinstance(lam_raw, (int, float))
           else np.array(lam_raw, dtype=float))
    gains = GainSet(_num(_require(gr, "mu1", "gains"), "gains.mu1", positive=True),
                    _num(_require(gr, "mu2", "gains"), "gains.mu2", positive=True),
                    _num(_require(gr, "alpha", "gains"), "gains.alpha", positive=True),
                    K, lam)

    ir = _require(doc, "integrator", "")
    dt = _num(_require(ir, "dt", "integrator"), "integrator.dt", positive=True)
    t_end = _num(_require(ir, "t_end", "integrator"), "integrator.t_end", nonneg=True)
    stride = ir.get("output_stride", 1)
    if isinstance(stride, bool) or not isinstance(stride, int) or stride < 1:
        raise ValidationError("integrator.output_stride", "must be a positive integer")
    if t_end != 0 and t_end < dt:
        raise ValidationError("integrator.t_end", "must be zero or at least dt")

    agents = [_parse_agent(a, i) for i, a in enumerate(agents_raw)]
    sc = Scenario(doc.get("name", "scenario"), g, agents, gains,
                  IntegratorSettings(dt, t_end, stride), doc.get("outputs", {}), doc)
    _synthesize(sc)
    return sc


def load_scenario_file(path, overrides=()) -> Scenario:
    text = Path(path).read_text()
    if overrides:
        doc = apply_overrides(parse_document(text), overrides)
        return load_scenario(doc)
    return load_scenario(text)


def _synthesize(sc: Scenario):
    sc.analysis = analyze(sc.graph)
    if not sc.analysis.has_spanning_tree:
        raise NoSpanningTree("communication graph has no spanning tree")
    for i, a in enumerate(sc.agents):
        models = []
        for s, (ch, ov) in enumerate(zip(a.channels, a.overrides)):
            try:
                models.append(synthesize_channel(ch, *(ov or (None, None))))
            except (ValueError, ArithmeticError) as exc:
                raise ValidationError(f"agents[{i}].disturbance[{s}]", str(exc)) from None
        comp = assemble_agent(models)
        sc.compensators.append(comp)
        sc.agent_gains.append(sc.gains.for_agent(comp.l))
        if a.omega_hat0 is not None and a.omega_hat0.shape != (n_params(comp.l),):
            raise ValidationError(f"agents[{i}].omega_hat0",
                                  f"needs {n_params(comp.l)} entries")
        sc.inertia_bounds.append(inertia_bounds(a.params))

    an = sc.analysis
    gm = s_star([a.S0 for a in sc.agents], an.left_null_vector, sc.gains.mu1, an.lambda1)
    sc.group_model = gm
    s_norm = float(np.linalg.norm(gm.S_star, 2))
    if sc.n_agents > 1:
        sc.gain_report = check_gain_conditions(sc.gains.mu1, sc.gains.mu2,
                                               an.laplacian_norm, an.lambda1, s_norm)
        if not sc.gain_report.mu1_ok:
            sc.warnings.append(f"mu1={sc.gains.mu1} below sufficient bound "
                               f"{sc.gain_report.mu1_bound:.4g}")
        if not sc.gain_report.mu2_ok:
            sc.warnings.append(f"mu2={sc.gains.mu2} not above sufficient bound "
                               f"{sc.gain_report.mu2_bound:.4g}")
    if unstable_group_model(gm.S_star):
        sc.warnings.append("group model has an eigenvalue with positive real part; "
                           "the consensus trajectory grows without bound")
    for w in sc.warnings:
        log.warning(w)


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``dotted.path=value`` patches.

    List elements are addressed by index, either ``agents.0.q0`` or
    ``agents[0].q0``. Intermediate keys must already exist.
    """
    doc = copy.deepcopy(doc)
    for item in overrides:
        if "=" not in item:
            raise ValidationError(item, "override must look like key=value")
        path, value = item.split("=", 1)
        path = re.sub(r"\[(\d+)\]", r".\1", path.strip())
        keys = path.split(".")
        node = doc
        try:
            for key in keys[:-1]:
                node = node[int(key)] if isinstance(node, list) else node[key]
            last = keys[-1]
            if isinstance(node, list):
                node[int(last)] = _parse_value(value)
            elif isinstance(node, dict):
                node[last] = _parse_value(value)
            else:
                raise TypeError
        except (KeyError, IndexError, ValueError, TypeError):
            raise ValidationError(path, "override path does not exist") from None
    return doc


def permute_document(doc: dict, perm) -> dict:
    """Relabel agents so that new agent ``k`` is old agent ``perm[k]``."""
    doc = copy.deepcopy(doc)
    inv = {old: new for new, old in enumerate(perm)}
    doc["agents"] = [doc["agents"][old] for old in perm]
    edges = []
    for e in doc["graph"].get("edges", []):
        e = list(e)
        e[0] = inv[e[0] - 1] + 1
        e[1] = inv[e[1] - 1] + 1
        edges.append(e)
    doc["graph"]["edges"] = edges
    return doc


# -------------------------------------------------------------- dynamics --

def _pad(arrays, shape):
    out = np.zeros((len(arrays),) + shape)
    for i, a in enumerate(arrays):
        a = np.asarray(a, dtype=float)
        out[(i,) + tuple(slice(0, s) for s in a.shape)] = a
    return out


def pack_kernel_data(sc: Scenario):
    """Arrays consumed by the compiled network kernel.

    The controller half reads only M, N, A and the constant E blocks; the
    plant half carries the true parameters and disturbances that drive the
    physical arms.
    """
    comps = sc.compensators
    nm = max(c.n_i for c in comps)
    lm = max(c.l for c in comps)
    pm = n_params(lm)
    km = max(1, max(len(ch.terms) for a in sc.agents for ch in a.channels))
    lam = []
    for g, c in zip(sc.agent_gains, comps):
        full = np.zeros(pm)
        # keep each block at the position the agent's own layout expects
        full[:n_params(c.l)] = 1.0 / g.Lambda
        lam.append(full)
    bias = np.array([[ch.bias for ch in a.channels] for a in sc.agents])
    amp = np.zeros((sc.n_agents, N_Q, km))
    freq = np.zeros_like(amp)
    phase = np.zeros_like(amp)
    for i, a in enumerate(sc.agents):
        for s, ch in enumerate(a.channels):
            for k, t in enumerate(ch.terms):
                amp[i, s, k], freq[i, s, k], phase[i, s, k] = t.amp, t.freq, t.phase
    layout = sc.layout
    data = (
        np.ascontiguousarray(sc.graph.weights),
        np.array([a.params.theta for a in sc.agents]),
        np.array([a.params.gravity for a in sc.agents]),
        _pad([c.M for c in comps], (nm, nm)),
        _pad([c.N for c in comps], (nm, N_Q)),
        _pad([c.A for c in comps], (N_Q, nm)),
        _pad([c.E_stack for c in comps], (lm, N_Q, nm)),
        np.array([g.K for g in sc.agent_gains]),
        np.array(lam),
        bias, amp, freq, phase,
        np.array([c.n_i for c in comps], dtype=np.int64),
        np.array([c.l for c in comps], dtype=np.int64),
        np.array(layout.base, dtype=np.int64),
    )
    params = (float(sc.gains.mu1), float(sc.gains.mu2), float(sc.gains.alpha))
    return data, params


def global_rhs(sc: Scenario, t: float, x, _packed=None) -> np.ndarray:
    data, params = _packed or pack_kernel_data(sc)
    x = np.ascontiguousarray(x, dtype=float)
    if x.shape != (sc.layout.dim,):
        raise ValueError(f"state must have length {sc.layout.dim}")
    out, _ = _k.network_rhs(float(t), x, data, params)
    return out


def diagnostics(sc: Scenario, t: float, x, _packed=None) -> np.ndarray:
    """Per-agent ``(tau, s, eta_dot, d)`` as an ``(N, 8)`` array."""
    data, params = _packed or pack_kernel_data(sc)
    _, diag = _k.network_rhs(float(t), np.ascontiguousarray(x, dtype=float), data, params)
    return diag


def ode_system(sc: Scenario) -> OdeSystem:
    packed = pack_kernel_data(sc)
    return OdeSystem(sc.layout.dim, lambda t, x: global_rhs(sc, t, x, packed))


# ------------------------------------------------------------------- run --

@dataclass
class RunOutput:
    t: np.ndarray
    states: np.ndarray
    diag: np.ndarray
    layout: StateLayout
    completed: bool = True
    error: NonFiniteState | None = None

    @property
    def n_agents(self):
        return self.layout.n_agents

    def _field(self, name):
        return np.stack([self.states[:, self.layout.slice(i, name)]
                         for i in range(self.n_agents)], axis=1)

    @property
    def q(self):
        return self._field("q")

    @property
    def qd(self):
        return self._field("qd")

    @property
    def eta(self):
        return self._field("eta")

    @property
    def S(self):
        return self._field("S").reshape(len(self.t), self.n_agents, N_Q, N_Q).transpose(0, 1, 3, 2)

    @property
    def tau(self):
        return self.diag[:, :, 0:2]

    @property
    def s(self):
        return self.diag[:, :, 2:4]

    @property
    def eta_dot(self):
        return self.diag[:, :, 4:6]

    @property
    def e_norm(self):
        return np.linalg.norm(self.q - self.eta, axis=-1)

    @property
    def edot_norm(self):
        return np.linalg.norm(self.qd - self.eta_dot, axis=-1)

    @property
    def s_norm(self):
        return np.linalg.norm(self.s, axis=-1)

    @staticmethod
    def _pairwise(X):
        d = X[:, :, None, :] - X[:, None, :, :]
        return np.sqrt((d ** 2).sum(axis=-1)).max(axis=(1, 2))

    @property
    def S_disagree(self):
        return self._pairwise(self._field("S"))

    @property
    def eta_disagree(self):
        return self._pairwise(self.eta)

    @property
    def q_disagree(self):
        return self._pairwise(self.q)

    @property
    def qd_disagree(self):
        return self._pairwise(self.qd)

    def check(self):
        if self.error is not None:
            raise self.error
        return self


def resolve_threads(threads=None) -> int:
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def run(sc: Scenario, threads=None, parallel=None, stride=None, t_end=None,
        dt=None) -> RunOutput:
    """Integrate the closed loop with fixed-step RK4.

    ``stride``, ``t_end`` and ``dt`` override the scenario's integrator
    settings. ``parallel`` forces (or forbids) the per-agent threaded kernel;
    by default it is used only for large networks. Either path gives
    bit-identical results.
    """
    dt = sc.integrator.dt if dt is None else float(dt)
    t_end = sc.integrator.t_end if t_end is None else float(t_end)
    stride = sc.integrator.output_stride if stride is None else int(stride)
    n_steps = int(math.floor(t_end / dt + 1e-9))
    n_rows = n_steps // stride + 1
    layout = sc.layout
    threads = resolve_threads(threads)
    if parallel is None:
        parallel = threads > 1 and sc.n_agents >= PARALLEL_MIN_AGENTS

    data, params = pack_kernel_data(sc)
    x0 = sc.initial_state()
    states = np.full((n_rows, layout.dim), np.nan)
    diags = np.full((n_rows, sc.n_agents, 8), np.nan)
    if parallel:
        import numba
        if "NUMBA_THREADING_LAYER" not in os.environ:
            # the per-agent split is a single flat prange; the built-in pool
            # avoids depending on the installed TBB/OpenMP versions
            numba.config.THREADING_LAYER = "workqueue"
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
        done = _k.rk4_loop_parallel(x0, n_steps, dt, stride, data, params, states, diags)
    else:
        done = _k.rk4_loop(x0, n_steps, dt, stride, data, params, states, diags)

    t = np.arange(n_rows) * (stride * dt)
    if done == n_steps:
        return RunOutput(t, states, diags, layout)
    rows = done // stride + 1
    err = _locate_divergence(sc, states[rows - 1], (rows - 1) * stride, done, dt,
                            (data, params))
    return RunOutput(t[:rows], states[:rows], diags[:rows], layout, False, err)


def _locate_divergence(sc, x, step, bad_step, dt, packed):
    """Replay from the last stored state to name the first non-finite entry."""
    layout = sc.layout
    sys = OdeSystem(layout.dim, lambda t, y: global_rhs(sc, t, y, packed))
    with np.errstate(all="ignore"):
        for k in range(step, bad_step + 1):
            try:
                x = rk4_step(sys, k * dt, x, dt)
            except NonFiniteState as exc:
                agent, comp = (None, None) if exc.index is None else layout.locate(exc.index)
                return NonFiniteState(t=(k + 1) * dt, agent=agent, component=comp)
    return NonFiniteState(t=(bad_step + 1) * dt)


# --------------------------------------------------------------- outputs --

def csv_columns(n_agents):
    cols = ["t"]
    for name in ("q", "qd", "eta"):
        cols += [f"{name}[{i}][{k}]" for i in range(1, n_agents + 1) for k in range(1, N_Q + 1)]
    for name in ("e_norm", "edot_norm", "s_norm"):
        cols += [f"{name}[{i}]" for i in range(1, n_agents + 1)]
    cols += [f"tau[{i}][{k}]" for i in range(1, n_agents + 1) for k in range(1, N_Q + 1)]
    cols += ["S_disagree", "eta_disagree"]
    return cols


def output_table(out: RunOutput) -> np.ndarray:
    n = len(out.t)
    parts = [out.t[:, None], out.q.reshape(n, -1), out.qd.reshape(n, -1),
             out.eta.reshape(n, -1), out.e_norm, out.edot_norm, out.s_norm,
             out.tau.reshape(n, -1), out.S_disagree[:, None], out.eta_disagree[:, None]]
    return np.hstack(parts)


def write_csv(out: RunOutput, path_or_buffer):
    table = output_table(out)
    buf = io.StringIO()
    buf.write(",".join(csv_columns(out.n_agents)) + "\n")
    for row in table:
        buf.write(",".join(format(v, ".17g") for v in row) + "\n")
    text = buf.getvalue()
    if hasattr(path_or_buffer, "write"):
        path_or_buffer.write(text)
    else:
        Path(path_or_buffer).write_text(text)
    return text


def gnuplot_script(n_agents, csv_name="trace.csv"):
    cols = csv_columns(n_agents)
    idx = {c: k + 1 for k, c in enumerate(cols)}
    lines = [
        "# Error norms and observer trajectories; run with: gnuplot plots.gp",
        "set datafile separator ','",
        "set terminal pngcairo size 1200,900",
        "set xlabel 't [s]'",
        "set grid",
        "set output 'errors.png'",
        "set multiplot layout 2,1",
        "set ylabel '||e_i||'",
    ]
    plot = lambda name: ", ".join(
        f"'{csv_name}' using 1:{idx[name.format(i=i)]} with lines title '{name.format(i=i)}'"
        for i in range(1, n_agents + 1))
    lines.append("plot " + plot("e_norm[{i}]"))
    lines.append("set ylabel '||de_i/dt||'")
    lines.append("plot " + plot("edot_norm[{i}]"))
    lines.append("unset multiplot")
    lines.append("set output 'observer.png'")
    lines.append("set multiplot layout 3,1")
    for k in range(1, N_Q + 1):
        lines.append(f"set ylabel 'eta_i[{k}]'")
        lines.append("plot " + plot("eta[{i}]" + f"[{k}]"))
    lines.append("set ylabel 'max ||S_i - S_j||_F'")
    lines.append("set logscale y")
    lines.append(f"plot '{csv_name}' using 1:{idx['S_disagree']} with lines title 'S_disagree'")
    lines.append("unset logscale y")
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"


def settling_time(t, values, threshold):
    """First time after which ``values`` stays at or below ``threshold``."""
    above = np.flatnonzero(np.asarray(values) > threshold)
    if above.size == 0:
        return float(t[0]) if len(t) else 0.0
    if above[-1] == len(t) - 1:
        return None
    return float(t[above[-1] + 1])


def metrics(out: RunOutput, threshold=1e-2) -> dict:
    if len(out.t) == 0:
        return {"completed": False}
    e = out.e_norm.max(axis=1)
    ed = out.edot_norm.max(axis=1)
    s = out.s_norm.max(axis=1)
    qdis = out.q_disagree
    qddis = out.qd_disagree
    summary = {
        "completed": out.completed,
        "t_final": float(out.t[-1]),
        "final_errors": {
            "max_e_norm": float(e[-1]),
            "max_edot_norm": float(ed[-1]),
            "max_s_norm": float(s[-1]),
            "max_q_disagreement": float(qdis[-1]),
            "max_qd_disagreement": float(qddis[-1]),
            "S_disagreement": float(out.S_disagree[-1]),
            "eta_disagreement": float(out.eta_disagree[-1]),
        },
        "settling_threshold": threshold,
        "settling_times": {
            "e_norm": settling_time(out.t, e, threshold),
            "edot_norm": settling_time(out.t, ed, threshold),
            "s_norm": settling_time(out.t, s, threshold),
            "q_disagreement": settling_time(out.t, qdis, threshold),
            "qd_disagreement": settling_time(out.t, qddis, threshold),
        },
        "max_torque": float(np.abs(out.tau).max()),
        "S_disagreement_curve": {"t": out.t.tolist(), "value": out.S_disagree.tolist()},
    }
    if out.error is not None:
        summary["error"] = str(out.error)
    return summary


def write_outputs(sc: Scenario, out: RunOutput, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_name = sc.outputs.get("csv", "trace.csv")
    write_csv(out, out_dir / csv_name)
    summary = metrics(out)
    summary["scenario"] = sc.name
    summary["warnings"] = list(sc.warnings)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    (out_dir / "plots.gp").write_text(gnuplot_script(out.n_agents, csv_name))
    return summary


__all__ = [
    "AgentSpec", "GainSet", "IntegratorSettings", "StateLayout", "Scenario", "RunOutput",
    "load_scenario", "load_scenario_file", "graph_from_document", "apply_overrides", "permute_document",
    "global_rhs", "diagnostics", "ode_system", "run", "metrics", "write_csv",
    "write_outputs", "gnuplot_script", "csv_columns", "settling_time", "BUNDLED_SCENARIO",
    "LagrangeSwarmError",
]
