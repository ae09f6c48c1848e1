"""Directed communication topology and its Laplacian spectrum.

Edge convention: ``weights[i, j] = a_ij > 0`` means agent ``i`` receives
information from agent ``j`` (edge ``j -> i``). The column index is always
the source.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NoSpanningTree

RANK_TOL = 1e-9
REAL_PART_TOL = 1e-9


@dataclass(frozen=True)
class DirectedGraph:
    n_agents: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (self.n_agents, self.n_agents) or self.n_agents < 1:
            raise DimensionMismatch(
                f"weights must be {self.n_agents}x{self.n_agents}, got {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        if np.any(np.diag(w) != 0):
            raise ValueError("self-loops are not allowed")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_edges(cls, n_agents, edges):
        """Build from ``(source, target[, weight])`` triples with 1-based indices."""
        w = np.zeros((n_agents, n_agents))
        for edge in edges:
            if len(edge) == 2:
                src, dst = edge
                weight = 1.0
            else:
                src, dst, weight = edge
            if not (1 <= src <= n_agents and 1 <= dst <= n_agents):
                raise ValueError(f"edge {edge!r} references an unknown agent")
            if src == dst:
                raise ValueError(f"edge {edge!r} is a self-loop")
            w[dst - 1, src - 1] += float(weight)
        return cls(n_agents, w)

    def neighbors(self, i):
        """In-neighbours of agent ``i`` (0-based), in increasing index order."""
        return [int(j) for j in np.flatnonzero(self.weights[i])]

    def edges(self):
        """Edges as 1-based ``(source, target, weight)`` triples."""
        out = []
        for i, j in zip(*np.nonzero(self.weights)):
            out.append((int(j) + 1, int(i) + 1, float(self.weights[i, j])))
        return sorted(out)

    def permuted(self, perm):
        """Relabel agents: new agent ``k`` is old agent ``perm[k]``."""
        p = np.asarray(perm)
        return DirectedGraph(self.n_agents, self.weights[np.ix_(p, p)])


@dataclass(frozen=True)
class LaplacianAnalysis:
    laplacian: np.ndarray
    has_spanning_tree: bool
    left_null_vector: np.ndarray | None
    lambda1: float | None
    laplacian_norm: float
    eigenvalues: np.ndarray


def build_laplacian(g: DirectedGraph) -> np.ndarray:
    w = g.weights
    return np.diag(w.sum(axis=1)) - w


def check_spanning_tree(g: DirectedGraph) -> bool:
    """True iff some vertex reaches every vertex along directed edges."""
    n = g.n_agents
    # out[j] lists targets i with a_ij > 0
    out = [np.flatnonzero(g.weights[:, j]).tolist() for j in range(n)]
    for root in range(n):
        seen = {root}
        queue = deque([root])
        while queue:
            v = queue.popleft()
            for nxt in out[v]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        if len(seen) == n:
            return True
    return False


def _nullity(L):
    s = np.linalg.svd(L, compute_uv=False)
    tol = RANK_TOL * (s[0] if s.size else 0.0)
    return int(np.sum(s <= tol))


def left_null_vector(L) -> np.ndarray:
    """Normalized u with ``u @ L = 0`` and ``sum(u) = 1``."""
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise DimensionMismatch(f"Laplacian must be square, got {L.shape}")
    if _nullity(L) != 1:
        raise NoSpanningTree("zero is not a simple eigenvalue of the Laplacian")
    _, _, vh = np.linalg.svd(L.T)
    u = vh[-1]
    total = u.sum()
    if abs(total) < 1e-12:
        raise NoSpanningTree("left null vector has zero sum")
    u = u / total
    # one step of refinement against the normalization constraint
    aug = np.vstack([L.T, np.ones((1, L.shape[0]))])
    rhs = np.zeros(L.shape[0] + 1)
    rhs[-1] = 1.0
    resid = rhs - aug @ u
    u = u + np.linalg.lstsq(aug, resid, rcond=None)[0]
    return u


def spectral_gap(L) -> tuple[float, float]:
    """Return ``(lambda1, ||L||_2)``.

    ``lambda1`` is the smallest real part among eigenvalues with positive real
    part. A single agent has no disagreement modes and gets ``inf``.
    """
    L = np.asarray(L, dtype=float)
    norm = float(np.linalg.norm(L, 2)) if L.size else 0.0
    if L.shape[0] == 1:
        return math.inf, norm
    if _nullity(L) != 1:
        raise NoSpanningTree("zero is not a simple eigenvalue of the Laplacian")
    re = np.linalg.eigvals(L).real
    pos = re[re > REAL_PART_TOL]
    if pos.size != L.shape[0] - 1:
        raise NoSpanningTree("nonzero eigenvalues must all have positive real part")
    return float(pos.min()), norm


def analyze(g: DirectedGraph) -> LaplacianAnalysis:
    L = build_laplacian(g)
    eig = np.linalg.eigvals(L)
    tree = check_spanning_tree(g)
    norm = float(np.linalg.norm(L, 2))
    if tree:
        u = left_null_vector(L)
        lam1, _ = spectral_gap(L)
    else:
        u, lam1 = None, None
    return LaplacianAnalysis(L, tree, u, lam1, norm, eig)
