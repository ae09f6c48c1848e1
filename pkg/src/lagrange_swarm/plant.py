"""Two-link planar arm in Euler-Lagrange form.

Parameter vector ``Theta = (a1, a2, a3, a4, a5)``; every regressor below uses
this column order. All regressors are exact identities in ``Theta``:

    Y(q, qd, v, a) @ Theta == M(q) a + C(q, qd) v + G(q)
    L(q, s) @ Theta        == M(q) s
    Cs(q, qd, s) @ Theta   == C(q, qd) s
    Mdot_s(q, qd, s) @ Theta == dM/dt s
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from .errors import DimensionMismatch, SingularMass

DEFAULT_GRAVITY = 9.81


def _vec2(x, name):
    x = np.ascontiguousarray(x, dtype=float)
    if x.shape != (2,):
        raise DimensionMismatch(f"{name} must have shape (2,), got {x.shape}")
    return x


@dataclass(frozen=True)
class ArmParameters:
    theta: np.ndarray
    gravity: float = DEFAULT_GRAVITY

    def __post_init__(self):
        th = np.ascontiguousarray(self.theta, dtype=float)
        if th.shape != (5,):
            raise DimensionMismatch(f"Theta must have 5 entries, got {th.shape}")
        th.setflags(write=False)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "gravity", float(self.gravity))


@dataclass
class PlantState:
    q: np.ndarray = field(default_factory=lambda: np.zeros(2))
    qdot: np.ndarray = field(default_factory=lambda: np.zeros(2))


def mass_matrix(p: ArmParameters, q) -> np.ndarray:
    return _k.mass_matrix(p.theta, _vec2(q, "q"))


def mass_matrix_dot(p: ArmParameters, q, qdot) -> np.ndarray:
    return _k.mass_matrix_dot(p.theta, _vec2(q, "q"), _vec2(qdot, "qdot"))


def coriolis_matrix(p: ArmParameters, q, qdot) -> np.ndarray:
    return _k.coriolis_matrix(p.theta, _vec2(q, "q"), _vec2(qdot, "qdot"))


def gravity_vector(p: ArmParameters, q) -> np.ndarray:
    return _k.gravity_vector(p.theta, p.gravity, _vec2(q, "q"))


def regressor_Y(q, qdot, v, a, gravity=DEFAULT_GRAVITY) -> np.ndarray:
    """Regressor of ``M(q) a + C(q, qdot) v + G(q)``.

    ``v`` is the velocity-like slot multiplied by C and ``a`` the
    acceleration-like slot multiplied by M.
    """
    return _k.regressor_Y(_vec2(q, "q"), _vec2(qdot, "qdot"), _vec2(v, "v"),
                          _vec2(a, "a"), float(gravity))


def regressor_L(q, s) -> np.ndarray:
    return _k.regressor_L(_vec2(q, "q"), _vec2(s, "s"))


def regressor_Cs(q, qdot, s) -> np.ndarray:
    return _k.regressor_Cs(_vec2(q, "q"), _vec2(qdot, "qdot"), _vec2(s, "s"))


def regressor_Mdot_s(q, qdot, s) -> np.ndarray:
    return _k.regressor_Mdot_s(_vec2(q, "q"), _vec2(qdot, "qdot"), _vec2(s, "s"))


def plant_rhs(p: ArmParameters, state: PlantState, tau, d):
    """Return ``(qdot, qddot)`` from ``M qdd + C qd + G = tau + d``."""
    q = _vec2(state.q, "q")
    qd = _vec2(state.qdot, "qdot")
    Mq = _k.mass_matrix(p.theta, q)
    if not np.linalg.det(Mq) > 0:
        raise SingularMass(f"inertia matrix not positive definite at q={q}")
    qdd = _k.plant_accel(p.theta, p.gravity, q, qd, _vec2(tau, "tau"), _vec2(d, "d"))
    return qd.copy(), qdd


def kinetic_energy(p: ArmParameters, q, qdot) -> float:
    qd = _vec2(qdot, "qdot")
    return 0.5 * float(qd @ mass_matrix(p, q) @ qd)


def inertia_bounds(p: ArmParameters, n_grid=73):
    """Extreme eigenvalues of M(q) over a grid of the elbow angle.

    M depends on q only through the elbow angle, so a 1-D grid over one
    period covers every configuration.
    """
    lo, hi = np.inf, -np.inf
    for th2 in np.linspace(-np.pi, np.pi, n_grid):
        ev = np.linalg.eigvalsh(mass_matrix(p, np.array([0.0, th2])))
        lo = min(lo, ev[0])
        hi = max(hi, ev[-1])
    return float(lo), float(hi)
