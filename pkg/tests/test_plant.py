import copy
import math

import numpy as np
import pytest

from lagrange_swarm import numerics, plant
from lagrange_swarm.errors import SingularMass, ValidationError
from lagrange_swarm.sim import load_scenario
from lagrange_swarm.verify import direct_C, direct_G, direct_M, direct_Mdot

THETA1 = np.array([0.64, 1.10, 0.08, 0.64, 0.32])
P1 = plant.ArmParameters(THETA1)


def test_mass_matrix_examples():
    assert np.allclose(plant.mass_matrix(P1, (0, 0)), [[1.90, 1.18], [1.18, 1.10]])
    M = plant.mass_matrix(P1, (0.3, math.pi / 2))
    assert M[0, 1] == pytest.approx(THETA1[1], abs=1e-15)
    p0 = plant.ArmParameters([0.5, 0.7, 0.0, 0.1, 0.1])
    assert np.array_equal(plant.mass_matrix(p0, (0, 0)), plant.mass_matrix(p0, (1, 2)))


def test_coriolis_examples(rng):
    assert np.all(plant.coriolis_matrix(P1, (0.4, 1.1), (0, 0)) == 0)
    assert np.all(plant.coriolis_matrix(P1, (0.4, 0.0), (1.3, -0.2)) == 0)
    for _ in range(100):
        q, qd, x = rng.uniform(-3, 3, (3, 2))
        S = plant.mass_matrix_dot(P1, q, qd) - 2 * plant.coriolis_matrix(P1, q, qd)
        assert abs(x @ S @ x) < 1e-12


def test_mass_matrix_dot_matches_finite_difference(rng):
    for _ in range(20):
        q, qd = rng.uniform(-3, 3, (2, 2))
        h = 1e-6
        fd = (plant.mass_matrix(P1, q + h * qd) - plant.mass_matrix(P1, q - h * qd)) / (2 * h)
        assert np.abs(plant.mass_matrix_dot(P1, q, qd) - fd).max() < 1e-8


def test_gravity_examples():
    assert np.allclose(plant.gravity_vector(P1, (math.pi / 2, 0.0)), 0, atol=1e-15)
    assert np.allclose(plant.gravity_vector(P1, (0, 0)), (9.4176, 3.1392), atol=1e-12)
    p = plant.ArmParameters([1, 1, 0.1, 0, 0])
    assert np.all(plant.gravity_vector(p, (0.3, 0.2)) == 0)


def test_regressor_identities(rng):
    worst = 0.0
    for _ in range(1000):
        th = rng.uniform(-2, 2, 5)
        q, qd, v, a, s = rng.uniform(-3, 3, (5, 2))
        M, C = direct_M(th, q), direct_C(th, q, qd)
        worst = max(worst,
                    np.abs(plant.regressor_Y(q, qd, v, a) @ th - (M @ a + C @ v + direct_G(th, q))).max(),
                    np.abs(plant.regressor_L(q, s) @ th - M @ s).max(),
                    np.abs(plant.regressor_Cs(q, qd, s) @ th - C @ s).max(),
                    np.abs(plant.regressor_Mdot_s(q, qd, s) @ th - direct_Mdot(th, q, qd) @ s).max())
    assert worst < 1e-11


def test_library_matrices_agree_with_direct_formulas(rng):
    for _ in range(100):
        th = rng.uniform(0.05, 2, 5)
        p = plant.ArmParameters(th)
        q, qd = rng.uniform(-3, 3, (2, 2))
        assert np.allclose(plant.mass_matrix(p, q), direct_M(th, q), atol=1e-14)
        assert np.allclose(plant.coriolis_matrix(p, q, qd), direct_C(th, q, qd), atol=1e-14)
        assert np.allclose(plant.gravity_vector(p, q), direct_G(th, q), atol=1e-13)


def test_regressor_Y_structure():
    g = 9.81
    Y = plant.regressor_Y((0, 0), (0, 0), (0, 0), (0, 0))
    expected = np.zeros((2, 5))
    expected[0, 3] = expected[0, 4] = expected[1, 4] = g
    assert np.allclose(Y, expected)
    Y = plant.regressor_Y((0, 0), (0, 0), (0, 0), (1, 0))
    mass = Y - expected
    assert np.allclose(mass, [[1, 1, 2, 0, 0], [0, 1, 1, 0, 0]])


def test_regressor_trivial_zeros(rng):
    q, qd = rng.uniform(-3, 3, (2, 2))
    for R in (plant.regressor_L(q, (0, 0)), plant.regressor_Cs(q, qd, (0, 0)),
              plant.regressor_Mdot_s(q, qd, (0, 0))):
        assert np.all(R == 0)
    assert np.all(plant.regressor_Mdot_s(q, (qd[0], 0.0), (1.0, 2.0)) == 0)


def test_plant_rhs_force_balance(rng):
    d = np.array([0.3, -1.2])
    for _ in range(20):
        q, qd = rng.uniform(-3, 3, (2, 2))
        st = plant.PlantState(q, qd)
        tau = plant.coriolis_matrix(P1, q, qd) @ qd + plant.gravity_vector(P1, q) - d
        vel, acc = plant.plant_rhs(P1, st, tau, d)
        assert np.array_equal(vel, qd)
        assert np.abs(acc).max() < 1e-12


def test_plant_rhs_gravity_sag():
    q = np.array([0.2, -0.4])
    _, acc = plant.plant_rhs(P1, plant.PlantState(q, np.zeros(2)), np.zeros(2), np.zeros(2))
    expected = -np.linalg.solve(plant.mass_matrix(P1, q), plant.gravity_vector(P1, q))
    assert np.allclose(acc, expected, atol=1e-14)


def test_plant_rhs_singular_mass():
    bad = plant.ArmParameters.__new__(plant.ArmParameters)
    object.__setattr__(bad, "theta", np.array([0.0, 0.0, 0.0, 0.0, 0.0]))
    object.__setattr__(bad, "gravity", 9.81)
    with pytest.raises(SingularMass):
        plant.plant_rhs(bad, plant.PlantState((0, 0), (0, 0)), (0, 0), (0, 0))


def test_kinetic_energy_conserved_without_gravity():
    p = plant.ArmParameters([0.64, 1.10, 0.08, 0.0, 0.0])

    def rhs(t, x):
        vel, acc = plant.plant_rhs(p, plant.PlantState(x[:2], x[2:]), np.zeros(2), np.zeros(2))
        return np.concatenate([vel, acc])

    x0 = np.array([0.1, 0.7, 1.5, -2.0])
    sys_ = numerics.OdeSystem(4, rhs)
    drift = []
    for dt in (0.01, 0.005):
        traj = numerics.integrate(sys_, x0, dt, int(round(5 / dt)))
        ke = [plant.kinetic_energy(p, x[:2], x[2:]) for x in traj]
        drift.append(abs(ke[-1] - ke[0]))
    assert drift[0] < 1e-6
    assert drift[0] / drift[1] > 10


def test_inertia_bounds_bundled(ref_scenario):
    for a, (lo, hi) in zip(ref_scenario.agents, ref_scenario.inertia_bounds):
        assert 0 < lo < hi
        grid = np.linspace(-np.pi, np.pi, 181)
        eig = np.array([np.linalg.eigvalsh(plant.mass_matrix(a.params, (0.0, g))) for g in grid])
        assert eig.min() >= lo - 1e-3 and eig.max() <= hi + 1e-3


def test_indefinite_inertia_detected_and_rejected_by_loader(ref_doc):
    lo, _ = plant.inertia_bounds(plant.ArmParameters([0.64, -5.0, 0.08, 0.64, 0.32]))
    assert lo < 0
    doc = copy.deepcopy(ref_doc)
    doc["agents"][0]["Theta"] = [0.64, -5.0, 0.08, 0.64, 0.32]
    with pytest.raises(ValidationError) as exc:
        load_scenario(doc)
    assert "Theta" in str(exc.value)
