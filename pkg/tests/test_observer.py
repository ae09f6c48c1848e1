import numpy as np
import pytest

from lagrange_swarm import numerics
from lagrange_swarm.errors import DimensionMismatch
from lagrange_swarm.graph import DirectedGraph, analyze
from lagrange_swarm.observer import (ObserverState, check_gain_conditions, max_disagreement,
                                     observer_rhs, s_exact_solution, s_star,
                                     unstable_group_model)


def test_consensus_subspace_is_invariant(rng):
    S = rng.normal(size=(2, 2))
    eta = rng.normal(size=2)
    W = DirectedGraph.from_edges(4, [(1, 2), (2, 3), (3, 4), (4, 1), (1, 3)]).weights
    st = ObserverState(np.repeat(S[None], 4, axis=0), np.repeat(eta[None], 4, axis=0))
    Sd, ed = observer_rhs(st, W, 2.0, 3.0)
    assert np.all(Sd == 0)
    assert np.abs(ed - S @ eta).max() <= 1e-14


def test_single_coupling_term():
    W = DirectedGraph.from_edges(2, [(1, 2)]).weights
    st = ObserverState(np.array([np.zeros((2, 2)), np.eye(2)]), np.zeros((2, 2)))
    Sd, _ = observer_rhs(st, W, 1.0, 1.0)
    assert np.array_equal(Sd[0], np.zeros((2, 2)))
    assert np.array_equal(Sd[1], -np.eye(2))


def test_isolated_agent_runs_open_loop(rng):
    st = ObserverState(rng.normal(size=(3, 2, 2)), rng.normal(size=(3, 2)))
    Sd, ed = observer_rhs(st, np.zeros((3, 3)), 1.0, 1.0)
    assert np.all(Sd == 0)
    for i in range(3):
        assert np.allclose(ed[i], st.S[i] @ st.eta[i])


def test_dimension_mismatch(rng):
    st = ObserverState(rng.normal(size=(3, 2, 2)), rng.normal(size=(3, 2)))
    with pytest.raises(DimensionMismatch):
        observer_rhs(st, np.zeros((2, 2)), 1.0, 1.0)
    with pytest.raises(DimensionMismatch):
        ObserverState(np.zeros((3, 2, 2)), np.zeros((3, 3)))


def test_bundled_rhs_matches_exact_linear_solution(ref_scenario):
    sc = ref_scenario
    S0 = np.array([a.S0 for a in sc.agents])
    eta0 = np.array([a.eta0 for a in sc.agents])
    Sd, _ = observer_rhs(ObserverState(S0, eta0), sc.graph.weights, 2.0, 2.0)
    h = 1e-6
    L = sc.analysis.laplacian
    fd = (s_exact_solution(S0, L, 2.0, h) - s_exact_solution(S0, L, 2.0, -h)) / (2 * h)
    assert np.abs(Sd - fd).max() < 1e-7


def test_s_star_bundled(ref_scenario):
    sc = ref_scenario
    S0 = np.array([a.S0 for a in sc.agents])
    gm = s_star(S0, sc.analysis.left_null_vector, 2.0, sc.analysis.lambda1)
    assert np.allclose(gm.S_star, [[0, 1], [-4, 0]], atol=1e-12)
    assert np.allclose(gm.S_star, (S0[0] + S0[3] + S0[4]) / 3, atol=1e-12)
    assert gm.decay_rate_S == pytest.approx(2.0)
    assert np.allclose(sorted(np.linalg.eigvals(gm.S_star).imag), [-2, 2])
    assert np.linalg.norm(gm.S_star, 2) == pytest.approx(4.0)


def test_s_star_trivial_cases(rng):
    S = rng.normal(size=(2, 2))
    u = np.array([0.2, 0.3, 0.5])
    assert np.allclose(s_star(np.repeat(S[None], 3, axis=0), u).S_star, S)
    assert np.array_equal(s_star(S[None], [1.0]).S_star, S)


def test_exact_solution_trivial(rng):
    S0 = rng.normal(size=(3, 2, 2))
    L = analyze(DirectedGraph.from_edges(3, [(1, 2), (2, 3)])).laplacian
    assert np.allclose(s_exact_solution(S0, L, 1.5, 0.0), S0)
    same = np.repeat(S0[:1], 3, axis=0)
    assert np.allclose(s_exact_solution(same, L, 1.5, 7.0), same)


def test_exact_solution_consensus_at_20s(ref_scenario):
    sc = ref_scenario
    S0 = np.array([a.S0 for a in sc.agents])
    St = s_exact_solution(S0, sc.analysis.laplacian, 2.0, 20.0)
    for S in St:
        assert np.linalg.norm(S - [[0, 1], [-4, 0]]) < 1e-8
    assert max_disagreement(St) < 1e-8 * max_disagreement(S0)


def test_rk4_observer_matches_expm(ref_scenario):
    sc = ref_scenario
    N = sc.n_agents
    S0 = np.array([a.S0 for a in sc.agents])
    eta0 = np.array([a.eta0 for a in sc.agents])
    W = sc.graph.weights

    def rhs(t, x):
        Sd, ed = observer_rhs(ObserverState(x[:4 * N].reshape(N, 2, 2), x[4 * N:].reshape(N, 2)),
                              W, 2.0, 2.0)
        return np.concatenate([Sd.ravel(), ed.ravel()])

    traj = numerics.integrate(numerics.OdeSystem(6 * N, rhs),
                              np.concatenate([S0.ravel(), eta0.ravel()]), 1e-3, 20000)
    for k in range(0, 20001, 500):
        exact = s_exact_solution(S0, sc.analysis.laplacian, 2.0, k * 1e-3)
        assert np.abs(traj[k, :4 * N].reshape(N, 2, 2) - exact).max() <= 1e-6


def test_gain_conditions():
    rep = check_gain_conditions(0.1, 0.1, 3.0, 1.0, 0.0)
    assert not rep.mu1_ok and rep.mu1_bound == pytest.approx(0.6)
    rep = check_gain_conditions(5.0, 0.5, 3.0, 1.0, 0.0)
    assert rep.mu1_ok and rep.mu2_ok and rep.mu2_bound == 0.0
    assert rep.mu1_bound == pytest.approx(2 * 0.5 * 3.0)
    rep = check_gain_conditions(100.0, 2.0, 3.0, 1.0, 2.0)
    assert not rep.mu2_ok and rep.mu2_bound == 2.0


def test_gain_conditions_bundled(ref_scenario):
    rep = ref_scenario.gain_report
    an = ref_scenario.analysis
    assert rep.mu2_bound == pytest.approx(4.0)
    assert rep.mu1_bound == pytest.approx(2 * (2 * an.laplacian_norm + 4.0))
    assert not rep.mu1_ok and not rep.mu2_ok
    assert any("mu1" in w for w in ref_scenario.warnings)


def test_unstable_group_model_flag():
    assert not unstable_group_model(np.array([[0.0, 1.0], [-4.0, 0.0]]))
    assert unstable_group_model(np.array([[0.1, 0.0], [0.0, -1.0]]))
