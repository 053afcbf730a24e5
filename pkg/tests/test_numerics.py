import logging
import math

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from scipy.stats import poisson

from ctmc_check.errors import NumericsError, SolverError
from ctmc_check.numerics import (
    Chain, SolverConfig, UniformizationConfig, bscc_decompose, bscc_stationary,
    cumulative_state_reward, fox_glynn, matrix_exponential_oracle, occupation_times,
    reachability_reward, steady_state_distribution, transient_distribution, transient_values,
    until_probabilities,
)
from ctmc_check.numerics.graph import backward_reachable
from ctmc_check.numerics.solvers import solve, stationary
from ctmc_check.numerics.transient import clamp_negative

from conftest import chain_from_matrix, random_rate_matrix


# -- Fox-Glynn -----------------------------------------------------------------------

def test_fox_glynn_point_mass():
    fg = fox_glynn(0.0, 1e-6)
    assert (fg.left, fg.right) == (0, 0)
    assert fg.probabilities().tolist() == [1.0]


def test_fox_glynn_matches_poisson_pmf():
    fg = fox_glynn(10.0, 1e-6)
    ks = np.arange(fg.left, fg.right + 1)
    np.testing.assert_allclose(fg.probabilities(), poisson.pmf(ks, 10.0), rtol=0, atol=1e-10)
    assert fg.left <= 10 <= fg.right


@pytest.mark.parametrize("qt", [0.01, 0.5, 3.0, 25.0, 137.5, 4000.0, 1e6])
@pytest.mark.parametrize("eps", [1e-6, 1e-10, 1e-14])
def test_fox_glynn_tail_mass(qt, eps):
    fg = fox_glynn(qt, eps)
    mass = poisson.cdf(fg.right, qt) - poisson.cdf(fg.left - 1, qt)
    assert 1 - mass < eps
    assert fg.left <= math.floor(qt) <= fg.right
    # the window bound is exact; the recurrence adds round-off of order 1e-13
    total = fg.weights.sum() / fg.total_weight
    assert 1 - eps - 1e-12 <= total <= 1 + 1e-12


def test_fox_glynn_window_grows_like_sqrt():
    fg = fox_glynn(4000.0, 1e-8)
    assert len(fg) < 20 * math.sqrt(4000)
    assert abs(fg.probabilities().sum() - 1) <= 1e-8
    big = fox_glynn(400000.0, 1e-8)
    assert len(big) / len(fg) == pytest.approx(10, rel=0.2)


@pytest.mark.parametrize("qt, eps", [(-1.0, 1e-6), (float("nan"), 1e-6), (1.0, 0.0),
                                     (1.0, 1.0), (1.0, 1e-320)])
def test_fox_glynn_rejects(qt, eps):
    with pytest.raises(NumericsError):
        fox_glynn(qt, eps)


# -- dense oracle ----------------------------------------------------------------------

def test_oracle_trivial():
    assert np.array_equal(matrix_exponential_oracle(np.zeros((3, 3)), 2.0), np.eye(3))
    assert matrix_exponential_oracle(np.array([[-2.0]]), 1.5)[0, 0] == pytest.approx(math.exp(-3))


def test_oracle_rows_sum_to_one_and_agree_with_scipy():
    rng = np.random.default_rng(7)
    R = random_rate_matrix(rng, 10)
    Q = R - np.diag(R.sum(axis=1))
    E = matrix_exponential_oracle(Q, 1.3)
    np.testing.assert_allclose(E.sum(axis=1), 1.0, atol=1e-10)
    np.testing.assert_allclose(E, scipy.linalg.expm(Q * 1.3), atol=1e-12)


def test_oracle_size_cap():
    with pytest.raises(NumericsError):
        matrix_exponential_oracle(np.zeros((201, 201)), 1.0)


# -- transient ---------------------------------------------------------------------------

def test_two_state_transient(two_state):
    pi = transient_distribution(two_state, two_state.init_index, 1.0)
    assert pi[1] == pytest.approx(1 - math.exp(-1), abs=1e-9)
    assert pi.sum() == pytest.approx(1, abs=1e-12)


def test_transient_at_zero_is_identity(birth_death):
    v = np.array([0.25, 0.5, 0.25])
    out = transient_distribution(birth_death, v, 0.0)
    assert np.array_equal(out, v)


@pytest.mark.parametrize("seed", range(10))
def test_transient_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 30
    R = random_rate_matrix(rng, n, scale=10.0)
    c = chain_from_matrix(R)
    Q = c.generator().toarray()
    init = rng.dirichlet(np.ones(n))
    got = transient_distribution(c, init, 2.5)
    want = init @ matrix_exponential_oracle(Q, 2.5)
    assert np.max(np.abs(got - want)) <= 1e-8
    # the backward product gives the same answer for any observable
    f = rng.random(n)
    assert init @ transient_values(c, f, 2.5) == pytest.approx(want @ f, abs=1e-8)


def test_transient_input_errors(two_state):
    with pytest.raises(NumericsError):
        transient_distribution(two_state, 0, -1.0)
    with pytest.raises(NumericsError):
        transient_distribution(two_state, np.array([0.5, 0.6]), 1.0)
    with pytest.raises(NumericsError):
        transient_distribution(two_state, 5, 1.0)


def test_uniformization_config_validation():
    with pytest.raises(NumericsError):
        UniformizationConfig(factor=0.5)


def test_chain_without_transitions():
    c = chain_from_matrix(np.zeros((2, 2)))
    out = transient_distribution(c, 1, 3.0)
    assert out[0] == 0.0 and out[1] == pytest.approx(1.0, abs=1e-9)


def test_negative_clamp(caplog):
    with caplog.at_level(logging.WARNING):
        out = clamp_negative(np.array([0.5, -1e-14, 0.5]))
    assert out.tolist() == [0.5, 0.0, 0.5]
    assert "clamping" in caplog.text
    with pytest.raises(NumericsError):
        clamp_negative(np.array([1.0, -1e-6]))


# -- cumulative rewards ---------------------------------------------------------------

def test_all_ones_cumulative_reward(two_state, birth_death):
    assert cumulative_state_reward(two_state, "one", 0, 7.0) == pytest.approx(7.0, abs=1e-9)
    occ = occupation_times(birth_death, 0, 7.0)
    assert occ.sum() == pytest.approx(7.0, abs=1e-9)


def test_cumulative_reward_converges_to_mean_sojourn():
    c = chain_from_matrix([[0, 0.5], [0, 0]])
    c.state_rewards["s0"] = np.array([1.0, 0.0])
    assert cumulative_state_reward(c, "s0", 0, 200.0) == pytest.approx(2.0, abs=1e-9)


def test_cumulative_reward_matches_closed_form():
    a = 1.5
    c = chain_from_matrix([[0, a], [0, 0]])
    c.state_rewards["s0"] = np.array([1.0, 0.0])
    for t in (0.1, 1.0, 4.0):
        want = (1 - math.exp(-a * t)) / a
        assert cumulative_state_reward(c, "s0", 0, t) == pytest.approx(want, abs=1e-10)


def test_cumulative_reward_is_nondecreasing(birth_death):
    vals = [cumulative_state_reward(birth_death, "len", 0, t) for t in np.linspace(0, 10, 41)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_transition_reward_enters_as_rate(two_state):
    # "flip" pays 2 per firing of s0 -> s1 (rate 1): expected total 2*(1-e^-t)
    t = 3.0
    got = cumulative_state_reward(two_state, "flip", 0, t)
    assert got == pytest.approx(2 * (1 - math.exp(-t)), abs=1e-9)


def test_unknown_reward_block(two_state):
    with pytest.raises(NumericsError):
        cumulative_state_reward(two_state, "missing", 0, 1.0)


# -- graph ---------------------------------------------------------------------------

def test_bscc_cycle_and_chain():
    cycle = sp.csr_matrix(np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=float))
    dec = bscc_decompose(cycle)
    assert [b.tolist() for b in dec.bsccs] == [[0, 1, 2]] and dec.transient.size == 0
    chain = sp.csr_matrix(np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=float))
    dec = bscc_decompose(chain)
    assert [b.tolist() for b in dec.bsccs] == [[2]] and dec.transient.tolist() == [0, 1]


def _closure(adj: np.ndarray) -> np.ndarray:
    n = adj.shape[0]
    reach = (adj > 0) | np.eye(n, dtype=bool)
    for k in range(n):
        reach |= reach[:, [k]] & reach[[k], :]
    return reach


@pytest.mark.parametrize("seed", range(5))
def test_bscc_matches_reachability_closure(seed):
    rng = np.random.default_rng(seed)
    # a random DAG of cliques: 100 states in blocks, edges only forward between blocks
    n = 100
    cuts = np.sort(rng.choice(np.arange(1, n), size=14, replace=False))
    block = np.searchsorted(cuts, np.arange(n), side="right")
    adj = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j and block[i] == block[j] and rng.random() < 0.6:
                adj[i, j] = 1
            elif block[j] > block[i] and rng.random() < 0.02:
                adj[i, j] = 1
    reach = _closure(adj)
    # s is in a BSCC iff everything it reaches can reach it back
    bottom = np.array([np.all(reach[reach[s], s]) for s in range(n)])
    dec = bscc_decompose(sp.csr_matrix(adj))
    got = np.zeros(n, dtype=bool)
    for b in dec.bsccs:
        got[b] = True
        assert all(reach[i, j] for i in b for j in b)
    assert np.array_equal(got, bottom)
    assert np.array_equal(np.sort(dec.transient), np.flatnonzero(~bottom))


def test_backward_reachable():
    adj = sp.csr_matrix(np.array([[0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 0], [0, 0, 1, 0]],
                                 dtype=float))
    target = np.array([False, False, True, False])
    assert backward_reachable(adj, target).tolist() == [True, True, True, True]
    through = np.array([False, True, False, True])
    assert backward_reachable(adj, target, through).tolist() == [False, True, True, True]


# -- steady state --------------------------------------------------------------------------

@pytest.mark.parametrize("method", ["gauss-seidel", "jacobi"])
def test_birth_death_steady_state(birth_death, method):
    pi = steady_state_distribution(birth_death, 0, SolverConfig(method=method, epsilon=1e-12))
    np.testing.assert_allclose(pi, [4 / 7, 2 / 7, 1 / 7], atol=1e-9)


def test_absorbing_steady_state(two_state):
    assert steady_state_distribution(two_state, 0).tolist() == pytest.approx([0.0, 1.0])


def test_split_absorption():
    c = chain_from_matrix([[0, 2, 3], [0, 0, 0], [0, 0, 0]])
    pi = steady_state_distribution(c, 0)
    np.testing.assert_allclose(pi, [0, 0.4, 0.6], atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_steady_state_residual(seed):
    rng = np.random.default_rng(100 + seed)
    c = chain_from_matrix(random_rate_matrix(rng, 25, density=0.2))
    steady = bscc_stationary(c)
    assert max(steady.residuals(c)) <= 1e-8
    pi = steady_state_distribution(c, 0, steady=steady)
    assert pi.sum() == pytest.approx(1, abs=1e-9)
    # transient states carry no long-run mass
    assert np.all(pi[steady.decomposition.transient] == 0)


def test_steady_state_matches_dense_solve():
    rng = np.random.default_rng(3)
    R = random_rate_matrix(rng, 12, density=0.5)
    R[-1, 0] = 1.0  # close the ring so the chain is irreducible
    c = chain_from_matrix(R)
    Q = c.generator().toarray()
    A = np.vstack([Q.T, np.ones(12)])
    b = np.zeros(13)
    b[-1] = 1
    want = np.linalg.lstsq(A, b, rcond=None)[0]
    np.testing.assert_allclose(steady_state_distribution(c, 0, SolverConfig(epsilon=1e-13)),
                               want, atol=1e-9)


def test_periodic_chain_converges_under_jacobi():
    c = chain_from_matrix([[0, 1], [1, 0]])
    pi = steady_state_distribution(c, 0, SolverConfig(method="jacobi"))
    np.testing.assert_allclose(pi, [0.5, 0.5], atol=1e-9)


def test_solver_non_convergence_reports_residual():
    rng = np.random.default_rng(1)
    R = random_rate_matrix(rng, 20, density=0.5)
    R[-1, 0] = 1.0
    c = chain_from_matrix(R)
    with pytest.raises(SolverError) as info:
        stationary(c.rates, c.exit_rates, SolverConfig(epsilon=1e-15, max_iterations=2))
    assert info.value.iterations == 2 and info.value.residual > 0


def test_solver_config_validation():
    with pytest.raises(NumericsError):
        SolverConfig(method="sor")
    with pytest.raises(NumericsError):
        SolverConfig(epsilon=0)
    with pytest.raises(NumericsError):
        SolverConfig(max_iterations=0)


@pytest.mark.parametrize("method", ["gauss-seidel", "jacobi"])
def test_linear_solve(method):
    A = sp.csr_matrix(np.array([[4.0, -1, 0], [-1, 4, -1], [0, -1, 4]]))
    b = np.array([1.0, 2, 3])
    x = solve(A, b, SolverConfig(method=method, epsilon=1e-14))
    np.testing.assert_allclose(x, np.linalg.solve(A.toarray(), b), atol=1e-12)


# -- unbounded until and reachability rewards -------------------------------------------

def test_until_first_step():
    # 0 -> 1 (rate 1), 0 -> 2 (rate 3); P(F s=1) from 0 is 0.25
    c = chain_from_matrix([[0, 1, 3], [0, 0, 0], [0, 0, 0]])
    everywhere = np.ones(3, dtype=bool)
    p = until_probabilities(Chain(c.rates, c.exit_rates), everywhere,
                            np.array([False, True, False]))
    np.testing.assert_allclose(p, [0.25, 1.0, 0.0], atol=1e-12)


def test_reachability_reward():
    a = 0.8
    c = chain_from_matrix([[0, a], [0, 0]])
    r = reachability_reward(c, np.array([1.0, 0.0]), np.array([False, True]))
    assert r[0] == pytest.approx(1 / a, abs=1e-12)
    assert r[1] == 0.0
    r = reachability_reward(c, np.array([1.0, 0.0]), np.array([True, False]))
    assert r[0] == 0.0 and r[1] == math.inf
    assert r.format(1) == "inf"


def test_reachability_reward_infinite_when_target_may_be_missed():
    c = chain_from_matrix([[0, 1, 1], [0, 0, 0], [0, 0, 0]])
    r = reachability_reward(c, np.ones(3), np.array([False, True, False]))
    assert r[0] == math.inf and r[2] == math.inf and r[1] == 0.0
