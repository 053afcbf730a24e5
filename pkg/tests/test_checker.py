import json
import math

import numpy as np
import pytest
import scipy.linalg

from ctmc_check.checker import CheckConfig, ModelChecker, bound_compare, check
from ctmc_check.compose import build_state_space
from ctmc_check.errors import CheckError
from ctmc_check.lang import ast as A
from ctmc_check.lang import parse_model
from ctmc_check.numerics import SolverConfig, transient_distribution

from conftest import chain_from_matrix, random_rate_matrix


def value(ctmc, text, **kw):
    return check(ctmc, text, **kw).value


# -- analytic fixtures -----------------------------------------------------------------

def test_two_state_point_interval(two_state):
    assert value(two_state, "P=? [ F[1,1] s=1 ]") == pytest.approx(1 - math.exp(-1), abs=1e-9)


def test_zero_horizon(two_state):
    assert value(two_state, "P=? [ true U[0,0] s=1 ]") == 0.0
    assert value(two_state, "P=? [ true U[0,0] s=0 ]") == 1.0
    assert value(two_state, "P=? [ F<=0 s=0 ]") == 1.0


def test_birth_death_steady(birth_death):
    mc = ModelChecker(birth_death, CheckConfig(solver=SolverConfig(epsilon=1e-12)))
    for n, want in enumerate([4 / 7, 2 / 7, 1 / 7]):
        assert mc.check(f"S=? [ n={n} ]").value == pytest.approx(want, abs=1e-9)
    assert mc.check('R{"len"}=? [ S ]').value == pytest.approx(4 / 7, abs=1e-9)


def test_all_ones_cumulative(two_state, birth_death):
    assert value(two_state, 'R{"one"}=? [ C<=7 ]') == pytest.approx(7.0, abs=1e-9)


def test_instantaneous_reward_is_transient_dot(birth_death):
    for t in (0.3, 2.0, 5.0):
        pi = transient_distribution(birth_death, 0, t)
        got = value(birth_death, f'R{{"len"}}=? [ I={t} ]')
        assert got == pytest.approx(pi @ np.array([0.0, 1.0, 2.0]), abs=1e-12)


def test_instantaneous_reward_tends_to_steady(birth_death):
    late = value(birth_death, 'R{"len"}=? [ I=60 ]')
    assert late == pytest.approx(value(birth_death, 'R{"len"}=? [ S ]'), abs=1e-6)


def test_reach_reward_with_transition_reward(two_state):
    # two per firing of the only transition, which fires exactly once
    assert value(two_state, 'R{"flip"}=? [ F s=1 ]') == pytest.approx(2.0, abs=1e-12)
    assert value(two_state, 'R{"one"}=? [ F s=1 ]') == pytest.approx(1.0, abs=1e-12)


def test_reach_reward_infinite(two_state):
    res = check(two_state, 'R{"one"}=? [ F false ]')
    assert res.infinite and res.to_json()["value"] == "inf"


def test_steady_reward_includes_transition_rates():
    c = build_state_space(parse_model("""
ctmc
module M
  s : [0..1] init 0;
  [] s=0 -> 1 : (s'=1);
  [go] s=1 -> 3 : (s'=0);
endmodule
rewards "trip"
  [go] true : 5;
endrewards
"""))
    # pi = (3/4, 1/4); the go transition fires at long-run rate 3/4 paying 5
    assert value(c, 'R{"trip"}=? [ S ]') == pytest.approx(15 / 4, abs=1e-9)


# -- interval cases against dense oracles --------------------------------------------

def _dense(R):
    R = np.array(R, dtype=float)
    np.fill_diagonal(R, 0)
    return R


def _absorb(R, mask):
    R = R.copy()
    R[mask, :] = 0
    return R - np.diag(R.sum(axis=1))


def _reach_dense(R, left, right):
    """P(left U right) per state via a dense solve over the states that can
    still go either way."""
    n = R.shape[0]
    P = R / np.where(R.sum(axis=1) > 0, R.sum(axis=1), 1)[:, None]
    x = right.astype(float)
    for _ in range(20000):
        x = np.where(right, 1.0, np.where(left, P @ x, 0.0))
    return x


def _oracle(R, init, left, right, t1, t2):
    """P(left U[t1,t2] right) from ``init`` with matrix exponentials."""
    n = R.shape[0]
    dist = np.zeros(n)
    dist[init] = 1
    if t1 > 0:
        dist = dist @ scipy.linalg.expm(_absorb(R, ~left) * t1)
        dist = np.where(left, dist, 0)
    if t2 is None:
        return dist @ _reach_dense(R, left, right)
    Q2 = _absorb(R, ~left | right)
    return (dist @ scipy.linalg.expm(Q2 * (t2 - t1)))[right].sum()


@pytest.mark.parametrize("seed", range(12))
def test_until_intervals_match_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 12
    R = _dense(random_rate_matrix(rng, n, density=0.35))
    c = chain_from_matrix(R)
    left_set = rng.random(n) < 0.75
    left_set[0] = True
    right_set = rng.random(n) < 0.25
    right_set[0] = False
    if not right_set.any():
        right_set[-1] = True
    fmt = lambda mask: " | ".join(f"s={i}" for i in np.flatnonzero(mask)) or "false"
    left_txt, right_txt = f"({fmt(left_set)})", f"({fmt(right_set)})"
    mc = ModelChecker(c)
    for t1, t2 in [(0, 0.7), (0.4, 0.4), (0.5, 2.0), (1.5, None), (0, None)]:
        if t2 is None:
            iv = "" if t1 == 0 else f">={t1}"
        elif t1 == 0:
            iv = f"<={t2}"
        else:
            iv = f"[{t1},{t2}]"
        text = f"P=? [ {left_txt} U{iv} {right_txt} ]"
        want = _oracle(R, 0, left_set, right_set, t1, t2)
        assert mc.check(text).value == pytest.approx(want, abs=1e-8), text
        # the backward per-state computation agrees with the forward one
        assert mc.check(text, all_states=True).values[0] == pytest.approx(want, abs=1e-8)


def test_point_interval_is_transient_mass(pdgf):
    pi = transient_distribution(pdgf, pdgf.init_index, 2.0)
    want = pi[pdgf.sat_mask("PDGFR=1")].sum()
    assert value(pdgf, "P=? [ F[2,2] PDGFR=1 ]") == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_eventually_plus_avoid_is_one(seed):
    rng = np.random.default_rng(50 + seed)
    R = _dense(random_rate_matrix(rng, 10))
    c = chain_from_matrix(R)
    target = np.zeros(10, dtype=bool)
    target[[4, 7]] = True
    t = 1.3
    hit = value(c, f"P=? [ F<={t} (s=4 | s=7) ]")
    start = np.zeros(10)
    start[0] = 1
    avoid = (start @ scipy.linalg.expm(_absorb(R, target) * t))[~target].sum()
    assert hit + avoid == pytest.approx(1.0, abs=1e-9)


def test_monotone_in_horizon(pdgf):
    mc = ModelChecker(pdgf)
    vals = [mc.check(f"P=? [ F<={t} MTOR=1 ]").value for t in (0.5, 1, 2, 4, 8)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_steady_state_of_absorbing_pdgf_species(pdgf):
    assert value(pdgf, "S=? [ PPX=1 ]") == pytest.approx(0.0, abs=0.005)


# -- bounded formulas, nesting and errors --------------------------------------------------

def test_bounded_probability_sets(two_state):
    res = check(two_state, "P>0.5 [ F<=1 s=1 ]")
    assert res.holds and res.satisfying.tolist() == [0, 1]
    res = check(two_state, "P>0.7 [ F<=1 s=1 ]")
    assert not res.holds and res.satisfying.tolist() == [1]


def test_boolean_connectives(birth_death):
    assert check(birth_death, "n=0 | n=2").satisfying.tolist() == [0, 2]
    assert check(birth_death, "!(n=1) & n<2").satisfying.tolist() == [0]
    assert check(birth_death, "true").holds and not check(birth_death, "false").holds


def test_nested_bounded_operator(birth_death):
    probs = check(birth_death, "P=? [ F<=1 n=2 ]", all_states=True).values
    assert probs[2] == 1.0 and probs[0] < probs[1] < 1
    threshold = float(probs[0] + probs[1]) / 2
    inner = check(birth_death, f"P>={threshold!r} [ F<=1 n=2 ]")
    assert inner.satisfying.tolist() == [1, 2]
    outer = check(birth_death, f"P=? [ F<=0.5 P>={threshold!r} [ F<=1 n=2 ] ]").value
    assert outer == pytest.approx(value(birth_death, "P=? [ F<=0.5 n>=1 ]"), abs=1e-12)


def test_nested_query_rejected(birth_death):
    with pytest.raises(CheckError, match="nested"):
        check(birth_death, "P>0.1 [ F S=? [ n=2 ] ]")
    with pytest.raises(CheckError, match="nested"):
        ModelChecker(birth_death).sat("!P=? [ F n=2 ]")


def test_undefined_reward_rejected(two_state):
    with pytest.raises(CheckError, match="reward"):
        check(two_state, 'R{"nope"}=? [ S ]')


def test_marginal_flag(two_state):
    exact = value(two_state, "P=? [ F<=1 s=1 ]")
    res = check(two_state, f"P>={exact!r} [ F<=1 s=1 ]")
    assert res.diagnostics["marginal"] is True
    res = check(two_state, "P>=0.5 [ F<=1 s=1 ]")
    assert res.diagnostics["marginal"] is False


def test_bound_compare():
    assert bound_compare(0.7, A.Bound(">=", 0.5)) == (True, False)
    assert bound_compare(0.5, A.Bound(">", 0.5)) == (False, True)
    assert bound_compare(0.2, A.Bound("<", 0.5)) == (True, False)


def test_bound_flips_once_along_a_sweep(two_state):
    mc = ModelChecker(two_state)
    series = [mc.check(f"P>0.5 [ F<={t} s=1 ]").holds for t in np.linspace(0, 3, 31)]
    flips = sum(a != b for a, b in zip(series, series[1:]))
    assert flips == 1 and series[0] is False and series[-1] is True


def test_probabilities_within_unit_interval(pdgf):
    mc = ModelChecker(pdgf)
    for text in ("P=? [ F[3,3] Akt=1 ]", "P=? [ F<=5 MTOR=1 ]", "S=? [ Ras=1 ]"):
        assert 0.0 <= mc.check(text).value <= 1.0


def test_json_shape(two_state):
    doc = check(two_state, "P=? [ F<=1 s=1 ]").to_json()
    assert set(doc) == {"formula", "value", "diagnostics"}
    assert doc["formula"] == "P=? [ F<=1 s=1 ]"
    json.dumps(doc)
    doc = check(two_state, "P>0.5 [ F<=1 s=1 ]").to_json()
    assert doc["satisfying_count"] == 2 and doc["holds"] is True
    assert "truncation" in doc["diagnostics"]


def test_solver_work_reported_once(birth_death):
    mc = ModelChecker(birth_death)
    first = mc.check("S=? [ n=0 ]").diagnostics
    assert first["solver_iterations"] > 0 and first["solver_residual"] < 1e-8
    assert "solver_iterations" not in mc.check("S=? [ n=1 ]").diagnostics
