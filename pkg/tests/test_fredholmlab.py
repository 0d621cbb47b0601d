import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from strategies import random_eventually_constant

from bandlab.bandop import BandOperator, off_band_defect
from bandlab.coefficients import EventuallyPeriodic, Periodic, indicator
from bandlab.fredholmlab import (BOUNDED, FAILS, HOLDS, NOT_BOUNDED, BudgetExceeded, bounded_below_numeric,
                                 check_conditions, index_identity, kernel_search, symbol_invertibility,
                                 symbol_values, tsemi_trace)
from bandlab.gallery import eventually_constant, i_minus_v1, mixed_one_sided, symbol_two_minus_t
from bandlab.lattice import unit
from bandlab.limitops import Tail, limit_operator
from bandlab.moduli import PHI, NOT_SEMI

I = BandOperator.identity()
V1 = BandOperator.shift(1)


def winding(B):
    """Winding number of the scalar symbol sum_k a_k t^k of a constant-coefficient B."""
    c = {k[0]: a.value(0)[0, 0] for k, a in B.diagonals.items()}
    lo, hi = min(c), max(c)
    poly = [c.get(k, 0) for k in range(hi, lo - 1, -1)]
    return int(np.sum(np.abs(np.roots(poly)) < 1)) + lo


def test_symbol_examples():
    one_minus = symbol_invertibility(I - V1)
    assert not one_minus.invertible and one_minus.j_estimate < 1e-10
    two_minus = symbol_invertibility(symbol_two_minus_t())
    assert two_minus.invertible and two_minus.j_estimate == pytest.approx(1.0, abs=1e-6)
    shift = symbol_invertibility(V1)
    assert shift.invertible and shift.j_estimate == pytest.approx(1.0, abs=1e-12)
    assert shift.curve.inverse_norm_max == pytest.approx(1.0)


def test_symbol_of_periodic_operator():
    # diag(2, 1/2) alternating: the lifted symbol is constant and j = 1/2
    A = BandOperator({0: Periodic([2.0, 0.5])})
    res = symbol_invertibility(A)
    assert res.j_estimate == pytest.approx(0.5) and res.curve.inverse_norm_max == pytest.approx(2.0)
    vals = symbol_values(A, np.array([[0.0], [1.0]]))
    assert vals.shape == (2, 2, 2)


def test_symbol_two_dimensional():
    A = BandOperator({(0, 0): 3.0, (1, 0): 1.0, (0, 1): 1.0}, 2)
    res = symbol_invertibility(A)
    assert res.j_estimate == pytest.approx(1.0, abs=1e-5)


def test_symbol_grid_floor():
    with pytest.raises(ValueError):
        symbol_invertibility(V1, G=64)


def test_bracket_examples():
    b = bounded_below_numeric(V1)
    assert 1 - 1e-9 <= b.lo <= b.hi <= 1 + 1e-12 and b.verdict == BOUNDED
    chi_minus, chi_plus = indicator(hi=-1), indicator(lo=0)
    # chi_- V_1 + chi_+ I sends e_{-1} to 0; its adjoint is the bounded-below side
    junction = BandOperator({0: chi_plus, 1: chi_minus})
    assert junction(unit(-1)).support == frozenset()
    assert bounded_below_numeric(junction).verdict == NOT_BOUNDED
    assert bounded_below_numeric(junction.adjoint()).lo > 0.5
    # V_1 chi_+ I + chi_- I is an isometry
    other = BandOperator({0: chi_minus, 1: chi_plus.shifted(-1)})
    assert bounded_below_numeric(other).lo > 0.5
    diff = bounded_below_numeric(I - V1)
    assert diff.verdict == NOT_BOUNDED and diff.hi < 1e-6


def test_bracket_without_symbol():
    # a compact perturbation of the identity that kills e_0
    A = BandOperator({0: EventuallyPeriodic([1.0], [0.0], [1.0], 0)})
    b = bounded_below_numeric(A)
    assert b.symbol is None and b.hi == 0.0 and b.verdict == NOT_BOUNDED


def test_bracket_budget():
    big = BandOperator.identity(2, 3)
    with pytest.raises(BudgetExceeded):
        bounded_below_numeric(big, budget=64, max_columns=1000)
    with pytest.raises(ValueError):
        bounded_below_numeric(V1, budget=2)


def test_kernel_search():
    assert kernel_search(I - V1, [8, 16]).verdict == HOLDS
    A = BandOperator({0: EventuallyPeriodic([1.0], [0.0], [1.0], 0)})
    assert kernel_search(A, [4]).verdict == FAILS


def test_ladder_difference_operator():
    lad = check_conditions(i_minus_v1())
    assert lad.conditions["vii"] == HOLDS and lad.conditions["v"] == FAILS
    assert lad.conclusion == "not Fredholm" and lad.fredholm is False
    assert "vii" in lad.non_conclusive
    assert any("(vii)" in n for n in lad.notes)
    assert lad.sweep["verdict"] == NOT_SEMI and lad.agreement is True


def test_ladder_eventually_constant():
    lad = check_conditions(eventually_constant())
    assert lad.conditions["ii"] == HOLDS and lad.conclusion == "Fredholm"
    assert lad.norm_identity["product"] == pytest.approx(1.0, abs=1e-3)
    assert lad.sweep["verdict"] == PHI and lad.agreement is True


def test_ladder_mixed_example():
    lad = check_conditions(mixed_one_sided(), radii=(10, 20, 30, 40))
    assert lad.conditions["viii"] == HOLDS
    assert lad.conditions["i"] == FAILS
    assert "viii" in lad.non_conclusive
    text = lad.to_text()
    assert "not conclusive" in text and "not Fredholm" in text


def test_tsemi_band_recipe():
    A = BandOperator({-2: 0.25, 0: 2.0, 1: -0.5})
    tr = tsemi_trace(A, 1, eps=0.1)
    assert tr.l == 2 and tr.max_defect == 0.0
    assert tr.index_identity and tr.index_shift_check < 1e-10
    assert off_band_defect(A, 6, 1) > 0


def test_tsemi_chain_on_fredholm_instance():
    tr = tsemi_trace(eventually_constant(), 1, "auto")
    assert tr.eps == tr.s_l_A
    assert tr.chain_holds and tr.chain_slack >= -1e-12
    assert tr.rows - tr.cols + tr.k == tr.m


def test_tsemi_rejects_bad_input():
    with pytest.raises(ValueError):
        tsemi_trace(BandOperator.identity(2), 1)
    with pytest.raises(ValueError):
        tsemi_trace(V1, 0)


def test_index_identity_arithmetic():
    assert index_identity(3, 10, 2, 1) == (51, 63, 13, True)


@given(st.integers(1, 3), st.integers(5, 12), st.integers(0, 3), st.integers(1, 4))
def test_index_identity_holds(d, n, l, m):
    rows, cols, k, ok = index_identity(d, n, l, m)
    assert ok and rows - cols + k == m


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_symbol_estimate_matches_bracket(a, b, c):
    A = BandOperator({-1: a, 0: b, 1: c})
    sym = symbol_invertibility(A)
    if sym.j_estimate < 0.05:
        return
    br = bounded_below_numeric(A)
    assert br.midpoint == pytest.approx(sym.j_estimate, rel=0.05)
    # the localized sections are an independent route: they bound j from above
    assert min(br.local_minima) >= sym.j_estimate - 1e-9
    assert all(x >= y - 1e-12 for x, y in zip(br.local_minima, br.local_minima[1:]))


@given(st.integers(0, 10_000))
def test_fredholm_index_matches_winding(seed):
    A = random_eventually_constant(np.random.default_rng(seed))
    lad = check_conditions(A)
    assert lad.conclusion == "Fredholm" and lad.agreement is True
    index = lad.sweep["kernel"] - lad.sweep["cokernel"]
    left, right = limit_operator(A, Tail.minus()), limit_operator(A, Tail.plus())
    assert index == winding(left) - winding(right)
    assert not (lad.sweep["kernelGrowing"] or lad.sweep["cokernelGrowing"])
