import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bandlab import moduli
from bandlab.bandop import BandOperator, truncate
from bandlab.coefficients import Tabulated
from bandlab.gallery import i_minus_v1, symbol_two_minus_t
from bandlab.lattice import window
from bandlab.moduli import (NOT_SEMI, PHI, approx_numbers, is_stable, localized_lower_norm, lower_norm,
                            moduli_report, relative_changes, sandwich_check, surjection_modulus,
                            truncation_sweep_classify)

DUAL = {"1": "inf", "2": "2", "inf": "1"}


def diff_section(n):
    return np.eye(n) - np.eye(n, k=-1)


def real_matrices(max_side=8, square=False):
    shape = st.integers(1, max_side).map(lambda n: (n, n)) if square else st.tuples(
        st.integers(1, max_side), st.integers(1, max_side))
    return shape.flatmap(lambda s: arrays(np.float64, s, elements=st.floats(-5, 5, allow_nan=False)))


@pytest.mark.parametrize("p", ["1", "2", "inf"])
def test_identity_has_unit_modulus(p):
    assert lower_norm(np.eye(5), p) == 1.0
    assert surjection_modulus(np.eye(5), p) == 1.0


def test_difference_section_decays_at_p2():
    j = lower_norm(diff_section(64), "2")
    assert 0 < j < 0.05
    assert lower_norm(diff_section(128), "2") < j


@pytest.mark.parametrize("n", [1, 4, 17, 40])
def test_difference_section_inverse_law_at_pinf(n):
    # the inverse is the lower-triangular all-ones matrix, whose row sums peak at n
    assert np.allclose(np.linalg.inv(diff_section(n)), np.tril(np.ones((n, n))))
    assert lower_norm(diff_section(n), "inf") == pytest.approx(1 / n, abs=1e-15)


def test_surjection_modulus_examples(rng):
    assert surjection_modulus(np.diag([2.0, 3.0]), "2") == pytest.approx(2.0, abs=1e-14)
    M = rng.standard_normal((7, 7))
    assert surjection_modulus(M, "2") == pytest.approx(lower_norm(M, "2"), abs=1e-12)
    assert surjection_modulus(M, "1") == pytest.approx(lower_norm(M.conj().T, "inf"), rel=1e-12)


def test_shape_rules():
    tall, wide = np.ones((3, 2)), np.ones((2, 3))
    assert lower_norm(wide) == 0.0 and surjection_modulus(tall) == 0.0
    with pytest.raises(ValueError):
        lower_norm(tall, "1")
    assert lower_norm(np.zeros((2, 2)), "1") == 0.0


def test_approx_numbers_examples(rng):
    assert approx_numbers(np.eye(4), 4) == [1.0] * 4
    assert approx_numbers(np.diag([0.1, 1, 10]), 2) == pytest.approx([0.1, 1.0])
    assert approx_numbers(np.eye(2), 3)[2] == math.inf
    B = rng.standard_normal((2, 3))
    left, right = approx_numbers(B, 3, "left"), approx_numbers(B, 3, "right")
    # rows - cols + k = m gives s^l_m = s^r_{m+1}
    assert right[0] == 0.0
    assert left[0] == pytest.approx(right[1], abs=1e-12)
    assert left[1] == pytest.approx(right[2], abs=1e-12)
    with pytest.raises(ValueError):
        approx_numbers(B, 2, "up")


def test_sandwich_examples(rng):
    rep = sandwich_check(np.eye(4), 4)
    assert rep.ok and all(r.bernstein_lower == pytest.approx(1.0) for r in rep.rows)
    rep = sandwich_check(rng.standard_normal((9, 6)), 5)
    assert rep.ok and max(r.gap for r in rep.rows) < 1e-10
    assert rep.rows[2].slack == 7


def test_localized_profiles():
    A = i_minus_v1()
    prof = localized_lower_norm(A, 16, range(-5, 6))
    assert prof.spread < 1e-12
    assert 0 < prof.minimum < 0.2
    hole = BandOperator({0: Tabulated({0: 0.0}, 1.0)})
    prof = localized_lower_norm(hole, 4, (-6, 6))
    assert prof.minimum == 0.0 and prof.argmin[0] in range(-3, 1)
    assert min(v for p, v in zip(prof.positions, prof.values) if p[0] > 0 or p[0] < -3) == 1.0


def test_localized_bound_against_truncation():
    A = BandOperator({0: 2.0, 1: -1.0, -1: 0.5})
    prof = localized_lower_norm(A, 8, range(-8, 1))
    inner = window(8)
    full = A.compress(A.col_reach(inner), inner)
    assert prof.minimum >= moduli.svdvals(full)[0] - 1e-12


def test_stabilization_helpers():
    assert relative_changes([1.0, 1.0, 2.0]) == [0.0, 0.5]
    assert is_stable([5.0, 1.0, 1.01, 1.0], 0.05)
    assert not is_stable([1.0, 1.0], 0.05)
    assert not is_stable([1.0, 0.5, 0.25], 0.05)


def test_sweep_examples():
    sv = truncation_sweep_classify(BandOperator.identity(), [4, 8, 16])
    assert (sv.verdict, sv.kernel_dim, sv.cokernel_dim) == (PHI, 0, 0)
    sv = truncation_sweep_classify(i_minus_v1(), [8, 16, 32, 64])
    assert sv.verdict == NOT_SEMI
    sv = truncation_sweep_classify(symbol_two_minus_t(), [8, 16, 32, 64])
    assert sv.verdict == PHI and sv.square_sigma_min[-1] >= 1 - 1e-6
    with pytest.raises(ValueError):
        truncation_sweep_classify(i_minus_v1(), [8, 16])


def test_sweep_detects_finite_kernel():
    # V_1 restricted to a half-line analogue: a compact perturbation with a one-dimensional kernel
    A = BandOperator({0: Tabulated({0: 0.0}, 1.0)})
    sv = truncation_sweep_classify(A, [4, 8, 16, 32])
    assert (sv.verdict, sv.kernel_dim, sv.cokernel_dim) == (PHI, 1, 1)


def test_moduli_report_csv():
    rep = moduli_report(i_minus_v1(), [8, 16, 32, 64], m_max=5)
    lines = rep.to_csv().strip().splitlines()
    assert lines[0] == "radius,j,q,sigma_1,sigma_2,sigma_3,sigma_4,sigma_5,flags"
    assert len(lines) == 5
    assert rep.rows[-1].j == pytest.approx(rep.rows[-1].sigma[0])
    rep_inf = moduli_report(i_minus_v1(), [4, 8], m_max=2, t="inf")
    assert rep_inf.rows[0].j == pytest.approx(1 / 9)


@given(real_matrices(square=True), st.sampled_from(["1", "2", "inf"]))
def test_duality_on_invertible_squares(M, p):
    if np.linalg.cond(M) > 1e8:
        return
    assert lower_norm(M, p) == pytest.approx(surjection_modulus(M.T, DUAL[p]), rel=1e-9)
    assert lower_norm(M, p) * np.linalg.norm(np.linalg.inv(M), {"1": 1, "2": 2, "inf": np.inf}[p]) == \
        pytest.approx(1.0, rel=1e-9)


@given(real_matrices())
def test_square_hilbert_moduli_agree(M):
    if M.shape[0] == M.shape[1]:
        assert lower_norm(M) == pytest.approx(surjection_modulus(M), abs=1e-12)


@given(real_matrices())
def test_approx_numbers_monotone_and_injectivity(M):
    s = approx_numbers(M, M.shape[1])
    assert all(a <= b + 1e-12 for a, b in zip(s, s[1:]))
    injective = np.linalg.matrix_rank(M) == M.shape[1]
    assert (s[0] > 1e-9) == injective or abs(s[0]) < 1e-6


@given(real_matrices())
def test_index_shift_identity(M):
    rows, cols = M.shape
    left = approx_numbers(M, rows, "left")
    right = approx_numbers(M, cols + rows, "right")
    for m in range(1, rows + 1):
        k = m - rows + cols
        if k >= 1:
            assert left[m - 1] == pytest.approx(right[k - 1], abs=1e-10)


@given(real_matrices())
def test_sandwich_equality(M):
    assert sandwich_check(M, min(M.shape[1], 4)).ok


@given(st.floats(0.5, 3.0), st.integers(-4, 4))
def test_shift_invariant_profile_is_flat(a, k):
    A = BandOperator({0: a, 1: 1.0})
    prof = localized_lower_norm(A, 6, range(k, k + 4))
    assert prof.spread < 1e-12


def test_truncated_matrix_input():
    T = truncate(i_minus_v1(), 3).with_norm("inf")
    assert lower_norm(T) == pytest.approx(1 / 7)
    assert surjection_modulus(T.H) == pytest.approx(1 / 7)
