import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from strategies import band_operators

from bandlab.bandop import BandOperator, FlipOperator
from bandlab.coefficients import Constant, EventuallyPeriodic, FiniteSupport, Periodic
from bandlab.gallery import eventually_constant, halfplane, i_minus_v1, mixed_one_sided
from bandlab.limitops import (DirectionError, Explicit, Tail, _structure, adjoint_spectrum_check, canonical,
                              coefficient_limit, limit_operator, operator_spectrum, verify_pstrong)

I = BandOperator.identity()
V1 = BandOperator.shift(1)


def aligned_shifts(A, phase, m, count=4, sign=1):
    """Shifts h = phase (mod period), far enough out that windows of radius m see only the tail."""
    ext, P = _structure(A, 0)
    margin = m + A.bandwidth + P + 1
    if sign > 0:
        base = (ext[1] if ext else 0) + margin
        base += (phase - base) % P
    else:
        base = (ext[0] if ext else 0) - margin
        base -= (base - phase) % P
    return [(base + sign * P * k,) for k in range(count)], P


def test_shift_invariant_operator_is_its_own_limit():
    A = i_minus_v1()
    assert limit_operator(A, Tail.plus()) == A
    assert limit_operator(A, Tail.minus()) == A
    assert limit_operator(A, Explicit.arithmetic(3, 5)) == A
    spec = operator_spectrum(A)
    assert len(spec) == 1 and A in spec


def test_eventually_constant_limits():
    a = EventuallyPeriodic([2.0], [0.3, -1.0], [5.0], 0)
    A = BandOperator({0: a, 1: 1.0})
    assert limit_operator(A, Tail.plus()) == BandOperator({0: 5.0, 1: 1.0})
    assert limit_operator(A, Tail.minus()) == BandOperator({0: 2.0, 1: 1.0})
    assert operator_spectrum(A).keys() == {BandOperator({0: 5.0, 1: 1.0}).key(), BandOperator({0: 2.0, 1: 1.0}).key()}
    B = limit_operator(A, Tail.plus())
    table = verify_pstrong(A, Explicit.arithmetic(10, 1), B, [1, 3])
    assert max(table.max_over_windows()) == 0.0


def test_period_two_tail_has_two_phases():
    A = BandOperator({0: EventuallyPeriodic([1.0], [], [3.0, 4.0], 0)})
    even, odd = limit_operator(A, Tail.plus(0)), limit_operator(A, Tail.plus(1))
    assert even != odd
    assert even.shifted(1) == odd
    for phase, B in ((0, even), (1, odd)):
        shifts, _ = aligned_shifts(A, phase, 2)
        assert max(verify_pstrong(A, shifts, B, [2]).max_over_windows()) == 0.0
    assert even.key() in {c.key() for c in operator_spectrum(A).representatives}


def test_explicit_directions():
    A = BandOperator({0: EventuallyPeriodic([1.0], [], [3.0, 4.0], 0)})
    assert limit_operator(A, Explicit.arithmetic(1, 2)) == limit_operator(A, Tail.plus(1))
    with pytest.raises(DirectionError):
        limit_operator(A, Explicit(((1,), (2,), (4,), (5,), (6,), (8,))))
    with pytest.raises(DirectionError):
        Explicit(((1,), (2,), (3,)))
    with pytest.raises(DirectionError):
        Explicit(((5,), (5,), (5,), (5,)))


def test_coefficient_limits():
    assert coefficient_limit(FiniteSupport({0: 3.0}), Tail.plus()) == Constant(0.0)
    assert coefficient_limit(Periodic([1.0, 2.0]), Tail.plus(1)) == Periodic([2.0, 1.0])
    e = EventuallyPeriodic([1.0], [], [2.0], 0, axis=1, N=2)
    assert coefficient_limit(e, Tail((0, 1), (0, 0))) == Constant(2.0, 2)
    assert coefficient_limit(e, Tail((1, 0), (0, 3))) == e.shifted((0, 3))
    with pytest.raises(ValueError):
        Tail((0,))


def test_mixed_example_spectrum():
    A = mixed_one_sided()
    spec = operator_spectrum(A)
    assert I in spec and V1 in spec
    chi_minus = EventuallyPeriodic([1.0], [], [0.0], 0)
    chi_plus = EventuallyPeriodic([0.0], [], [1.0], 0)
    junction_a = BandOperator({0: chi_plus, 1: chi_minus})
    junction_b = BandOperator({0: chi_minus, 1: chi_plus.shifted(-1)})
    for J in (junction_a, junction_b):
        assert J in spec or J.shifted(1) in spec or J.shifted(-1) in spec
    kinds = sorted(o.kind for o in spec.orbits)
    assert kinds == ["finite", "finite", "infinite", "infinite"]


def test_halfplane_spectrum():
    spec = operator_spectrum(halfplane())
    assert len(spec) == 3
    assert BandOperator.identity(2) in spec and BandOperator.shift((0, 1), 2) in spec


@pytest.mark.parametrize("make", [i_minus_v1, eventually_constant, mixed_one_sided, halfplane])
def test_adjoint_spectrum_commutes(make):
    rep = adjoint_spectrum_check(make())
    assert rep.equal and not rep.missing


def test_perturbed_candidate_is_rejected():
    A = eventually_constant()
    B = limit_operator(A, Tail.plus())
    bad = B + BandOperator({0: FiniteSupport({0: 1.0})})
    shifts, _ = aligned_shifts(A, 0, 3, count=6)
    assert min(verify_pstrong(A, shifts, bad, [0, 3]).max_over_windows()) >= 0.9


def test_canonical_removes_translation():
    A = eventually_constant()
    assert canonical(A.shifted(7)) == canonical(A)


def test_spectrum_requires_band_operator():
    with pytest.raises(TypeError):
        operator_spectrum(FlipOperator())


@given(band_operators())
def test_limits_of_limits_stay_in_spectrum(A):
    spec = operator_spectrum(A)
    for B in spec.representatives:
        for C in operator_spectrum(B).representatives:
            assert C in spec


@given(band_operators(d=1), st.integers(-4, 4), st.floats(-2, 2).filter(lambda v: v != 0))
def test_finite_perturbation_keeps_spectrum(A, k, v):
    K = BandOperator({0: FiniteSupport({k: v})})
    assert operator_spectrum(A + K).keys() == operator_spectrum(A).keys()


@given(band_operators(), st.sampled_from([1, -1]), st.integers(0, 5))
def test_extracted_limit_has_zero_defect(A, sign, phase):
    _, P = _structure(A, 0)
    phase %= P
    B = limit_operator(A, Tail((sign,), (phase,)))
    shifts, _ = aligned_shifts(A, phase, 2, sign=sign)
    assert max(verify_pstrong(A, shifts, B, [2]).max_over_windows()) < 1e-8
