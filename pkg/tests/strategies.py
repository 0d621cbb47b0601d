"""Hypothesis strategies shared by the test modules."""

import numpy as np
from hypothesis import strategies as st

from bandlab.bandop import BandOperator
from bandlab.coefficients import Constant, EventuallyPeriodic, FiniteSupport, Periodic

entry = st.integers(-4, 4).map(lambda v: v / 2)


def matrices(d):
    return st.lists(entry, min_size=d * d, max_size=d * d).map(lambda v: np.array(v).reshape(d, d))


@st.composite
def coefficients(draw, d=1):
    kind = draw(st.sampled_from(["constant", "periodic", "ep", "finite"]))
    mats = lambda lo, hi: draw(st.lists(matrices(d), min_size=lo, max_size=hi))
    if kind == "constant":
        return Constant(draw(matrices(d)))
    if kind == "periodic":
        return Periodic(np.array(mats(1, 3)))
    if kind == "ep":
        core = mats(0, 3)
        return EventuallyPeriodic(mats(1, 2), core, mats(1, 2), draw(st.integers(-4, 4)), d=d)
    return FiniteSupport({k: draw(matrices(d)) for k in draw(st.sets(st.integers(-5, 5), min_size=1, max_size=3))},
                         1, d)


@st.composite
def band_operators(draw, max_band=2, d=None):
    if d is None:
        d = draw(st.integers(1, 2))
    offsets = draw(st.sets(st.integers(-max_band, max_band), min_size=1, max_size=3))
    return BandOperator({k: draw(coefficients(d)) for k in offsets}, 1, d)


def laurent_from_roots(roots, lead, low):
    """Coefficients {k: c_k} of lead * t^(-low) * prod(t - r)."""
    p = np.poly(roots) if len(roots) else np.array([1.0])
    deg = len(p) - 1
    return {deg - i - low: lead * c for i, c in enumerate(p)}


def random_symbol(rng, on_circle=False):
    """Roots kept off the annulus 1/3 <= |t| <= 3, or one root exactly on the circle."""
    deg = int(rng.integers(1, 3))
    roots = []
    for _ in range(deg):
        r = rng.uniform(3.5, 6) if rng.random() < 0.5 else rng.uniform(0.05, 0.3)
        roots.append(r * np.exp(2j * np.pi * rng.random()))
    if on_circle:
        roots[0] = np.exp(2j * np.pi * rng.random())
    lead = rng.choice([-1, 1]) * rng.uniform(0.5, 1.5)
    big = np.prod([abs(r) for r in roots if abs(r) > 1]) or 1.0
    return laurent_from_roots(roots, lead / big, int(rng.integers(0, deg + 1)))


def random_eventually_constant(rng, on_circle=False):
    """Scalar band operator, bandwidth <= 3, constant left/right tails with a short random core.

    With ``on_circle`` at least one end symbol vanishes somewhere on the unit circle.
    """
    circle_left = on_circle and rng.random() < 0.5
    left = random_symbol(rng, circle_left)
    right = random_symbol(rng, on_circle and (not circle_left or rng.random() < 0.5))
    start = int(rng.integers(-3, 2))
    diags = {}
    for k in sorted(set(left) | set(right)):
        core = rng.uniform(-0.3, 0.3, size=int(rng.integers(0, 3)))
        a, b = left.get(k, 0.0), right.get(k, 0.0)
        core = [a + (b - a) * (i + 1) / (len(core) + 1) + c for i, c in enumerate(core)]
        diags[k] = EventuallyPeriodic([a], core, [b], start)
    return BandOperator(diags)


def random_eventually_periodic(rng, d=None):
    """Band operator whose coefficients have periodic tails (periods 1-3) around a short core."""
    d = int(rng.integers(1, 3)) if d is None else d
    mat = lambda: rng.uniform(-1, 1, (d, d))
    start = int(rng.integers(-4, 4))
    diags = {}
    for k in rng.choice(np.arange(-2, 3), size=int(rng.integers(1, 4)), replace=False):
        left = [mat() for _ in range(int(rng.integers(1, 3)))]
        right = [mat() for _ in range(int(rng.integers(1, 4)))]
        core = [mat() for _ in range(int(rng.integers(0, 5)))]
        diags[int(k)] = EventuallyPeriodic(left, core, right, start, d=d)
    return BandOperator(diags, 1, d)
