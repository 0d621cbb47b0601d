"""Limit operators and operator spectra for structured coefficient classes.

Limits are extracted symbolically, one coefficient at a time:

* constants are unchanged and periodic sequences are shifted by the phase,
* finitely supported sequences vanish,
* eventually periodic sequences are replaced by the tail at the chosen end,
* block structures of growing length (N = 1) yield their interior
  constants and one junction operator per pair of consecutive kinds.

:func:`verify_pstrong` is the numerical witness: it evaluates the
P-strong defect of the shifted copies against a candidate on finite windows.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import lattice
from .bandop import SCHEMA_VERSION, BandOperator, LatticeOperator
from .coefficients import (
    BlockStructure,
    CoefficientSequence,
    Constant,
    EventuallyPeriodic,
    FiniteSupport,
    Periodic,
    Tabulated,
    UnsupportedCoefficientError,
)
from .lattice import as_index, as_norm_tag, matrix_norm, window


class DirectionError(ValueError):
    """An explicit direction whose phase behaviour cannot be read off its prefix."""


@dataclass(frozen=True)
class Tail:
    """h_n -> infinity along ``signs`` (+1, -1 or 0 per axis).

    ``offsets`` holds the phase of every escaping axis (the residue of h_n,
    taken modulo whatever period applies) and the fixed coordinate of every
    axis with sign 0.
    """

    signs: tuple
    offsets: tuple = ()

    def __post_init__(self):
        signs = tuple(int(s) for s in self.signs)
        if any(s not in (-1, 0, 1) for s in signs) or not any(signs):
            raise ValueError(f"tail signs must be in {{-1,0,1}} and not all zero, got {signs}")
        offsets = tuple(int(c) for c in self.offsets) or (0,) * len(signs)
        if len(offsets) != len(signs):
            raise ValueError("offsets and signs must have the same length")
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "offsets", offsets)

    @property
    def N(self) -> int:
        return len(self.signs)

    @classmethod
    def plus(cls, phase: int = 0) -> "Tail":
        return cls((1,), (phase,))

    @classmethod
    def minus(cls, phase: int = 0) -> "Tail":
        return cls((-1,), (phase,))

    def describe(self) -> str:
        arrow = {1: "+inf", -1: "-inf", 0: "fixed"}
        return ", ".join(f"axis{ax}:{arrow[s]}@{c}" for ax, (s, c) in enumerate(zip(self.signs, self.offsets)))


@dataclass(frozen=True)
class Explicit:
    """A finite prefix of a sequence h_n tending to infinity."""

    points: tuple

    def __post_init__(self):
        pts = tuple(as_index(p) for p in self.points)
        if len(pts) < 4:
            raise DirectionError("an explicit direction needs at least 4 points")
        if len({len(p) for p in pts}) != 1:
            raise DirectionError("all points must have the same dimension")
        norms = [lattice.index_norm(p) for p in pts]
        if norms[-1] <= norms[len(norms) // 2]:
            raise DirectionError("explicit direction does not tend to infinity on its prefix")
        object.__setattr__(self, "points", pts)

    @property
    def N(self) -> int:
        return len(self.points[0])

    @property
    def tail(self) -> tuple:
        return self.points[len(self.points) // 2:]

    @classmethod
    def arithmetic(cls, start, step, count: int = 8) -> "Explicit":
        start, step = as_index(start), as_index(step)
        return cls(tuple(lattice.add(start, tuple(n * s for s in step)) for n in range(count)))


# coefficient limits ------------------------------------------------------------

def _periodic_along(table: np.ndarray, axis: int, N: int) -> Periodic:
    shape = [1] * N
    shape[axis] = len(table)
    d = table.shape[-1]
    return Periodic(np.asarray(table).reshape(tuple(shape) + (d, d)), N)


def coefficient_limit(a: CoefficientSequence, tail: Tail) -> CoefficientSequence:
    """The limit of n -> a_{n + h_k} along ``tail``."""
    a = a.simplify()
    if isinstance(a, Constant):
        return a
    if isinstance(a, Periodic):
        return a.shifted(tail.offsets).simplify()
    if isinstance(a, FiniteSupport):
        return Constant(np.zeros((a.d, a.d)), a.N)
    if isinstance(a, EventuallyPeriodic):
        s = tail.signs[a.axis]
        if s == 0:
            return a.shifted(tail.offsets).simplify()
        per = _periodic_along(a.right if s > 0 else a.left, a.axis, a.N)
        return per.shifted(tail.offsets).simplify()
    if isinstance(a, Tabulated):
        if a.blocks is None:
            return Constant(a.default, a.N)
        if tail.signs[0] < 0:
            return Constant(a.default, a.N)
        raise UnsupportedCoefficientError(
            "block-structured coefficients have many limits at +inf; use an explicit direction")
    raise UnsupportedCoefficientError(f"no limit rule for {type(a).__name__}")


def _limit_by_tail(A: BandOperator, tail: Tail) -> BandOperator:
    if tail.N != A.N:
        raise ValueError(f"direction has N={tail.N}, operator has N={A.N}")
    diags = {k: coefficient_limit(a, tail) for k, a in A.diagonals.items()}
    return BandOperator(diags, A.N, A.d).simplify()


def _structure(A: BandOperator, axis: int) -> tuple:
    """Union of coefficient extents along ``axis`` and the lcm of their periods."""
    lo, hi, P = None, None, 1
    for a in A.diagonals.values():
        ext, per = a.simplify().axis_structure(axis)
        P = lattice.lcm(P, per)
        if ext is not None:
            lo = ext[0] if lo is None else min(lo, ext[0])
            hi = ext[1] if hi is None else max(hi, ext[1])
    return (None if lo is None else (lo, hi)), P


def _blocks_of(A: BandOperator) -> BlockStructure | None:
    found = None
    for a in A.diagonals.values():
        if isinstance(a, Tabulated) and a.blocks is not None:
            b = a.blocks
            if found is not None and len(found.kinds) != len(b.kinds):
                raise UnsupportedCoefficientError("diagonals declare different block layouts")
            if found is None or b.start < found.start:
                found = b
    return found


def _tail_from_explicit(A: BandOperator, h: Explicit) -> Tail:
    pts = np.array(h.tail)
    signs, offsets = [], []
    for ax in range(A.N):
        c = pts[:, ax]
        ext, P = _structure(A, ax)
        if np.all(c == c[0]):
            signs.append(0)
            offsets.append(int(c[0]))
            continue
        if ext is None and P == 1:
            signs.append(int(np.sign(c[-1])))
            offsets.append(0)
            continue
        lo, hi = ext if ext is not None else (0, -1)
        if np.all(c > hi):
            s = 1
        elif np.all(c < lo):
            s = -1
        else:
            raise DirectionError(f"axis {ax} coordinate neither fixed nor escaping the core: {c.tolist()}")
        phases = np.mod(c, P)
        if not np.all(phases == phases[0]):
            raise DirectionError(f"phases modulo {P} do not stabilize on axis {ax}: {phases.tolist()}")
        signs.append(s)
        offsets.append(int(phases[0]))
    if not any(signs):
        raise DirectionError("explicit direction stays bounded")
    return Tail(tuple(signs), tuple(offsets))


def _stable_or_growing(values: np.ndarray, what: str):
    """A fixed integer if constant, None if increasing without bound, else error."""
    if np.all(values == values[0]):
        return int(values[0])
    if np.all(np.diff(values) >= 0) and values[-1] > values[0]:
        return None
    raise DirectionError(f"{what} neither stabilizes nor grows: {values.tolist()}")


def junction_operator(A: BandOperator, blocks: BlockStructure, j: int) -> BandOperator:
    """Limit of A seen from the junction between a block of kind j and the next kind.

    The first site of the following block sits at 0.
    """
    K = len(blocks.kinds)
    nxt = (j + 1) % K
    diags = {}
    for k, a in A.diagonals.items():
        a = a.simplify()
        if isinstance(a, Tabulated) and a.blocks is not None:
            kj, kn = a.blocks.kinds[j], a.blocks.kinds[nxt]
            # layouts of different diagonals may be translates of the reference layout
            at = a.blocks.start - blocks.start
            diags[k] = EventuallyPeriodic([kj[1]], [kj[2], kn[0]], [kn[1]], at - 1, 0, 1, a.d).simplify()
        else:
            diags[k] = coefficient_limit(a, Tail.plus(0))
            if not isinstance(diags[k], Constant):
                raise UnsupportedCoefficientError("block operators need constant right tails on other diagonals")
    return BandOperator(diags, A.N, A.d).simplify()


def interior_operator(A: BandOperator, blocks: BlockStructure, j: int) -> BandOperator:
    diags = {}
    for k, a in A.diagonals.items():
        a = a.simplify()
        if isinstance(a, Tabulated) and a.blocks is not None:
            diags[k] = Constant(a.blocks.kinds[j][1], 1)
        else:
            diags[k] = coefficient_limit(a, Tail.plus(0))
            if not isinstance(diags[k], Constant):
                raise UnsupportedCoefficientError("block operators need constant right tails on other diagonals")
    return BandOperator(diags, A.N, A.d).simplify()


def _limit_blocks_explicit(A: BandOperator, blocks: BlockStructure, h: Explicit) -> BandOperator:
    t = np.array([p[0] for p in h.tail])
    if np.all(t < blocks.start):
        return _limit_by_tail(A, Tail.minus(0))
    if not np.all(t >= blocks.start):
        raise DirectionError("explicit direction straddles the start of the block layout")
    _, j, i, L = blocks.locate(t)
    if not np.all(j == j[0]):
        raise DirectionError(f"block kind does not stabilize: {j.tolist()}")
    j = int(j[0])
    K = len(blocks.kinds)
    from_start = _stable_or_growing(i, "distance to block start")
    from_end = _stable_or_growing(L - 1 - i, "distance to block end")
    if from_start is not None and from_end is not None:
        raise DirectionError("blocks do not grow along the direction")
    if from_start is not None:
        return junction_operator(A, blocks, (j - 1) % K).shifted(from_start)
    if from_end is not None:
        return junction_operator(A, blocks, j).shifted(-from_end - 1)
    return interior_operator(A, blocks, j)


def limit_operator(A: LatticeOperator, direction) -> BandOperator:
    """The limit operator A_h = P-lim V_{-h_n} A V_{h_n}."""
    if not isinstance(A, BandOperator):
        raise UnsupportedCoefficientError(f"limit operators are computed for band operators, not {A!r}")
    if isinstance(direction, Tail):
        return _limit_by_tail(A, direction)
    if not isinstance(direction, Explicit):
        direction = Explicit(tuple(direction))
    if direction.N != A.N:
        raise ValueError(f"direction has N={direction.N}, operator has N={A.N}")
    blocks = _blocks_of(A)
    if blocks is not None:
        return _limit_blocks_explicit(A, blocks, direction)
    return _limit_by_tail(A, _tail_from_explicit(A, direction))


# orbits and operator spectra ---------------------------------------------------------

def _ep_axes(B: BandOperator) -> list:
    return sorted({a.axis for a in B.diagonals.values() if isinstance(a.simplify(), EventuallyPeriodic)})


def canonical(B: BandOperator) -> BandOperator:
    """Shift B so that along every axis carrying an eventually periodic
    coefficient the earliest core starts at 0; equal results mean B's are
    shifted copies of each other along those axes."""
    B = B.simplify()
    shift = [0] * B.N
    for ax in _ep_axes(B):
        shift[ax] = min(a.start for a in B.diagonals.values()
                        if isinstance(a, EventuallyPeriodic) and a.axis == ax)
    return B.shifted(tuple(shift)).simplify() if any(shift) else B


@dataclass
class Orbit:
    kind: str  # "finite" or "infinite"
    axes: list  # axes along which the orbit is unbounded
    members: list  # indices into OperatorSpectrum.representatives


@dataclass
class OperatorSpectrum:
    """Representatives of sigma_op(A) grouped into shift orbits.

    An ``infinite`` orbit stands for every shift of its (single, canonical)
    member along the listed axes; a ``finite`` orbit lists all its members.
    """

    representatives: list
    origins: list
    orbits: list
    N: int

    def orbit_of(self, i: int) -> int:
        return next(o for o, orb in enumerate(self.orbits) if i in orb.members)

    def keys(self) -> set:
        return {canonical(B).key() for B in self.representatives}

    def __contains__(self, B) -> bool:
        return canonical(B).key() in self.keys()

    def __len__(self):
        return len(self.representatives)

    def signature(self) -> set:
        """Orbits as (kind, frozenset of canonical keys): comparable across computations."""
        return {(o.kind, frozenset(canonical(self.representatives[i]).key() for i in o.members))
                for o in self.orbits}

    def to_json(self) -> dict:
        reps = []
        for i, B in enumerate(self.representatives):
            reps.append({"orbit": self.orbit_of(i), "origin": self.origins[i], "operator": B.to_json()})
        orbits = [{"id": o, "kind": orb.kind, "axes": orb.axes, "members": orb.members}
                  for o, orb in enumerate(self.orbits)]
        return {"schemaVersion": SCHEMA_VERSION, "representatives": reps, "orbits": orbits}


class _SpectrumBuilder:
    def __init__(self, N: int):
        self.N = N
        self.reps: list = []
        self.origins: list = []
        self.index: dict = {}
        self.orbits: list = []

    def add(self, B: BandOperator, origin: str):
        B = canonical(B)
        if B.key() in self.index:
            return
        axes = _ep_axes(B)
        finite_axes = [ax for ax in range(self.N) if ax not in axes]
        periods = [_structure(B, ax)[1] if ax in finite_axes else 1 for ax in range(self.N)]
        members = []
        for s in itertools.product(*(range(P) for P in periods)):
            C = canonical(B.shifted(s)) if any(s) else B
            if C.key() in self.index:
                continue
            self.index[C.key()] = len(self.reps)
            members.append(len(self.reps))
            self.reps.append(C)
            self.origins.append(origin if not any(s) else f"{origin}; shift {list(s)}")
        self.orbits.append(Orbit("infinite" if axes else "finite", axes, members))

    def build(self) -> OperatorSpectrum:
        return OperatorSpectrum(self.reps, self.origins, self.orbits, self.N)


def _tail_directions(A: BandOperator):
    """All tail directions (N = 1: both ends; N = 2: axes and quadrants)."""
    if A.N == 1:
        _, P = _structure(A, 0)
        for s in (1, -1):
            for r in range(P):
                yield Tail((s,), (r,))
        return
    ext = [_structure(A, ax) for ax in range(2)]
    for signs in itertools.product((-1, 0, 1), repeat=2):
        if not any(signs):
            continue
        ranges = []
        for ax, s in enumerate(signs):
            extent, P = ext[ax]
            if s == 0 and extent is not None:
                # the fixed coordinate runs over Z: one representative per orbit, placed at 0
                ranges.append([0])
            else:
                ranges.append(range(P))
        for off in itertools.product(*ranges):
            yield Tail(signs, off)


def operator_spectrum(A: LatticeOperator) -> OperatorSpectrum:
    """Enumerate sigma_op(A) for operators with supported coefficient classes."""
    if not isinstance(A, BandOperator):
        raise UnsupportedCoefficientError(f"operator spectra are computed for band operators, not {A!r}")
    builder = _SpectrumBuilder(A.N)
    blocks = _blocks_of(A)
    if blocks is not None:
        builder.add(_limit_by_tail(A, Tail.minus(0)), "-inf")
        for j in range(len(blocks.kinds)):
            builder.add(interior_operator(A, blocks, j), f"+inf inside blocks of kind {j}")
        for j in range(len(blocks.kinds)):
            builder.add(junction_operator(A, blocks, j),
                        f"+inf at junctions kind {j} -> {(j + 1) % len(blocks.kinds)}")
        return builder.build()
    for tail in _tail_directions(A):
        builder.add(_limit_by_tail(A, tail), tail.describe())
    return builder.build()


# P-strong convergence ---------------------------------------------------------------

@dataclass
class DefectTable:
    """defects[i][n] = ||P_m(A_n - B)|| + ||(A_n - B)P_m|| for m = windows[i], A_n = V_{-h_n} A V_{h_n}."""

    windows: list
    shifts: list
    defects: list

    def max_over_windows(self) -> list:
        return [max(col) for col in zip(*self.defects)]

    def to_json(self) -> dict:
        return {"windows": self.windows, "shifts": [list(h) for h in self.shifts], "defects": self.defects}


def shifted_defect(A: LatticeOperator, h, B: LatticeOperator, m: int, t=lattice.L2) -> float:
    """||P_m(V_{-h} A V_h - B)|| + ||(V_{-h} A V_h - B)P_m||, exact on bandwidth-dilated windows."""
    t = as_norm_tag(t)
    h = as_index(h, A.N)
    w = window(m, A.N)
    rows = w.dilated(max(A.bandwidth, B.bandwidth))
    left = A.compress(w.translated(h), rows.translated(h)) - B.compress(w, rows)
    right = A.compress(rows.translated(h), w.translated(h)) - B.compress(rows, w)
    return matrix_norm(left, t) + matrix_norm(right, t)


def verify_pstrong(A: LatticeOperator, h, B: LatticeOperator, windows: Sequence[int], t=lattice.L2) -> DefectTable:
    """P-strong defect table of the shifted copies of A against the candidate B."""
    pts = h.points if isinstance(h, Explicit) else tuple(as_index(p, A.N) for p in h)
    table = [[shifted_defect(A, p, B, m, t) for p in pts] for m in windows]
    return DefectTable(list(windows), list(pts), table)


# adjoints ----------------------------------------------------------------------------

@dataclass
class AdjointSpectrumReport:
    equal: bool
    from_adjoint: int  # orbits of sigma_op(A*)
    adjoints_of_limits: int  # orbits of (sigma_op(A))*
    missing: list = field(default_factory=list)  # descriptions of mismatched orbits

    def __bool__(self):
        return self.equal


def adjoint_spectrum_check(A: LatticeOperator) -> AdjointSpectrumReport:
    """Check sigma_op(A*) = (sigma_op(A))* including the orbit structure."""
    lhs = operator_spectrum(A.adjoint())
    spec = operator_spectrum(A)
    builder = _SpectrumBuilder(A.N)
    for i, B in enumerate(spec.representatives):
        builder.add(B.adjoint(), spec.origins[i])
    rhs = builder.build()
    a, b = lhs.signature(), rhs.signature()
    missing = [f"{kind} orbit of {len(keys)} member(s)" for kind, keys in a ^ b]
    return AdjointSpectrumReport(a == b, len(a), len(b), missing)


def dumps(spec: OperatorSpectrum) -> str:
    return json.dumps(spec.to_json(), sort_keys=True, indent=2)
