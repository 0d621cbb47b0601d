"""Structured coefficient families a: Z^N -> C^{d x d} for band operators.

Every class is finite data, so evaluation is total and the sequences are
bounded.  The classes close under the operations band-operator algebra needs:
shifting the argument, entrywise conjugate transpose, scaling, and pointwise
sums and products (see :func:`combine`).  Results are returned in their most
specific class via ``simplify``.

Tails of :class:`EventuallyPeriodic` and the tables of :class:`Periodic` are
indexed by the *absolute* coordinate modulo the period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .lattice import as_index, lcm


def as_matrix(value, d: int | None = None) -> np.ndarray:
    a = np.asarray(value, dtype=complex)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"coefficient must be a square matrix, got shape {a.shape}")
    if d is not None and a.shape[0] != d:
        raise ValueError(f"coefficient has size {a.shape[0]}, expected d={d}")
    return a


def _table(values, d: int | None = None) -> np.ndarray:
    arr = np.asarray(values, dtype=complex)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1, 1)
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise ValueError(f"expected a stack of square matrices, got shape {arr.shape}")
    if d is not None and arr.shape[1] != d:
        raise ValueError(f"table entries have size {arr.shape[1]}, expected d={d}")
    return arr


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex) + 0j  # also turns -0.0 into 0.0
    a.flags.writeable = False
    return a


def _akey(a: np.ndarray) -> tuple:
    a = np.asarray(a, dtype=complex) + 0j
    return (a.shape, a.tobytes())


def _min_period(table: np.ndarray, axis: int = 0) -> int:
    P = table.shape[axis]
    for p in range(1, P + 1):
        if P % p == 0 and np.array_equal(table, np.roll(table, p, axis=axis)):
            return p
    return P


class CoefficientSequence:
    """Base class.  Subclasses set ``N`` and ``d`` and implement ``values``."""

    N: int
    d: int
    kind: str = ""

    def values(self, sites: np.ndarray) -> np.ndarray:
        """Coefficients at ``sites`` (int array (M, N)) as an (M, d, d) array."""
        raise NotImplementedError

    def value(self, k) -> np.ndarray:
        return self.values(np.array([as_index(k, self.N)]))[0]

    def shifted(self, k) -> "CoefficientSequence":
        """The sequence n -> a_{n+k}."""
        raise NotImplementedError

    def map(self, f: Callable[[np.ndarray], np.ndarray]) -> "CoefficientSequence":
        """Apply ``f`` to every d x d value (f must act on stacks (..., d, d))."""
        raise NotImplementedError

    def conj_transpose(self) -> "CoefficientSequence":
        return self.map(lambda a: np.conj(np.swapaxes(a, -1, -2)))

    def scaled(self, c) -> "CoefficientSequence":
        return self.map(lambda a: c * a)

    def sup_norm(self) -> float:
        raise NotImplementedError

    def simplify(self) -> "CoefficientSequence":
        return self

    def key(self) -> tuple:
        """Hashable canonical form; equal keys mean equal sequences."""
        raise NotImplementedError

    def is_zero(self) -> bool:
        s = self.simplify()
        return isinstance(s, Constant) and not np.any(s.matrix)

    def axis_structure(self, axis: int) -> tuple:
        """``(extent, period)`` along ``axis``.

        ``extent`` is None or an inclusive coordinate range outside of which
        the sequence is periodic along that axis with the given period.
        """
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def __eq__(self, other):
        if not isinstance(other, CoefficientSequence):
            return NotImplemented
        return (self.N, self.d) == (other.N, other.d) and self.simplify().key() == other.simplify().key()

    def __hash__(self):
        return hash(self.simplify().key())

    def __add__(self, other):
        return combine(self, other, "add")

    def __sub__(self, other):
        return combine(self, other.scaled(-1), "add")

    def __mul__(self, other):
        if isinstance(other, CoefficientSequence):
            return combine(self, other, "mul")
        return self.scaled(other)

    def __neg__(self):
        return self.scaled(-1)


class Constant(CoefficientSequence):
    kind = "constant"

    def __init__(self, matrix, N: int = 1):
        self.matrix = _frozen(as_matrix(matrix))
        self.N = N
        self.d = self.matrix.shape[0]

    def values(self, sites):
        return np.broadcast_to(self.matrix, (len(sites), self.d, self.d))

    def shifted(self, k):
        return self

    def map(self, f):
        return Constant(f(self.matrix), self.N)

    def sup_norm(self):
        return float(np.linalg.norm(self.matrix, 2))

    def key(self):
        return ("constant", self.N, _akey(self.matrix))

    def axis_structure(self, axis):
        return None, 1

    def to_json(self):
        return {"class": "constant", "value": mat_to_json(self.matrix)}

    def __repr__(self):
        return f"Constant({self.matrix.tolist()})" if self.d > 1 else f"Constant({self.matrix[0, 0]})"


class Periodic(CoefficientSequence):
    """a_n = table[n mod P] with a period per axis; table shape (*P, d, d)."""

    kind = "periodic"

    def __init__(self, table, N: int = 1):
        arr = np.asarray(table, dtype=complex)
        if arr.ndim == N:
            arr = arr.reshape(arr.shape + (1, 1))
        if arr.ndim != N + 2 or arr.shape[-1] != arr.shape[-2]:
            raise ValueError(f"periodic table for N={N} must have shape (*P, d, d), got {arr.shape}")
        self.table = _frozen(arr)
        self.N = N
        self.d = arr.shape[-1]
        self.period = tuple(arr.shape[:N])

    def values(self, sites):
        sites = np.asarray(sites, dtype=np.int64)
        idx = tuple(np.mod(sites[:, ax], P) for ax, P in enumerate(self.period))
        return self.table[idx]

    def shifted(self, k):
        k = as_index(k, self.N)
        return Periodic(np.roll(self.table, tuple(-c for c in k), axis=tuple(range(self.N))), self.N)

    def map(self, f):
        return Periodic(f(self.table), self.N)

    def sup_norm(self):
        flat = self.table.reshape(-1, self.d, self.d)
        return float(max(np.linalg.norm(a, 2) for a in flat))

    def simplify(self):
        t = self.table
        for ax in range(self.N):
            p = _min_period(t, ax)
            t = np.take(t, range(p), axis=ax)
        if all(s == 1 for s in t.shape[: self.N]):
            return Constant(t.reshape(self.d, self.d), self.N)
        return Periodic(t, self.N)

    def key(self):
        s = self.simplify()
        if s is not self and not isinstance(s, Periodic):
            return s.key()
        return ("periodic", self.N, _akey(s.table))

    def axis_structure(self, axis):
        return None, self.period[axis]

    def to_json(self):
        return {
            "class": "periodic",
            "period": list(self.period),
            "table": [mat_to_json(a) for a in self.table.reshape(-1, self.d, self.d)],
        }

    def __repr__(self):
        return f"Periodic(period={self.period}, d={self.d})"


class EventuallyPeriodic(CoefficientSequence):
    """Periodic tails on both ends of ``axis`` with a finite core between.

    The value at a site depends on its ``axis`` coordinate t only:
    ``left[t mod PL]`` for t < start, ``core[t - start]`` for
    start <= t < start + len(core), ``right[t mod PR]`` beyond.
    """

    kind = "eventually_periodic"

    def __init__(self, left, core, right, start: int = 0, axis: int = 0, N: int = 1, d: int | None = None):
        left = _table(left, d)
        d = left.shape[1]
        right = _table(right, d)
        core = np.asarray(core, dtype=complex)
        core = np.zeros((0, d, d), dtype=complex) if core.size == 0 else _table(core, d)
        if not 0 <= axis < N:
            raise ValueError(f"axis {axis} out of range for N={N}")
        self.left, self.core, self.right = _frozen(left), _frozen(core), _frozen(right)
        self.start, self.axis, self.N, self.d = int(start), int(axis), N, d

    @property
    def end(self) -> int:
        """One past the last core coordinate."""
        return self.start + len(self.core)

    def profile(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.int64)
        out = np.empty((len(t), self.d, self.d), dtype=complex)
        lm, rm = t < self.start, t >= self.end
        cm = ~(lm | rm)
        out[lm] = self.left[np.mod(t[lm], len(self.left))]
        out[rm] = self.right[np.mod(t[rm], len(self.right))]
        out[cm] = self.core[t[cm] - self.start]
        return out

    def values(self, sites):
        return self.profile(np.asarray(sites, dtype=np.int64)[:, self.axis])

    def shifted(self, k):
        k = as_index(k, self.N)[self.axis]
        return EventuallyPeriodic(
            np.roll(self.left, -k, axis=0), self.core, np.roll(self.right, -k, axis=0),
            self.start - k, self.axis, self.N, self.d,
        )

    def map(self, f):
        return EventuallyPeriodic(
            f(self.left), f(self.core) if len(self.core) else self.core, f(self.right),
            self.start, self.axis, self.N, self.d,
        )

    def sup_norm(self):
        stack = np.concatenate([self.left, self.core, self.right])
        return float(max(np.linalg.norm(a, 2) for a in stack))

    def simplify(self):
        left = self.left[: _min_period(self.left)]
        right = self.right[: _min_period(self.right)]
        PL, PR = len(left), len(right)
        lo, hi = self.start - PL - PR, self.end + PL + PR
        t = np.arange(lo, hi)
        vals = self.profile(t)
        left_ext = left[np.mod(t, PL)]
        right_ext = right[np.mod(t, PR)]
        diff_l = np.any(vals != left_ext, axis=(1, 2))
        diff_r = np.any(vals != right_ext, axis=(1, 2))
        end = lo + (int(np.nonzero(diff_r)[0].max()) + 1 if diff_r.any() else 0)
        first = lo + int(np.nonzero(diff_l)[0].min()) if diff_l.any() else hi
        start = min(first, end)
        core = vals[start - lo : end - lo]
        same_tails = PL == PR and np.array_equal(left, right)
        if same_tails and len(core) == 0:
            shape = [1] * self.N
            shape[self.axis] = PL
            return Periodic(left.reshape(tuple(shape) + (self.d, self.d)), self.N).simplify()
        if self.N == 1 and not np.any(left) and not np.any(right):
            return FiniteSupport({(start + i,): core[i] for i in range(len(core))}, self.N, self.d).simplify()
        return EventuallyPeriodic(left, core, right, start, self.axis, self.N, self.d)

    def key(self):
        s = self.simplify()
        if not isinstance(s, EventuallyPeriodic):
            return s.key()
        return ("eventually_periodic", s.N, s.axis, s.start, _akey(s.left), _akey(s.core), _akey(s.right))

    def axis_structure(self, axis):
        if axis != self.axis:
            return None, 1
        return (self.start - 1, max(self.end, self.start)), lcm(len(self.left), len(self.right))

    def to_json(self):
        return {
            "class": "eventually_periodic",
            "axis": self.axis,
            "start": self.start,
            "left": [mat_to_json(a) for a in self.left],
            "core": [mat_to_json(a) for a in self.core],
            "right": [mat_to_json(a) for a in self.right],
        }

    def __repr__(self):
        return (f"EventuallyPeriodic(axis={self.axis}, start={self.start}, "
                f"|left|={len(self.left)}, |core|={len(self.core)}, |right|={len(self.right)})")


class FiniteSupport(CoefficientSequence):
    """Finitely many nonzero values; zero elsewhere."""

    kind = "finite_support"

    def __init__(self, entries: Mapping, N: int = 1, d: int | None = None):
        clean = {}
        for k, v in dict(entries).items():
            m = as_matrix(v, d)
            d = m.shape[0]
            clean[as_index(k, N)] = _frozen(m)
        if d is None:
            raise ValueError("d must be given for an empty FiniteSupport")
        self.entries, self.N, self.d = clean, N, d

    def values(self, sites):
        out = np.zeros((len(sites), self.d, self.d), dtype=complex)
        if self.entries:
            for i, s in enumerate(map(tuple, np.asarray(sites).tolist())):
                v = self.entries.get(s)
                if v is not None:
                    out[i] = v
        return out

    def support_radius(self) -> int:
        return max((max(abs(c) for c in k) for k in self.entries), default=0)

    def shifted(self, k):
        k = as_index(k, self.N)
        return FiniteSupport({tuple(a - b for a, b in zip(n, k)): v for n, v in self.entries.items()}, self.N, self.d)

    def map(self, f):
        return FiniteSupport({k: f(v) for k, v in self.entries.items()}, self.N, self.d)

    def sup_norm(self):
        return float(max((np.linalg.norm(v, 2) for v in self.entries.values()), default=0.0))

    def simplify(self):
        nz = {k: v for k, v in self.entries.items() if np.any(v)}
        if not nz:
            return Constant(np.zeros((self.d, self.d)), self.N)
        return FiniteSupport(nz, self.N, self.d)

    def key(self):
        s = self.simplify()
        if not isinstance(s, FiniteSupport):
            return s.key()
        return ("finite_support", s.N, tuple((k, _akey(v)) for k, v in sorted(s.entries.items())))

    def axis_structure(self, axis):
        if not self.entries:
            return None, 1
        cs = [k[axis] for k in self.entries]
        return (min(cs), max(cs)), 1

    def to_json(self):
        return {
            "class": "finite_support",
            "entries": [{"index": list(k), "value": mat_to_json(v)} for k, v in sorted(self.entries.items())],
        }

    def __repr__(self):
        return f"FiniteSupport({len(self.entries)} entries, d={self.d})"


@dataclass(frozen=True)
class BlockStructure:
    """Consecutive blocks of growing length, starting at coordinate ``start``.

    Round r = 1, 2, ... lays down one block of length r for every kind in
    ``kinds`` (in order).  Each kind gives the value at the first position of
    a block, in its interior, and at its last position (first wins for
    length-1 blocks).  Only N = 1.
    """

    start: int
    kinds: tuple  # of (first, interior, last) matrices

    def locate(self, t: np.ndarray):
        """Round, kind, position-in-block and block length for t >= start."""
        K = len(self.kinds)
        u = np.asarray(t, dtype=np.int64) - self.start
        r = np.floor((1 + np.sqrt(1 + 8 * u / K)) / 2).astype(np.int64)
        r = np.maximum(r, 1)
        # integer correction of the float estimate
        while True:
            low = K * r * (r - 1) // 2 > u
            if not low.any():
                break
            r[low] -= 1
        while True:
            high = K * (r + 1) * r // 2 <= u
            if not high.any():
                break
            r[high] += 1
        off = u - K * r * (r - 1) // 2
        return r, off // r, off % r, r

    def round_start(self, r: int) -> int:
        return self.start + len(self.kinds) * r * (r - 1) // 2

    def junction(self, r: int, j: int) -> int:
        """First coordinate of the block of kind j+1 following kind j in round r."""
        K = len(self.kinds)
        if j + 1 < K:
            return self.round_start(r) + (j + 1) * r
        return self.round_start(r + 1)

    def block_middle(self, r: int, j: int) -> int:
        return self.round_start(r) + j * r + r // 2

    def profile(self, t: np.ndarray, default: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.int64)
        d = default.shape[0]
        out = np.broadcast_to(default, (len(t), d, d)).copy()
        m = t >= self.start
        if m.any():
            _, j, i, L = self.locate(t[m])
            kinds = np.array([[f, c, l] for f, c, l in self.kinds])  # (K, 3, d, d)
            slot = np.where(i == 0, 0, np.where(i == L - 1, 2, 1))
            out[m] = kinds[j, slot]
        return out

    def shifted(self, k: int) -> "BlockStructure":
        return BlockStructure(self.start - k, self.kinds)

    def map(self, f) -> "BlockStructure":
        return BlockStructure(self.start, tuple(tuple(_frozen(f(v)) for v in kind) for kind in self.kinds))

    def key(self) -> tuple:
        return ("blocks", self.start, tuple(tuple(_akey(v) for v in kind) for kind in self.kinds))


class Tabulated(CoefficientSequence):
    """A table of values over a default matrix.

    The table is either a finite map (entries) or a declared
    :class:`BlockStructure` covering a half-line; explicit entries override
    the block structure.
    """

    kind = "tabulated"

    def __init__(self, entries: Mapping | None = None, default=0, N: int = 1,
                 d: int | None = None, blocks: BlockStructure | None = None):
        if np.ndim(default):
            self.default = _frozen(as_matrix(default, d))
        else:
            if d is None:
                probe = next(iter((entries or {}).values()), None)
                d = as_matrix(probe).shape[0] if probe is not None else 1
            self.default = _frozen(complex(default) * np.eye(d))
        self.d = self.default.shape[0]
        self.N = N
        if blocks is not None:
            if N != 1:
                raise ValueError("block structures are only supported for N = 1")
            blocks = BlockStructure(int(blocks.start), tuple(
                tuple(_frozen(as_matrix(v, self.d)) for v in kind) for kind in blocks.kinds))
        self.blocks = blocks
        self.entries = {as_index(k, N): _frozen(as_matrix(v, self.d)) for k, v in (entries or {}).items()}

    def values(self, sites):
        sites = np.asarray(sites, dtype=np.int64)
        if self.blocks is not None:
            out = self.blocks.profile(sites[:, 0], self.default)
        else:
            out = np.broadcast_to(self.default, (len(sites), self.d, self.d)).copy()
        if self.entries:
            for i, s in enumerate(map(tuple, sites.tolist())):
                v = self.entries.get(s)
                if v is not None:
                    out[i] = v
        return out

    def shifted(self, k):
        k = as_index(k, self.N)
        ent = {tuple(a - b for a, b in zip(n, k)): v for n, v in self.entries.items()}
        blocks = self.blocks.shifted(k[0]) if self.blocks is not None else None
        return Tabulated(ent, self.default, self.N, self.d, blocks)

    def map(self, f):
        blocks = self.blocks.map(f) if self.blocks is not None else None
        return Tabulated({k: f(v) for k, v in self.entries.items()}, f(self.default), self.N, self.d, blocks)

    def sup_norm(self):
        mats = [self.default, *self.entries.values()]
        if self.blocks is not None:
            mats += [v for kind in self.blocks.kinds for v in kind]
        return float(max(np.linalg.norm(a, 2) for a in mats))

    def simplify(self):
        if self.blocks is not None:
            return self
        ent = {k: v for k, v in self.entries.items() if not np.array_equal(v, self.default)}
        if not ent:
            return Constant(self.default, self.N)
        if not np.any(self.default):
            return FiniteSupport(ent, self.N, self.d)
        if self.N == 1:
            lo, hi = min(k[0] for k in ent), max(k[0] for k in ent)
            core = self.values(np.arange(lo, hi + 1)[:, None])
            return EventuallyPeriodic([self.default], core, [self.default], lo, 0, 1, self.d).simplify()
        return Tabulated(ent, self.default, self.N, self.d)

    def key(self):
        s = self.simplify()
        if not isinstance(s, Tabulated):
            return s.key()
        blocks = s.blocks.key() if s.blocks is not None else None
        return ("tabulated", s.N, _akey(s.default), blocks,
                tuple((k, _akey(v)) for k, v in sorted(s.entries.items())))

    def axis_structure(self, axis):
        if self.blocks is not None:
            raise UnsupportedCoefficientError("block-structured tables have no finite extent")
        if not self.entries:
            return None, 1
        cs = [k[axis] for k in self.entries]
        return (min(cs), max(cs)), 1

    def to_json(self):
        out = {
            "class": "tabulated",
            "default": mat_to_json(self.default),
            "entries": [{"index": list(k), "value": mat_to_json(v)} for k, v in sorted(self.entries.items())],
        }
        if self.blocks is not None:
            out["blocks"] = {
                "start": self.blocks.start,
                "kinds": [{"first": mat_to_json(f), "interior": mat_to_json(c), "last": mat_to_json(l)}
                          for f, c, l in self.blocks.kinds],
            }
        return out

    def __repr__(self):
        extra = f", blocks@{self.blocks.start}" if self.blocks is not None else ""
        return f"Tabulated({len(self.entries)} entries{extra}, d={self.d})"


class UnsupportedCoefficientError(TypeError):
    """The requested operation is not closed over the given coefficient classes."""


def zero(N: int = 1, d: int = 1) -> Constant:
    return Constant(np.zeros((d, d)), N)


def as_coefficient(value, N: int = 1, d: int | None = None) -> CoefficientSequence:
    if isinstance(value, CoefficientSequence):
        if value.N != N:
            raise ValueError(f"coefficient has N={value.N}, expected {N}")
        if d is not None and value.d != d:
            raise ValueError(f"coefficient has d={value.d}, expected {d}")
        return value
    return Constant(as_matrix(value, d), N)


def indicator(lo: int | None = None, hi: int | None = None, axis: int = 0, N: int = 1, d: int = 1,
              value=None) -> CoefficientSequence:
    """Characteristic function of {lo <= n[axis] <= hi} (either end may be open)."""
    one = np.eye(d, dtype=complex) if value is None else as_matrix(value, d)
    z = np.zeros((d, d), dtype=complex)
    if lo is None and hi is None:
        return Constant(one, N)
    if lo is None:
        return EventuallyPeriodic([one], [], [z], hi + 1, axis, N, d).simplify()
    if hi is None:
        return EventuallyPeriodic([z], [], [one], lo, axis, N, d).simplify()
    core = [one] * (hi - lo + 1)
    return EventuallyPeriodic([z], core, [z], lo, axis, N, d).simplify()


# pointwise arithmetic -------------------------------------------------------

def _op(kind: str):
    if kind == "add":
        return lambda a, b: a + b
    if kind == "mul":
        return lambda a, b: a @ b
    raise ValueError(kind)


def _as_profile(c: CoefficientSequence, axis: int) -> EventuallyPeriodic | None:
    """View ``c`` as an EventuallyPeriodic along ``axis`` if it depends only on that coordinate."""
    if isinstance(c, EventuallyPeriodic):
        return c if c.axis == axis else None
    if isinstance(c, Constant):
        return EventuallyPeriodic([c.matrix], [], [c.matrix], 0, axis, c.N, c.d)
    if isinstance(c, Periodic):
        if any(P != 1 for ax, P in enumerate(c.period) if ax != axis):
            return None
        tab = c.table.reshape(c.period[axis], c.d, c.d)
        return EventuallyPeriodic(tab, [], tab, 0, axis, c.N, c.d)
    if c.N == 1 and isinstance(c, FiniteSupport):
        z = np.zeros((c.d, c.d))
        if not c.entries:
            return EventuallyPeriodic([z], [], [z], 0, 0, 1, c.d)
        lo, hi = min(k[0] for k in c.entries), max(k[0] for k in c.entries)
        return EventuallyPeriodic([z], c.values(np.arange(lo, hi + 1)[:, None]), [z], lo, 0, 1, c.d)
    if c.N == 1 and isinstance(c, Tabulated) and c.blocks is None:
        if not c.entries:
            return EventuallyPeriodic([c.default], [], [c.default], 0, 0, 1, c.d)
        lo, hi = min(k[0] for k in c.entries), max(k[0] for k in c.entries)
        return EventuallyPeriodic([c.default], c.values(np.arange(lo, hi + 1)[:, None]), [c.default], lo, 0, 1, c.d)
    return None


def _combine_profiles(a: EventuallyPeriodic, b: EventuallyPeriodic, f) -> CoefficientSequence:
    PL, PR = lcm(len(a.left), len(b.left)), lcm(len(a.right), len(b.right))
    tl, tr = np.arange(PL), np.arange(PR)
    left = f(a.left[tl % len(a.left)], b.left[tl % len(b.left)])
    right = f(a.right[tr % len(a.right)], b.right[tr % len(b.right)])
    start, end = min(a.start, b.start), max(a.end, b.end)
    t = np.arange(start, end)
    core = f(a.profile(t), b.profile(t)) if len(t) else np.zeros((0, a.d, a.d))
    return EventuallyPeriodic(left, core, right, start, a.axis, a.N, a.d).simplify()


def combine(a: CoefficientSequence, b: CoefficientSequence, kind: str) -> CoefficientSequence:
    """Pointwise ``a_n + b_n`` (kind="add") or ``a_n @ b_n`` (kind="mul")."""
    if (a.N, a.d) != (b.N, b.d):
        raise ValueError("coefficients live on different spaces")
    f = _op(kind)
    a, b = a.simplify(), b.simplify()
    if isinstance(a, Constant) and isinstance(b, Constant):
        return Constant(f(a.matrix, b.matrix), a.N)
    # constants fold into any class through map
    if isinstance(b, Constant) and not (kind == "add" and isinstance(a, FiniteSupport)):
        return a.map(lambda v: f(v, np.broadcast_to(b.matrix, v.shape))).simplify()
    if isinstance(a, Constant) and not (kind == "add" and isinstance(b, FiniteSupport)):
        return b.map(lambda v: f(np.broadcast_to(a.matrix, v.shape), v)).simplify()
    if kind == "mul" and (isinstance(a, FiniteSupport) or isinstance(b, FiniteSupport)):
        fs = a if isinstance(a, FiniteSupport) else b
        keys = sorted(fs.entries)
        sites = np.array(keys, dtype=np.int64)
        va, vb = a.values(sites), b.values(sites)
        return FiniteSupport({k: va[i] @ vb[i] for i, k in enumerate(keys)}, a.N, a.d).simplify()
    finite = (FiniteSupport, Tabulated, Constant)
    if (isinstance(a, Tabulated) and a.blocks is not None) or (isinstance(b, Tabulated) and b.blocks is not None):
        raise UnsupportedCoefficientError("block-structured tables only combine with constants")
    if a.N == 1:
        pa, pb = _as_profile(a, 0), _as_profile(b, 0)
        return _combine_profiles(pa, pb, f)
    if isinstance(a, finite) and isinstance(b, finite):
        keys = sorted(set(getattr(a, "entries", {})) | set(getattr(b, "entries", {})))
        da = a.default if isinstance(a, Tabulated) else (a.matrix if isinstance(a, Constant) else np.zeros((a.d, a.d)))
        db = b.default if isinstance(b, Tabulated) else (b.matrix if isinstance(b, Constant) else np.zeros((b.d, b.d)))
        sites = np.array(keys, dtype=np.int64).reshape(-1, a.N)
        va, vb = a.values(sites), b.values(sites)
        return Tabulated({k: f(va[i], vb[i]) for i, k in enumerate(keys)}, f(da, db), a.N, a.d).simplify()
    if isinstance(a, Periodic) and isinstance(b, Periodic):
        P = tuple(lcm(p, q) for p, q in zip(a.period, b.period))
        grids = np.meshgrid(*(np.arange(p) for p in P), indexing="ij")
        sites = np.stack([g.ravel() for g in grids], axis=1)
        vals = f(a.values(sites), b.values(sites))
        return Periodic(vals.reshape(P + (a.d, a.d)), a.N).simplify()
    for axis in range(a.N):
        pa, pb = _as_profile(a, axis), _as_profile(b, axis)
        if pa is not None and pb is not None:
            return _combine_profiles(pa, pb, f)
    raise UnsupportedCoefficientError(f"cannot combine {type(a).__name__} and {type(b).__name__} for N={a.N}")


# JSON ------------------------------------------------------------------------

def mat_to_json(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=complex)
    out = {"re": m.real.tolist()}
    if np.any(m.imag):
        out["im"] = m.imag.tolist()
    return out


def mat_from_json(obj) -> np.ndarray:
    if isinstance(obj, dict):
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
        return as_matrix(re + 1j * im)
    return as_matrix(obj)


def coefficient_from_json(obj: dict, N: int = 1, d: int | None = None) -> CoefficientSequence:
    cls = obj.get("class")
    if cls == "constant":
        return Constant(mat_from_json(obj["value"]), N)
    if cls == "periodic":
        period = tuple(obj["period"])
        mats = np.array([mat_from_json(m) for m in obj["table"]])
        return Periodic(mats.reshape(period + mats.shape[1:]), N)
    if cls == "eventually_periodic":
        conv = lambda key: [mat_from_json(m) for m in obj[key]]
        core = conv("core")
        return EventuallyPeriodic(conv("left"), core, conv("right"), obj.get("start", 0),
                                  obj.get("axis", 0), N, d)
    if cls == "finite_support":
        return FiniteSupport({tuple(e["index"]): mat_from_json(e["value"]) for e in obj["entries"]}, N, d)
    if cls == "tabulated":
        blocks = None
        if obj.get("blocks"):
            b = obj["blocks"]
            kinds = tuple((mat_from_json(k["first"]), mat_from_json(k["interior"]), mat_from_json(k["last"]))
                          for k in b["kinds"])
            blocks = BlockStructure(b["start"], kinds)
        entries = {tuple(e["index"]): mat_from_json(e["value"]) for e in obj.get("entries", [])}
        return Tabulated(entries, mat_from_json(obj["default"]), N, d, blocks)
    raise ValueError(f"unknown coefficient class {cls!r}")
