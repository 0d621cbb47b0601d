"""Index arithmetic on Z^N, windows, the projections P_n / Q_n, shifts and p-norms.

Vectors here are finitely supported maps from multi-indices to C^d.  The
fiber norm is always the Euclidean norm on C^d.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

MultiIndex = tuple  # tuple[int, ...] of length N

_VALID_P = (1, 2, math.inf)


def as_index(k, N: int | None = None) -> tuple:
    """Normalize an int or int sequence to a multi-index tuple."""
    if isinstance(k, (int, np.integer)):
        idx = (int(k),)
    else:
        idx = tuple(int(c) for c in k)
    if N is not None:
        if len(idx) == 1 and N > 1 and isinstance(k, (int, np.integer)):
            raise ValueError(f"scalar index {k!r} given for N={N}")
        if len(idx) != N:
            raise ValueError(f"index {idx} does not have length N={N}")
    return idx


def index_norm(k: Sequence[int]) -> int:
    """Max-norm |k| of a multi-index."""
    return max((abs(c) for c in k), default=0)


def add(a: Sequence[int], b: Sequence[int]) -> tuple:
    return tuple(x + y for x, y in zip(a, b))


def sub(a: Sequence[int], b: Sequence[int]) -> tuple:
    return tuple(x - y for x, y in zip(a, b))


def neg(a: Sequence[int]) -> tuple:
    return tuple(-x for x in a)


@dataclass(frozen=True)
class NormTag:
    """Which l^p norm is in use.

    ``zero`` marks the l^0 subspace reading of p = inf; it only changes the
    interpretation of results, never the arithmetic.
    """

    p: float = 2
    zero: bool = False

    def __post_init__(self):
        p = self.p
        if isinstance(p, str):
            p = parse_p(p)
        if p not in _VALID_P:
            raise ValueError(f"p must be one of 1, 2, inf; got {self.p!r}")
        object.__setattr__(self, "p", math.inf if p == math.inf else int(p))
        if self.zero and self.p != math.inf:
            raise ValueError("the l^0 flag is only meaningful for p = inf")

    @property
    def dual(self) -> "NormTag":
        """The norm of the dual pairing (1 <-> inf, 2 <-> 2)."""
        return NormTag({1: math.inf, 2: 2, math.inf: 1}[self.p])

    def __str__(self):
        if self.p == math.inf:
            return "0" if self.zero else "inf"
        return str(self.p)


def parse_p(value) -> float:
    if isinstance(value, str):
        v = value.strip().lower()
        if v in ("inf", "infinity", "oo", "0"):
            return math.inf
        value = float(v)
    if value == math.inf:
        return math.inf
    if value in (1, 2):
        return int(value)
    raise ValueError(f"unsupported p: {value!r}")


def as_norm_tag(t) -> NormTag:
    if isinstance(t, NormTag):
        return t
    if isinstance(t, str) and t.strip() == "0":
        return NormTag(math.inf, zero=True)
    return NormTag(parse_p(t))


L2 = NormTag(2)


@dataclass(frozen=True)
class Window:
    """A box of lattice sites ``lo <= n <= hi`` (coordinatewise, inclusive).

    The canonical windows are the cubes {-n..n}^N behind P_n; use
    :func:`window` for those.  Sites are enumerated in lexicographic order,
    which fixes the row/column order of every dense compression.
    """

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo, hi = tuple(int(c) for c in self.lo), tuple(int(c) for c in self.hi)
        if len(lo) != len(hi) or not 1 <= len(lo) <= 2:
            raise ValueError("window corners must have equal length N in {1, 2}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def N(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple:
        return tuple(max(h - l + 1, 0) for l, h in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def __len__(self):
        return self.size

    @property
    def radius(self) -> int:
        """Radius n of a centred cube; raises for other boxes."""
        n = self.hi[0]
        if self.lo != (-n,) * self.N or self.hi != (n,) * self.N:
            raise ValueError(f"{self} is not a centred cube")
        return n

    def __contains__(self, k) -> bool:
        return all(l <= c <= h for l, c, h in zip(self.lo, k, self.hi))

    def __iter__(self) -> Iterator[tuple]:
        return itertools.product(*(range(l, h + 1) for l, h in zip(self.lo, self.hi)))

    def sites(self) -> np.ndarray:
        """All sites as an integer array of shape (size, N), lexicographic order."""
        if self.size == 0:
            return np.zeros((0, self.N), dtype=np.int64)
        axes = [np.arange(l, h + 1) for l, h in zip(self.lo, self.hi)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)

    def position(self, sites: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Lexicographic positions of ``sites`` and a mask of which lie inside."""
        sites = np.asarray(sites, dtype=np.int64).reshape(-1, self.N)
        lo, hi = np.array(self.lo), np.array(self.hi)
        inside = np.all((sites >= lo) & (sites <= hi), axis=1)
        rel = sites - lo
        pos = np.zeros(len(sites), dtype=np.int64)
        for ax, width in enumerate(self.shape):
            pos = pos * width + rel[:, ax]
        return pos, inside

    def translated(self, k) -> "Window":
        k = as_index(k, self.N)
        return Window(add(self.lo, k), add(self.hi, k))

    def dilated(self, r: int) -> "Window":
        return Window(tuple(c - r for c in self.lo), tuple(c + r for c in self.hi))

    def __str__(self):
        if self.lo == tuple(-c for c in self.hi) and len(set(self.hi)) == 1:
            return f"P_{self.hi[0]}(N={self.N})"
        return f"[{self.lo}..{self.hi}]"


def window(n: int, N: int = 1) -> Window:
    """The cube {-n, ..., n}^N."""
    if n < 0:
        raise ValueError("window radius must be nonnegative")
    return Window((-n,) * N, (n,) * N)


def box(start, width: int, N: int = 1) -> Window:
    """Box of ``width`` sites per axis with lower corner ``start``."""
    if isinstance(start, (int, np.integer)):
        start = (int(start),) * N
    start = as_index(start, N)
    return Window(start, tuple(s + width - 1 for s in start))


@dataclass(frozen=True)
class LatticeVector:
    """A finitely supported element of l^p(Z^N, C^d)."""

    entries: Mapping = field(default_factory=dict)
    N: int = 1
    d: int = 1

    def __post_init__(self):
        if self.d < 1 or self.N not in (1, 2):
            raise ValueError("need d >= 1 and N in {1, 2}")
        clean = {}
        for k, v in dict(self.entries).items():
            v = np.asarray(v, dtype=complex).reshape(self.d)
            if np.any(v != 0):
                v = v.copy()
                v.flags.writeable = False
                clean[as_index(k, self.N)] = v
        object.__setattr__(self, "entries", clean)

    def __getitem__(self, k) -> np.ndarray:
        v = self.entries.get(as_index(k, self.N))
        return np.zeros(self.d, dtype=complex) if v is None else v

    @property
    def support(self) -> frozenset:
        return frozenset(self.entries)

    def _same_space(self, other: "LatticeVector"):
        if (self.N, self.d) != (other.N, other.d):
            raise ValueError("vectors live on different spaces")

    def __add__(self, other: "LatticeVector") -> "LatticeVector":
        self._same_space(other)
        out = dict(self.entries)
        for k, v in other.entries.items():
            out[k] = out[k] + v if k in out else v
        return LatticeVector(out, self.N, self.d)

    def __neg__(self) -> "LatticeVector":
        return LatticeVector({k: -v for k, v in self.entries.items()}, self.N, self.d)

    def __sub__(self, other: "LatticeVector") -> "LatticeVector":
        return self + (-other)

    def __mul__(self, c) -> "LatticeVector":
        return LatticeVector({k: c * v for k, v in self.entries.items()}, self.N, self.d)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, LatticeVector):
            return NotImplemented
        if (self.N, self.d) != (other.N, other.d) or self.support != other.support:
            return False
        return all(np.array_equal(v, other.entries[k]) for k, v in self.entries.items())

    def allclose(self, other: "LatticeVector", atol: float = 1e-12) -> bool:
        return norm(self - other, NormTag(math.inf)) <= atol

    def to_array(self, w: Window) -> np.ndarray:
        """Stack the entries on ``w`` into a flat vector of length d*|w|."""
        out = np.zeros((w.size, self.d), dtype=complex)
        if self.entries:
            keys = np.array(list(self.entries), dtype=np.int64)
            pos, inside = w.position(keys)
            vals = np.array(list(self.entries.values()))
            out[pos[inside]] = vals[inside]
        return out.ravel()

    @classmethod
    def from_array(cls, values, w: Window, d: int = 1) -> "LatticeVector":
        values = np.asarray(values, dtype=complex).reshape(w.size, d)
        return cls({k: values[i] for i, k in enumerate(w)}, w.N, d)


def unit(k, N: int = 1, d: int = 1, component: int = 0) -> LatticeVector:
    """The standard basis vector e_k (component ``component`` of the fiber)."""
    v = np.zeros(d, dtype=complex)
    v[component] = 1
    return LatticeVector({as_index(k, N): v}, N, d)


def project(x: LatticeVector, w) -> LatticeVector:
    """P_W x: keep the entries with index in ``w`` (a Window or any container)."""
    return LatticeVector({k: v for k, v in x.entries.items() if k in w}, x.N, x.d)


def complement(x: LatticeVector, w) -> LatticeVector:
    """Q_W x = x - P_W x."""
    return LatticeVector({k: v for k, v in x.entries.items() if k not in w}, x.N, x.d)


def shift(x: LatticeVector, k) -> LatticeVector:
    """V_k x, i.e. (V_k x)_n = x_{n-k}."""
    k = as_index(k, x.N)
    return LatticeVector({add(n, k): v for n, v in x.entries.items()}, x.N, x.d)


def norm(x: LatticeVector, t=L2) -> float:
    t = as_norm_tag(t)
    if not x.entries:
        return 0.0
    fiber = np.array([np.linalg.norm(v) for v in x.entries.values()])
    if t.p == math.inf:
        return float(fiber.max())
    if t.p == 1:
        return float(fiber.sum())
    return float(np.sqrt(np.sum(fiber**2)))


def matrix_norm(M: np.ndarray, t=L2) -> float:
    """Operator norm of a dense matrix between finite sections of l^p.

    p = 2 is the largest singular value, p = 1 the largest absolute column
    sum, p = inf the largest absolute row sum (on scalar entries).
    """
    t = as_norm_tag(t)
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    if t.p == 2:
        return float(np.linalg.norm(M, 2))
    if t.p == 1:
        return float(np.abs(M).sum(axis=0).max())
    return float(np.abs(M).sum(axis=1).max())


def lcm(*values: int) -> int:
    out = 1
    for v in values:
        out = out * int(v) // math.gcd(out, int(v))
    return out


def iter_indices(lo: Iterable[int], hi: Iterable[int]) -> Iterator[tuple]:
    return itertools.product(*(range(l, h + 1) for l, h in zip(lo, hi)))
