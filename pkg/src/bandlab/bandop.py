"""Band operators A = sum_k a^(k) V_k on l^p(Z^N, C^d).

Matrix convention: the block of A in row n, column m is a^(n-m)_n, so
(Ax)_n = sum_k a^(k)_n x_{n-k}.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import lattice
from .coefficients import (
    CoefficientSequence,
    Constant,
    FiniteSupport,
    as_coefficient,
    coefficient_from_json,
    combine,
)
from .lattice import LatticeVector, NormTag, Window, as_index, as_norm_tag, matrix_norm, window

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TruncatedMatrix:
    """Dense compression P_rows A P_cols, blocks ordered lexicographically by site."""

    row_window: Window
    col_window: Window
    data: np.ndarray
    norm_tag: NormTag = lattice.L2
    d: int = 1

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def H(self) -> "TruncatedMatrix":
        """Conjugate transpose, measured in the dual norm."""
        return TruncatedMatrix(self.col_window, self.row_window, self.data.conj().T, self.norm_tag.dual, self.d)

    def with_norm(self, t) -> "TruncatedMatrix":
        return TruncatedMatrix(self.row_window, self.col_window, self.data, as_norm_tag(t), self.d)

    def norm(self) -> float:
        return matrix_norm(self.data, self.norm_tag)

    def block(self, n, m) -> np.ndarray:
        (i,), _ = self.row_window.position(np.array([as_index(n, self.row_window.N)]))
        (j,), _ = self.col_window.position(np.array([as_index(m, self.col_window.N)]))
        d = self.d
        return self.data[i * d:(i + 1) * d, j * d:(j + 1) * d]


class LatticeOperator:
    """Anything that can be compressed to dense matrices between windows.

    ``row_reach(W)`` is a window holding every column that the rows in W
    touch; ``col_reach(W)`` holds every row touched by the columns in W.
    """

    N: int
    d: int
    tail_bound: float = 0.0

    def compress(self, row_w: Window, col_w: Window) -> np.ndarray:
        raise NotImplementedError

    def row_reach(self, w: Window) -> Window:
        raise NotImplementedError

    def col_reach(self, w: Window) -> Window:
        raise NotImplementedError

    def apply(self, x: LatticeVector) -> LatticeVector:
        raise NotImplementedError

    def __call__(self, x: LatticeVector) -> LatticeVector:
        return self.apply(x)

    def truncate(self, row_w: Window, col_w: Window | None = None, t=lattice.L2) -> TruncatedMatrix:
        col_w = row_w if col_w is None else col_w
        return TruncatedMatrix(row_w, col_w, self.compress(row_w, col_w), as_norm_tag(t), self.d)


class BandOperator(LatticeOperator):
    """Finite sum of multiplication operators composed with shifts.

    Parameters
    ----------
    diagonals : mapping
        Offset k (int or tuple) to a CoefficientSequence, matrix or scalar.
    N, d : int
        Lattice and fiber dimension.
    tail_bound : float
        Declared norm distance to the band-dominated operator this band
        operator approximates.  Norm results derived from A are only exact
        up to this amount.
    """

    def __init__(self, diagonals: Mapping, N: int = 1, d: int | None = None, tail_bound: float = 0.0):
        if N not in (1, 2):
            raise ValueError("only N in {1, 2} is supported")
        diags = {}
        for k, a in dict(diagonals).items():
            a = as_coefficient(a, N, d)
            d = a.d
            if not a.is_zero():
                diags[as_index(k, N)] = a
        self.N, self.d = N, 1 if d is None else d
        self.diagonals = dict(sorted(diags.items()))
        self.tail_bound = float(tail_bound)
        if self.tail_bound < 0:
            raise ValueError("tail bound must be nonnegative")

    # construction helpers
    @classmethod
    def identity(cls, N: int = 1, d: int = 1) -> "BandOperator":
        return cls({(0,) * N: np.eye(d)}, N, d)

    @classmethod
    def shift(cls, k, N: int = 1, d: int = 1) -> "BandOperator":
        return cls({as_index(k, N): np.eye(d)}, N, d)

    @classmethod
    def multiplication(cls, a: CoefficientSequence) -> "BandOperator":
        return cls({(0,) * a.N: a}, a.N, a.d)

    @classmethod
    def zero(cls, N: int = 1, d: int = 1) -> "BandOperator":
        return cls({}, N, d)

    @property
    def bandwidth(self) -> int:
        return max((lattice.index_norm(k) for k in self.diagonals), default=0)

    def coefficient(self, k) -> CoefficientSequence:
        k = as_index(k, self.N)
        return self.diagonals.get(k, Constant(np.zeros((self.d, self.d)), self.N))

    def norm_bound(self) -> float:
        """sum_k sup_n ||a^(k)_n||, an upper bound for ||A|| on every l^p with p in {1,2,inf} when d = 1."""
        return float(sum(a.sup_norm() for a in self.diagonals.values()))

    # dense compressions
    def compress(self, row_w: Window, col_w: Window) -> np.ndarray:
        d = self.d
        R, C = row_w.size, col_w.size
        M = np.zeros((R, d, C, d), dtype=complex)
        cols = col_w.sites()
        cidx = np.arange(C)
        for k, a in self.diagonals.items():
            rows = cols + np.array(k)
            pos, inside = row_w.position(rows)
            if not inside.any():
                continue
            M[pos[inside], :, cidx[inside], :] = a.values(rows[inside])
        return M.reshape(R * d, C * d)

    def row_reach(self, w: Window) -> Window:
        return w.dilated(self.bandwidth)

    def col_reach(self, w: Window) -> Window:
        return w.dilated(self.bandwidth)

    # action
    def apply(self, x: LatticeVector) -> LatticeVector:
        if (x.N, x.d) != (self.N, self.d):
            raise ValueError(f"operator acts on N={self.N}, d={self.d}; vector has N={x.N}, d={x.d}")
        if not x.entries:
            return LatticeVector({}, self.N, self.d)
        keys = list(x.entries)
        sites = np.array(keys, dtype=np.int64)
        vals = np.array([x.entries[k] for k in keys])
        out: dict = {}
        for k, a in self.diagonals.items():
            rows = sites + np.array(k)
            coeff = a.values(rows)
            contrib = np.einsum("mij,mj->mi", coeff, vals)
            for r, v in zip(map(tuple, rows.tolist()), contrib):
                out[r] = out[r] + v if r in out else v
        return LatticeVector(out, self.N, self.d)

    # algebra
    def adjoint(self) -> "BandOperator":
        """Hilbert adjoint; the diagonal at -k carries (a^(k)_{n+k})^*."""
        diags = {lattice.neg(k): a.shifted(k).conj_transpose() for k, a in self.diagonals.items()}
        return BandOperator(diags, self.N, self.d, self.tail_bound)

    def shifted(self, h) -> "BandOperator":
        """V_{-h} A V_h, whose coefficients are n -> a^(k)_{n+h}."""
        h = as_index(h, self.N)
        return BandOperator({k: a.shifted(h) for k, a in self.diagonals.items()}, self.N, self.d, self.tail_bound)

    def _check_space(self, other: "BandOperator"):
        if (self.N, self.d) != (other.N, other.d):
            raise ValueError("operators act on different spaces")

    def __add__(self, other: "BandOperator") -> "BandOperator":
        self._check_space(other)
        diags = dict(self.diagonals)
        for k, b in other.diagonals.items():
            diags[k] = combine(diags[k], b, "add") if k in diags else b
        return BandOperator(diags, self.N, self.d, self.tail_bound + other.tail_bound)

    def __neg__(self) -> "BandOperator":
        return BandOperator({k: a.scaled(-1) for k, a in self.diagonals.items()}, self.N, self.d, self.tail_bound)

    def __sub__(self, other: "BandOperator") -> "BandOperator":
        return self + (-other)

    def __mul__(self, c) -> "BandOperator":
        if isinstance(c, BandOperator):
            return self @ c
        return BandOperator({k: a.scaled(c) for k, a in self.diagonals.items()}, self.N, self.d,
                            abs(c) * self.tail_bound)

    __rmul__ = __mul__

    def __matmul__(self, other: "BandOperator") -> "BandOperator":
        """Composition: a^(k) V_k b^(l) V_l = (a^(k) * b^(l)_{. - k}) V_{k+l}."""
        self._check_space(other)
        diags: dict = {}
        for k, a in self.diagonals.items():
            for l, b in other.diagonals.items():
                term = combine(a, b.shifted(lattice.neg(k)), "mul")
                kl = lattice.add(k, l)
                diags[kl] = combine(diags[kl], term, "add") if kl in diags else term
        tail = self.tail_bound * other.norm_bound() + other.tail_bound * (self.norm_bound() + self.tail_bound)
        return BandOperator(diags, self.N, self.d, tail)

    # identity and serialization
    def key(self) -> tuple:
        return (self.N, self.d, tuple((k, a.simplify().key()) for k, a in self.diagonals.items()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BandOperator):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        parts = ", ".join(f"{k if self.N > 1 else k[0]}: {a!r}" for k, a in self.diagonals.items())
        return f"BandOperator(N={self.N}, d={self.d}, {{{parts}}})"

    def simplify(self) -> "BandOperator":
        return BandOperator({k: a.simplify() for k, a in self.diagonals.items()}, self.N, self.d, self.tail_bound)

    def to_json(self) -> dict:
        return {
            "schemaVersion": SCHEMA_VERSION,
            "kind": "band",
            "N": self.N,
            "d": self.d,
            "tailBound": self.tail_bound,
            "diagonals": [{"offset": list(k), **a.to_json()} for k, a in self.diagonals.items()],
        }


class FlipOperator(LatticeOperator):
    """J: (x_i) -> (x_{-i}).  Not a band operator, but quasi-banded."""

    def __init__(self, N: int = 1, d: int = 1):
        self.N, self.d, self.tail_bound = N, d, 0.0

    def compress(self, row_w, col_w):
        d = self.d
        R, C = row_w.size, col_w.size
        M = np.zeros((R, d, C, d), dtype=complex)
        cols = col_w.sites()
        pos, inside = row_w.position(-cols)
        M[pos[inside], :, np.arange(C)[inside], :] = np.eye(d)
        return M.reshape(R * d, C * d)

    def _mirror(self, w: Window) -> Window:
        return Window(tuple(-c for c in w.hi), tuple(-c for c in w.lo))

    row_reach = _mirror
    col_reach = _mirror

    def apply(self, x: LatticeVector) -> LatticeVector:
        return LatticeVector({lattice.neg(k): v for k, v in x.entries.items()}, x.N, x.d)

    def adjoint(self) -> "FlipOperator":
        return self

    def to_json(self) -> dict:
        return {"schemaVersion": SCHEMA_VERSION, "kind": "flip", "N": self.N, "d": self.d, "tailBound": 0.0}

    def __repr__(self):
        return f"FlipOperator(N={self.N}, d={self.d})"


# module-level operations ------------------------------------------------------

def apply(A: LatticeOperator, x: LatticeVector) -> LatticeVector:
    return A.apply(x)


def truncate(A: LatticeOperator, row_w: Window | int, col_w: Window | int | None = None, t=lattice.L2) -> TruncatedMatrix:
    """Dense compression P_rowW A P_colW.  Integer windows mean centred cubes."""
    if isinstance(row_w, (int, np.integer)):
        row_w = window(int(row_w), A.N)
    if col_w is None:
        col_w = row_w
    elif isinstance(col_w, (int, np.integer)):
        col_w = window(int(col_w), A.N)
    return A.truncate(row_w, col_w, t)


def adjoint(A):
    return A.adjoint()


def _mask_inside(M: np.ndarray, w: Window, inner: Window, d: int, axis: int) -> np.ndarray:
    """Zero the rows (axis=0) or columns (axis=1) of M whose site lies in ``inner``."""
    sites = w.sites()
    _, inside = inner.position(sites)
    keep = np.repeat(~inside, d)
    M = M.copy()
    if axis == 0:
        M[~keep, :] = 0
    else:
        M[:, ~keep] = 0
    return M


def off_band_defect(A: LatticeOperator, n: int, l: int, t=lattice.L2) -> float:
    """||P_{n-l} A Q_n|| + ||Q_n A P_{n-l}||, plus 2 * tail_bound.

    Computed exactly on windows that contain every nonzero row/column; the
    tail bound term is the worst case for the band-dominated operator that A
    approximates.
    """
    if not n > l >= 0:
        raise ValueError("need n > l >= 0")
    t = as_norm_tag(t)
    inner, outer = window(n - l, A.N), window(n, A.N)
    cols = A.row_reach(inner)
    left = _mask_inside(A.compress(inner, cols), cols, outer, A.d, axis=1)
    rows = A.col_reach(inner)
    right = _mask_inside(A.compress(rows, inner), rows, outer, A.d, axis=0)
    return matrix_norm(left, t) + matrix_norm(right, t) + 2 * A.tail_bound


def p_compact_defect(K: BandOperator, n: int, t=lattice.L2) -> float:
    """||K Q_n|| + ||Q_n K|| for K with finitely supported coefficients."""
    t = as_norm_tag(t)
    R = 0
    for a in K.diagonals.values():
        a = a.simplify()
        if not isinstance(a, FiniteSupport):
            raise ValueError(f"p_compact_defect needs finitely supported coefficients, got {a!r}")
        R = max(R, a.support_radius())
    rows = window(R, K.N)
    cols = K.row_reach(rows)
    M = K.compress(rows, cols)
    inner = window(n, K.N)
    kq = _mask_inside(M, cols, inner, K.d, axis=1)
    qk = _mask_inside(M, rows, inner, K.d, axis=0)
    return matrix_norm(kq, t) + matrix_norm(qk, t) + 2 * K.tail_bound


# JSON -------------------------------------------------------------------------

def operator_to_json(A: LatticeOperator) -> dict:
    return A.to_json()


class OperatorFormatError(ValueError):
    """Malformed operator JSON; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


_OPERATOR_KEYS = {"schemaVersion", "kind", "N", "d", "tailBound", "diagonals"}


def operator_from_json(obj) -> LatticeOperator:
    if isinstance(obj, str):
        obj = json.loads(obj)
    if not isinstance(obj, dict):
        raise OperatorFormatError("$", "operator must be a JSON object")
    for key in obj:
        if key not in _OPERATOR_KEYS:
            raise OperatorFormatError(f"$.{key}", "unknown field")
    version = obj.get("schemaVersion", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise OperatorFormatError("$.schemaVersion", f"unsupported version {version!r}")
    kind = obj.get("kind", "band")
    try:
        N, d = int(obj.get("N", 1)), int(obj.get("d", 1))
    except (TypeError, ValueError):
        raise OperatorFormatError("$.N", "N and d must be integers") from None
    if N < 1 or d < 1:
        raise OperatorFormatError("$.N", "N and d must be positive")
    if kind == "flip":
        return FlipOperator(N, d)
    if kind != "band":
        raise OperatorFormatError("$.kind", f"unknown operator kind {kind!r}")
    if "diagonals" not in obj:
        raise OperatorFormatError("$.diagonals", "required")
    diags = {}
    for i, entry in enumerate(obj["diagonals"]):
        path = f"$.diagonals[{i}]"
        try:
            off = as_index(entry["offset"], N)
        except KeyError:
            raise OperatorFormatError(f"{path}.offset", "required") from None
        except (TypeError, ValueError) as exc:
            raise OperatorFormatError(f"{path}.offset", str(exc)) from None
        if off in diags:
            raise OperatorFormatError(f"{path}.offset", f"duplicate diagonal offset {off}")
        try:
            diags[off] = coefficient_from_json(entry, N, d)
        except KeyError as exc:
            raise OperatorFormatError(f"{path}.{exc.args[0]}", "required") from None
        except (TypeError, ValueError) as exc:
            raise OperatorFormatError(path, str(exc)) from None
    tail = obj.get("tailBound", 0.0)
    if not isinstance(tail, (int, float)) or tail < 0:
        raise OperatorFormatError("$.tailBound", "must be a nonnegative number")
    return BandOperator(diags, N, d, float(tail))


def dumps(A: LatticeOperator) -> str:
    return json.dumps(operator_to_json(A), sort_keys=True, indent=2)


def loads(text: str) -> LatticeOperator:
    return operator_from_json(json.loads(text))


def load(path) -> LatticeOperator:
    with open(path) as fh:
        return operator_from_json(json.load(fh))


def save(A: LatticeOperator, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(A))
        fh.write("\n")
