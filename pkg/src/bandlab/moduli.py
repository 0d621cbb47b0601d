"""Injection/surjection moduli, lower approximation numbers and truncation sweeps.

Exact approximation numbers (and Bernstein numbers) are only computed for
p = 2, where they coincide with lower singular values.  For p in {1, inf}
only the moduli j and q of square matrices are available.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from . import lattice
from .bandop import BandOperator, LatticeOperator, TruncatedMatrix
from .lattice import NormTag, Window, as_norm_tag, box, matrix_norm, window

PHI = "Phi"
PHI_PLUS = "Phi+\\Phi"
PHI_MINUS = "Phi-\\Phi"
NOT_SEMI = "not-semi-Fredholm"
UNDECIDED = "undecided"


class SemiFredholmConsistencyError(AssertionError):
    """A one-dimensional, finite-fiber operator was classified as strictly semi-Fredholm."""


def _unpack(M, t=None) -> tuple[np.ndarray, NormTag]:
    if isinstance(M, TruncatedMatrix):
        return M.data, M.norm_tag if t is None else as_norm_tag(t)
    return np.asarray(M), as_norm_tag(2 if t is None else t)


def svdvals(M: np.ndarray) -> np.ndarray:
    """Singular values in ascending order."""
    M = np.asarray(M)
    if M.size == 0:
        return np.zeros(0)
    return scipy.linalg.svdvals(M)[::-1]


def _inverse_norm(M: np.ndarray, t: NormTag) -> float:
    """||M^{-1}||_p, or inf for singular M."""
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"p={t} moduli need a square matrix, got shape {M.shape}")
    if M.shape[0] == 0:
        return 0.0
    if np.linalg.matrix_rank(M) < M.shape[0]:
        return math.inf
    return matrix_norm(np.linalg.inv(M), t)


def lower_norm(M, t=None) -> float:
    """Injection modulus j(M) = inf ||Mx|| over unit vectors x."""
    data, t = _unpack(M, t)
    if t.p == 2:
        rows, cols = data.shape
        if cols == 0:
            return math.inf
        if cols > rows:
            return 0.0
        return float(svdvals(data)[0])
    inv = _inverse_norm(data, t)
    return 0.0 if inv == math.inf else 1.0 / inv


def surjection_modulus(M, t=None) -> float:
    """Surjection modulus q(M): the largest tau with M(unit ball) containing tau*(unit ball).

    This equals j(M^*) in the dual norm; it is computed here from M itself
    (for invertible M, q(M) = 1/||M^{-1}||) so that the duality can be
    checked against :func:`lower_norm`.
    """
    data, t = _unpack(M, t)
    if t.p == 2:
        rows, cols = data.shape
        if rows == 0:
            return math.inf
        if rows > cols:
            return 0.0
        return float(svdvals(data)[0])
    inv = _inverse_norm(data, t)
    return 0.0 if inv == math.inf else 1.0 / inv


def approx_numbers(M, m_max: int, side: str = "right", t=None) -> list[float]:
    """Lower approximation numbers s_1, ..., s_{m_max} of a matrix (p = 2 only).

    ``side="right"``: s^r_m = inf{||M - F|| : dim ker F >= m}, the m-th
    smallest singular value of M acting on C^cols (padded with zeros when M
    is wide).  ``side="left"``: s^l_m, the same quantity for M^*.  Entries
    beyond the available dimension are +inf (the infimum is over an empty set).
    """
    data, t = _unpack(M, t)
    if t.p != 2:
        raise ValueError("approximation numbers are only computed for p = 2")
    if side == "left":
        data = data.conj().T
    elif side != "right":
        raise ValueError("side must be 'left' or 'right'")
    rows, cols = data.shape
    sv = svdvals(data)
    sv = np.concatenate([np.zeros(max(cols - rows, 0)), sv])
    return [float(sv[m - 1]) if m <= cols else math.inf for m in range(1, m_max + 1)]


@dataclass
class SandwichRow:
    m: int
    sigma: float
    bernstein_lower: float  # j(M|_V) on an explicit subspace V of codimension m-1
    bernstein_upper: float  # max ||Mx|| over an explicit m-dimensional subspace
    slack: int  # 2^m - 1
    general_bound_ok: bool  # s^r_m/(2^m-1) <= B_m <= s^r_m

    @property
    def gap(self) -> float:
        return max(abs(self.bernstein_lower - self.sigma), abs(self.bernstein_upper - self.sigma))


@dataclass
class SandwichReport:
    rows: list
    tol: float

    @property
    def ok(self) -> bool:
        return all(r.gap <= self.tol and r.general_bound_ok for r in self.rows)


def sandwich_check(M, m_max: int, tol: float = 1e-10) -> SandwichReport:
    """Check s^r_m = B_m = sigma_m for a p = 2 matrix via explicit subspaces.

    B_m is pinned from both sides: restricting M to the span of all but the
    m-1 smallest right singular vectors attains sigma_m, and every subspace
    of codimension < m meets the span W of the m smallest ones, so
    B_m <= max over unit x in W of ||Mx||.
    """
    data, t = _unpack(M)
    if t.p != 2:
        raise ValueError("sandwich_check needs p = 2")
    rows, cols = data.shape
    _, _, vh = np.linalg.svd(data, full_matrices=True)
    basis = vh.conj().T[:, ::-1]  # columns: right singular vectors, ascending singular value
    s_r = approx_numbers(data, m_max, "right")
    out = []
    for m in range(1, min(m_max, cols) + 1):
        V = basis[:, m - 1:]
        W = basis[:, :m]
        MV = data @ V
        lower = 0.0 if MV.shape[1] > MV.shape[0] else float(svdvals(MV)[0])
        upper = float(np.linalg.norm(data @ W, 2))
        slack = 2**m - 1
        s = s_r[m - 1]
        bound_ok = s / slack - tol <= lower <= s + tol
        out.append(SandwichRow(m, s, lower, upper, slack, bool(bound_ok)))
    return SandwichReport(out, tol)


# localized lower norms -----------------------------------------------------------

@dataclass
class LowerNormProfile:
    positions: list
    values: list
    D: int

    @property
    def minimum(self) -> float:
        return float(min(self.values)) if self.values else math.inf

    @property
    def argmin(self):
        return self.positions[int(np.argmin(self.values))] if self.values else None

    @property
    def spread(self) -> float:
        return float(max(self.values) - min(self.values)) if self.values else 0.0


def _positions(spec, N: int) -> list:
    if isinstance(spec, range) or (isinstance(spec, tuple) and len(spec) == 2 and all(isinstance(c, int) for c in spec)):
        r = spec if isinstance(spec, range) else range(spec[0], spec[1] + 1)
        if N == 1:
            return [(p,) for p in r]
        return [(a, b) for a in r for b in r]
    return [lattice.as_index(p, N) for p in spec]


def local_lower_norm(A: LatticeOperator, w: Window) -> float:
    """j(A restricted to vectors supported in w), exact for band operators."""
    rows = A.col_reach(w)
    M = A.compress(rows, w)
    return float(svdvals(M)[0])


def localized_lower_norm(A: LatticeOperator, D: int, positions, t=lattice.L2) -> LowerNormProfile:
    """Lower norms of A on all width-D boxes with lower corners in ``positions``.

    ``positions`` is an iterable of corners, a ``range`` or an inclusive
    (lo, hi) pair (applied to every axis for N = 2).  Every value is an
    upper bound for j(A).
    """
    if D < 1:
        raise ValueError("window width D must be at least 1")
    if as_norm_tag(t).p != 2:
        raise ValueError("localized lower norms are computed for p = 2")
    pos = _positions(positions, A.N)
    vals = [local_lower_norm(A, box(p, D, A.N)) for p in pos]
    return LowerNormProfile(pos, vals, D)


# stabilization and sweeps ----------------------------------------------------------

def relative_changes(values: Sequence[float]) -> list[float]:
    out = []
    for a, b in zip(values, values[1:]):
        if a == b:
            out.append(0.0)
            continue
        scale = max(abs(a), abs(b))
        out.append(math.inf if not math.isfinite(scale) else abs(a - b) / scale)
    return out


def is_stable(values: Sequence[float], tol: float, window_len: int = 3) -> bool:
    """Consecutive relative changes below ``tol`` across the last ``window_len`` values."""
    if len(values) < window_len:
        return False
    return all(c < tol for c in relative_changes(list(values)[-window_len:]))


@dataclass
class SideEvidence:
    """Small singular values of column compressions on one side (A or A^*)."""

    counts: list
    gaps: list
    status: str = UNDECIDED  # finite | infinite | vanishing | undecided
    dimension: int | None = None

    @property
    def growing(self) -> bool:
        c = self.counts[-3:]
        return len(c) == 3 and c[0] < c[1] < c[2]


@dataclass
class SweepVerdict:
    verdict: str
    kernel: SideEvidence
    cokernel: SideEvidence
    radii: list
    tol: float
    square_sigma_min: list = field(default_factory=list)
    square_deficiency: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def stabilized(self) -> bool:
        return self.verdict != UNDECIDED

    @property
    def kernel_dim(self):
        return self.kernel.dimension

    @property
    def cokernel_dim(self):
        return self.cokernel.dimension

    def to_json(self) -> dict:
        return _jsonable(asdict(self))


def _side_evidence(op: LatticeOperator, radii, tol: float, stab_tol: float, separation: float) -> SideEvidence:
    counts, gaps = [], []
    for n in radii:
        w = window(n, op.N)
        sv = svdvals(op.compress(op.col_reach(w), w))
        k = int(np.sum(sv < tol))
        counts.append(k)
        gaps.append(float(sv[k]) if k < len(sv) else math.inf)
    ev = SideEvidence(counts, gaps)
    last = gaps[-3:]
    finite_gaps = [g for g in last if math.isfinite(g)]
    gap_stable = (len(finite_gaps) < 3 or is_stable(finite_gaps, stab_tol)) and min(last) > separation * tol
    vanishing = (
        all(math.isfinite(g) for g in last)
        and last[0] > last[1] > last[2]
        and last[2] < last[0] / 1.5
        and counts[-3] == counts[-2] == counts[-1]
    )
    if gap_stable and counts[-3] == counts[-2] == counts[-1]:
        ev.status, ev.dimension = "finite", counts[-1]
    elif gap_stable and ev.growing:
        ev.status = "infinite"
    elif vanishing:
        ev.status = "vanishing"
    return ev


def truncation_sweep_classify(A: LatticeOperator, radii: Sequence[int], tol: float = 1e-6,
                              stab_tol: float = 0.05, separation: float = 4.0) -> SweepVerdict:
    """Heuristic semi-Fredholm classification from growing finite sections (p = 2).

    For each radius n the column compressions A P_n and A^* P_n (rows taken
    wide enough to be exact) are decomposed; singular values below ``tol``
    count as approximate kernel vectors.  A side is

    * ``finite`` when the count is constant and the next singular value
      (the gap) is stable and at least ``separation * tol``,
    * ``infinite`` when the count grows strictly with a stable gap,
    * ``vanishing`` when the gap decays monotonically (not normally solvable),

    over the last three radii.  This cross-validates the limit-operator
    route; finite sections do not decide Fredholmness in general.
    """
    radii = sorted(int(r) for r in radii)
    if len(radii) < 3:
        raise ValueError("truncation sweeps need at least 3 radii")
    ker = _side_evidence(A, radii, tol, stab_tol, separation)
    coker = _side_evidence(A.adjoint(), radii, tol, stab_tol, separation)
    sq_min, sq_def = [], []
    for n in radii:
        sv = svdvals(A.compress(window(n, A.N), window(n, A.N)))
        sq_min.append(float(sv[0]))
        sq_def.append(int(np.sum(sv < tol)))
    notes = []
    s = (ker.status, coker.status)
    if s == ("finite", "finite"):
        verdict = PHI
    elif s == ("finite", "infinite"):
        verdict = PHI_PLUS
    elif s == ("infinite", "finite"):
        verdict = PHI_MINUS
    elif s in (("infinite", "infinite"), ("vanishing", "vanishing")):
        verdict = NOT_SEMI
    else:
        verdict = UNDECIDED
        if "vanishing" in s and s[0] != s[1]:
            notes.append("normal solvability evidence differs between A and A*")
        if UNDECIDED in s:
            notes.append("no stable gap above tol; result is tolerance-sensitive")
    if verdict == NOT_SEMI and s[0] == "vanishing":
        notes.append("lower singular values decay: not normally solvable")
    if verdict == PHI_PLUS or verdict == PHI_MINUS:
        ker.dimension = ker.dimension if ker.status == "finite" else None
    if ker.status == "infinite":
        ker.dimension = None
    if coker.status == "infinite":
        coker.dimension = None
    out = SweepVerdict(verdict, ker, coker, radii, tol, sq_min, sq_def, notes)
    if A.N == 1 and verdict in (PHI_PLUS, PHI_MINUS):
        raise SemiFredholmConsistencyError(
            f"N=1, d={A.d} operator classified {verdict} with stabilized evidence: {out}")
    return out


# moduli reports ---------------------------------------------------------------------

@dataclass
class ModuliRow:
    radius: int
    j: float
    q: float
    sigma: list
    s_r: list
    s_l: list


@dataclass
class ModuliReport:
    """Per-radius j, q and (p = 2) lower approximation numbers of square sections."""

    rows: list
    m_max: int
    norm: str
    stable: dict  # quantity name -> bool (stable across the last 3 radii)

    def to_json(self) -> dict:
        return _jsonable({
            "schemaVersion": 1,
            "norm": self.norm,
            "mMax": self.m_max,
            "rows": [asdict(r) for r in self.rows],
            "stable": self.stable,
        })

    def flags(self) -> str:
        return ";".join(f"{k}:{'stable' if v else 'unstable'}" for k, v in self.stable.items())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["radius", "j", "q"] + [f"sigma_{m}" for m in range(1, self.m_max + 1)] + ["flags"]
        w.writerow(header)
        flags = self.flags()
        for r in self.rows:
            sig = r.sigma if r.sigma else [""] * self.m_max
            w.writerow([r.radius, _fmt(r.j), _fmt(r.q)] + [_fmt(s) for s in sig] + [flags])
        return buf.getvalue()


def moduli_report(A: LatticeOperator, radii: Iterable[int], m_max: int = 5, t=lattice.L2,
                  stab_tol: float = 0.05) -> ModuliReport:
    t = as_norm_tag(t)
    rows = []
    for n in sorted(int(r) for r in radii):
        M = A.truncate(window(n, A.N), window(n, A.N), t)
        j, q = lower_norm(M), surjection_modulus(M)
        if t.p == 2:
            s_r = approx_numbers(M, m_max, "right")
            s_l = approx_numbers(M, m_max, "left")
            sigma = list(s_r)
        else:
            s_r = s_l = sigma = []
        rows.append(ModuliRow(n, j, q, sigma, s_r, s_l))
    stable = {"j": is_stable([r.j for r in rows], stab_tol), "q": is_stable([r.q for r in rows], stab_tol)}
    if t.p == 2:
        for m in range(1, m_max + 1):
            stable[f"sigma_{m}"] = is_stable([r.sigma[m - 1] for r in rows], stab_tol)
    return ModuliReport(rows, m_max, str(t), stable)


def _fmt(x) -> str:
    if x == "" or x is None:
        return ""
    return repr(float(x))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def to_json_text(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2)
