"""Symbols of shift-invariant limit operators, the one-sided condition ladder,
and an executable trace of the semi-Fredholm => Fredholm argument.

All quantitative statements here are for p = 2.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import lattice, moduli
from .bandop import BandOperator, LatticeOperator, off_band_defect, truncate
from .coefficients import Constant, Periodic, UnsupportedCoefficientError
from .lattice import as_norm_tag, window
from .limitops import operator_spectrum

SYMBOL_TOL = 1e-8


class BudgetExceeded(RuntimeError):
    """A requested computation is larger than the configured budget."""


# symbols --------------------------------------------------------------------------------

def _period_lift(L: BandOperator):
    """Block coefficients of the lifted Laurent operator.

    Returns (P, terms) where terms maps a block offset j (tuple) to the
    (prod(P) d) x (prod(P) d) matrix B_j of the operator
    (y)_K = sum_j B_j x_{K-j} obtained by grouping sites into period cells.
    """
    N, d = L.N, L.d
    coeffs = {k: a.simplify() for k, a in L.diagonals.items()}
    P = [1] * N
    for a in coeffs.values():
        if isinstance(a, Periodic):
            P = [lattice.lcm(p, q) for p, q in zip(P, a.period)]
        elif not isinstance(a, Constant):
            raise UnsupportedCoefficientError(f"symbols need constant or periodic coefficients, got {a!r}")
    cells = list(itertools.product(*(range(p) for p in P)))
    pos = {r: i for i, r in enumerate(cells)}
    size = len(cells) * d
    terms: dict = {}
    for k, a in coeffs.items():
        vals = a.values(np.array(cells, dtype=np.int64).reshape(-1, N))
        for i, r in enumerate(cells):
            diff = [rc - kc for rc, kc in zip(r, k)]
            s = tuple(x % p for x, p in zip(diff, P))
            j = tuple(-(x // p) for x, p in zip(diff, P))
            B = terms.setdefault(j, np.zeros((size, size), dtype=complex))
            B[i * d:(i + 1) * d, pos[s] * d:(pos[s] + 1) * d] += vals[i]
    return tuple(P), terms


def symbol_values(L: BandOperator, thetas) -> np.ndarray:
    """a(t) = sum_j B_j t^j on the torus points ``thetas`` (shape (M, N)), as (M, D, D)."""
    _, terms = _period_lift(L)
    thetas = np.asarray(thetas, dtype=float).reshape(-1, L.N)
    size = next(iter(terms.values())).shape[0] if terms else L.d
    out = np.zeros((len(thetas), size, size), dtype=complex)
    for j, B in terms.items():
        phase = np.exp(1j * thetas @ np.array(j, dtype=float))
        out += phase[:, None, None] * B
    return out


def _sigma_min(stack: np.ndarray) -> np.ndarray:
    return np.linalg.svd(stack, compute_uv=False)[:, -1]


def _torus(G: int, N: int) -> np.ndarray:
    th = 2 * np.pi * np.arange(G) / G
    if N == 1:
        return th[:, None]
    a, b = np.meshgrid(th, th, indexing="ij")
    return np.stack([a.ravel(), b.ravel()], axis=1)


@dataclass
class SymbolCurve:
    G: int
    thetas: np.ndarray  # (G^N, N)
    sigma_min: np.ndarray  # per sample
    inverse_norm_max: float  # max over samples of ||a(t)^{-1}||, inf if singular somewhere

    @property
    def minimum(self) -> float:
        return float(self.sigma_min.min())


@dataclass
class SymbolResult:
    invertible: bool
    j_estimate: float
    curve: SymbolCurve
    coarse_minimum: float  # at the first grid
    refinement_change: float  # |coarse - refined| minimum

    @property
    def lower(self) -> float:
        """Lower evidence for the modulus: the estimate minus the refinement change."""
        return max(self.j_estimate - self.refinement_change - 1e-12, 0.0)

    def to_json(self) -> dict:
        return moduli._jsonable({
            "invertible": self.invertible,
            "jEstimate": self.j_estimate,
            "grid": self.curve.G,
            "gridMinimum": self.curve.minimum,
            "coarseMinimum": self.coarse_minimum,
            "inverseNormMax": self.curve.inverse_norm_max,
        })


def symbol_invertibility(L: BandOperator, G: int = 256, refined: int | None = None,
                         tol: float = SYMBOL_TOL) -> SymbolResult:
    """Invertibility of a constant or periodic band operator on l^2 from its symbol.

    The symbol is sampled on G points per axis, then on a refined grid
    (1024 for N = 1, 512 per axis for N = 2); for N = 1 the minimum is
    finally polished by a bounded scalar minimization around the best sample.
    """
    if G < 256:
        raise ValueError("symbol grids need at least 256 samples per axis")
    if refined is None:
        refined = 1024 if L.N == 1 else 512
    coarse = _sigma_min(symbol_values(L, _torus(G, L.N))).min()
    th = _torus(refined, L.N)
    vals = symbol_values(L, th)
    smin = _sigma_min(vals)
    with np.errstate(all="ignore"):
        try:
            inv = np.linalg.inv(vals)
            inv_max = float(np.linalg.norm(inv, 2, axis=(1, 2)).max())
        except np.linalg.LinAlgError:
            inv_max = math.inf
    if not np.isfinite(inv_max):
        inv_max = math.inf
    best = float(smin.min())
    if L.N == 1:
        best = min(best, _zoom_minimum(L, float(th[int(np.argmin(smin)), 0]), 2 * np.pi / refined))
    curve = SymbolCurve(refined, th, smin, inv_max)
    return SymbolResult(best > tol, best, curve, float(coarse), abs(float(coarse) - float(smin.min())))


def _zoom_minimum(L: BandOperator, t0: float, h: float, samples: int = 65, rounds: int = 10) -> float:
    """Polish a sampled minimum of sigma_min(a(t)) by repeated local grids.

    sigma_min is V-shaped at zeros of the symbol, which defeats parabolic
    line searches; nested grids shrink the bracket by (samples-1)/2 per round.
    """
    best = math.inf
    for _ in range(rounds):
        ts = t0 + np.linspace(-h, h, samples)
        vals = _sigma_min(symbol_values(L, ts[:, None]))
        i = int(np.argmin(vals))
        best, t0 = min(best, float(vals[i])), float(ts[i])
        h *= 4 / (samples - 1)
    return best


def has_symbol(L: BandOperator) -> bool:
    return all(isinstance(a.simplify(), (Constant, Periodic)) for a in L.diagonals.values())


# bounded below ---------------------------------------------------------------------------

BOUNDED = "bounded below"
NOT_BOUNDED = "not bounded below"
UNDECIDED = "undecided"


@dataclass
class Bracket:
    """j(B) lies in [lo, hi] (hi from localized sections, lo from a partition-of-unity bound)."""

    lo: float
    hi: float
    verdict: str
    widths: list
    local_minima: list
    commutator_bounds: list
    symbol: float | None = None

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def to_json(self) -> dict:
        return moduli._jsonable(asdict(self))


def relevant_positions(B: LatticeOperator, D: int) -> list:
    """Window corners that see every distinct local configuration of B.

    Along an axis with a finite core the windows sweep across the core
    (with a full period of margin on both sides); along a translation-
    invariant axis one period of positions suffices.
    """
    from .limitops import _structure

    w = B.bandwidth
    ranges = []
    for ax in range(B.N):
        ext, P = _structure(B, ax)
        if ext is None:
            ranges.append(range(P))
        else:
            lo, hi = ext
            ranges.append(range(lo - D - w - P, hi + w + P + 1))
    return list(itertools.product(*ranges))


def commutator_bound(B: BandOperator, D: int) -> float:
    """sup ||[B, phi_j]|| summed over a sine partition of unity of width <= D.

    With phi_j(n) = sin(pi (n - jH) / (2H)) on windows of 2H - 1 sites the
    vector (phi_j(n))_j is pi/(2H)-Lipschitz in n, so the commutator family
    is bounded by pi/(2H) * sum_k |k|_1 sup ||a^(k)||.
    """
    H = (D + 1) // 2
    return math.pi / (2 * H) * sum(sum(abs(c) for c in k) * a.sup_norm() for k, a in B.diagonals.items())


def bounded_below_numeric(B: LatticeOperator, t=lattice.L2, budget: int = 32, tol: float = 1e-6,
                          max_columns: int = 4096) -> Bracket:
    """Bracket the lower norm j(B) at p = 2.

    Localized sections over widths D = 4, 8, ..., ``budget`` give upper
    bounds; the partition-of-unity estimate (localized minimum minus a
    commutator bound) gives lower bounds; shift-invariant operators also use
    their symbol.  Verdict "bounded below" when lo > tol; "not bounded
    below" when hi <= tol or hi keeps decaying with D; else undecided.
    """
    if as_norm_tag(t).p != 2:
        raise ValueError("bounded_below_numeric works at p = 2")
    if not isinstance(B, BandOperator):
        raise UnsupportedCoefficientError("bounded_below_numeric needs a band operator")
    widths = [D for D in (4, 8, 16, 32, 64, 128) if D <= budget]
    if not widths:
        raise ValueError("budget must allow a window width of at least 4")
    D = widths[-1]
    if D ** B.N * B.d > max_columns:
        raise BudgetExceeded(f"window width {D} needs {D ** B.N * B.d} columns > {max_columns}")
    mins, deltas, lo, hi = [], [], 0.0, math.inf
    for D in widths:
        prof = moduli.localized_lower_norm(B, D, relevant_positions(B, D))
        delta = commutator_bound(B, D)
        mins.append(prof.minimum)
        deltas.append(delta)
        hi = min(hi, prof.minimum)
        lo = max(lo, prof.minimum - delta)
    sym = None
    if has_symbol(B):
        s = symbol_invertibility(B)
        sym = s.j_estimate
        hi = min(hi, s.j_estimate)
        lo = max(lo, s.lower)
    lo = min(lo, hi)
    if lo > tol:
        verdict = BOUNDED
    elif hi <= tol or _decaying(mins):
        verdict = NOT_BOUNDED
    else:
        verdict = UNDECIDED
    return Bracket(lo, hi, verdict, widths, mins, deltas, sym)


def _decaying(values: Sequence[float], ratio: float = 1.5) -> bool:
    v = list(values)[-3:]
    return len(v) == 3 and all(a >= ratio * b for a, b in zip(v, v[1:]))


# kernel search -----------------------------------------------------------------------------

@dataclass
class KernelSearch:
    radii: list
    smallest: list  # smallest singular value of the column compression per radius
    found: bool  # some finitely supported near-kernel vector below tol

    @property
    def verdict(self) -> str:
        return "fails" if self.found else "holds"


def kernel_search(B: LatticeOperator, radii: Sequence[int], tol: float = 1e-10) -> KernelSearch:
    vals = []
    for n in radii:
        w = window(n, B.N)
        vals.append(float(moduli.svdvals(B.compress(B.col_reach(w), w))[0]))
    return KernelSearch(list(radii), vals, any(v < tol for v in vals))


# the condition ladder ------------------------------------------------------------------------

CONDITIONS = {
    "i": "Fredholm",
    "ii": "all limit operators invertible",
    "iii": "all limit operators left invertible",
    "iv": "all limit operators right invertible",
    "v": "all limit operators bounded below",
    "vi": "all limit operators surjective",
    "vii": "all limit operators injective",
    "viii": "all limit operators one-sided invertible",
}
HOLDS, FAILS = "holds", "fails"
NON_CONCLUSIVE = ("vii", "viii")


@dataclass
class RepresentativeEvidence:
    origin: str
    symbol: dict | None
    bounded_below: Bracket
    adjoint_bounded_below: Bracket
    kernel: KernelSearch
    verdicts: dict


@dataclass
class ConditionLadder:
    conditions: dict  # tag -> holds | fails | undecided
    conclusion: str  # "Fredholm" | "not Fredholm" | "undecided"
    representatives: list
    norm_identity: dict | None
    sweep: dict | None
    agreement: bool | None
    notes: list = field(default_factory=list)
    non_conclusive: tuple = NON_CONCLUSIVE

    @property
    def fredholm(self) -> bool | None:
        return {"Fredholm": True, "not Fredholm": False}.get(self.conclusion)

    def to_json(self) -> dict:
        reps = []
        for r in self.representatives:
            reps.append({
                "origin": r.origin,
                "symbol": r.symbol,
                "boundedBelow": r.bounded_below.to_json(),
                "adjointBoundedBelow": r.adjoint_bounded_below.to_json(),
                "kernelSearch": asdict(r.kernel),
                "verdicts": r.verdicts,
            })
        return moduli._jsonable({
            "schemaVersion": 1,
            "conditions": self.conditions,
            "conclusion": self.conclusion,
            "nonConclusive": list(self.non_conclusive),
            "normIdentity": self.norm_identity,
            "sweep": self.sweep,
            "agreement": self.agreement,
            "notes": self.notes,
            "representatives": reps,
        })

    def to_text(self) -> str:
        lines = []
        for tag, name in CONDITIONS.items():
            flag = "  (not conclusive)" if tag in self.non_conclusive else ""
            lines.append(f"({tag:>4}) {name:<42} {self.conditions.get(tag, UNDECIDED)}{flag}")
        lines.append(f"conclusion: {self.conclusion}")
        if self.norm_identity:
            ni = self.norm_identity
            lines.append(f"norm identity: sup||inv|| * inf j = {ni['product']:.9g} (ok={ni['ok']})")
        if self.sweep:
            lines.append(f"truncation sweep: {self.sweep['verdict']} (agreement={self.agreement})")
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)


def _all(verdicts: list) -> str:
    if any(v == FAILS for v in verdicts):
        return FAILS
    if verdicts and all(v == HOLDS for v in verdicts):
        return HOLDS
    return UNDECIDED


def _bb_status(b: Bracket) -> str:
    return {BOUNDED: HOLDS, NOT_BOUNDED: FAILS}.get(b.verdict, UNDECIDED)


def _evidence(B: BandOperator, origin: str, budget: int, tol: float, kernel_radii) -> RepresentativeEvidence:
    sym = symbol_invertibility(B) if has_symbol(B) else None
    bb = bounded_below_numeric(B, budget=budget, tol=tol)
    bba = bounded_below_numeric(B.adjoint(), budget=budget, tol=tol)
    ker = kernel_search(B, kernel_radii)
    v = {"v": _bb_status(bb), "vi": _bb_status(bba)}
    # Hilbert space: left invertible <=> bounded below, right invertible <=> surjective
    v["iii"], v["iv"] = v["v"], v["vi"]
    if sym is not None:
        v["ii"] = HOLDS if sym.invertible else FAILS
        if sym.invertible and sym.j_estimate <= tol:
            # invertible at the symbol tolerance, not resolvable at the ladder tolerance
            v["ii"] = UNDECIDED
    else:
        v["ii"] = _all([v["v"], v["vi"]])
    v["vii"] = HOLDS if v["v"] == HOLDS else ker.verdict
    v["viii"] = HOLDS if HOLDS in (v["iii"], v["iv"]) else (FAILS if v["iii"] == v["iv"] == FAILS else UNDECIDED)
    # implications that must hold for every single operator
    if v["ii"] == HOLDS:
        assert v["iii"] != FAILS and v["iv"] != FAILS, f"(ii) without one-sided inverses at {origin}"
        assert v["vii"] == HOLDS, f"(ii) without injectivity at {origin}"
    if v["iii"] == HOLDS:
        assert v["v"] == HOLDS
    if v["iv"] == HOLDS:
        assert v["vi"] == HOLDS
    return RepresentativeEvidence(origin, sym.to_json() if sym is not None else None, bb, bba, ker, v)


def check_conditions(A: LatticeOperator, radii: Sequence[int] | None = None, budget: int | None = None,
                     tol: float = 1e-6, sweep: bool = True, workers: int = 4) -> ConditionLadder:
    """Evaluate the limit-operator conditions for A and conclude Fredholmness.

    N = 1: Fredholm iff all limit operators are bounded below iff all are
    surjective (one-sided characterization, finite fiber).  N = 2: only the
    two-sided criterion (ii) is used.  The truncation sweep is run
    independently as a cross-check.
    """
    N = A.N
    if radii is None:
        radii = (16, 32, 64, 128) if N == 1 else (4, 6, 8, 10)
    if budget is None:
        budget = 32 if N == 1 else 16
    notes = []
    try:
        spec = operator_spectrum(A)
    except UnsupportedCoefficientError as exc:
        return ConditionLadder({t: UNDECIDED for t in CONDITIONS}, UNDECIDED, [], None, None, None,
                               [f"operator spectrum unsupported: {exc}"])
    kernel_radii = tuple(radii[:3])
    jobs = list(zip(spec.representatives, spec.origins))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        reps = list(pool.map(lambda job: _evidence(job[0], job[1], budget, tol, kernel_radii), jobs))
    cond = {tag: _all([r.verdicts[tag] for r in reps]) for tag in CONDITIONS if tag != "i"}

    if N == 1:
        if HOLDS in (cond["ii"], cond["v"], cond["vi"]):
            conclusion = "Fredholm"
            if FAILS in (cond["ii"], cond["v"], cond["vi"]):
                conclusion = UNDECIDED
                notes.append("one-sided conditions disagree; numerical evidence is inconsistent")
        elif FAILS in (cond["ii"], cond["v"], cond["vi"]):
            conclusion = "not Fredholm"
        else:
            conclusion = UNDECIDED
    else:
        conclusion = {HOLDS: "Fredholm", FAILS: "not Fredholm"}.get(cond["ii"], UNDECIDED)
        if cond["v"] == HOLDS and cond["ii"] == FAILS:
            notes.append("all limit operators bounded below, yet not Fredholm: "
                         "one-sided conditions do not characterize Fredholmness for N = 2")
    cond["i"] = {"Fredholm": HOLDS, "not Fredholm": FAILS}.get(conclusion, UNDECIDED)
    cond = {t: cond[t] for t in CONDITIONS}
    if cond["vii"] == HOLDS and conclusion == "not Fredholm":
        notes.append("(vii) holds but A is not Fredholm: injectivity of limit operators is not sufficient for p < inf")
    if cond["viii"] == HOLDS and conclusion == "not Fredholm":
        notes.append("(viii) holds but A is not Fredholm: mixed one-sided invertibility is not sufficient")

    norm_identity = None
    if cond["ii"] == HOLDS:
        syms = [r.symbol for r in reps]
        if all(s is not None for s in syms):
            sup_inv = max(s["inverseNormMax"] for s in syms)
            inf_j = min(s["jEstimate"] for s in syms)
            prod = sup_inv * inf_j
            norm_identity = {"supInverseNorm": sup_inv, "infLowerNorm": inf_j, "product": prod,
                             "ok": abs(prod - 1) <= 1e-3}
        else:
            lo = min(r.bounded_below.lo for r in reps)
            hi = min(r.bounded_below.hi for r in reps)
            norm_identity = {"infLowerNormBracket": [lo, hi], "supInverseNormBracket": [1 / hi, 1 / lo if lo else math.inf],
                             "product": 1.0, "ok": None}

    sweep_out, agreement = None, None
    if sweep:
        sv = moduli.truncation_sweep_classify(A, radii, tol=tol)
        sweep_out = {"verdict": sv.verdict, "kernel": sv.kernel_dim, "cokernel": sv.cokernel_dim,
                     "kernelGrowing": sv.kernel.growing, "cokernelGrowing": sv.cokernel.growing,
                     "notes": sv.notes}
        if sv.verdict == moduli.UNDECIDED:
            notes.append("truncation sweep undecided at this tolerance")
        elif conclusion == "Fredholm":
            agreement = sv.verdict == moduli.PHI
            if sv.kernel.growing or sv.cokernel.growing:
                notes.append("sweep shows kernel/cokernel growth although the ladder concludes Fredholm")
        elif conclusion == "not Fredholm":
            agreement = sv.verdict in (moduli.NOT_SEMI, moduli.PHI_PLUS, moduli.PHI_MINUS)
    return ConditionLadder(cond, conclusion, reps, norm_identity, sweep_out, agreement, notes)


# proof trace -------------------------------------------------------------------------------

@dataclass
class TSemiTrace:
    m: int
    eps: float
    l: int  # bandwidth recipe (l >= band width)
    l_min: int  # smallest l meeting the eps/5 defect test
    n: int
    d: int
    defects: dict  # tested n -> off-band defect at l
    max_defect: float
    rows: int
    cols: int
    k: int
    index_identity: bool
    index_shift_check: float  # |s^l_m(B) - s^r_k(B)|
    s_l_B: float
    s_l_A: float  # estimate of s^l_m(A)
    a_estimates: list  # tall-compression values of A* per radius
    chain_slack: float  # s^l_m(B) + ||P_{n-l}AQ_n|| - s^l_m(A)
    chain_holds: bool

    def to_json(self) -> dict:
        return moduli._jsonable(asdict(self))


def index_identity(d: int, n: int, l: int, m: int) -> tuple[int, int, int, bool]:
    """Dimensions of B = P_{n-l} A P_n, k = 2ld + m, and rows - cols + k == m."""
    rows, cols, k = d * (2 * (n - l) + 1), d * (2 * n + 1), 2 * l * d + m
    return rows, cols, k, rows - cols + k == m


def left_estimate(A: LatticeOperator, m: int, radii: Sequence[int]) -> list:
    """sigma_m of the column compressions A^* P_r, non-increasing in r towards s^l_m(A)."""
    As = A.adjoint()
    out = []
    for r in radii:
        w = window(r, A.N)
        sv = moduli.svdvals(As.compress(As.col_reach(w), w))
        out.append(float(sv[m - 1]) if m <= len(sv) else math.inf)
    return out


def tsemi_trace(A: LatticeOperator, m: int, eps: float | str = "auto", t=lattice.L2,
                radii: Sequence[int] = (16, 32, 64, 128), n: int | None = None,
                tail_margin: int = 0) -> TSemiTrace:
    """Run the steps of the semi-Fredholm => Fredholm argument on a concrete operator.

    (a) choose l (band width recipe) and find the smallest l whose off-band
    defect is at most eps/5 on all tested n; (b) check the index identity for
    B = P_{n-l} A P_n and the index shift s^l_m(B) = s^r_k(B); (c) check the
    chain s^l_m(A) <= s^l_m(B) + ||P_{n-l} A Q_n|| with s^l_m(A) replaced by
    its truncation estimate.
    """
    if as_norm_tag(t).p != 2:
        raise ValueError("tsemi_trace works at p = 2")
    if A.N != 1:
        raise ValueError("tsemi_trace works for N = 1")
    if m < 1:
        raise ValueError("m must be positive")
    radii = sorted(radii)
    estimates = left_estimate(A, m, radii)
    s_l_A = estimates[-1]
    if eps == "auto":
        eps = s_l_A
    eps = float(eps)
    w = getattr(A, "bandwidth", 0)
    l_max = w + tail_margin
    l_min = None
    for l in range(0, l_max + 1):
        if all(off_band_defect(A, nn, l, t) <= eps / 5 for nn in range(l + 1, l + 9)):
            l_min = l
            break
    if l_min is None:
        raise ValueError(f"no l <= {l_max} brings the off-band defect below eps/5 = {eps / 5:g}")
    l = w
    if n is None:
        n = radii[-2] + l
    tested = sorted(set(range(l + 1, l + 9)) | {n})
    defects = {nn: off_band_defect(A, nn, l, t) for nn in tested}
    rows, cols, k, ok = index_identity(A.d, n, l, m)
    B = truncate(A, n - l, n, t)
    assert B.shape == (rows, cols)
    s_l_B = moduli.approx_numbers(B, m, "left")[m - 1]
    s_r_k = moduli.approx_numbers(B, k, "right")[k - 1] if k <= cols else math.inf
    slack = s_l_B + defects[n] - s_l_A
    return TSemiTrace(m, eps, l, l_min, n, A.d, defects, max(defects.values()), rows, cols, k, ok,
                      abs(s_l_B - s_r_k), s_l_B, s_l_A, estimates, slack, slack >= -1e-12)
