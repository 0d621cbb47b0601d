"""Canonical operators with known Fredholm behaviour, and the checks run on them.

Index conventions: Z_- = {..., -2, -1} and N = {0, 1, 2, ...}, so the
cutoff chi_- is the indicator of n < 0 and chi_+ that of n >= 0.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import fredholmlab as fl
from . import moduli
from .bandop import BandOperator, FlipOperator, LatticeOperator, off_band_defect, save, truncate
from .coefficients import BlockStructure, Tabulated, indicator
from .lattice import LatticeVector, window
from .limitops import operator_spectrum

PASS, FAIL, SENSITIVE = "pass", "fail", "tolerance-sensitive"


@dataclass
class Check:
    name: str
    expected: object
    observed: object
    ok: bool
    sensitive: bool = False  # depends on a sweep tolerance


@dataclass
class GalleryCase:
    name: str
    operator: LatticeOperator
    expected: dict
    summary: str
    checks: Callable = field(repr=False, default=None)


# operators ----------------------------------------------------------------------------------

def i_minus_v1() -> BandOperator:
    return BandOperator({0: 1, 1: -1})


def halfplane() -> BandOperator:
    """chi_{Z x Z_-} I + chi_{Z x N} V_(0,1) on l^2(Z^2)."""
    return BandOperator({(0, 0): indicator(None, -1, axis=1, N=2), (0, 1): indicator(0, None, axis=1, N=2)}, N=2)


def mixed_one_sided() -> BandOperator:
    """diag(chi_- I, I_1, U_1, I_2, U_2, ...) with blocks laid out from 0 rightward.

    U_r is the r x r shift e_i -> e_{i+1} (last basis vector to 0); the
    main diagonal is 1 on identity blocks and on n < 0, the first
    subdiagonal is 1 inside shift blocks except at their first row.
    """
    one, zero = np.eye(1), np.zeros((1, 1))
    main = BlockStructure(0, ((one, one, one), (zero, zero, zero)))
    sub = BlockStructure(0, ((zero, zero, zero), (zero, one, one)))
    return BandOperator({0: Tabulated({}, 1, 1, 1, main), 1: Tabulated({}, 0, 1, 1, sub)})


def finite_fiber(d: int) -> BandOperator:
    """chi_- I + chi_N V_1 on l^2(Z, C^d): injective with a d-dimensional cokernel."""
    return BandOperator({0: indicator(None, -1, d=d), 1: indicator(0, None, d=d)}, 1, d)


def symbol_two_minus_t() -> BandOperator:
    return BandOperator({0: 2, 1: -1})


def eventually_constant() -> BandOperator:
    """2 - V_1 at both ends with a perturbed core; Fredholm."""
    from .coefficients import EventuallyPeriodic

    return BandOperator({
        0: EventuallyPeriodic([2], [3, 0.5, 1], [2], -1),
        1: EventuallyPeriodic([-1], [0.3], [-1], 0),
    })


# checks -------------------------------------------------------------------------------------

def _sweep_checks(A, radii, tol, expected_verdict, name="sweep verdict"):
    sv = moduli.truncation_sweep_classify(A, radii, tol=tol)
    return sv, Check(name, expected_verdict, sv.verdict, sv.verdict == expected_verdict, sensitive=True)


def _ladder_checks(A, expected: dict, tol) -> list:
    lad = fl.check_conditions(A)
    out = [Check(f"ladder ({t})", v, lad.conditions[t], lad.conditions[t] == v) for t, v in expected.items()]
    out.append(Check("ladder conclusion", "Fredholm" if expected.get("i") == fl.HOLDS else "not Fredholm",
                     lad.conclusion, lad.conclusion == ("Fredholm" if expected.get("i") == fl.HOLDS else "not Fredholm")))
    return out, lad


def check_i_minus_v1(A, tol):
    checks = []
    spec = operator_spectrum(A)
    checks.append(Check("operator spectrum is {A}", 1, len(spec), len(spec) == 1 and A in spec))
    M = A.compress(window(32), window(32))[:64, :64]
    s64 = moduli.lower_norm(M)
    checks.append(Check("sigma_min of 64x64 section in (0, 0.05)", "(0, 0.05)", s64, 0 < s64 < 0.05))
    laws = []
    for n in (4, 8, 16, 33):
        Mn = A.compress(window(n), window(n))[:n, :n]
        laws.append(abs(moduli.lower_norm(Mn, "inf") - 1 / n))
    checks.append(Check("p=inf lower norm of n x n section is 1/n", 0.0, max(laws), max(laws) <= 1e-12))
    R = 20
    x = LatticeVector({(k,): 1.0 for k in range(-R, R + 1)})
    y = A.apply(x)
    interior = max((abs(v[0]) for k, v in y.entries.items() if -R < k[0] <= R), default=0.0)
    checks.append(Check("constant vector: interior residual", 0.0, interior, interior == 0.0))
    lad_checks, lad = _ladder_checks(A, {"v": fl.FAILS, "vii": fl.HOLDS, "i": fl.FAILS}, tol)
    checks += lad_checks
    _, c = _sweep_checks(A, (8, 16, 32, 64), tol, moduli.NOT_SEMI)
    checks.append(c)
    return checks


def check_halfplane(A, tol):
    checks = []
    spec = operator_spectrum(A)
    checks.append(Check("operator spectrum size", 3, len(spec), len(spec) == 3))
    radii = (4, 6, 8, 10)
    sv, c = _sweep_checks(A, radii, tol, moduli.PHI_PLUS)
    checks.append(c)
    small = [min(moduli.svdvals(A.compress(A.col_reach(window(n, 2)), window(n, 2)))) for n in radii]
    checks.append(Check("column compressions: no singular value below 1e-6", "> 1e-6", min(small), min(small) > 1e-6))
    slope = np.polyfit(radii, sv.square_deficiency, 1)[0]
    checks.append(Check("square-section deficiency slope", 2.0, float(slope), abs(slope - 2) <= 0.2, sensitive=True))
    lad_checks, _ = _ladder_checks(A, {"v": fl.HOLDS, "ii": fl.FAILS, "i": fl.FAILS}, tol)
    return checks + lad_checks


def check_mixed(A, tol):
    checks = []
    spec = operator_spectrum(A)
    kinds = sorted(o.kind for o in spec.orbits)
    checks.append(Check("orbits", ["finite", "finite", "infinite", "infinite"], kinds,
                        kinds == ["finite", "finite", "infinite", "infinite"]))
    one_sided = []
    for B in spec.representatives:
        lo = max(fl.bounded_below_numeric(B).lo, fl.bounded_below_numeric(B.adjoint()).lo)
        one_sided.append(lo)
    checks.append(Check("every representative: lo > 0.5 for it or its adjoint", "> 0.5", min(one_sided),
                        min(one_sided) > 0.5))
    counts = []
    for n in (10, 20, 30, 40):
        counts.append(int(np.sum(moduli.svdvals(A.compress(window(n), window(n))) < 1e-8)))
    mono = all(a <= b for a, b in zip(counts, counts[1:]))
    checks.append(Check("kernel count of P_n A P_n (n=10..40)", ">= 5, non-decreasing", counts,
                        mono and counts[-1] >= 5))
    lad_checks, _ = _ladder_checks(A, {"viii": fl.HOLDS, "i": fl.FAILS}, tol)
    checks += lad_checks
    _, c = _sweep_checks(A, (8, 16, 32, 64), tol, moduli.NOT_SEMI)
    checks.append(c)
    return checks


def check_flip(J, tol):
    worst = max(off_band_defect(J, n, l) for n in range(1, 13) for l in range(0, n))
    return [Check("off-band defect over 0 <= l < n <= 12", 0.0, worst, worst == 0.0)]


def check_finite_fiber(_, tol, ds=range(1, 17)):
    observed = {}
    ok = True
    for d in ds:
        sv = moduli.truncation_sweep_classify(finite_fiber(d), (4, 8, 16), tol=tol)
        observed[d] = [sv.verdict, sv.kernel_dim, sv.cokernel_dim]
        ok &= observed[d] == [moduli.PHI, 0, d]
    return [Check("d-sweep: Fredholm with kernel 0 and cokernel d", "[Phi, 0, d]", observed, ok, sensitive=True)]


def check_symbol(A, tol):
    s = fl.symbol_invertibility(A)
    sv, c = _sweep_checks(A, (8, 16, 32, 64), tol, moduli.PHI)
    return [
        Check("symbol invertible", True, s.invertible, s.invertible),
        Check("jEstimate", 1.0, s.j_estimate, abs(s.j_estimate - 1) <= 1e-6),
        c,
        Check("square-section sigma_min at largest radius", ">= 0.99", sv.square_sigma_min[-1],
              sv.square_sigma_min[-1] >= 0.99),
    ]


def check_eventually_constant(A, tol):
    lad_checks, lad = _ladder_checks(A, {"ii": fl.HOLDS, "i": fl.HOLDS}, tol)
    ni = lad.norm_identity or {}
    tr = fl.tsemi_trace(A, 1)
    _, c = _sweep_checks(A, (16, 32, 64, 128), tol, moduli.PHI)
    return lad_checks + [
        Check("norm identity sup||inv|| * inf j", 1.0, ni.get("product"), bool(ni.get("ok"))),
        Check("trace: chain slack nonnegative", ">= 0", tr.chain_slack, tr.chain_holds),
        c,
    ]


REGISTRY = {
    "i_minus_v1": (i_minus_v1, check_i_minus_v1, {"class": moduli.NOT_SEMI, "fredholm": False},
                   "shift invariant, injective on l^2, not Fredholm"),
    "e1_halfplane": (halfplane, check_halfplane, {"class": moduli.PHI_PLUS, "fredholm": False},
                     "half-plane operator on Z^2: injective, one-sided invertible, not Fredholm"),
    "mixed_one_sided": (mixed_one_sided, check_mixed, {"class": moduli.NOT_SEMI, "fredholm": False},
                        "every limit operator one-sided invertible, A not Fredholm"),
    "flip_quasibanded": (FlipOperator, check_flip, {"offBandDefect": 0.0},
                         "the flip J is quasi-banded: all off-band corner defects vanish"),
    "e2_finite_fiber": (lambda: finite_fiber(1), check_finite_fiber, {"class": moduli.PHI},
                        "finite-fiber analogue of the infinite-fiber example: stays Fredholm for d = 1..16"),
    "symbol_2_minus_t": (symbol_two_minus_t, check_symbol, {"class": moduli.PHI, "jEstimate": 1.0},
                         "Laurent operator with symbol 2 - t"),
    "eventually_constant": (eventually_constant, check_eventually_constant, {"class": moduli.PHI, "fredholm": True},
                            "eventually constant, symbol 2 - t at both ends"),
}


def build_example(name: str) -> GalleryCase:
    try:
        make, checks, expected, summary = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown gallery case {name!r}; known: {sorted(REGISTRY)}") from None
    return GalleryCase(name, make(), expected, summary, checks)


@dataclass
class CaseResult:
    name: str
    status: str
    checks: list
    summary: str


@dataclass
class GalleryReport:
    results: list
    tol: float

    @property
    def ok(self) -> bool:
        return all(r.status != FAIL for r in self.results)

    def to_json(self) -> dict:
        return moduli._jsonable({
            "schemaVersion": 1,
            "tol": self.tol,
            "cases": [{"name": r.name, "status": r.status, "summary": r.summary,
                       "checks": [asdict(c) for c in r.checks]} for r in self.results],
        })

    def to_text(self) -> str:
        lines = []
        for r in self.results:
            lines.append(f"{r.name:<22} {r.status}")
            for c in r.checks:
                if not c.ok:
                    lines.append(f"    {c.name}: expected {c.expected!r}, observed {c.observed!r}")
        return "\n".join(lines)


def run_case(name: str, tol: float = 1e-6) -> CaseResult:
    case = build_example(name)
    try:
        checks = case.checks(case.operator, tol)
    except moduli.SemiFredholmConsistencyError:
        raise
    except Exception as exc:  # a crashing checker is a failure of the case
        checks = [Check("checker raised", "no error", f"{type(exc).__name__}: {exc}", False)]
    bad = [c for c in checks if not c.ok]
    if not bad:
        status = PASS
    elif all(c.sensitive for c in bad):
        status = SENSITIVE
    else:
        status = FAIL
    return CaseResult(name, status, checks, case.summary)


def run_gallery(tol: float = 1e-6, names=None, workers: int = 4) -> GalleryReport:
    """Run every checker on every case; results are ordered by case name."""
    names = sorted(REGISTRY) if names is None else list(names)
    for n in names:
        if n not in REGISTRY:
            raise KeyError(f"unknown gallery case {n!r}")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda n: run_case(n, tol), names))
    return GalleryReport(results, tol)


def export_case(name: str, path) -> None:
    save(build_example(name).operator, path)


def dumps(report: GalleryReport) -> str:
    return json.dumps(report.to_json(), sort_keys=True, indent=2)
