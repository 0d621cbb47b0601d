"""Fredholm diagnostics for band operators on l^p(Z^N, C^d)."""

from .bandop import BandOperator, FlipOperator, TruncatedMatrix, adjoint, apply, off_band_defect, p_compact_defect, truncate
from .coefficients import (
    BlockStructure,
    Constant,
    EventuallyPeriodic,
    FiniteSupport,
    Periodic,
    Tabulated,
    indicator,
)
from .fredholmlab import bounded_below_numeric, check_conditions, symbol_invertibility, tsemi_trace
from .gallery import build_example, run_gallery
from .lattice import LatticeVector, NormTag, Window, box, norm, project, shift, unit, window
from .limitops import Explicit, Tail, adjoint_spectrum_check, limit_operator, operator_spectrum, verify_pstrong
from .moduli import (
    approx_numbers,
    localized_lower_norm,
    lower_norm,
    sandwich_check,
    surjection_modulus,
    truncation_sweep_classify,
)

__version__ = "0.1.0"
