"""Exact finite-state analysis at small N."""

from .generator import (
    GeneratorMatrix,
    build_generator,
    detailed_balance_residual,
    is_ergodic,
    stationary_exact,
    stationary_product,
    stationary_residual,
    stationary_reversible,
    write_distribution_csv,
)
from .kac import BirthDeathChain, expected_return_time, kac_check, kac_return_time
from .mixing import (
    adjoint_and_symmetrize,
    censored_tv_curve,
    diaconis_bound_check,
    mixing_time_exact,
    tv_curve,
)
from .wilson import WilsonCertificate, WilsonVariant, wilson_lower_bound, wilson_residual
