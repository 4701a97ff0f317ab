"""Balanced truncation model reduction for LTI systems with quadratic outputs."""

from .balancing import (
    BalancedTruncation,
    ReducedMimoModel,
    ReducedModel,
    assemble_gramians,
    balance,
    compute_output_energy,
    compute_output_energy_lowrank,
    lemma1_terms,
    linear_balanced_truncation,
    observability_residual,
    reachability_residual,
    reduce_model,
    reduced_linear_recovery,
    suggest_order,
    symmetric_factor,
)
from .lyapunov import (
    GramianFactor,
    ShiftSet,
    compress_factor,
    compute_shifts,
    observability_rhs_factor,
    solve_lyapunov_adi,
    solve_lyapunov_dense,
)
from .simulate import (
    ErrorMetrics,
    InputSignal,
    Trajectory,
    error_metrics,
    eval_input,
    integrate_adaptive,
    integrate_trapezoidal,
    recombine_quadratic,
    rhs_qb,
    rhs_rom,
    simulate,
)
from .systems import (
    LtiQuadraticSystem,
    MimoLinearSystem,
    QuadraticBilinearSystem,
    eval_quadratic_output,
    quadratic_term_matrix,
    spectral_abscissa,
    symmetrize,
)
from .transform import (
    bilinear_vanishes,
    split_indefinite,
    to_mimo_linear,
    to_quadratic_bilinear,
)

__version__ = "0.1.0"

__all__ = [
    "BalancedTruncation",
    "ErrorMetrics",
    "GramianFactor",
    "InputSignal",
    "LtiQuadraticSystem",
    "MimoLinearSystem",
    "QuadraticBilinearSystem",
    "ReducedMimoModel",
    "ReducedModel",
    "ShiftSet",
    "Trajectory",
    "assemble_gramians",
    "balance",
    "bilinear_vanishes",
    "compress_factor",
    "compute_output_energy",
    "compute_output_energy_lowrank",
    "compute_shifts",
    "error_metrics",
    "eval_input",
    "eval_quadratic_output",
    "integrate_adaptive",
    "integrate_trapezoidal",
    "lemma1_terms",
    "linear_balanced_truncation",
    "observability_residual",
    "observability_rhs_factor",
    "quadratic_term_matrix",
    "reachability_residual",
    "recombine_quadratic",
    "reduce_model",
    "reduced_linear_recovery",
    "rhs_qb",
    "rhs_rom",
    "simulate",
    "solve_lyapunov_adi",
    "solve_lyapunov_dense",
    "spectral_abscissa",
    "split_indefinite",
    "suggest_order",
    "symmetric_factor",
    "symmetrize",
    "to_mimo_linear",
    "to_quadratic_bilinear",
]
