"""Phase geometry of the fold singularity and the associated oscillatory operators."""

from .fold import FoldReport, fold_condition_check, leading_scale, sample_fold_points
from .linear_algebra import (
    MatrixInputError,
    kernel_unit_vector,
    null_direction_check,
    inverse_norm_check,
    det_derivative_check,
)
from .oscillatory import (
    ScalingReport,
    det_pairs,
    dyadic_det_cutoff,
    h1_fold_context,
    oscillatory_matrix,
    oscillatory_norm_experiment,
    phi_pairs,
    top_singular_value,
)
from .phase import (
    FD_STEP,
    PatchError,
    PhaseContext,
    Psi,
    Theta,
    det_factorization,
    det_sign,
    grad_Psi,
    mixed_hessian,
    mixed_hessian_fd,
    on_fold,
    phase_Phi,
    theta_crit,
    theta_hessian,
    theta_hessian_det,
)
from .stationary import (
    Amplitude,
    QuadratureError,
    StationaryPhaseReport,
    control_amplitude,
    expansion_terms,
    fold_base,
    kernel_amplitude,
    quadratic_reduction_residual,
    stationary_phase_compare,
    theta_integral,
)
