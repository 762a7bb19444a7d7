from .experiments import (
    OrthogonalityReport,
    SlopeReport,
    almost_orthogonality_experiment,
    cotlar_stein_check,
    cotlar_stein_rhs,
    decay_experiment,
    family_norm,
    fit_slope,
    maximal_function,
    t_mesh,
)
from .grid import (
    GridError,
    GridFunction,
    NonisotropicGrid,
    adjoint_kernel,
    convolution_matrix,
    delta,
    group_convolve,
    kernel_grid,
    random_function,
    sample_kernel,
    truncation_report,
)
from .norms import OperatorNormEstimate, operator_norm
from .plancherel import (
    BumpSource,
    DyadicSource,
    PlancherelError,
    dilation_derivative,
    lam_norm,
    plancherel_norm,
    symbol_sup,
)
