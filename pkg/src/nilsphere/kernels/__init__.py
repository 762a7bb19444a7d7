from .analysis import (
    CorrectedKernel,
    KernelSizeReport,
    cancellation_correct,
    export_binary,
    export_csv,
    import_binary,
    kernel_integral,
    kernel_l1,
    kernel_size_report,
    pointwise_constant,
    sderiv_l1,
)
from .cutoffs import CutoffError, CutoffSystem, cutoff_eval, n_intermediate, smooth_step, zeta0, zeta0_ft, zeta1
from .kernel import (
    DyadicKernelSpec,
    KernelError,
    bhat_grid,
    bhat_points,
    bhat_quadrature,
    eval_kernel,
    s_derivative_kernel,
)
from .surface import Bump, SurfaceData, SurfaceError
