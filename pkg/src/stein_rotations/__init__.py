"""Kernel Stein discrepancy on the rotation group SO(N).

Closed-form Stein kernels for the von Mises-Fisher and Riemannian normal
families, minimum-KSD estimators, a goodness-of-fit test and exact samplers.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AntipodalError,
    DimensionError,
    EmptyInputError,
    EnvelopeTooLooseError,
    InsufficientDrawsError,
    NotARotationError,
    SingularSystemError,
    SteinRotationsError,
    TangencyError,
)
from .estimators import (  # noqa: E402
    EstimateReport,
    MksdeVmfSystem,
    RnOptions,
    WeightedSamples,
    ksd_u,
    ksd_u_stderr,
    ksd_v,
    mksde_rn,
    mksde_vmf,
    mksde_vmf_system,
    mle_vmf_numeric,
    mle_vmf_smallF,
)
from .gof import GofResult, gof_test, weighted_chisq_draws, weighted_chisq_quantile  # noqa: E402
from .kernels import (  # noqa: E402
    KernelConfig,
    RnParams,
    RnSteinKernel,
    ScoreSteinKernel,
    SteinKernel,
    VmfParams,
    VmfSteinKernel,
    base_kernel,
    gram_eigenvalues,
    gram_matrix,
    kp_generic,
    kp_rn,
    kp_vmf,
    stein_oracle,
)
from .lie import (  # noqa: E402
    geodesic_distance,
    haar_sample,
    is_rotation,
    kron,
    perfect_shuffle,
    renormalize,
    skew_part,
    so_exp,
    so_log,
    standard_basis,
    unvec,
    vec,
)
from .samplers import CayleyParams, sample_cayley, sample_rn, sample_vmf  # noqa: E402
