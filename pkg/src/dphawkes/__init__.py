"""Differentially private estimation of multivariate Hawkes process kernels."""

from .discretize import (
    BinConfig,
    BinSeries,
    DesignMatrices,
    bin_counts,
    build_design,
    distance,
    estimate_R,
    perturb_neighbor,
)
from .estimator import (
    ConstraintSet,
    cls_closed_form,
    gradient,
    loss,
    nuclear_lmo,
    project_frobenius,
    top_singular_pair,
)
from .harness import ExperimentConfig, builtin_models, kernel_overlay, run_sweep
from .hawkes_sim import (
    BoxKernel,
    EventStream,
    ExponentialKernel,
    HawkesModel,
    SumKernel,
    ZeroKernel,
    eval_kernel,
    intensity_at,
    simulate,
    stationary_mean,
)
from .optimizers import (
    NoisePlan,
    PrivacyBudget,
    calibrate_cg,
    calibrate_pgd,
    dp_cg,
    dp_pgd,
    epsilon_of_sigma,
)
from .recovery import KernelEstimate, discretize_truth, relative_error, rescale

__version__ = "0.1.0"
