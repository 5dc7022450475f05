"""ergovar: which ergodic averages of a reversible Markov chain have finite
asymptotic variance.

Exact finite-chain oracles (spectral gaps, asymptotic variances), the
jump-chain decomposition with its variance identity and weighted estimators,
independence-sampler classification and bounds, pseudo-marginal chains with
noise-family diagnostics, batch-means estimation, and a config-driven
experiment runner.
"""

from .errors import (
    AbsorbingState,
    DimensionMismatch,
    EmptyPath,
    ErgovarError,
    InvalidConfig,
    MissingMoments,
    NotExactMode,
    PathTooShort,
    ReducibleChain,
    SingularSystem,
    UnevaluableNoise,
    UnknownModel,
    ZeroNoiseCurrent,
    ZeroWeightSum,
)
from .estimators import AvarEstimate, PathSample, batch_means, divergence_scan
from .finite_chain import (
    FiniteReversibleKernel,
    SpectralReport,
    asymptotic_variance_exact,
    dirichlet_form,
    spectral_gap,
    stationary_distribution,
    variational_avar,
)
from .imh import (
    ImhModel,
    VarianceClassification,
    classify,
    envelope_bounds,
    imh_simulate,
    minorization_check,
    rho_and_bounds,
    snis_estimate,
    snis_limit_variance,
)
from .jump_chain import (
    EstimatorVariances,
    JumpDecomposition,
    JumpPath,
    decompose,
    estimator_variances_exact,
    gap_inheritance_check,
    geo_estimate,
    rb_estimate,
    reconstruct_path,
    simulate_jump_path,
    variance_identity_residual,
)
from .pseudo_marginal import (
    AbcNoise,
    AtomNoise,
    AveragedNoise,
    LognormalNoise,
    MarginalModel,
    NoiseFamily,
    PmModel,
    PmState,
    acceptance_sandwich,
    aux_exit_bounds_check,
    aux_kernel_step,
    classify_independent_proposal,
    noise_acceptance_profile,
    peskun_ordered,
    pm_simulate,
    pm_step,
    product_chains,
    sufficiency_report,
    unit_noise,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
