"""geomppca: probabilistic PCA for manifold-valued data.

The model replaces the Euclidean Gaussian of probabilistic PCA with the
endpoint distribution of a stochastic process developed through a rank-k
frame: principal directions are carried along sample paths by parallel
transport, so anisotropy is defined infinitesimally rather than in a single
tangent space. Densities and likelihoods are estimated with importance
weighted guided bridges; a small-variance alternative estimates the frame
from most probable paths.
"""

from .geometry import (
    DomainError,
    ManifoldChart,
    by_name,
    christoffel,
    christoffel_from_metric,
    ellipsoid,
    embed,
    flat,
    metric,
    sphere,
    sphere_exp,
    sphere_log,
)
from .frame_bundle import (
    DomainExit,
    FramePoint,
    FrameRankError,
    anti_develop,
    develop,
    frame_volume,
    g_orthonormal_basis,
    horizontal_basis,
    horizontal_bracket,
    orthonormal_frame,
    parallel_transport,
    sub_inner,
    transport_frames,
)
from .stochastic import (
    DrivingIncrements,
    ForwardSamples,
    ModelParams,
    Trajectory,
    develop_stochastic,
    forward_samples,
    simulate_driving,
)
from .bridge import (
    BridgeSample,
    DensityEstimate,
    EstimationError,
    density_grid,
    guided_bridge,
    log_likelihood,
    transition_density,
)
from .baselines import (
    EuclideanPPCAFit,
    TangentPCAResult,
    frechet_mean,
    ppca_fit,
    ppca_log_likelihood,
    ppca_posterior_mean,
    tangent_pca,
)
from .estimators import (
    FitOptions,
    LatentSummary,
    MppEstimate,
    MppOptions,
    MppResult,
    PCAFit,
    fit_mle,
    initial_params,
    mpp_estimate,
    mpp_shoot,
    principal_paths,
)
from .seeding import datum_seed, derived_seed

__version__ = "0.1.0"
