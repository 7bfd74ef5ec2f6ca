"""Stein variational probabilistic roadmaps.

Particle-based variational inference places roadmap vertices on a
differentiable feasibility posterior; chance-constrained construction and
lazy shortest-path search turn the particles into plans.
"""

from .geometry import (
    ConfigSpace,
    GeometryError,
    KinematicChain,
    ObstacleSet,
    forward_joints,
    forward_spheres,
    sample_halton,
    sample_uniform,
    signed_distance,
    signed_distance_grad,
)
from .models import (
    BayesianHilbertMap,
    BoxBarrierPrior,
    FeasibilityModel,
    GaussianMixtureModel,
    GaussianModel,
    ModelError,
    RbfOccupancyField,
    TsdfArmModel,
    arm_log_likelihood,
    bhm_fit,
    bhm_predict,
    fit_rbf_field,
    load_model,
    posterior_grad,
    save_model,
    tsdf_cost,
)
from .svgd import (
    KernelConfig,
    ParticleSet,
    SvgdConfig,
    SvgdError,
    estimate_metric,
    kernel_eval,
    run_inference,
    svgd_phi,
    svgd_step,
)
from .roadmap import (
    Edge,
    Roadmap,
    RoadmapError,
    build_roadmap,
    check_edge,
    connect_radius,
    cull_vertices,
)
from .planner import (
    PlanQuery,
    PlanResult,
    QueryRejected,
    plan_eager,
    plan_lazy,
)
from .metrics import (
    CoverageReport,
    MetricsError,
    MixtureSpec,
    MmdConfig,
    TrialResult,
    TrialSuite,
    coverage,
    mmd_squared,
    reference_feasible_sample,
    run_trial_suite,
)

__version__ = "0.1.0"
