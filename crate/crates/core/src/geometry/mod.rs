//! Level-set domains, convex cores, the pseudo-distance and geometric constants.

mod constants;
mod level_set;
mod ops;
mod pseudo;
mod smooth;

pub use constants::{
    check_smallness, compute_gamma, estimate_r0, BoundarySubset, GammaEstimate, GeometryReport,
    R0Estimate, R0Options, SmallnessCase, SmallnessQuery,
};
pub use level_set::{
    fd_relative_error, sample_boundary, vector, ConvexCore, CoreDiagnostics, LevelEval, LevelSet,
    LevelSetDomain, Matrix, Vector,
};
pub use ops::{distance_to_domain, outward_normal, project};
pub use pseudo::{
    build_pseudo_distance, check_hessian_psi_sq, PseudoDistance, PsiEval, SearchBudget,
};
pub(crate) use smooth::smooth_radius;
pub use smooth::{rho_eps_bridge, smoothstep, smoothstep_d2, RhoBridge};
