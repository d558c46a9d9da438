//! Leaderless affine formation maneuvering for planar swarms.
//!
//! Agent positions are complex numbers (real part = x, imaginary part = y). A
//! formation is a configuration `p ∈ ℂⁿ`; the desired shape set is the complex
//! span of `{1, Re p*, Im p*}` for a centered reference shape `p*`. A stress
//! Laplacian `L` whose kernel is exactly that span stabilizes the shape, and a
//! set of asymmetric per-edge motion parameters `μ_ij` injects a chosen affine
//! collective motion through the closed loop
//!
//! ```text
//! ṗ = −h·K·L·p + κ·M·Bᵀ·p
//! ```
//!
//! The crate is organised bottom-up:
//!
//! * [`formation`] – graphs, incidence matrices, affine maps and shape projectors.
//! * [`stress`] – stress-weight design and gain validation.
//! * [`motion`] – motion parameters, the six-motion basis and the modified Laplacian.
//! * [`spectral`] – case classification, Jordan chains, closed-form trajectories
//!   and the stabilization gain bound.
//! * [`sim`] – fixed-step integration under piecewise-constant motion schedules.
//! * [`scenario`] – JSON scenario files, end-to-end runs and artifact export.
//! * [`verify`] – the property battery behind `affine-formation verify`.

pub mod formation;
pub mod linalg;
pub mod motion;
pub mod presets;
pub mod scenario;
pub mod sim;
pub mod spectral;
pub mod stress;
pub mod verify;

pub use formation::{
    affine_map, decode_to_r2, encode_from_r2, incidence_matrix, shape_distance, AffineCoords,
    Configuration, FormationError, Graph, ReferenceShape, ShapeBasis,
};
pub use linalg::C64;
pub use motion::{
    assemble_modified, build_motion_basis, hardware_scaling, solve_agent_mu, ModifiedLaplacian,
    MotionBasis, MotionError, MotionParameters, MuConstraints,
};
pub use sim::{
    compare_with_analytic, exponential_fit, integrate, IntegrationOptions, Integrator, Schedule,
    Segment, SimError, Trajectory,
};
pub use spectral::{
    analytic_solution, build_chains, classify, spectral_projector, stability_bound,
    AnalyticTrajectory, CaseLabel, Classification, SpectralError, SpectralReport,
};
pub use stress::{
    design_weights_complete, design_weights_general, validate_gain, GainMatrix, GainReport,
    StressError, StressWeights, WeightDesign,
};
