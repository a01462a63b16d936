pub mod error;
pub mod evolution;
pub mod fieldio;
pub mod grid;
pub mod landscape;
pub mod linalg;
pub mod spectral;
pub mod stats;
pub mod steady;
pub mod study;

pub use error::{Error, Result};
pub use evolution::{
    classify_longtime, integrate, integrate_proportional, EvolveOptions, Trajectory,
};
pub use grid::{apply_diffusion, rayleigh_quotient, Boundary, DomainSpec, GridField};
pub use landscape::{
    aggregation_index, generate, monotone_rearrange, steiner_rearrange, to_growth_field, Landscape,
    Monotone,
};
pub use linalg::{solve_shifted, ShiftedOperator, SpectralSolver};
pub use spectral::{
    lambda1_scaling_curve, lambda2_lower_bound, principal_eigenpair, second_eigenvalue,
    EigenOptions, EigenPair,
};
pub use steady::{
    classify, count_significant_solutions, locate_delta_star, rho_eps, solve_harvested_steady,
    solve_logistic_steady, thresholds, Branch, Classification, ModelParams, Multiplicity, RhoShape,
    SteadyOptions, SteadyState, Thresholds,
};
pub use study::{fit_polynomial, gap_report, run_study, FitResult, GapReport, StudyConfig, StudyRecord};
