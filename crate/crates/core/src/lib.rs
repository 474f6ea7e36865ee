//! Group-sequential designs for a normal mean: recursive stage densities,
//! stage-wise design search, estimation after stopping, local-alternative
//! limits and Monte Carlo operating characteristics.

pub mod asymptotics;
pub mod design;
pub mod error;
pub mod estimation;
pub mod numerics;
pub mod simulation;
pub mod sub_density;

pub use asymptotics::{
    convergence_check, mixture_cdf_k_stage, mixture_cdf_two_stage, ConvergenceRow, LocalAltSpec,
};
pub use design::{
    solve_alpha0, solve_design, solve_design_with, solve_stage_k, validate_design, AlphaPolicy,
    DesignSpec, OcRow, SolvedDesign, SolverOptions, StageSolution, ValidationReport,
};
pub use error::{Error, Result};
pub use estimation::{
    estimator_moments, expected_info, mle_conditional, mle_unconditional, mlr_check,
    observed_info, ConditionalMleOptions, Estimator, EstimatorMoments, InfoReport, MleKind,
    MleResult, MomentMethod, Moments, ObservedInfo, TrialOutcome,
};
pub use simulation::{
    run_estimator_study, run_oc, simulate_trial, DivergencePolicy, EstimatorStudy, SimConfig,
    SimResult,
};
pub use sub_density::{
    expected_sample_size, initial_density, mixture_cdf, propagate, stopping_probabilities, Design,
    Drift, Engine, StageDensity, StoppingProbabilities, Trajectory,
};
