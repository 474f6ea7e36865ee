use thiserror::Error;

/// Errors raised by the numerical kernel and the design/estimation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no sign change in bracket: f({lower}) = {f_lower}, f({upper}) = {f_upper}")]
    Bracketing {
        lower: f64,
        upper: f64,
        f_lower: f64,
        f_upper: f64,
    },

    #[error("root finder did not converge after {iterations} iterations (last x = {last})")]
    NoConvergence { iterations: usize, last: f64 },

    #[error("non-finite integrand value {value} at node {node}")]
    NonFinite { node: f64, value: f64 },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid design spec: {0}")]
    InvalidSpec(String),

    #[error("stage index {stage} out of range for a {stages}-stage design")]
    StageOutOfRange { stage: usize, stages: usize },

    #[error(
        "stage {stage} infeasible: power {achieved_power:.6} at the sample-size cap {cap} is below target {target:.6}"
    )]
    Infeasible {
        stage: usize,
        achieved_power: f64,
        target: f64,
        cap: u64,
    },

    #[error("Pr(D = {stage}) underflows ({probability:e}) at theta = {theta}")]
    Underflow {
        stage: usize,
        probability: f64,
        theta: f64,
    },

    #[error("trial path inconsistent with boundaries at stage {stage}: {reason}")]
    PathInconsistent { stage: usize, reason: String },

    #[error("invalid local-alternative ratios: {0}")]
    InvalidRatios(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
