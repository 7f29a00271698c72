use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors shared by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("t*phi(t) is not increasing near t = {t} (condition (phi_1) fails on the sample grid)")]
    NonMonotoneDensity { t: f64 },

    #[error("argument {t} exceeds the safe evaluation domain of the N-function (limit {limit})")]
    OverflowDomain { t: f64, limit: f64 },

    #[error("no bracket for t*phi(t) = {s}: the density saturates at {max} before reaching it")]
    NoBracket { s: f64, max: f64 },

    #[error("unknown model '{0}'; known models: {1}")]
    UnknownModel(String, &'static str),

    #[error("parameter {name} = {value} outside the admissible range {range}")]
    ParamOutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("Phi vanishes at nonzero grid point t = {t}; indices are undefined there")]
    DegenerateIndex { t: f64 },

    #[error("mesh resolution {0} too small (need at least 2 cells per axis)")]
    BadResolution(usize),

    #[error("function does not have zero boundary trace (node {node} = {value})")]
    NonzeroBoundary { node: usize, value: f64 },

    #[error("{op}: no convergence after {iters} iterations (last residual {residual:.3e})")]
    MaxIterations {
        op: &'static str,
        iters: usize,
        residual: f64,
    },

    #[error("line search could not produce a decreasing step (step size underflow)")]
    NonDecreasingStep,

    #[error("no plateau level achieved a positive integral of F; (f_2) effectively fails at this resolution")]
    NoPositivePlateau,

    #[error("mountain-pass path collapsed: level {level:.3e} fell to the floor of the geometry")]
    CollapsedPath { level: f64 },

    #[error("hypothesis profile {profile} does not hold: {reason}")]
    HypothesisFailed { profile: &'static str, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),
}
