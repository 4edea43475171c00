use thiserror::Error;

use crate::expression::ParseError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("point {x:?} is outside the domain of chart `{chart}`")]
    ChartDomain { chart: String, x: Vec<f64> },

    #[error("metric is singular at {x:?} (|det g| = {det:e})")]
    SingularMetric { x: Vec<f64>, det: f64 },

    #[error("quadratic form g(v, v) = {value:e} is negative; metric is not positive definite")]
    NegativeNorm { value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("expression domain error: {0}")]
    EvalDomain(String),

    #[error("expression references x{index} but only {dim} variables are bound")]
    UnboundVariable { index: usize, dim: usize },

    #[error("finite-difference stencil around {x:?} leaves the chart domain")]
    FdStep { x: Vec<f64> },

    #[error("rank mismatch: {0}")]
    RankMismatch(String),

    #[error("representation mismatch: field is {field}, point is {point}")]
    RepMismatch {
        field: &'static str,
        point: &'static str,
    },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("samples are not uniformly spaced in time (step {step} vs {first})")]
    NonUniformSamples { step: f64, first: f64 },

    #[error("sample {index} carries no covariant acceleration")]
    MissingAccel { index: usize },

    #[error("force field is undefined at {x:?}: {reason}")]
    ForceSingular { x: Vec<f64>, reason: String },

    #[error("adaptive step fell below dt_min = {dt_min:e} at t = {t}")]
    StepSizeUnderflow { t: f64, dt_min: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("state lies on the singular set of the Lagrangian ({0})")]
    SingularSet(String),

    #[error("matrix A is singular (|det A| = {det:e}, tolerance {tolerance:e})")]
    SingularA { det: f64, tolerance: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("velocity modulus {speed:e} is below v_min = {v_min:e}")]
    ZeroVelocity { speed: f64, v_min: f64 },

    #[error("fiberwise symmetric Lagrangian is degenerate (L' = {d1:e}, L'' = {d2:e})")]
    DegenerateLagrangian { d1: f64, d2: f64 },

    #[error("normal-shift profile is degenerate (W' = {dw:e})")]
    DegenerateW { dw: f64 },
}
