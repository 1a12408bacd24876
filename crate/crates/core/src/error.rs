use thiserror::Error;

/// Errors raised by the inference engine.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid search region [{lo}, {hi}]")]
    InvalidRegion { lo: f64, hi: f64 },

    #[error("invalid quadrature settings: {0}")]
    InvalidQuadrature(String),

    #[error("kernel is not finite at x = {x}")]
    NonFiniteKernel { x: f64 },

    #[error("kernel mass {mass:e} is too small to normalize")]
    ZeroMass { mass: f64 },

    #[error("quadrature did not converge within {subdivisions} subdivisions (error estimate {error:e})")]
    QuadratureFailure { subdivisions: usize, error: f64 },

    #[error("quantile inversion failed to bracket probability {p}")]
    RootFindFailure { p: f64 },

    #[error("invalid density parameter: {0}")]
    InvalidParameter(String),

    #[error("bump weight lambda = {0} outside [0, 1/2)")]
    LambdaOutOfRange(f64),

    #[error("bump center {0} lies outside the search region")]
    BumpCenterOutsideRegion(f64),

    #[error("signal and proposal are numerically identical (score norm {0:e})")]
    DegenerateSignal(f64),

    #[error("densities are defined on different search regions")]
    SupportMismatch,

    #[error("sample too small: need at least {need}, got {got}")]
    EmptySample { need: usize, got: usize },

    #[error("observation {value} lies outside the search region [{lo}, {hi}]")]
    ObservationOutsideRegion { value: f64, lo: f64, hi: f64 },

    #[error("estimator denominator ||S|| - delta_hat = {0:e} is too close to zero")]
    DegenerateDenominator(f64),

    #[error("estimated variance is not positive ({0:e})")]
    ZeroVariance(f64),

    #[error("optimization failed: {0}")]
    OptimizationFailure(String),

    #[error("log-likelihood is not finite at {0:?}")]
    NonFiniteLogLik(Vec<f64>),

    #[error("information matrix is singular")]
    SingularInformation,

    #[error("invalid finite-difference step {0}")]
    FdStepInvalid(f64),

    #[error("signal region would leave the search region")]
    RegionExceedsSupport,

    #[error("likelihood is flat: signal equals the background model")]
    FlatLikelihood,

    #[error("argument outside domain: {0}")]
    DomainError(String),

    #[error("campaign degenerate: {failures} of {replicates} replicates failed")]
    CampaignDegenerate { failures: usize, replicates: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("event file contains no values")]
    EmptyFile,

    #[error("{count} value(s) lie outside the search region, first: {first}")]
    ValueOutsideRegion { count: usize, first: f64 },

    #[error("configuration error: {0}")]
    ConfigError(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable identifier for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidRegion { .. } => "invalid_region",
            Error::InvalidQuadrature(_) => "invalid_quadrature",
            Error::NonFiniteKernel { .. } => "non_finite_kernel",
            Error::ZeroMass { .. } => "zero_mass",
            Error::QuadratureFailure { .. } => "quadrature_failure",
            Error::RootFindFailure { .. } => "root_find_failure",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::LambdaOutOfRange(_) => "lambda_out_of_range",
            Error::BumpCenterOutsideRegion(_) => "bump_center_outside_region",
            Error::DegenerateSignal(_) => "degenerate_signal",
            Error::SupportMismatch => "support_mismatch",
            Error::EmptySample { .. } => "empty_sample",
            Error::ObservationOutsideRegion { .. } => "observation_outside_region",
            Error::DegenerateDenominator(_) => "degenerate_denominator",
            Error::ZeroVariance(_) => "zero_variance",
            Error::OptimizationFailure(_) => "optimization_failure",
            Error::NonFiniteLogLik(_) => "non_finite_loglik",
            Error::SingularInformation => "singular_information",
            Error::FdStepInvalid(_) => "fd_step_invalid",
            Error::RegionExceedsSupport => "region_exceeds_support",
            Error::FlatLikelihood => "flat_likelihood",
            Error::DomainError(_) => "domain_error",
            Error::CampaignDegenerate { .. } => "campaign_degenerate",
            Error::InvalidScenario(_) => "invalid_scenario",
            Error::ParseError { .. } => "parse_error",
            Error::EmptyFile => "empty_file",
            Error::ValueOutsideRegion { .. } => "value_outside_region",
            Error::ConfigError(_) => "config_error",
            Error::Io(_) => "io_error",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
