use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numerical,
    Data,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Numerical => 3,
            ErrorClass::Data => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("failed to parse configuration: {0}")]
    ConfigParse(String),

    #[error("anharmonicity must be negative for a transmon (got {alpha} rad/ns)")]
    NotATransmon { alpha: f64 },

    #[error("E_J/E_C = {ratio:.3} is below the transmon regime bound of 20")]
    TransmonRegime { ratio: f64 },

    #[error("detuning {target} rad/ns cannot be reached with |flux| < 0.5 flux quanta")]
    UnreachableDetuning { target: f64 },

    #[error("external flux {phi} lies in the half-flux region (|phi| >= 0.5)")]
    HalfFlux { phi: f64 },

    #[error("time {t} ns is outside the simulated window [0, {end}]")]
    OutsideWindow { t: f64, end: f64 },

    #[error("transition at {omega_mn} rad/ns is resonant with the auxiliary mode at {omega_aux} rad/ns")]
    ResonanceSingularity { omega_mn: f64, omega_aux: f64 },

    #[error("quadrature did not converge on [{a}, {b}]: estimated error {error:e} after {evaluations} evaluations")]
    Quadrature {
        a: f64,
        b: f64,
        error: f64,
        evaluations: usize,
    },

    #[error("integrator instability at t = {t} ns: smallest eigenvalue {min_eigenvalue:e}; reduce dt")]
    IntegratorInstability { t: f64, min_eigenvalue: f64 },

    #[error("rate-step product {product:.3e} exceeds 0.01; reduce dt")]
    StepTooLarge { product: f64 },

    #[error("populations sum to {sum}, expected 1")]
    PopulationSum { sum: f64 },

    #[error("integration window [{start}, {end}] ns holds fewer than two samples")]
    EmptyWindow { start: f64, end: f64 },

    #[error("frequency ordering violated: omega_min = {omega_min}, omega_max = {omega_max}")]
    FrequencyOrdering { omega_min: f64, omega_max: f64 },

    #[error("fit did not converge: {0}")]
    FitNonConvergence(String),

    #[error("junction parameter extraction failed: {0}")]
    Extraction(String),

    #[error("correction matrix is singular (condition number {condition:e})")]
    SingularMatrix { condition: f64 },

    #[error("corrected populations inconsistent with the model: component {index} = {value:.4}")]
    InconsistentCounts { index: usize, value: f64 },

    #[error("degenerate fringe: {0}")]
    DegenerateFringe(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            InvalidConfig { .. }
            | ConfigParse(_)
            | NotATransmon { .. }
            | TransmonRegime { .. }
            | UnreachableDetuning { .. }
            | HalfFlux { .. }
            | StepTooLarge { .. } => ErrorClass::Config,
            OutsideWindow { .. }
            | ResonanceSingularity { .. }
            | Quadrature { .. }
            | IntegratorInstability { .. }
            | FitNonConvergence(_)
            | SingularMatrix { .. }
            | FrequencyOrdering { .. } => ErrorClass::Numerical,
            PopulationSum { .. }
            | EmptyWindow { .. }
            | Extraction(_)
            | InconsistentCounts { .. }
            | DegenerateFringe(_)
            | InvalidInput(_)
            | Io(_)
            | Csv(_)
            | Json(_) => ErrorClass::Data,
        }
    }
}
