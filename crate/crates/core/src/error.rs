use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid model: {0}")]
    InvalidSpec(String),

    #[error("species {species} gets {expected:.3} < 1 spins at N = {n}")]
    SpeciesTooSmall {
        species: usize,
        expected: f64,
        n: usize,
    },

    #[error("variance profile has zero spectral radius; critical temperature undefined")]
    DegenerateModel,

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("sensitivity system (I - J) is singular (pivot {pivot:e})")]
    SensitivitySingular { pivot: f64 },

    #[error("N = {n} exceeds the exact-enumeration cap of {max}")]
    TooLargeForExact { n: usize, max: usize },

    #[error("gamma = {gamma} outside the admissible range [0, {max})")]
    InvalidGamma { gamma: f64, max: f64 },

    #[error("need at least {required} samples, got {got}")]
    InsufficientSamples { required: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionError { expected: usize, got: usize },

    #[error("cached local fields drifted by {drift:e} from a fresh recomputation")]
    FieldDrift { drift: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
