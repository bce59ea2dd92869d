use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mode transform is not unitary (max deviation {deviation:.3e})")]
    NonUnitaryInput { deviation: f64 },

    #[error("mode index {index} out of range for {mode_count} modes")]
    IndexOutOfRange { index: usize, mode_count: usize },

    #[error("unknown mode label `{0}`")]
    UnknownMode(String),

    #[error("ancilla label `{0}` is already in use")]
    DuplicateAncilla(String),

    #[error("unknown detector label `{0}`")]
    UnknownLabel(String),

    #[error("detectors {0} and {1} belong to different measurement stages")]
    IncompatibleDetectors(String, String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singles rate on {0} vanishes; normalized rate undefined")]
    DivisionByZeroSingles(String),

    #[error("predicted rate {0:.3e} is negative beyond rounding")]
    NegativeRate(f64),

    #[error("transfer matrix is singular (condition number {condition:.3e})")]
    SingularTransferMatrix { condition: f64 },

    #[error("optimizer did not converge within {evaluations} evaluations (objective {objective:.6e})")]
    NonConvergence { evaluations: usize, objective: f64 },

    #[error("measurement design is insufficient: {0}")]
    InsufficientDesign(String),

    #[error("no record within half a bin width of phase {phase:.6} for {kind}")]
    MissingPhaseBin { kind: String, phase: f64 },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("intensity {intensity:.6e} outside calibration range [{min:.6e}, {max:.6e}]")]
    CalibrationRange { intensity: f64, min: f64, max: f64 },

    #[error("record layout: {0}")]
    RecordLayout(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
