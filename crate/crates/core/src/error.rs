use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("unknown vehicle id {0}")]
    UnknownVehicle(u32),

    #[error("missing command for CAV {0}")]
    MissingCommand(u32),

    #[error("vehicles {0} and {1} already overlap (gap {2:.3} m)")]
    Overlap(u32, u32, f64),

    #[error("could not place vehicle without overlap after {attempts} attempts")]
    InfeasibleDensity { attempts: usize },

    #[error("action index {index} out of range for {num_vehicles} vehicles")]
    ActionOutOfRange { index: usize, num_vehicles: usize },

    #[error("riccati iteration did not converge in {iterations} iterations (residual {residual:e})")]
    RiccatiNoConvergence { iterations: usize, residual: f64 },

    #[error("pair (A, B) is not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("platoon is not in a single lane")]
    PlatoonNotSingleLane,

    #[error("every action is masked out")]
    EmptyMask,

    #[error("non-finite loss during update: {0}")]
    NonFinite(String),

    #[error("trust region exhausted after {rollbacks} consecutive rollbacks (last KL {last_kl:e})")]
    TrustRegionExhausted { rollbacks: usize, last_kl: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("trace: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
