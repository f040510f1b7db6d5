use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chain size: {0}")]
    InvalidSize(String),

    #[error("basis of {requested} states exceeds the cap of {cap}")]
    BasisTooLarge { requested: f64, cap: usize },

    #[error("invalid spin configuration: {0}")]
    InvalidConfig(String),

    #[error("operation requires M = 2, got M = {0}")]
    RequiresTwoSpecies(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate ground state (gap {gap:.3e})")]
    DegenerateGroundState { gap: f64 },

    #[error("eigensolver did not converge (residual {residual:.3e})")]
    SolverNotConverged { residual: f64 },

    #[error("MaxEnt fit did not converge after {iterations} iterations (residual {residual:.3e})")]
    MaxEntNotConverged { iterations: usize, residual: f64 },

    #[error("objective is flat over the search bracket")]
    FlatObjective,

    #[error("rank-deficient design matrix (condition number {condition_number:.3e})")]
    RankDeficient { condition_number: f64 },

    #[error("zero ground-truth MEV for motif class {0}")]
    ZeroTruth(usize),

    #[error("training diverged at iteration {iteration} (energy {energy:.3e})")]
    Diverged {
        iteration: usize,
        energy: f64,
        trajectory: Box<crate::vmc::TrainingTrajectory>,
    },
}
