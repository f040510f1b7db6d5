use serde_json::{json, Value};

/// Failure of a subcommand, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit code 2.
    Config(String),
    /// Exit code 3.
    Numerical { message: String, details: Value },
    /// Exit code 1.
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io(_) => 1,
        }
    }

    pub fn to_json(&self) -> Value {
        let (kind, message, details) = match self {
            CliError::Config(m) => ("invalid_config", m.clone(), Value::Null),
            CliError::Numerical { message, details } => ("numerical_failure", message.clone(), details.clone()),
            CliError::Io(m) => ("io", m.clone(), Value::Null),
        };
        json!({ "status": "error", "exit_code": self.code(), "kind": kind, "message": message, "details": details })
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<spinmotif::Error> for CliError {
    fn from(e: spinmotif::Error) -> Self {
        use spinmotif::Error as E;
        let message = e.to_string();
        let details = match &e {
            E::SolverNotConverged { residual } => json!({ "residual": residual }),
            E::MaxEntNotConverged { iterations, residual } => json!({ "iterations": iterations, "residual": residual }),
            E::DegenerateGroundState { gap } => json!({ "gap": gap }),
            E::RankDeficient { condition_number } => json!({ "condition_number": condition_number }),
            E::ZeroTruth(class) => json!({ "class": class }),
            E::Diverged { iteration, energy, .. } => json!({ "iteration": iteration, "energy": energy }),
            E::FlatObjective => Value::Null,
            _ => return CliError::Config(message),
        };
        CliError::Numerical { message, details }
    }
}

pub type CliResult<T> = Result<T, CliError>;
