//! One error type for the whole binary, carrying its exit code.
//!
//! Exit codes: 0 success, 1 usage, 2 bad or missing data, 3 no feasible
//! plan or a memory budget violated at runtime.

use cramnet_core::planner::PlannerError;
use cramnet_core::{CodecError, KernelError};

/// Any failure a subcommand can surface.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The invocation itself is wrong.
    #[error("{0}")]
    Usage(String),
    /// An input file is missing, unreadable, or malformed.
    #[error("{0}")]
    Data(String),
    /// No plan satisfies the constraints, or a budget was exceeded while
    /// running one.
    #[error("{0}")]
    Infeasible(String),
}

impl CliError {
    /// The process exit code this error maps to.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Infeasible(_) => 3,
        }
    }

    /// A data error annotated with the file it came from.
    pub fn file(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        CliError::Data(format!("model data: {e}"))
    }
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        CliError::Data(format!("inference: {e}"))
    }
}

impl From<PlannerError> for CliError {
    fn from(e: PlannerError) -> Self {
        match e {
            PlannerError::NoFeasiblePlan(_) => CliError::Infeasible(e.to_string()),
            PlannerError::InvalidConstraints(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_class() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::Data("x".into()).exit_code(), 2);
        assert_eq!(CliError::Infeasible("x".into()).exit_code(), 3);
    }

    #[test]
    fn planner_failures_map_to_their_codes() {
        let e: CliError = PlannerError::NoFeasiblePlan("tight".into()).into();
        assert_eq!(e.exit_code(), 3);
        let e: CliError = PlannerError::EmptyGrid.into();
        assert_eq!(e.exit_code(), 2);
        let e: CliError = PlannerError::InvalidConstraints("step".into()).into();
        assert_eq!(e.exit_code(), 1);
    }
}
