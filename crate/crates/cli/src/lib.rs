//! Config parsing, dispatch and result files for the `carleman` binary.

pub mod config;
pub mod output;
pub mod run;
pub mod selftest;

use carleman_core::Error;
use serde_json::json;

/// Failure of a CLI run, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(Error),
    Io(String),
    /// Selftest finished with failing checks.
    Selftest(usize),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
            CliError::Selftest(n) => write!(f, "{n} selftest check(s) failed"),
        }
    }
}

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_ACCURACY: i32 = 4;
pub const EXIT_IO: i32 = 5;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(Error::Domain(_) | Error::InvalidInput(_)) => EXIT_CONFIG,
            CliError::Core(Error::Accuracy { .. }) => EXIT_ACCURACY,
            CliError::Core(_) => EXIT_SOLVER,
            CliError::Io(_) => EXIT_IO,
            CliError::Selftest(_) => EXIT_ACCURACY,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(e) => match e {
                Error::Domain(_) => "domain",
                Error::InvalidInput(_) => "invalid_input",
                Error::QuadratureDegeneracy(_) => "quadrature_degeneracy",
                Error::Accuracy { .. } => "accuracy",
                Error::Unsupported(_) => "unsupported",
                Error::Iteration { .. } => "iteration",
                Error::SearchFailure(_) => "search_failure",
            },
            CliError::Io(_) => "io",
            CliError::Selftest(_) => "selftest",
        }
    }

    /// Single-line JSON record for standard error.
    pub fn to_json(&self) -> String {
        let mut v = json!({
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "message": self.to_string(),
            }
        });
        match self {
            CliError::Core(Error::Accuracy {
                what,
                measured,
                tolerance,
            }) => {
                v["error"]["what"] = json!(what);
                v["error"]["measured"] = json!(measured);
                v["error"]["tolerance"] = json!(tolerance);
            }
            CliError::Core(Error::Iteration { iterations, residual }) => {
                v["error"]["iterations"] = json!(iterations);
                v["error"]["residual"] = json!(residual);
            }
            _ => {}
        }
        v.to_string()
    }
}
