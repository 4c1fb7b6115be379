//! Command-line front end: config parsing, deterministic output artifacts,
//! and one runner per subcommand. All numeric output is printed with 17
//! significant digits so files can be re-parsed exactly; repeated runs with
//! the same inputs produce byte-identical files.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons reject NaNs
#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod io;
pub mod run;

use std::fmt;

/// CLI error split by exit code: configuration problems exit 2, domain
/// (runtime) problems exit 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Domain(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// 17-significant-digit formatting used for every float in CSV output.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
