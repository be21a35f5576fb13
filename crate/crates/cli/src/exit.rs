//! Process exit codes: 0 success, 1 usage, 2 numeric failure, 3 I/O.

use idal_core::ErrorKind;

pub const USAGE: u8 = 1;
pub const NUMERIC: u8 = 2;
pub const IO: u8 = 3;

/// Bad invocation detected after argument parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A computation finished but its result is unacceptable (e.g. a failed
/// gradient check).
#[derive(Debug)]
pub struct NumericFailure(pub String);

impl std::fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericFailure {}

pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return USAGE;
        }
        if cause.is::<NumericFailure>() {
            return NUMERIC;
        }
        if let Some(e) = cause.downcast_ref::<idal_core::Error>() {
            return match e.kind() {
                ErrorKind::Usage => USAGE,
                ErrorKind::Numeric => NUMERIC,
                ErrorKind::Io => IO,
            };
        }
        if cause.is::<std::io::Error>() {
            return IO;
        }
        if cause.is::<serde_json::Error>() {
            return USAGE;
        }
    }
    USAGE
}
