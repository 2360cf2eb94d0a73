//! Instance generation, oracle checks, benchmarks and the acceptance runner behind the
//! `ropegrad` binary.

pub mod bench;
pub mod error;
pub mod fd;
pub mod gen;
pub mod report;
pub mod verify;

pub use error::{HarnessError, Result};

/// Worker count from `ROPEGRAD_THREADS`; unset means 1.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var("ROPEGRAD_THREADS") {
        Err(std::env::VarError::NotPresent) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t >= 1 => Ok(t),
            _ => Err(HarnessError::Config(format!(
                "ROPEGRAD_THREADS must be a positive integer, got `{v}`"
            ))),
        },
        Err(e) => Err(HarnessError::Config(format!("ROPEGRAD_THREADS: {e}"))),
    }
}
