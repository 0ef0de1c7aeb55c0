//! Configuration-driven entry points shared by the `kinefp` binary.

pub mod artifacts;
pub mod config;
pub mod sweep;
pub mod verify;

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

/// Process exit code for an error escaping a subcommand.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Param { .. }
        | Error::Argument(_)
        | Error::Hypothesis(_)
        | Error::Cfl(_) => EXIT_CONFIG,
        Error::Divergence(_) | Error::NonFinite(_) | Error::SeriesTruncation { .. } => {
            EXIT_DIVERGED
        }
        Error::Io(_) => EXIT_FAILURE,
    }
}

/// Thread count from the flag, else `KINEFP_THREADS`, else rayon's default.
pub fn thread_count(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| std::env::var("KINEFP_THREADS").ok()?.trim().parse().ok())
        .filter(|&n| n > 0)
}
