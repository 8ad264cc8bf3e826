//! Command-line front end: simulate data, pre-train, adapt, ablate,
//! evaluate and visualize.

pub mod app;
pub mod commands;
pub mod config;

use disinr_core::Error;

/// Process exit code for a failed command: 3 for numerical failures,
/// 2 for everything caused by the inputs.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}
