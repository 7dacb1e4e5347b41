//! Library side of the `gameclr` command-line tool: config files, the SVG
//! plotter, the end-to-end experiment driver and exit-code mapping.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod plot;

use gameclr::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;

/// Process exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. }
        | Error::BadMagic(_)
        | Error::TruncatedBlob { .. }
        | Error::IndexOutOfRange { .. }
        | Error::PixelOutOfRange { .. }
        | Error::Parse { .. } => EXIT_IO,
        Error::DatasetMethodMismatch { .. } => EXIT_MISMATCH,
        Error::Config(_)
        | Error::UnknownMethod(_)
        | Error::InvalidPolicy(_)
        | Error::NonPositiveTemperature(_)
        | Error::BatchTooSmall(_) => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}
