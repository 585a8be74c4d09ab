pub mod corpus;
pub mod gradcheck;
pub mod score;
pub mod train;

use std::process::ExitCode;

/// Domain/validation failure (exit 1) with a printed message.
pub fn fail(message: impl std::fmt::Display) -> anyhow::Result<ExitCode> {
    eprintln!("error: {message}");
    Ok(ExitCode::from(1))
}
