//! File formats, stage commands, and the command-line front end for
//! diffusion-cascade network embedding.
//!
//! The numerical work lives in [`diffembed_core`]; this crate moves its
//! inputs and outputs through text files and wires the stages together.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use error::{AppError, AppResult, ParseError};
