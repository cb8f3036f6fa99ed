pub mod cli;
pub mod error;
#[cfg(test)]
pub(crate) mod fixtures;
pub mod mip;
pub mod motor;
pub mod netmodel;
pub mod program;
pub mod pwl;
pub mod simulate;
pub mod solve;

pub use error::{Error, Result};
