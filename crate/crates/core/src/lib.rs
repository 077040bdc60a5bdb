pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod models;
pub mod nn;
pub mod synthgen;

pub use error::{Error, Result};
