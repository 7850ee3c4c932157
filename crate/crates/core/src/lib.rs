pub mod certificate;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod dictionary;
pub mod error;
pub mod harness;
pub mod hypotest;
pub mod measure;
pub mod noise;
pub mod plot;
pub mod prox;
pub mod signal;
pub mod solver;

pub use error::{Error, Result};
