//! Probabilistic hosting capacity analysis of radial feeders by
//! multiparametric quadratic programming.

pub mod acpf;
pub mod builder;
pub mod error;
pub mod feeder;
pub mod linalg;
pub mod pipeline;
pub mod qp;
pub mod engine;
pub mod region;
pub mod scenario;
pub mod stats;

pub use error::{Error, Result};
