pub mod config;
pub mod cq;
pub mod error;
pub mod fem;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod special;
pub mod spectral;
pub mod splitting;

pub use error::{Error, Result};
