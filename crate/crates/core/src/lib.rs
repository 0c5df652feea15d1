//! Intrinsic dimension and scalar curvature of point clouds from diffusion
//! geometry, plus an exact matrix-level simulator of the block-encoding
//! pipeline that computes the same quantities.

pub mod config;
pub mod diffmap;
pub mod diffusion;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod par;
pub mod pointcloud;
pub mod qsim;
pub mod stats;

pub use error::{Error, Result};
pub use par::Execution;
