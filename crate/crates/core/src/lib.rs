//! Disentangled identity/expression representation of 3D face meshes.

pub mod augment;
pub mod bilinear;
pub mod deform;
pub mod error;
pub mod mesh;
pub mod metrics;
pub mod net;
pub mod sparse;
pub mod spectral;
pub mod synth;
pub mod tensorfile;

pub use error::{Error, Result};
