//! Texture, material and region recognition built on orderless pooling of
//! dense filter-bank responses.
//!
//! The pipeline is: dense local descriptors ([`filterbank`]) computed once
//! per image over a scale ladder, pooled per region into Fisher Vectors or
//! VLAD ([`encoder`]), classified with 1-vs-rest linear SVMs
//! ([`classifier`]), fused into label maps from region proposals
//! ([`region`]) and scored with the usual benchmark measures ([`eval`]).

pub mod classifier;
pub mod container;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod field;
pub mod filterbank;
pub mod image;
pub mod pnm;
pub mod region;
pub mod rng;
pub mod tensorfile;

pub use error::{Error, Result};
pub use field::{FeatureField, RegionMask};
pub use image::ImagePlane;
