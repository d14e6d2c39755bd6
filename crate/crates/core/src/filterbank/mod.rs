//! Dense local descriptor extraction: a built-in dense SIFT and a small
//! convolutional network runner, both driven over a multi-scale pyramid.

pub mod net;
pub mod pyramid;
pub mod sift;

pub use net::{Activation, Conv, Fc, Layer, NetSpec, Pool, ReceptiveField, TapPoint};
pub use pyramid::{extract_pyramid, DenseExtractor, NetExtractor, SiftExtractor};
pub use sift::{dense_sift, SiftConfig, SIFT_DIM};
