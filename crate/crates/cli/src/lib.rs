//! Commands, manifests, configuration and model files for `texturebank`.

pub mod bench;
pub mod commands;
pub mod config;
pub mod features;
pub mod io;
pub mod manifest;
pub mod model;
pub mod pipeline;
pub mod synth;
