//! Run configuration, tensor containers, CSV tables and plots.

pub mod config;
pub mod container;
pub mod plot;
pub mod tables;

pub use config::RunConfig;
pub use container::{ArrayData, Dtype, NamedArray, TensorContainer};
