//! Closed-loop laboratory for repeated weak density measurements of an
//! elongated Bose–Einstein condensate.
//!
//! The crate simulates shot ensembles ([`simulator`]), turns raw frames into
//! correlation products ([`analysis`]), evaluates post-selected weak values
//! ([`weak_values`]) and fits line shapes and sound speeds ([`fitting`]).

pub mod analysis;
pub mod commands;
pub mod error;
pub mod fitting;
pub mod fourier;
pub mod grid;
pub mod io;
pub mod model;
pub mod simulator;
pub mod stats;
pub mod weak_values;

pub use error::{Error, Result};
