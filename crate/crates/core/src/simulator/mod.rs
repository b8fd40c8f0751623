//! Shot ensembles of repeated weak density measurements.

pub mod field;
pub mod measure;
pub mod render;
pub mod sequence;

pub use field::{ForwardComponent, Jitter, ModeBasis, PhononField, PhysicsConfig};
pub use measure::{weak_measure, Measurement, MeasurementPulse, WEAK_LIMIT};
pub use render::{render_ensemble, render_frames, FrameTriplet, PhotonNoise, RenderConfig, RenderedShot};
pub use sequence::{run_sequence, simulate_shot, Ensemble, ShotRecord};

#[cfg(test)]
mod tests;
