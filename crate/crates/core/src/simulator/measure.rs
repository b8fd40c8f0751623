use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::field::{PhononField, PhysicsConfig};
use crate::error::{invalid, Result};
use crate::grid::RealMap;
use crate::model::{phi_na, phi_pixel};

/// Resolution-limited strength above which higher-order backaction is no
/// longer negligible compared to statistical uncertainty.
pub const WEAK_LIMIT: f64 = 0.1;

/// One weak density measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPulse {
    /// Time of the pulse, s.
    pub time: f64,
    /// Dimensionless probe strength g.
    pub g: f64,
    /// Per-pixel measurement strength φ used in the Kraus update.
    pub phi: f64,
    /// Effective strength ϑ of additive technical noise; `None` disables it.
    pub technical_noise: Option<f64>,
}

impl MeasurementPulse {
    /// Pulse at `time` with strength `g`, φ derived from the pixel area.
    pub fn new(time: f64, g: f64, config: &PhysicsConfig) -> Self {
        let phi = phi_pixel(g, config.grid.pixel_area(), config.constants.sigma0());
        let na_phi = phi_na(g, config.probe.numerical_aperture);
        if na_phi > WEAK_LIMIT * 1.05 {
            log::warn!(
                "resolution-limited strength {na_phi:.3} exceeds the weak-measurement limit {WEAK_LIMIT}"
            );
        }
        Self { time, g, phi, technical_noise: None }
    }

    pub fn with_technical_noise(mut self, theta: f64) -> Self {
        self.technical_noise = Some(theta);
        self
    }

    /// Per-pixel standard deviation of the detection noise.
    pub fn noise_sd(&self) -> f64 {
        let mut v = 0.5 / (self.phi * self.phi);
        if let Some(t) = self.technical_noise {
            v += 0.5 / (t * t);
        }
        v.sqrt()
    }
}

/// Outcome of a single weak measurement.
#[derive(Debug, Clone)]
pub struct Measurement {
    /// ⟨δn⟩ of the shot plus detection noise.
    pub outcome: RealMap,
    /// Detection noise alone: m/φ plus any technical noise q/ϑ.
    pub detection: RealMap,
    /// The projection-noise record m (variance ½ per pixel).
    pub record: RealMap,
    pub post: PhononField,
}

/// Measure `field` with `pulse`: the outcome is ⟨δn⟩ + m/φ (+ q/ϑ) and the
/// returned field carries the first-order backaction of the record m.
pub fn weak_measure<R: Rng + ?Sized>(
    field: &PhononField,
    pulse: &MeasurementPulse,
    rng: &mut R,
) -> Result<Measurement> {
    if !(pulse.phi > 0.0) || !pulse.phi.is_finite() {
        return Err(invalid("measurement strength must be positive and finite"));
    }
    if let Some(t) = pulse.technical_noise {
        if !(t > 0.0) {
            return Err(invalid("technical-noise strength must be positive"));
        }
    }
    let g = field.basis.grid;
    let half = 0.5f64.sqrt();
    let record = RealMap::from_fn(g.nx, g.ny, |_, _| half * rng.sample::<f64, _>(StandardNormal));
    let mut detection = record.map(|m| m / pulse.phi);
    if let Some(theta) = pulse.technical_noise {
        for v in detection.data.iter_mut() {
            *v += half * rng.sample::<f64, _>(StandardNormal) / theta;
        }
    }
    let mut outcome = field.density_fluctuation();
    for (o, d) in outcome.data.iter_mut().zip(&detection.data) {
        *o += d;
    }
    let mut post = field.clone();
    post.kick(&record, pulse.phi);
    Ok(Measurement { outcome, detection, record, post })
}
