use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::field::{ModeBasis, PhononField, PhysicsConfig};
use super::measure::{weak_measure, MeasurementPulse};
use crate::error::{invalid, Result};
use crate::grid::RealMap;

/// One repetition of the experiment.
#[derive(Debug, Clone)]
pub struct ShotRecord {
    pub shot_id: u64,
    /// Master seed; the shot draws from ChaCha stream `shot_id` of this seed.
    pub seed: u64,
    /// Multiplicative atom-number jitter applied to the mean profile.
    pub atom_scale: f64,
    /// Trap-centre offset applied to the mean profile, m.
    pub center_offset: f64,
    /// Measured atoms per pixel for each pulse.
    pub outcomes: Vec<RealMap>,
    /// Detection noise (m/φ plus technical noise) for each pulse.
    pub detection: Vec<RealMap>,
}

impl ShotRecord {
    /// δn_{x,i} relative to the ensemble-mean profile.
    pub fn noise(&self, pulse: usize, mean_profile: &RealMap) -> RealMap {
        let o = &self.outcomes[pulse];
        RealMap {
            nx: o.nx,
            ny: o.ny,
            data: o.data.iter().zip(&mean_profile.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// A full simulated dataset.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub config: PhysicsConfig,
    pub pulses: Vec<MeasurementPulse>,
    pub master_seed: u64,
    pub mean_profile: RealMap,
    pub shots: Vec<ShotRecord>,
}

impl Ensemble {
    /// Time separation between two pulses.
    pub fn delay(&self, a: usize, b: usize) -> f64 {
        self.pulses[b].time - self.pulses[a].time
    }
}

pub fn shot_rng(master_seed: u64, shot_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(shot_id);
    rng
}

pub fn validate_pulses(pulses: &[MeasurementPulse]) -> Result<()> {
    if pulses.len() < 2 {
        return Err(invalid("a sequence needs at least two pulses"));
    }
    for w in pulses.windows(2) {
        if !(w[1].time > w[0].time) {
            return Err(invalid(format!(
                "pulse times must be strictly increasing ({} s then {} s)",
                w[0].time, w[1].time
            )));
        }
    }
    if pulses.iter().any(|p| !(p.phi > 0.0)) {
        return Err(invalid("every pulse needs a positive strength"));
    }
    Ok(())
}

/// Simulate a single shot. Deterministic in (`master_seed`, `shot_id`).
pub fn simulate_shot(
    basis: &Arc<ModeBasis>,
    config: &PhysicsConfig,
    pulses: &[MeasurementPulse],
    master_seed: u64,
    shot_id: u64,
) -> Result<ShotRecord> {
    let mut rng = shot_rng(master_seed, shot_id);
    let zn: f64 = rng.sample(StandardNormal);
    let zc: f64 = rng.sample(StandardNormal);
    let atom_scale = 1.0 + config.jitter.atom_number * zn;
    let center_offset = config.jitter.center * zc;
    let profile = basis.mean_profile(config, center_offset, atom_scale);

    let mut field = PhononField::sample(Arc::clone(basis), &mut rng);
    let mut outcomes = Vec::with_capacity(pulses.len());
    let mut detection = Vec::with_capacity(pulses.len());
    let mut now = pulses[0].time;
    for pulse in pulses {
        field = field.evolve(pulse.time - now)?;
        now = pulse.time;
        let m = weak_measure(&field, pulse, &mut rng)?;
        let mut n = m.outcome;
        for (v, p) in n.data.iter_mut().zip(&profile.data) {
            *v += p;
        }
        outcomes.push(n);
        detection.push(m.detection);
        field = m.post;
    }
    Ok(ShotRecord { shot_id, seed: master_seed, atom_scale, center_offset, outcomes, detection })
}

/// Simulate `shots` independent repetitions of the pulse sequence.
///
/// Shots run in parallel; each draws from its own ChaCha stream, so the
/// result is bit-identical for a given master seed regardless of threading.
pub fn run_sequence(
    config: &PhysicsConfig,
    pulses: &[MeasurementPulse],
    shots: usize,
    master_seed: u64,
) -> Result<Ensemble> {
    if shots < 2 {
        return Err(invalid(format!("need at least two shots, got {shots}")));
    }
    validate_pulses(pulses)?;
    let basis = Arc::new(ModeBasis::new(config)?);
    let records = (0..shots as u64)
        .into_par_iter()
        .map(|id| simulate_shot(&basis, config, pulses, master_seed, id))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        config: config.clone(),
        pulses: pulses.to_vec(),
        master_seed,
        mean_profile: basis.mean_profile(config, 0.0, 1.0),
        shots: records,
    })
}
