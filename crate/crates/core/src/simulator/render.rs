//! Synthetic phase-contrast frames.
//!
//! A pixel holding n atoms produces the PCI signal g_PCI = n σ0 / (2 (δ/Γ) A),
//! so the with-atoms frame is I₊ = P (1 − g_PCI) times the probe pattern,
//! where P is the mean photon count per pixel for that pulse.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::PhysicsConfig;
use super::measure::MeasurementPulse;
use super::sequence::{Ensemble, ShotRecord};
use crate::error::{invalid, Result};
use crate::fourier::{disk_mask, low_pass};
use crate::grid::RealMap;

/// How photon shot noise enters the rendered frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhotonNoise {
    /// Noiseless frames built from the shot's ⟨δn⟩ only.
    None,
    /// The detection noise already drawn by the simulator is written into
    /// I₊, so the analysed density equals the simulated outcome.
    #[default]
    FromRecord,
    /// Fresh Poisson counts at the pulse's photon budget, in both I₊ and I₀.
    Independent,
}

/// Probe fringes: a fixed set of sinusoids with per-frame random phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fringes {
    /// Relative modulation depth of each component.
    pub amplitude: f64,
    pub components: usize,
    /// Largest fringe wavenumber, 1/m.
    pub max_wavenumber: f64,
    /// RMS phase drift between I₀ and I₊ of the same pulse, rad.
    pub drift: f64,
    /// Seed fixing the fringe wavevectors.
    pub seed: u64,
}

impl Default for Fringes {
    fn default() -> Self {
        Self { amplitude: 0.0, components: 3, max_wavenumber: 1.5e6, drift: 0.05, seed: 7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub photon_noise: PhotonNoise,
    pub fringes: Fringes,
    /// Constant camera offset, counts.
    pub dark_offset: f64,
    /// Gaussian readout noise, counts RMS.
    pub readout_noise: f64,
    /// Band-limit the atomic signal to the NA disk.
    pub na_filter: bool,
    pub seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            photon_noise: PhotonNoise::FromRecord,
            fringes: Fringes::default(),
            dark_offset: 0.0,
            readout_noise: 0.0,
            na_filter: true,
            seed: 0x5eed,
        }
    }
}

/// Raw frames of one pulse: with atoms, probe only, and dark.
#[derive(Debug, Clone)]
pub struct FrameTriplet {
    pub with_atoms: RealMap,
    pub probe: RealMap,
    pub dark: RealMap,
}

#[derive(Debug, Clone)]
pub struct RenderedShot {
    pub shot_id: u64,
    pub frames: Vec<FrameTriplet>,
    /// Pixels clamped to zero after noise.
    pub clamped: usize,
}

/// Mean photons per pixel for a pulse of strength `g`: N0 = (δ/Γ)² g² A / (2σ0).
pub fn photon_budget(config: &PhysicsConfig, g: f64) -> f64 {
    let d = config.probe.detuning_ratio;
    d * d * g * g * config.grid.pixel_area() / (2.0 * config.constants.sigma0())
}

/// Atoms per pixel per unit PCI signal, 2 (δ/Γ) A / σ0.
pub fn atoms_per_signal(config: &PhysicsConfig) -> f64 {
    2.0 * config.probe.detuning_ratio.abs() * config.grid.pixel_area() / config.constants.sigma0()
}

struct FringeSet {
    k: Vec<(f64, f64)>,
}

impl FringeSet {
    fn new(f: &Fringes) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(f.seed);
        let k = (0..f.components)
            .map(|_| {
                let mag = f.max_wavenumber * (0.3 + 0.7 * rng.random::<f64>());
                let ang = std::f64::consts::PI * rng.random::<f64>();
                (mag * ang.cos(), mag * ang.sin())
            })
            .collect();
        Self { k }
    }

    fn pattern(&self, config: &PhysicsConfig, amp: f64, phases: &[f64]) -> RealMap {
        let g = config.grid;
        RealMap::from_fn(g.nx, g.ny, |i, j| {
            let (x, y) = (g.x(i), g.y(j));
            1.0 + self
                .k
                .iter()
                .zip(phases)
                .map(|(&(kx, ky), &p)| amp * (kx * x + ky * y + p).sin())
                .sum::<f64>()
        })
    }
}

fn render_rng(seed: u64, shot_id: u64) -> ChaCha8Rng {
    // Separate stream family from the simulator's so rendering never shifts it.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(shot_id);
    rng
}

/// Render the raw frames for every pulse of one shot.
pub fn render_frames(
    record: &ShotRecord,
    pulses: &[MeasurementPulse],
    config: &PhysicsConfig,
    render: &RenderConfig,
) -> Result<RenderedShot> {
    if record.outcomes.len() != pulses.len() || record.detection.len() != pulses.len() {
        return Err(invalid("record and pulse list disagree on the number of pulses"));
    }
    if render.readout_noise < 0.0 || render.fringes.amplitude < 0.0 {
        return Err(invalid("noise and fringe amplitudes must be non-negative"));
    }
    let grid = config.grid;
    let scale = atoms_per_signal(config);
    let pass = render.na_filter.then(|| disk_mask(&grid, config.k_na()));
    let fringes = FringeSet::new(&render.fringes);
    let mut rng = render_rng(render.seed, record.shot_id);
    let mut clamped = 0usize;
    let mut frames = Vec::with_capacity(pulses.len());

    for (p, pulse) in pulses.iter().enumerate() {
        let budget = photon_budget(config, pulse.g);
        let mut clean = record.outcomes[p].clone();
        for (c, d) in clean.data.iter_mut().zip(&record.detection[p].data) {
            *c -= d;
        }
        if let Some(mask) = &pass {
            clean = low_pass(&clean, mask);
        }
        let mut signal = clean.map(|n| n / scale);
        if render.photon_noise == PhotonNoise::FromRecord {
            for (s, d) in signal.data.iter_mut().zip(&record.detection[p].data) {
                *s += d / scale;
            }
        }

        let phases: Vec<f64> = (0..fringes.k.len())
            .map(|_| std::f64::consts::TAU * rng.random::<f64>())
            .collect();
        let drifted: Vec<f64> = phases
            .iter()
            .map(|ph| ph + render.fringes.drift * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let probe_shape = fringes.pattern(config, render.fringes.amplitude, &phases);
        let atom_shape = fringes.pattern(config, render.fringes.amplitude, &drifted);

        let mut with_atoms = RealMap::from_fn(grid.nx, grid.ny, |i, j| {
            budget * atom_shape[(i, j)] * (1.0 - signal[(i, j)])
        });
        let mut probe = probe_shape.map(|v| budget * v);
        if render.photon_noise == PhotonNoise::Independent {
            for v in with_atoms.data.iter_mut().chain(probe.data.iter_mut()) {
                *v = poisson(*v, &mut rng)?;
            }
        }
        let mut dark = RealMap::zeros(grid.nx, grid.ny);
        for frame in [&mut with_atoms, &mut probe, &mut dark] {
            for v in frame.data.iter_mut() {
                *v += render.dark_offset;
                if render.readout_noise > 0.0 {
                    *v += render.readout_noise * rng.sample::<f64, _>(StandardNormal);
                }
                if *v < 0.0 {
                    *v = 0.0;
                    clamped += 1;
                }
            }
        }
        frames.push(FrameTriplet { with_atoms, probe, dark });
    }
    if clamped > 0 {
        log::warn!("shot {}: {clamped} negative intensities clamped to zero", record.shot_id);
    }
    Ok(RenderedShot { shot_id: record.shot_id, frames, clamped })
}

fn poisson(mean: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
    if mean <= 0.0 {
        return Ok(0.0);
    }
    let d = Poisson::new(mean).map_err(|e| invalid(format!("photon count: {e}")))?;
    Ok(d.sample(rng))
}

/// Render every shot of an ensemble, in shot order.
pub fn render_ensemble(ensemble: &Ensemble, render: &RenderConfig) -> Result<Vec<RenderedShot>> {
    ensemble
        .shots
        .par_iter()
        .map(|s| render_frames(s, &ensemble.pulses, &ensemble.config, render))
        .collect()
}
