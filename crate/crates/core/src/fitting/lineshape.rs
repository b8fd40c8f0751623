//! CCF line-shape model: propagating phonons plus a decaying forward
//! component, both seen through the band-limited imaging response.
//!
//! ```text
//! f(δx, δt) = s_p Σ_k W(k) e^{−k²σ²/2} cos(k δx) cos(ω(k; c) δt) / Σ_k W(k)
//!           + h_f e^{−γ_f δt} PSF(δx; σ)
//! PSF(δx; σ) = ∫₀^{k_NA} e^{−k²σ²/2} cos(k δx) dk / ∫₀^{k_NA} e^{−k²σ²/2} dk
//! ```
//!
//! The hard cutoff at k_NA produces the aperture side-lobes around each peak.

use serde::{Deserialize, Serialize};

use crate::model::{thermal_occupation, HBAR};

/// Number of midpoint nodes on (0, k_NA].
pub const K_NODES: usize = 384;
/// Longitudinal nodes for the LDA average.
const LDA_NODES: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DispersionModel {
    Linear,
    /// ω = sqrt(c²k² + (ħk²/2m)²).
    Bogoliubov,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineShapeParams {
    pub sound_speed: f64,
    pub phonon_amplitude: f64,
    pub forward_amplitude: f64,
    pub forward_decay: f64,
    pub resolution: f64,
}

impl LineShapeParams {
    pub const N: usize = 5;
    pub const NAMES: [&'static str; 5] = ["c", "s_p", "h_f", "gamma_f", "sigma_res"];

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.sound_speed, self.phonon_amplitude, self.forward_amplitude, self.forward_decay, self.resolution]
    }

    pub fn from_slice(p: &[f64]) -> Self {
        Self {
            sound_speed: p[0],
            phonon_amplitude: p[1],
            forward_amplitude: p[2],
            forward_decay: p[3],
            resolution: p[4],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.sound_speed > 0.0 && self.resolution > 0.0 && self.forward_decay >= 0.0 && self.to_vec().iter().all(|v| v.is_finite())
    }
}

/// Fixed ingredients of the model: k band, spectral weights and dispersion.
#[derive(Debug, Clone)]
pub struct LineShapeModel {
    pub k_na: f64,
    pub atom_mass: f64,
    pub dispersion: DispersionModel,
    /// Average over the Thomas–Fermi profile with c(x) = c sqrt(1 − u²).
    pub lda: bool,
    k: Vec<f64>,
    weight: Vec<f64>,
    lda_nodes: Vec<(f64, f64)>,
}

impl LineShapeModel {
    /// Weights W(k) = (ε_k/ħω_k) coth(ħω_k / 2k_BT), the static structure factor
    /// of the uniform gas at the reference sound speed and temperature.
    pub fn new(k_na: f64, atom_mass: f64, reference_c: f64, temperature: f64, dispersion: DispersionModel) -> Self {
        let dk = k_na / K_NODES as f64;
        let k: Vec<f64> = (0..K_NODES).map(|i| (i as f64 + 0.5) * dk).collect();
        let weight: Vec<f64> = k
            .iter()
            .map(|&q| {
                let eps = HBAR * q * q / (2.0 * atom_mass);
                let w = omega(q, reference_c, atom_mass, DispersionModel::Bogoliubov);
                let n = thermal_occupation(w, temperature).unwrap_or(0.0);
                eps / (HBAR * w) * (2.0 * n + 1.0) * dk
            })
            .collect();
        let du = 2.0 / LDA_NODES as f64;
        let lda_nodes = (0..LDA_NODES)
            .map(|i| {
                let u: f64 = -1.0 + (i as f64 + 0.5) * du;
                ((1.0 - u * u).sqrt(), (1.0 - u * u).powi(2) * du)
            })
            .collect::<Vec<_>>();
        let total: f64 = lda_nodes.iter().map(|n| n.1).sum();
        let lda_nodes = lda_nodes.into_iter().map(|(s, w)| (s, w / total)).collect();
        let norm: f64 = weight.iter().sum();
        Self {
            k_na,
            atom_mass,
            dispersion,
            lda: false,
            k,
            weight: weight.into_iter().map(|w| w / norm).collect(),
            lda_nodes,
        }
    }

    pub fn with_lda(mut self, lda: bool) -> Self {
        self.lda = lda;
        self
    }

    fn speeds(&self, c: f64) -> Vec<(f64, f64)> {
        if self.lda {
            self.lda_nodes.iter().map(|&(s, w)| (c * s, w)).collect()
        } else {
            vec![(c, 1.0)]
        }
    }

    /// Normalised PSF and its derivative with respect to σ.
    pub fn psf(&self, dx: f64, sigma: f64) -> (f64, f64) {
        let (mut i, mut di, mut i0, mut di0) = (0.0, 0.0, 0.0, 0.0);
        for &q in &self.k {
            let g = (-0.5 * q * q * sigma * sigma).exp();
            let dg = -q * q * sigma * g;
            let cs = (q * dx).cos();
            i += g * cs;
            di += dg * cs;
            i0 += g;
            di0 += dg;
        }
        (i / i0, (di * i0 - i * di0) / (i0 * i0))
    }

    /// Model value and gradient with respect to [c, s_p, h_f, γ_f, σ].
    pub fn evaluate(&self, dx: f64, dt: f64, p: &LineShapeParams) -> (f64, [f64; 5]) {
        let sigma = p.resolution;
        let (mut ph, mut dph_dc, mut dph_ds) = (0.0, 0.0, 0.0);
        for (&q, &w) in self.k.iter().zip(&self.weight) {
            let g = (-0.5 * q * q * sigma * sigma).exp();
            let spatial = w * g * (q * dx).cos();
            for (c, cw) in self.speeds(p.sound_speed) {
                let om = omega(q, c, self.atom_mass, self.dispersion);
                let dom_dc = domega_dc(q, c, om, self.dispersion) * c / p.sound_speed;
                let (s, co) = (om * dt).sin_cos();
                ph += cw * spatial * co;
                dph_dc -= cw * spatial * s * dt * dom_dc;
                dph_ds += cw * spatial * co * (-q * q * sigma);
            }
        }
        let (psf, dpsf) = self.psf(dx, sigma);
        let decay = (-p.forward_decay * dt).exp();
        let value = p.phonon_amplitude * ph + p.forward_amplitude * decay * psf;
        let grad = [
            p.phonon_amplitude * dph_dc,
            ph,
            decay * psf,
            -dt * p.forward_amplitude * decay * psf,
            p.phonon_amplitude * dph_ds + p.forward_amplitude * decay * dpsf,
        ];
        (value, grad)
    }

    pub fn curve(&self, dx: &[f64], dt: f64, p: &LineShapeParams) -> Vec<f64> {
        dx.iter().map(|&x| self.evaluate(x, dt, p).0).collect()
    }
}

pub fn omega(k: f64, c: f64, mass: f64, model: DispersionModel) -> f64 {
    match model {
        DispersionModel::Linear => c * k,
        DispersionModel::Bogoliubov => {
            let e = HBAR * k * k / (2.0 * mass);
            (c * c * k * k + e * e).sqrt()
        }
    }
}

fn domega_dc(k: f64, c: f64, om: f64, model: DispersionModel) -> f64 {
    match model {
        DispersionModel::Linear => k,
        DispersionModel::Bogoliubov => c * k * k / om,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PhysicalConstants;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(lda: bool) -> LineShapeModel {
        let c = PhysicalConstants::rb87_d2();
        LineShapeModel::new(c.k_na(0.32), c.atom_mass, 1.31e-3, 19e-9, DispersionModel::Bogoliubov).with_lda(lda)
    }

    fn params() -> LineShapeParams {
        LineShapeParams {
            sound_speed: 1.35e-3,
            phonon_amplitude: 2.0,
            forward_amplitude: 0.7,
            forward_decay: 2.0e3,
            resolution: 0.8e-6,
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for lda in [false, true] {
            let m = model(lda);
            for _ in 0..6 {
                let p = LineShapeParams {
                    sound_speed: 1.0e-3 + 0.8e-3 * rng.random::<f64>(),
                    phonon_amplitude: 0.5 + rng.random::<f64>(),
                    forward_amplitude: 0.2 + rng.random::<f64>(),
                    forward_decay: 500.0 + 3000.0 * rng.random::<f64>(),
                    resolution: 0.4e-6 + 1e-6 * rng.random::<f64>(),
                };
                let dx = 20e-6 * (rng.random::<f64>() - 0.5);
                let dt = 3e-3 * rng.random::<f64>();
                let (_, grad) = m.evaluate(dx, dt, &p);
                let base = p.to_vec();
                for k in 0..5 {
                    let h = 1e-6 * base[k].abs();
                    let (mut up, mut dn) = (base.clone(), base.clone());
                    up[k] += h;
                    dn[k] -= h;
                    let fd = (m.evaluate(dx, dt, &LineShapeParams::from_slice(&up)).0
                        - m.evaluate(dx, dt, &LineShapeParams::from_slice(&dn)).0)
                        / (2.0 * h);
                    let scale = fd.abs().max(grad[k].abs()).max(1e-8 * base[1]);
                    assert!((fd - grad[k]).abs() <= 1e-5 * scale, "param {k}: {fd} vs {}", grad[k]);
                }
            }
        }
    }

    #[test]
    fn zero_delay_is_single_peak() {
        let m = model(false);
        let p = LineShapeParams { forward_amplitude: 0.0, ..params() };
        let dx: Vec<f64> = (0..81).map(|i| (i as f64 - 40.0) * 0.25e-6).collect();
        let y = m.curve(&dx, 0.0, &p);
        let max = (0..81).max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap();
        assert_eq!(max, 40);
    }

    fn peak_positions(m: &LineShapeModel, p: &LineShapeParams, dt: f64) -> Vec<f64> {
        let dx: Vec<f64> = (0..401).map(|i| (i as f64 - 200.0) * 0.05e-6).collect();
        let y = m.curve(&dx, dt, p);
        (1..400).filter(|&i| y[i] > y[i - 1] && y[i] > y[i + 1] && y[i] > 0.2 * y[200].abs().max(1e-12)).map(|i| dx[i]).collect()
    }

    #[test]
    fn short_delay_is_unresolved_and_long_delay_splits() {
        let m = model(false);
        let p = LineShapeParams { forward_amplitude: 0.0, resolution: 0.9e-6, ..params() };
        // 2cδt = 1.2 μm is below the ≈2 μm imaging resolution.
        let short = peak_positions(&m, &p, 0.45e-3);
        assert!(short.iter().any(|x| x.abs() < 0.1e-6), "{short:?}");
        assert!(!short.iter().any(|x| x.abs() > 0.3e-6 && x.abs() < 1.0e-6), "{short:?}");
        let long = peak_positions(&m, &p, 3.0e-3);
        assert!(long.iter().any(|&x| (x - 4.05e-6).abs() < 0.8e-6), "{long:?}");
        assert!(long.iter().any(|&x| (x + 4.05e-6).abs() < 0.8e-6), "{long:?}");
    }

    #[test]
    fn forward_component_decays() {
        let m = model(false);
        let p = LineShapeParams { phonon_amplitude: 0.0, forward_decay: 2.0e3, ..params() };
        let r = m.evaluate(0.0, 3.0e-3, &p).0 / m.evaluate(0.0, 0.0, &p).0;
        assert!((r / (-6.0f64).exp() - 1.0).abs() < 1e-12);
        assert!((m.psf(0.0, 1e-6).0 - 1.0).abs() < 1e-15);
        let lobe = (1..200).map(|i| m.psf(i as f64 * 0.05e-6, 0.3e-6).0).fold(f64::MAX, f64::min);
        assert!(lobe < 0.0, "hard aperture must produce negative side-lobes");
    }

    #[test]
    fn even_in_lag() {
        let m = model(true);
        let p = params();
        for x in [0.7e-6, 3.1e-6, 9.0e-6] {
            assert!((m.evaluate(x, 1.7e-3, &p).0 - m.evaluate(-x, 1.7e-3, &p).0).abs() < 1e-12);
        }
    }
}
