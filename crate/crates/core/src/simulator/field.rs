//! Linearized Gaussian surrogate for the condensate's density fluctuations.
//!
//! The line density fluctuation is
//!
//! ```text
//! δρ(x, t) = Σ_q A_q (b_q e^{i(q x − ω_q t)} + c.c.)
//! ```
//!
//! summed over both signs of q with |q| ≤ k_NA. Each shot is a coherent state
//! whose displacement `b_q` is drawn from the thermal P-distribution
//! (E|b_q|² = n_th). The remaining ½ of the symmetrized occupation is the
//! quantum floor; it is never sampled directly and only shows up through
//! measurement backaction. On pixel (x, y) the fluctuation is
//! δn = δρ(x) e(x) f(y) a², with e(x) the Thomas–Fermi amplitude envelope and
//! f(y) the normalised transverse profile.
//!
//! A second, non-propagating field with amplitudes `B_q` models forward
//! scattered atoms: it carries no thermal population and decays at γ_f.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{Grid, RealMap};
use crate::model::{
    dispersion, temperature_from_hz, thermal_occupation, CondensateParams, PhysicalConstants, ProbeParams, HBAR,
};

/// Phenomenological forward-scattered component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardComponent {
    /// Zero-time strength relative to the phonon quantum floor at δx = 0.
    pub ratio: f64,
    /// Decay rate γ_f, 1/s.
    pub decay_rate: f64,
}

impl Default for ForwardComponent {
    fn default() -> Self {
        Self { ratio: 0.0, decay_rate: 2.0e3 }
    }
}

/// Optional shot-to-shot technical fluctuations of the mean profile.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Jitter {
    /// Fractional standard deviation of the total atom number.
    pub atom_number: f64,
    /// Standard deviation of the trap centre along x, metres.
    pub center: f64,
}

/// Everything the simulator needs to know about the physical system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsConfig {
    pub constants: PhysicalConstants,
    pub condensate: CondensateParams,
    pub probe: ProbeParams,
    pub grid: Grid,
    /// RMS width of the transverse column-density profile, metres.
    pub transverse_width: f64,
    pub forward: ForwardComponent,
    pub jitter: Jitter,
}

impl PhysicsConfig {
    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        self.condensate.validate()?;
        self.probe.validate()?;
        if (self.probe.pixel_area - self.grid.pixel_area()).abs() > 1e-9 * self.grid.pixel_area() {
            return Err(invalid("probe pixel area must equal the grid pixel area"));
        }
        if !(self.transverse_width > 0.0) {
            return Err(invalid("transverse width must be positive"));
        }
        if self.forward.ratio < 0.0 || self.forward.decay_rate < 0.0 {
            return Err(invalid("forward component must be non-negative"));
        }
        if self.jitter.atom_number < 0.0 || self.jitter.center < 0.0 {
            return Err(invalid("jitter amplitudes must be non-negative"));
        }
        Ok(())
    }

    pub fn k_na(&self) -> f64 {
        self.constants.k_na(self.probe.numerical_aperture)
    }

    /// Desk-scale defaults: 256×64 pixels at 0.5 μm, 1.5×10⁵ atoms,
    /// c = 1.31 mm/s, k_B T = h × 400 Hz, δ/Γ = 124.3, NA = 0.32.
    pub fn desk_scale() -> Self {
        let constants = PhysicalConstants::rb87_d2();
        let grid = Grid { nx: 256, ny: 64, pitch: 0.5e-6 };
        let omega_0 = 2.0 * PI * 8.0;
        Self {
            constants,
            condensate: CondensateParams {
                atom_number: 1.5e5,
                atom_mass: constants.atom_mass,
                sound_speed: 1.31e-3,
                condensate_fraction: 1.0,
                radius_long: 45e-6,
                radius_short: 3.5e-6,
                trap_frequencies: [omega_0, 2.0 * PI * 450.0, 2.0 * PI * 450.0],
                omega_0,
                omega_c: omega_0 * 1.555f64.sqrt(),
                temperature: temperature_from_hz(400.0),
            },
            probe: ProbeParams {
                detuning_ratio: 124.3,
                intensity_ratio: 12.0,
                pulse_duration: 16.4e-6,
                numerical_aperture: 0.32,
                pixel_area: grid.pixel_area(),
            },
            grid,
            transverse_width: 2.5e-6,
            forward: ForwardComponent::default(),
            jitter: Jitter::default(),
        }
    }
}

/// Precomputed mode grid and spatial profiles, shared by every shot.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    pub grid: Grid,
    /// Positive wavenumbers q_j = 2πj/L, j = 1..J, with q_J ≤ k_NA.
    pub k: Vec<f64>,
    pub omega: Vec<f64>,
    /// Thermal occupation n_th.
    pub thermal: Vec<f64>,
    /// Phonon density response A_j, atoms/m.
    pub amplitude: Vec<f64>,
    /// Forward-component response B_j, atoms/m.
    pub forward_amplitude: Vec<f64>,
    pub forward_decay: f64,
    /// Amplitude envelope e(x) per column.
    pub envelope: Vec<f64>,
    /// f(y) a² per row; Σ_y f(y) a = 1.
    pub transverse: Vec<f64>,
    /// Mean line density ρ(x) per column, atoms/m.
    pub line_density: Vec<f64>,
    /// e^{i q_j x_i}, stored `[j * nx + i]`.
    phase: Vec<Complex64>,
}

/// Mean Thomas–Fermi line density (1 − u²)² normalised to `n` atoms.
pub fn thomas_fermi_line_density(x: f64, center: f64, radius: f64, n: f64) -> f64 {
    let u = (x - center) / radius;
    if u.abs() >= 1.0 {
        0.0
    } else {
        let peak = 15.0 * n / (16.0 * radius);
        peak * (1.0 - u * u).powi(2)
    }
}

impl ModeBasis {
    pub fn new(config: &PhysicsConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid;
        let cond = &config.condensate;
        let length = grid.nx as f64 * grid.pitch;
        let k_max = config.k_na().min(PI / grid.pitch);
        let xi = cond.healing_length();
        let radius = cond.radius_long;
        let peak_density = 15.0 * cond.atom_number / (16.0 * radius);

        let mut k = Vec::new();
        let mut j = 1usize;
        loop {
            let q = 2.0 * PI * j as f64 / length;
            if q > k_max {
                break;
            }
            k.push(q);
            j += 1;
        }
        if k.is_empty() {
            return Err(invalid("no resolvable modes: grid too short for the NA band"));
        }
        let omega: Vec<f64> = k.iter().map(|&q| dispersion(q, cond.sound_speed, xi)).collect();
        let thermal = omega
            .iter()
            .map(|&w| thermal_occupation(w, cond.temperature))
            .collect::<Result<Vec<_>>>()?;
        let amplitude: Vec<f64> = k
            .iter()
            .zip(&omega)
            .map(|(&q, &w)| {
                let eps = HBAR * q * q / (2.0 * cond.atom_mass);
                (peak_density / length * eps / w).sqrt()
            })
            .collect();
        let mean_a2 = amplitude.iter().map(|a| a * a).sum::<f64>() / amplitude.len() as f64;
        let b = (config.forward.ratio * mean_a2).sqrt();
        let forward_amplitude = vec![b; k.len()];

        let envelope: Vec<f64> = (0..grid.nx)
            .map(|i| {
                let u = grid.x(i) / radius;
                (1.0 - u * u).max(0.0)
            })
            .collect();
        let line_density: Vec<f64> = (0..grid.nx)
            .map(|i| thomas_fermi_line_density(grid.x(i), 0.0, radius, cond.atom_number))
            .collect();
        let sy = config.transverse_width;
        let raw: Vec<f64> = (0..grid.ny).map(|j| (-0.5 * (grid.y(j) / sy).powi(2)).exp()).collect();
        let norm: f64 = raw.iter().sum::<f64>() * grid.pitch;
        let transverse: Vec<f64> = raw.iter().map(|v| v / norm * grid.pixel_area()).collect();

        let mut phase = Vec::with_capacity(k.len() * grid.nx);
        for &q in &k {
            for i in 0..grid.nx {
                phase.push(Complex64::from_polar(1.0, q * grid.x(i)));
            }
        }
        Ok(Self {
            grid,
            k,
            omega,
            thermal,
            amplitude,
            forward_amplitude,
            forward_decay: config.forward.decay_rate,
            envelope,
            transverse,
            line_density,
            phase,
        })
    }

    pub fn modes(&self) -> usize {
        self.k.len()
    }

    /// Symmetrized occupation n_th + ½.
    pub fn occupation(&self) -> Vec<f64> {
        self.thermal.iter().map(|n| n + 0.5).collect()
    }

    /// Ensemble-mean atoms per pixel for a profile shifted by `center` and
    /// scaled by `scale`.
    pub fn mean_profile(&self, config: &PhysicsConfig, center: f64, scale: f64) -> RealMap {
        let g = self.grid;
        let rho: Vec<f64> = (0..g.nx)
            .map(|i| {
                thomas_fermi_line_density(
                    g.x(i),
                    center,
                    config.condensate.radius_long,
                    config.condensate.atom_number * scale,
                )
            })
            .collect();
        RealMap::from_fn(g.nx, g.ny, |i, j| rho[i] * self.transverse[j])
    }

    fn pixel_weight(&self, i: usize, j: usize) -> f64 {
        self.envelope[i] * self.transverse[j]
    }

    fn phase_row(&self, mode: usize) -> &[Complex64] {
        &self.phase[mode * self.grid.nx..(mode + 1) * self.grid.nx]
    }

    /// Analytic two-time correlator between pixel `a` at time 0 and pixel `b`
    /// at time `dt`, split as (statistical, quantum floor, forward).
    ///
    /// The symmetrized correlator ⟨{δn_a(0), δn_b(dt)}⟩/2 is the sum of all
    /// three parts.
    pub fn correlator(&self, a: (usize, usize), b: (usize, usize), dt: f64) -> (f64, f64, f64) {
        let g = self.grid;
        let sep = g.x(b.0) - g.x(a.0);
        let w = self.pixel_weight(a.0, a.1) * self.pixel_weight(b.0, b.1);
        let (mut stat, mut quantum, mut fwd) = (0.0, 0.0, 0.0);
        for m in 0..self.modes() {
            let spatial = (self.k[m] * sep).cos();
            let temporal = (self.omega[m] * dt).cos();
            let a2 = self.amplitude[m] * self.amplitude[m];
            stat += 4.0 * a2 * self.thermal[m] * spatial * temporal;
            quantum += 2.0 * a2 * spatial * temporal;
            fwd += 2.0 * self.forward_amplitude[m].powi(2) * spatial;
        }
        let decay = (-self.forward_decay * dt).exp();
        (w * stat, w * quantum, w * fwd * decay)
    }
}

/// Per-shot mode amplitudes. Index `m` holds +q_m, index `J + m` holds −q_m.
#[derive(Debug, Clone)]
pub struct PhononField {
    pub basis: Arc<ModeBasis>,
    pub phonon: Vec<Complex64>,
    pub forward: Vec<Complex64>,
}

impl PhononField {
    /// Vacuum-displacement field (no statistical fluctuations).
    pub fn quiet(basis: Arc<ModeBasis>) -> Self {
        let n = 2 * basis.modes();
        Self { basis, phonon: vec![Complex64::default(); n], forward: vec![Complex64::default(); n] }
    }

    pub fn sample<R: Rng + ?Sized>(basis: Arc<ModeBasis>, rng: &mut R) -> Self {
        let j = basis.modes();
        let mut phonon = Vec::with_capacity(2 * j);
        for _ in 0..2 {
            for m in 0..j {
                let s = (0.5 * basis.thermal[m]).sqrt();
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                phonon.push(Complex64::new(s * re, s * im));
            }
        }
        Self { phonon, forward: vec![Complex64::default(); 2 * j], basis }
    }

    /// Advance by `dt`: phonons rotate by e^{−iω dt}, the forward field decays.
    pub fn evolve(&self, dt: f64) -> Result<Self> {
        if !(dt >= 0.0) {
            return Err(invalid("evolution time must be non-negative"));
        }
        let j = self.basis.modes();
        let mut out = self.clone();
        for m in 0..j {
            let rot = Complex64::from_polar(1.0, -self.basis.omega[m] * dt);
            out.phonon[m] *= rot;
            out.phonon[j + m] *= rot;
        }
        let decay = (-self.basis.forward_decay * dt).exp();
        out.forward.iter_mut().for_each(|v| *v *= decay);
        Ok(out)
    }

    /// Line density fluctuation δρ(x) (before the envelope), per column.
    pub fn line_fluctuation(&self) -> Vec<f64> {
        let b = &self.basis;
        let j = b.modes();
        let mut out = vec![0.0; b.grid.nx];
        for m in 0..j {
            let cp = b.amplitude[m] * self.phonon[m] + b.forward_amplitude[m] * self.forward[m];
            let cm = b.amplitude[m] * self.phonon[j + m] + b.forward_amplitude[m] * self.forward[j + m];
            for (o, p) in out.iter_mut().zip(b.phase_row(m)) {
                *o += 2.0 * (cp * p + cm * p.conj()).re;
            }
        }
        out
    }

    /// Mean density fluctuation ⟨δn⟩ of this shot on the pixel grid.
    pub fn density_fluctuation(&self) -> RealMap {
        let b = &self.basis;
        let line = self.line_fluctuation();
        RealMap::from_fn(b.grid.nx, b.grid.ny, |i, j| line[i] * b.envelope[i] * b.transverse[j])
    }

    /// Apply the first-order Kraus displacement for a noise record `m`:
    /// every amplitude moves by φ Σ_r m_r ⟨{b, δn_r}⟩_c.
    pub fn kick(&mut self, m: &RealMap, phi: f64) {
        let b = Arc::clone(&self.basis);
        let nx = b.grid.nx;
        let projected: Vec<f64> = (0..nx)
            .map(|i| {
                let s: f64 = (0..b.grid.ny).map(|j| m[(i, j)] * b.transverse[j]).sum();
                s * b.envelope[i]
            })
            .collect();
        let j = b.modes();
        for mode in 0..j {
            let mut plus = Complex64::default();
            for (p, &v) in b.phase_row(mode).iter().zip(&projected) {
                plus += p.conj() * v;
            }
            let minus = plus.conj();
            self.phonon[mode] += phi * b.amplitude[mode] * plus;
            self.phonon[j + mode] += phi * b.amplitude[mode] * minus;
            self.forward[mode] += phi * b.forward_amplitude[mode] * plus;
            self.forward[j + mode] += phi * b.forward_amplitude[mode] * minus;
        }
    }

    /// Fourier coefficient of δρ at +q_m and −q_m (up to a common factor).
    pub fn line_coefficients(&self, mode: usize) -> (Complex64, Complex64) {
        let b = &self.basis;
        let j = b.modes();
        let cp = b.amplitude[mode] * self.phonon[mode] + b.forward_amplitude[mode] * self.forward[mode];
        let cm = b.amplitude[mode] * self.phonon[j + mode] + b.forward_amplitude[mode] * self.forward[j + mode];
        (cp + cm.conj(), cm + cp.conj())
    }
}
