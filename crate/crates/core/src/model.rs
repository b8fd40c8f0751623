//! Physical constants, the Bogoliubov dispersion, measurement-strength
//! conversions, and the finite-temperature sound-speed model.
//!
//! Everything here is SI and stateless.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Result};

pub const HBAR: f64 = 1.054_571_817e-34;
pub const K_B: f64 = 1.380_649e-23;
pub const PLANCK: f64 = 2.0 * PI * HBAR;

/// Atomic and optical constants of the imaged species.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub atom_mass: f64,
    pub wavelength: f64,
    /// Natural linewidth, angular frequency.
    pub linewidth: f64,
    /// Saturation intensity, W/m².
    pub saturation_intensity: f64,
}

impl PhysicalConstants {
    /// ⁸⁷Rb on the D2 line.
    pub fn rb87_d2() -> Self {
        Self {
            hbar: HBAR,
            atom_mass: 1.443_160_648e-25,
            wavelength: 780.241e-9,
            linewidth: 2.0 * PI * 6.0666e6,
            saturation_intensity: 16.7,
        }
    }

    pub fn k0(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Resonant scattering cross-section 6π/k0².
    pub fn sigma0(&self) -> f64 {
        6.0 * PI / (self.k0() * self.k0())
    }

    /// Single-photon recoil wavenumber (equal to k0).
    pub fn recoil_wavenumber(&self) -> f64 {
        self.k0()
    }

    pub fn recoil_velocity(&self) -> f64 {
        self.hbar * self.k0() / self.atom_mass
    }

    /// Largest transverse wavenumber passed by an objective of numerical aperture `na`.
    pub fn k_na(&self, na: f64) -> f64 {
        na * self.k0()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("hbar", self.hbar),
            ("atom_mass", self.atom_mass),
            ("wavelength", self.wavelength),
            ("linewidth", self.linewidth),
            ("saturation_intensity", self.saturation_intensity),
        ] {
            ensure_finite(name, v)?;
            if v <= 0.0 {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::rb87_d2()
    }
}

/// Condensate parameters. The healing length and chemical potential are
/// derived from the sound speed rather than stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondensateParams {
    pub atom_number: f64,
    pub atom_mass: f64,
    /// Long-wavelength (maximum longitudinal) speed of sound, m/s.
    pub sound_speed: f64,
    /// Condensate fraction in (0, 1].
    pub condensate_fraction: f64,
    /// Thomas–Fermi half-length along the long axis, m.
    pub radius_long: f64,
    /// Thomas–Fermi radius along the short axis, m.
    pub radius_short: f64,
    pub trap_frequencies: [f64; 3],
    /// Trap frequency as R_c → 1.
    pub omega_0: f64,
    /// Trap frequency as R_c → 0.
    pub omega_c: f64,
    /// Temperature, K.
    pub temperature: f64,
}

impl CondensateParams {
    pub fn healing_length(&self) -> f64 {
        HBAR / (2f64.sqrt() * self.atom_mass * self.sound_speed)
    }

    /// μ = m c² for the uniform gas.
    pub fn chemical_potential(&self) -> f64 {
        self.atom_mass * self.sound_speed * self.sound_speed
    }

    pub fn omega_ratio_sq(&self) -> f64 {
        (self.omega_c / self.omega_0).powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("sound_speed", self.sound_speed)?;
        ensure_finite("temperature", self.temperature)?;
        if self.sound_speed <= 0.0 {
            return Err(invalid("sound speed must be positive"));
        }
        if !(self.condensate_fraction > 0.0 && self.condensate_fraction <= 1.0) {
            return Err(invalid("condensate fraction must lie in (0, 1]"));
        }
        if self.atom_number <= 0.0 || self.atom_mass <= 0.0 {
            return Err(invalid("atom number and mass must be positive"));
        }
        if self.radius_long <= 0.0 || self.radius_short <= 0.0 {
            return Err(invalid("Thomas-Fermi radii must be positive"));
        }
        if self.temperature < 0.0 {
            return Err(invalid("temperature must be non-negative"));
        }
        Ok(())
    }
}

/// Probe beam and imaging parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    /// δ/Γ; magnitude is what matters.
    pub detuning_ratio: f64,
    /// I / I_sat.
    pub intensity_ratio: f64,
    pub pulse_duration: f64,
    pub numerical_aperture: f64,
    /// Object-plane pixel area, m².
    pub pixel_area: f64,
}

impl ProbeParams {
    pub const MIN_DETUNING_RATIO: f64 = 50.0;

    pub fn validate(&self) -> Result<()> {
        if !self.detuning_ratio.is_finite() || self.detuning_ratio.abs() < Self::MIN_DETUNING_RATIO
        {
            return Err(invalid(format!(
                "|detuning ratio| must be at least {}, got {}",
                Self::MIN_DETUNING_RATIO,
                self.detuning_ratio
            )));
        }
        if !(self.numerical_aperture > 0.0 && self.numerical_aperture < 1.0) {
            return Err(invalid("numerical aperture must lie in (0, 1)"));
        }
        if self.intensity_ratio < 0.0 || self.pulse_duration <= 0.0 || self.pixel_area <= 0.0 {
            return Err(invalid("intensity, pulse duration and pixel area must be positive"));
        }
        Ok(())
    }

    /// Mean photon number per pixel with no atoms, N0 = Ī Γ t_m A / (2σ0).
    pub fn photons_per_pixel(&self, constants: &PhysicalConstants) -> f64 {
        self.intensity_ratio * constants.linewidth * self.pulse_duration * self.pixel_area
            / (2.0 * constants.sigma0())
    }
}

/// Bogoliubov dispersion written through the sound speed and healing length,
/// ω = c k sqrt(1 + (kξ)²/2).
pub fn dispersion(k: f64, sound_speed: f64, healing_length: f64) -> f64 {
    let kx = k * healing_length;
    sound_speed * k.abs() * (1.0 + 0.5 * kx * kx).sqrt()
}

pub fn bogoliubov_omega(k: f64, params: &CondensateParams) -> Result<f64> {
    ensure_finite("k", k)?;
    Ok(dispersion(k, params.sound_speed, params.healing_length()))
}

/// Mean number of photons scattered per atom.
pub fn n_scat(g: f64) -> f64 {
    g * g / 8.0
}

/// Dimensionless strength g = sqrt(Γ t_m Ī) / (δ/Γ).
pub fn g_from_probe(probe: &ProbeParams, constants: &PhysicalConstants) -> Result<f64> {
    if probe.detuning_ratio == 0.0 {
        return Err(invalid("detuning ratio must be non-zero"));
    }
    let dose = constants.linewidth * probe.pulse_duration * probe.intensity_ratio;
    Ok(dose.sqrt() / probe.detuning_ratio.abs())
}

/// Per-pixel measurement strength φ = (g/4) sqrt(σ0/A).
pub fn phi_pixel(g: f64, pixel_area: f64, sigma0: f64) -> f64 {
    0.25 * g * (sigma0 / pixel_area).sqrt()
}

/// Resolution-limited measurement strength φ = (1/4) sqrt(3/2) g NA.
pub fn phi_na(g: f64, na: f64) -> f64 {
    0.25 * 1.5f64.sqrt() * g * na
}

/// c/c0 for a harmonically trapped gas at condensate fraction `rc`, with the
/// trap-frequency correction `omega_ratio_sq` = ω_c²/ω_0².
pub fn sound_speed_ratio(rc: f64, omega_ratio_sq: f64) -> Result<f64> {
    if !(rc > 0.0) || !rc.is_finite() {
        return Err(invalid(format!("condensate fraction must be positive, got {rc}")));
    }
    if rc > 1.0 {
        return Err(invalid(format!("condensate fraction must not exceed 1, got {rc}")));
    }
    ensure_finite("omega_ratio_sq", omega_ratio_sq)?;
    let bracket = omega_ratio_sq + rc * (1.0 - omega_ratio_sq);
    Ok(rc.powf(0.2) * bracket.powf(0.3))
}

/// Bose occupation of a mode at angular frequency `omega`; zero at T = 0.
pub fn thermal_occupation(omega: f64, temperature: f64) -> Result<f64> {
    if temperature < 0.0 {
        return Err(invalid("temperature must be non-negative"));
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    if omega <= 0.0 {
        return Err(invalid("thermal occupation diverges for a zero-frequency mode"));
    }
    let x = HBAR * omega / (K_B * temperature);
    Ok(1.0 / x.exp_m1())
}

/// Temperature whose thermal energy equals h × `freq_hz`.
pub fn temperature_from_hz(freq_hz: f64) -> f64 {
    PLANCK * freq_hz / K_B
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn condensate(c: f64) -> CondensateParams {
        CondensateParams {
            atom_number: 2.0e5,
            atom_mass: PhysicalConstants::rb87_d2().atom_mass,
            sound_speed: c,
            condensate_fraction: 0.98,
            radius_long: 45e-6,
            radius_short: 3e-6,
            trap_frequencies: [2.0 * PI * 10.0, 2.0 * PI * 150.0, 2.0 * PI * 150.0],
            omega_0: 1.0,
            omega_c: 1.0,
            temperature: 20e-9,
        }
    }

    #[test]
    fn sigma0_matches_k0() {
        let pc = PhysicalConstants::rb87_d2();
        let expected = 3.0 * pc.wavelength * pc.wavelength / (2.0 * PI);
        assert_relative_eq!(pc.sigma0(), expected, max_relative = 1e-12);
    }

    #[test]
    fn gapless_and_sound_slope() {
        let p = condensate(1.35e-3);
        assert_eq!(bogoliubov_omega(0.0, &p).unwrap(), 0.0);
        let k = 1e-3;
        assert_relative_eq!(bogoliubov_omega(k, &p).unwrap() / k, 1.35e-3, max_relative = 1e-9);
    }

    #[test]
    fn dispersion_at_inverse_healing_length() {
        let (c, xi) = (1.35e-3, 0.25e-6);
        let w = dispersion(1.0 / xi, c, xi);
        assert_relative_eq!(w, c / xi * 1.5f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn dispersion_matches_energy_form() {
        let p = condensate(1.31e-3);
        let m = p.atom_mass;
        let mu = p.chemical_potential();
        for &k in &[1e4, 1e5, 1e6, 2.58e6, 1e7] {
            let eps = HBAR * HBAR * k * k / (2.0 * m);
            let direct = (eps * (eps + 2.0 * mu)).sqrt() / HBAR;
            assert_relative_eq!(bogoliubov_omega(k, &p).unwrap(), direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn non_finite_k_rejected() {
        assert!(bogoliubov_omega(f64::NAN, &condensate(1e-3)).is_err());
        assert!(bogoliubov_omega(f64::INFINITY, &condensate(1e-3)).is_err());
    }

    #[test]
    fn scattered_photon_number() {
        assert_eq!(n_scat(1.0), 0.125);
        assert_eq!(n_scat(0.0), 0.0);
        assert_relative_eq!(n_scat(0.3), 0.01125, max_relative = 1e-15);
    }

    #[test]
    fn strength_from_probe() {
        let pc = PhysicalConstants::rb87_d2();
        // dose chosen so sqrt(Γ t Ī) equals the detuning ratio
        let t = 1e-5;
        let target = 124.3f64;
        let ibar = target * target / (pc.linewidth * t);
        let probe = ProbeParams {
            detuning_ratio: 124.3,
            intensity_ratio: ibar,
            pulse_duration: t,
            numerical_aperture: 0.32,
            pixel_area: 0.25e-12,
        };
        assert_relative_eq!(g_from_probe(&probe, &pc).unwrap(), 1.0, max_relative = 1e-12);

        let lab = ProbeParams { intensity_ratio: 12.0, pulse_duration: 16.4e-6, ..probe };
        let g = g_from_probe(&lab, &pc).unwrap();
        assert!(g > 0.5 && g < 1.5, "g = {g}");

        let dark = ProbeParams { intensity_ratio: 0.0, ..probe };
        assert_eq!(g_from_probe(&dark, &pc).unwrap(), 0.0);

        let bad = ProbeParams { detuning_ratio: 0.0, ..probe };
        assert!(g_from_probe(&bad, &pc).is_err());
    }

    #[test]
    fn pixel_and_na_strengths() {
        assert_eq!(phi_pixel(0.0, 1.0, 1.0), 0.0);
        assert_relative_eq!(phi_pixel(1.0, 2.0, 2.0), 0.25);
        assert_relative_eq!(phi_pixel(1.0, 16.0, 1.0), 0.0625);
        let phi = phi_na(1.0, 0.32);
        assert!((0.095..=0.101).contains(&phi));
        assert_eq!(phi_na(0.0, 0.32), 0.0);
        let natural = phi_na(1.0, 1.0);
        assert_relative_eq!(natural, 3f64.sqrt() / 2.0 * n_scat(1.0).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(natural, 0.306, epsilon = 5e-4);
    }

    #[test]
    fn na_disk_equivalent_pixel_reproduces_na_strength() {
        // A pixel whose k-space cell (2π)²/A equals the NA disk area π k_NA².
        let pc = PhysicalConstants::rb87_d2();
        let na = 0.32;
        let k_na = pc.k_na(na);
        let area = (2.0 * PI).powi(2) / (PI * k_na * k_na);
        let g = 0.7;
        let via_pixel = phi_pixel(g, area, pc.sigma0());
        assert_relative_eq!(via_pixel, phi_na(g, na), max_relative = 1e-12);
    }

    #[test]
    fn sound_speed_limits() {
        for w in [1.0, 1.3, 2.0, 5.0] {
            assert_relative_eq!(sound_speed_ratio(1.0, w).unwrap(), 1.0, max_relative = 1e-15);
        }
        for rc in [0.1, 0.49, 0.88] {
            assert_relative_eq!(sound_speed_ratio(rc, 1.0).unwrap(), rc.powf(0.2), max_relative = 1e-15);
        }
        assert!(sound_speed_ratio(0.0, 1.0).is_err());
        assert!(sound_speed_ratio(-0.1, 1.0).is_err());
    }

    #[test]
    fn thermal_occupation_floor() {
        assert_eq!(thermal_occupation(1e3, 0.0).unwrap(), 0.0);
        let t = temperature_from_hz(400.0);
        let below = thermal_occupation(2.0 * PI * 200.0, t).unwrap();
        let above = thermal_occupation(2.0 * PI * 800.0, t).unwrap();
        assert!(below > 1.0 && above < 1.0);
        assert!(thermal_occupation(1.0, -1.0).is_err());
    }

    #[test]
    fn probe_validation() {
        let probe = ProbeParams {
            detuning_ratio: 30.0,
            intensity_ratio: 1.0,
            pulse_duration: 1e-5,
            numerical_aperture: 0.3,
            pixel_area: 1e-13,
        };
        assert!(probe.validate().is_err());
        assert!(ProbeParams { detuning_ratio: -124.3, ..probe }.validate().is_ok());
        assert!(ProbeParams { detuning_ratio: 124.3, numerical_aperture: 1.0, ..probe }
            .validate()
            .is_err());
    }
}
