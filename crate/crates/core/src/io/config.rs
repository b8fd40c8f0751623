//! TOML run configuration. Keys carry their unit as a suffix (`_um`, `_ms`,
//! `_hz`, `_mm_s`); everything is converted to SI on load. Unknown keys are
//! rejected. See `docs/config.md` for the grammar.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::spectral::{KMaskSpec, Retain};
use crate::analysis::{AnalysisConfig, SmallK};
use crate::error::{Error, Result};
use crate::fitting::{DispersionModel, FitMode, FitOptions, LineShapeModel, LineShapeParams};
use crate::grid::Grid;
use crate::model::{temperature_from_hz, CondensateParams, PhysicalConstants, ProbeParams};
use crate::simulator::render::{Fringes, PhotonNoise, RenderConfig};
use crate::simulator::{ForwardComponent, Jitter, MeasurementPulse, PhysicsConfig};
use crate::weak_values::SelectionMode;

const UM: f64 = 1e-6;
const MS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub atom_number: f64,
    pub sound_speed_mm_s: f64,
    pub condensate_fraction: f64,
    pub radius_long_um: f64,
    pub radius_short_um: f64,
    pub trap_hz: [f64; 3],
    /// ω_c²/ω_0².
    pub omega_ratio_sq: f64,
    /// k_B T / h.
    pub temperature_hz: f64,
    pub transverse_width_um: f64,
    pub detuning_ratio: f64,
    pub intensity_ratio: f64,
    pub pulse_duration_us: f64,
    pub numerical_aperture: f64,
    pub forward_ratio: f64,
    pub forward_decay_per_ms: f64,
    pub jitter_atom_number: f64,
    pub jitter_center_um: f64,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self {
            atom_number: 1.5e5,
            sound_speed_mm_s: 1.31,
            condensate_fraction: 1.0,
            radius_long_um: 45.0,
            radius_short_um: 3.5,
            trap_hz: [8.0, 450.0, 450.0],
            omega_ratio_sq: 1.555,
            temperature_hz: 400.0,
            transverse_width_um: 2.5,
            detuning_ratio: 124.3,
            intensity_ratio: 12.0,
            pulse_duration_us: 16.4,
            numerical_aperture: 0.32,
            forward_ratio: 0.0,
            forward_decay_per_ms: 2.0,
            jitter_atom_number: 0.0,
            jitter_center_um: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub pitch_um: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { nx: 256, ny: 64, pitch_um: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub shots: usize,
    pub seed: u64,
    pub pulse_times_ms: Vec<f64>,
    /// Probe strength g per pulse; a single value applies to all pulses.
    pub strengths: Vec<f64>,
    /// Effective strength ϑ of additive technical noise, if any.
    pub technical_noise: Option<f64>,
    /// Render PCI frames and analyse those instead of the outcomes.
    pub render: bool,
    pub photon_noise: PhotonNoise,
    pub fringe_amplitude: f64,
    pub dark_offset: f64,
    pub readout_noise: f64,
    pub render_seed: u64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            shots: 128,
            seed: 1,
            pulse_times_ms: vec![0.0, 1.0],
            strengths: vec![1.0],
            technical_noise: None,
            render: false,
            photon_noise: PhotonNoise::FromRecord,
            fringe_amplitude: 0.0,
            dark_offset: 0.0,
            readout_noise: 0.0,
            render_seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmallKMode {
    None,
    Zero,
    Pca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub window_semi_y_um: f64,
    pub window_margin: f64,
    pub window_taper: f64,
    pub probe_components: usize,
    pub fluctuation_components: usize,
    pub symmetrize: bool,
    pub small_k: SmallKMode,
    /// Radius of the small-k disk, 1/μm (angular).
    pub small_k_radius_per_um: f64,
    pub small_k_basis: usize,
    pub small_k_retained_variance: f64,
    /// Pulse whose CCFs with every later pulse form the Van Hove slices.
    pub reference_pulse: usize,
    /// Use every later pulse pair, not just those with the reference.
    pub all_pairs: bool,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let a = AnalysisConfig::default();
        Self {
            window_semi_y_um: a.window_semi_y / UM,
            window_margin: a.window_margin,
            window_taper: a.window_taper,
            probe_components: a.probe_components,
            fluctuation_components: a.fluctuation_components,
            symmetrize: a.symmetrize,
            small_k: SmallKMode::None,
            small_k_radius_per_um: 0.3,
            small_k_basis: 512,
            small_k_retained_variance: 0.87,
            reference_pulse: 0,
            all_pairs: false,
        }
    }
}

impl AnalysisSection {
    pub fn to_config(&self) -> AnalysisConfig {
        let mask = KMaskSpec::Disk { radius: self.small_k_radius_per_um / UM };
        AnalysisConfig {
            window_semi_y: self.window_semi_y_um * UM,
            window_margin: self.window_margin,
            window_taper: self.window_taper,
            probe_components: self.probe_components,
            fluctuation_components: self.fluctuation_components,
            small_k: match self.small_k {
                SmallKMode::None => SmallK::None,
                SmallKMode::Zero => SmallK::Zero { mask },
                SmallKMode::Pca => SmallK::Pca {
                    mask,
                    basis_size: self.small_k_basis,
                    retain: Retain::Variance(self.small_k_retained_variance),
                },
            },
            symmetrize: self.symmetrize,
            occulted: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QwvSection {
    pub discarded_fractions: Vec<f64>,
    pub mode: SelectionMode,
    pub max_lag_px: usize,
    /// Pulse pairs to post-select on; empty means every adjacent pair.
    pub pairs: Vec<[usize; 2]>,
}

impl Default for QwvSection {
    fn default() -> Self {
        Self {
            discarded_fractions: vec![0.0, 0.4, 0.8],
            mode: SelectionMode::SignWeighted,
            max_lag_px: 24,
            pairs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub mode: FitMode,
    pub dispersion: DispersionModel,
    pub lda: bool,
    pub exclusion_um: f64,
    pub max_dx_um: Option<f64>,
    pub weighted: bool,
    /// Parameters held at their initial values: any of
    /// "c", "s_p", "h_f", "gamma_f", "sigma_res".
    pub fixed: Vec<String>,
    /// Initial imaging resolution.
    pub resolution_um: f64,
    pub max_iterations: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            mode: FitMode::Global,
            dispersion: DispersionModel::Bogoliubov,
            lda: false,
            exclusion_um: 1.5,
            max_dx_um: Some(15.0),
            weighted: true,
            fixed: Vec::new(),
            resolution_um: 0.5,
            max_iterations: 200,
        }
    }
}

impl FitSection {
    pub fn options(&self) -> Result<FitOptions> {
        let mut free = [true; 5];
        for name in &self.fixed {
            let k = LineShapeParams::NAMES
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Config(format!("unknown fit parameter {name:?}")))?;
            free[k] = false;
        }
        Ok(FitOptions {
            exclusion: self.exclusion_um * UM,
            max_dx: self.max_dx_um.map(|v| v * UM),
            weighted: self.weighted,
            free,
            max_iterations: self.max_iterations,
        })
    }

    /// Line-shape model built from the configured physics.
    pub fn model(&self, physics: &PhysicsConfig) -> LineShapeModel {
        LineShapeModel::new(
            physics.k_na(),
            physics.constants.atom_mass,
            physics.condensate.sound_speed,
            physics.condensate.temperature,
            self.dispersion,
        )
        .with_lda(self.lda)
    }
}

/// Parameter series stepped through by the reproduction recipes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// First-pulse probe strengths of the strength series.
    pub strengths: Vec<f64>,
    /// Condensate fractions of the temperature series, paired entry by
    /// entry with `temperatures_hz`.
    pub condensate_fractions: Vec<f64>,
    pub temperatures_hz: Vec<f64>,
    /// R_c = 1 sound speed; each temperature point injects
    /// c = c0 · sound_speed_ratio(R_c, physics.omega_ratio_sq).
    pub reference_sound_speed_mm_s: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            strengths: vec![0.3, 0.6, 1.0],
            condensate_fractions: vec![1.0, 0.75, 0.49],
            temperatures_hz: vec![400.0, 1200.0, 2000.0],
            reference_sound_speed_mm_s: 1.37,
        }
    }
}

/// Complete configuration of a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub physics: PhysicsSection,
    pub grid: GridSection,
    pub simulation: SimulationSection,
    pub analysis: AnalysisSection,
    pub qwv: QwvSection,
    pub fit: FitSection,
    pub sweep: SweepSection,
}

impl RunConfig {
    /// Parse TOML text, apply `key.path=value` overrides, validate.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if value.is_empty() && overrides.is_empty() {
            return Err(Error::Config("configuration is empty".into()));
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let physics = self.physics()?;
        physics.validate().map_err(|e| Error::Config(e.to_string()))?;
        let s = &self.simulation;
        if s.shots < 2 {
            return Err(Error::Config("simulation.shots must be at least 2".into()));
        }
        if s.pulse_times_ms.len() < 2 {
            return Err(Error::Config("simulation.pulse_times_ms needs at least two pulses".into()));
        }
        if s.strengths.is_empty() || (s.strengths.len() != 1 && s.strengths.len() != s.pulse_times_ms.len()) {
            return Err(Error::Config("simulation.strengths needs one value or one per pulse".into()));
        }
        if s.strengths.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::Config("probe strengths must be positive".into()));
        }
        if self.analysis.reference_pulse >= s.pulse_times_ms.len() {
            return Err(Error::Config("analysis.reference_pulse is out of range".into()));
        }
        if self.qwv.discarded_fractions.iter().any(|f| !(0.0..1.0).contains(f)) {
            return Err(Error::Config("qwv.discarded_fractions must lie in [0, 1)".into()));
        }
        self.fit.options()?;
        let w = &self.sweep;
        if w.strengths.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::Config("sweep.strengths must be positive".into()));
        }
        if w.condensate_fractions.len() != w.temperatures_hz.len() {
            return Err(Error::Config("sweep.condensate_fractions and sweep.temperatures_hz differ in length".into()));
        }
        if w.condensate_fractions.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return Err(Error::Config("sweep.condensate_fractions must lie in (0, 1]".into()));
        }
        if w.temperatures_hz.iter().any(|t| !(*t >= 0.0)) || !(w.reference_sound_speed_mm_s > 0.0) {
            return Err(Error::Config("sweep temperatures must be non-negative and c0 positive".into()));
        }
        Ok(())
    }

    pub fn physics(&self) -> Result<PhysicsConfig> {
        let p = &self.physics;
        let constants = PhysicalConstants::rb87_d2();
        let g = &self.grid;
        let grid = Grid { nx: g.nx, ny: g.ny, pitch: g.pitch_um * UM };
        if g.nx < 4 || g.ny < 1 || !(g.pitch_um > 0.0) {
            return Err(Error::Config("grid must be at least 4×1 with positive pitch".into()));
        }
        let omega_0 = 2.0 * PI * p.trap_hz[0];
        Ok(PhysicsConfig {
            constants,
            condensate: CondensateParams {
                atom_number: p.atom_number,
                atom_mass: constants.atom_mass,
                sound_speed: p.sound_speed_mm_s * 1e-3,
                condensate_fraction: p.condensate_fraction,
                radius_long: p.radius_long_um * UM,
                radius_short: p.radius_short_um * UM,
                trap_frequencies: p.trap_hz.map(|f| 2.0 * PI * f),
                omega_0,
                omega_c: omega_0 * p.omega_ratio_sq.max(0.0).sqrt(),
                temperature: temperature_from_hz(p.temperature_hz),
            },
            probe: ProbeParams {
                detuning_ratio: p.detuning_ratio,
                intensity_ratio: p.intensity_ratio,
                pulse_duration: p.pulse_duration_us * 1e-6,
                numerical_aperture: p.numerical_aperture,
                pixel_area: grid.pixel_area(),
            },
            grid,
            transverse_width: p.transverse_width_um * UM,
            forward: ForwardComponent { ratio: p.forward_ratio, decay_rate: p.forward_decay_per_ms / MS },
            jitter: Jitter { atom_number: p.jitter_atom_number, center: p.jitter_center_um * UM },
        })
    }

    pub fn pulses(&self, physics: &PhysicsConfig) -> Vec<MeasurementPulse> {
        let s = &self.simulation;
        s.pulse_times_ms
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let g = if s.strengths.len() == 1 { s.strengths[0] } else { s.strengths[i] };
                let p = MeasurementPulse::new(t * MS, g, physics);
                match s.technical_noise {
                    Some(theta) => p.with_technical_noise(theta),
                    None => p,
                }
            })
            .collect()
    }

    pub fn render(&self) -> RenderConfig {
        let s = &self.simulation;
        RenderConfig {
            photon_noise: s.photon_noise,
            fringes: Fringes { amplitude: s.fringe_amplitude, ..Fringes::default() },
            dark_offset: s.dark_offset,
            readout_noise: s.readout_noise,
            na_filter: true,
            seed: s.render_seed,
        }
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Set `a.b.c = value` in a TOML table. The value is parsed as TOML and
/// falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut node = table;
    for p in &parts[..parts.len() - 1] {
        node = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{p} is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_rejected() {
        assert!(matches!(RunConfig::from_toml("", &[]), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::from_toml("[physics]\nsound_speed = 1.3\n", &[]).unwrap_err();
        assert!(e.to_string().contains("unknown field"), "{e}");
        assert!(RunConfig::from_toml("[nonsense]\n", &[]).is_err());
    }

    #[test]
    fn units_are_converted() {
        let c = RunConfig::from_toml("[physics]\nsound_speed_mm_s = 1.42\n[grid]\npitch_um = 0.25\n", &[]).unwrap();
        let p = c.physics().unwrap();
        assert!((p.condensate.sound_speed - 1.42e-3).abs() < 1e-15);
        assert!((p.probe.pixel_area - 0.0625e-12).abs() < 1e-24);
    }

    #[test]
    fn overrides_take_precedence() {
        let base = "[simulation]\nshots = 64\n";
        let c = RunConfig::from_toml(base, &["simulation.shots=32".into(), "fit.mode=individual".into()]).unwrap();
        assert_eq!(c.simulation.shots, 32);
        assert_eq!(c.fit.mode, FitMode::Individual);
        assert!(RunConfig::from_toml(base, &["simulation.shots".into()]).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::from_toml("[simulation]\nseed = 1\n", &[]).unwrap();
        let b = RunConfig::from_toml("[simulation]\nseed = 2\n", &[]).unwrap();
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        let round = RunConfig::from_toml(&a.to_toml(), &[]).unwrap();
        assert_eq!(round, a);
    }
}
