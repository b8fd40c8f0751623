//! End-to-end analysis of a two-or-more pulse ensemble.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::correlation::{lag_axis, to_1d_ccf};
use super::image::{extract_fluctuations, pci_signal, ProbeBasis, Window, WindowGeometry, DEFAULT_TAPER, WINDOW_MARGIN};
use super::spectral::{
    cpsd_of_spectra, mismatched_pairs, remove_shot_noise_offset, restrict_to_na, small_k_mask, spectrum, KMask,
    KMaskSpec, Retain, SmallKCleaner, SmallKReport, DEFAULT_RETAINED_VARIANCE,
};
use crate::error::{invalid, Result};
use crate::fourier::disk_mask;
use crate::grid::{ComplexMap, Grid, RealMap};
use crate::simulator::render::{atoms_per_signal, RenderedShot};
use crate::simulator::{Ensemble, PhysicsConfig};
use crate::stats::column_mean_sem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SmallK {
    None,
    /// Zero the masked region.
    Zero { mask: KMaskSpec },
    /// Subtract principal components of mismatched-shot CPSDs inside the mask.
    Pca { mask: KMaskSpec, basis_size: usize, retain: Retain },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Transverse window semi-axis, m.
    pub window_semi_y: f64,
    /// Horizontal window extent relative to the cloud half-length.
    pub window_margin: f64,
    pub window_taper: f64,
    pub probe_components: usize,
    pub fluctuation_components: usize,
    pub small_k: SmallK,
    pub symmetrize: bool,
    /// Extra k-space region removed from the NA disk (occulted aperture).
    pub occulted: Option<KMaskSpec>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            window_semi_y: 7.5e-6,
            window_margin: WINDOW_MARGIN,
            window_taper: DEFAULT_TAPER,
            probe_components: 8,
            fluctuation_components: 7,
            small_k: SmallK::None,
            symmetrize: true,
            occulted: None,
        }
    }
}

impl AnalysisConfig {
    pub fn default_pca_small_k(radius: f64) -> SmallK {
        SmallK::Pca {
            mask: KMaskSpec::Disk { radius },
            basis_size: 512,
            retain: Retain::Variance(DEFAULT_RETAINED_VARIANCE),
        }
    }

    pub fn window(&self, physics: &PhysicsConfig) -> Result<Window> {
        WindowGeometry {
            semi_x: self.window_margin * physics.condensate.radius_long,
            semi_y: self.window_semi_y,
            taper: self.window_taper,
            center: (0.0, 0.0),
        }
        .build(&physics.grid)
    }

    pub fn na_mask(&self, physics: &PhysicsConfig) -> KMask {
        let mut mask = disk_mask(&physics.grid, physics.k_na());
        if let Some(occ) = &self.occulted {
            let g = physics.grid;
            for j in 0..g.ny {
                for i in 0..g.nx {
                    if occ.contains(g.kx(i), g.ky(j)) {
                        mask[(i, j)] = false;
                    }
                }
            }
        }
        mask
    }
}

/// Atoms per pixel for every shot of one pulse, recovered from raw frames.
pub fn densities_from_frames(
    shots: &[RenderedShot],
    pulse: usize,
    physics: &PhysicsConfig,
    window: &Window,
    probe_components: usize,
) -> Result<Vec<RealMap>> {
    if shots.is_empty() {
        return Err(invalid("no rendered shots"));
    }
    let g = physics.grid;
    let mut dark = RealMap::zeros(g.nx, g.ny);
    for s in shots {
        let d = &s.frames.get(pulse).ok_or_else(|| invalid("pulse index out of range"))?.dark;
        for (a, v) in dark.data.iter_mut().zip(&d.data) {
            *a += v / shots.len() as f64;
        }
    }
    let sub = |m: &RealMap| m.data.iter().zip(&dark.data).map(|(a, d)| a - d).collect::<Vec<_>>();
    let probes: Vec<RealMap> = shots
        .iter()
        .map(|s| RealMap::from_vec(g.nx, g.ny, sub(&s.frames[pulse].probe)))
        .collect::<Result<_>>()?;
    let k = probe_components.min(shots.len());
    let basis = ProbeBasis::new(&probes, k)?;
    let outside: Vec<bool> = window.support().iter().map(|s| !s).collect();
    let zero = RealMap::zeros(g.nx, g.ny);
    let scale = atoms_per_signal(physics);
    shots
        .par_iter()
        .map(|s| {
            let atoms = RealMap::from_vec(g.nx, g.ny, sub(&s.frames[pulse].with_atoms))?;
            let probe = basis.reconstruct(&atoms, &outside)?;
            let (signal, _) = pci_signal(&atoms, &probe, &zero, Some(&window.weights))?;
            Ok(signal.map(|v| v * scale))
        })
        .collect()
}

/// Measured densities of one pulse straight from the simulator.
pub fn densities_from_ensemble(ensemble: &Ensemble, pulse: usize) -> Result<Vec<RealMap>> {
    if pulse >= ensemble.pulses.len() {
        return Err(invalid("pulse index out of range"));
    }
    Ok(ensemble.shots.iter().map(|s| s.outcomes[pulse].clone()).collect())
}

/// Ensemble-averaged CCF between two pulses.
#[derive(Debug, Clone)]
pub struct CcfEstimate {
    /// Centred lags, m.
    pub dx: Vec<f64>,
    pub mean: Vec<f64>,
    pub sem: Vec<f64>,
    /// Shot-averaged CPSD after all artifact treatments.
    pub cpsd: ComplexMap,
    pub shot_noise_offset: Option<f64>,
    pub small_k: Option<SmallKReport>,
    pub small_k_mask: Option<KMask>,
    pub shots: usize,
    /// Per-shot CCF curves on the same lags.
    pub rows: Vec<Vec<f64>>,
}

/// Windowed spectra of one pulse's fluctuation maps.
pub struct Spectra {
    pub maps: Vec<ComplexMap>,
    pub grid: Grid,
}

pub fn spectra(fluctuations: &[RealMap], window: &Window, grid: Grid) -> Result<Spectra> {
    let maps = fluctuations
        .par_iter()
        .map(|m| spectrum(&window.apply(m)?, window.energy))
        .collect::<Result<Vec<_>>>()?;
    Ok(Spectra { maps, grid })
}

/// CCF between the same shots of pulse spectra `a` and `b`. Passing the
/// same spectra twice gives the PSD path with shot-noise offset removal.
pub fn correlate(
    a: &Spectra,
    b: &Spectra,
    same_pulse: bool,
    na_mask: &KMask,
    small_k: &SmallK,
) -> Result<CcfEstimate> {
    let m = a.maps.len();
    if m != b.maps.len() || m < 2 {
        return Err(invalid("both pulses need the same number (≥ 2) of shots"));
    }
    a.grid.check_same(&b.grid)?;
    let grid = a.grid;
    let (mask, cleaner) = match small_k {
        SmallK::None => (None, None),
        SmallK::Zero { mask } => (Some(mask.build(&grid)), None),
        SmallK::Pca { mask, basis_size, retain } => {
            let km = mask.build(&grid);
            let size = (*basis_size).min(m * (m - 1));
            let pairs = mismatched_pairs(m, size)?;
            let mismatched = pairs
                .par_iter()
                .map(|&(i, j)| {
                    let mut c = cpsd_of_spectra(&a.maps[i], &b.maps[j])?;
                    restrict_to_na(&mut c, na_mask)?;
                    Ok(c)
                })
                .collect::<Result<Vec<_>>>()?;
            let cleaner = SmallKCleaner::fit(&mismatched, &km, *retain)?;
            (Some(km), Some(cleaner))
        }
    };

    let per_shot = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut c = cpsd_of_spectra(&a.maps[j], &b.maps[j])?;
            let offset = if same_pulse {
                Some(remove_shot_noise_offset(&mut c, na_mask)?)
            } else {
                restrict_to_na(&mut c, na_mask)?;
                None
            };
            match (&cleaner, &mask) {
                (Some(cl), _) => cl.apply(&mut c),
                (None, Some(km)) => small_k_mask(&mut c, km)?,
                _ => {}
            }
            Ok((to_1d_ccf(&c), c, offset))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cpsd = ComplexMap::zeros(grid.nx, grid.ny);
    let mut offsets = Vec::new();
    let mut rows = Vec::with_capacity(m);
    for (ccf, c, off) in per_shot {
        for (s, v) in cpsd.data.iter_mut().zip(&c.data) {
            *s += v / m as f64;
        }
        offsets.extend(off);
        rows.push(ccf);
    }
    let (mean, sem) = column_mean_sem(&rows);
    Ok(CcfEstimate {
        dx: lag_axis(grid.nx, grid.pitch),
        mean,
        sem,
        cpsd,
        shot_noise_offset: (!offsets.is_empty()).then(|| crate::stats::mean(&offsets)),
        small_k: cleaner.map(|c| c.report),
        small_k_mask: mask,
        shots: m,
        rows,
    })
}

/// Fluctuation maps for every pulse of an ensemble.
#[derive(Debug, Clone)]
pub struct FluctuationSet {
    /// `maps[pulse][shot]`.
    pub maps: Vec<Vec<RealMap>>,
    pub window: Window,
    pub physics: PhysicsConfig,
    pub times: Vec<f64>,
}

impl FluctuationSet {
    pub fn from_densities(
        densities: Vec<Vec<RealMap>>,
        physics: &PhysicsConfig,
        times: Vec<f64>,
        config: &AnalysisConfig,
    ) -> Result<Self> {
        let window = config.window(physics)?;
        let maps = densities
            .iter()
            .map(|d| {
                let k = config.fluctuation_components.min(d.len().saturating_sub(1));
                extract_fluctuations(d, k)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { maps, window, physics: physics.clone(), times })
    }

    /// Skip the imaging stage and analyse the simulated outcomes directly.
    pub fn from_ensemble(ensemble: &Ensemble, config: &AnalysisConfig) -> Result<Self> {
        let d = (0..ensemble.pulses.len())
            .map(|p| densities_from_ensemble(ensemble, p))
            .collect::<Result<Vec<_>>>()?;
        let times = ensemble.pulses.iter().map(|p| p.time).collect();
        Self::from_densities(d, &ensemble.config, times, config)
    }

    pub fn from_frames(
        shots: &[RenderedShot],
        ensemble: &Ensemble,
        config: &AnalysisConfig,
    ) -> Result<Self> {
        let window = config.window(&ensemble.config)?;
        let d = (0..ensemble.pulses.len())
            .map(|p| densities_from_frames(shots, p, &ensemble.config, &window, config.probe_components))
            .collect::<Result<Vec<_>>>()?;
        let times = ensemble.pulses.iter().map(|p| p.time).collect();
        Self::from_densities(d, &ensemble.config, times, config)
    }

    pub fn ccf(&self, first: usize, second: usize, config: &AnalysisConfig) -> Result<CcfEstimate> {
        if first >= self.maps.len() || second >= self.maps.len() {
            return Err(invalid("pulse index out of range"));
        }
        let grid = self.physics.grid;
        let na = config.na_mask(&self.physics);
        let a = spectra(&self.maps[first], &self.window, grid)?;
        if first == second {
            return correlate(&a, &a, true, &na, &config.small_k);
        }
        let b = spectra(&self.maps[second], &self.window, grid)?;
        correlate(&a, &b, false, &na, &config.small_k)
    }
}
