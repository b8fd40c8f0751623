//! From raw frames to windowed fluctuation maps.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::pca::{decompose, dot};
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, RealMap};

/// Largest tolerated fraction of window pixels with a non-positive PCI denominator.
pub const BAD_PROBE_LIMIT: f64 = 1e-3;

/// PCI signal g_PCI = 1 − (I₊ − D)/(I₀ − D).
///
/// Pixels whose denominator is not positive are set to zero and counted.
/// Inside `window` (weight > 0) more than 0.1% of such pixels is an error.
pub fn pci_signal(
    with_atoms: &RealMap,
    probe: &RealMap,
    dark: &RealMap,
    window: Option<&RealMap>,
) -> Result<(RealMap, usize)> {
    with_atoms.same_shape(probe)?;
    with_atoms.same_shape(dark)?;
    let mut bad_total = 0usize;
    let mut bad_window = 0usize;
    let mut window_pixels = 0usize;
    let mut out = RealMap::zeros(with_atoms.nx, with_atoms.ny);
    for idx in 0..with_atoms.data.len() {
        let inside = window.map_or(true, |w| w.data[idx] > 0.0);
        window_pixels += inside as usize;
        let den = probe.data[idx] - dark.data[idx];
        if den > 0.0 {
            out.data[idx] = 1.0 - (with_atoms.data[idx] - dark.data[idx]) / den;
        } else {
            bad_total += 1;
            bad_window += inside as usize;
        }
    }
    if bad_window as f64 > BAD_PROBE_LIMIT * window_pixels as f64 {
        return Err(Error::BadProbe { bad: bad_window, total: window_pixels });
    }
    Ok((out, bad_total))
}

/// Optimised probes from an ensemble of probe-only frames.
#[derive(Debug, Clone)]
pub struct ProbeBasis {
    pub mean: Vec<f64>,
    /// Orthonormal principal components of the probe ensemble.
    pub components: Vec<Vec<f64>>,
}

impl ProbeBasis {
    /// Principal-component basis of `probes` with at most `n_components`
    /// directions. A rank-deficient ensemble keeps only its non-null
    /// directions; with none left the ensemble mean alone is used.
    pub fn new(probes: &[RealMap], n_components: usize) -> Result<Self> {
        if probes.is_empty() {
            return Err(invalid("probe ensemble is empty"));
        }
        if probes.len() < n_components {
            return Err(invalid(format!(
                "probe ensemble of {} frames cannot support {n_components} components",
                probes.len()
            )));
        }
        for p in probes {
            probes[0].same_shape(p)?;
        }
        let rows: Vec<Vec<f64>> = probes.iter().map(|p| p.data.clone()).collect();
        let pca = decompose(&rows, true);
        if pca.vectors.len() < n_components {
            log::warn!(
                "probe ensemble has rank {} < {n_components}; {}",
                pca.vectors.len(),
                if pca.vectors.is_empty() { "using the ensemble mean" } else { "dropping null directions" }
            );
        }
        let components = pca.vectors.into_iter().take(n_components).collect();
        Ok(Self { mean: pca.mean.unwrap_or_default(), components })
    }

    /// Probe that best matches `frame` on the pixels where `fit_mask` is true.
    pub fn reconstruct(&self, frame: &RealMap, fit_mask: &[bool]) -> Result<RealMap> {
        if frame.data.len() != self.mean.len() || fit_mask.len() != self.mean.len() {
            return Err(Error::DimensionMismatch("probe basis and frame differ in size".into()));
        }
        let k = self.components.len();
        let mut out = self.mean.clone();
        if k > 0 {
            let idx: Vec<usize> = (0..fit_mask.len()).filter(|&i| fit_mask[i]).collect();
            let a = DMatrix::from_fn(idx.len(), k, |r, c| self.components[c][idx[r]]);
            let b = DVector::from_iterator(idx.len(), idx.iter().map(|&i| frame.data[i] - self.mean[i]));
            let coef = a
                .svd(true, true)
                .solve(&b, 1e-12)
                .map_err(|e| Error::Data(format!("probe fit failed: {e}")))?;
            for (c, u) in coef.iter().zip(&self.components) {
                for (o, &v) in out.iter_mut().zip(u) {
                    *o += c * v;
                }
            }
        }
        RealMap::from_vec(frame.nx, frame.ny, out)
    }

    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.components.iter().enumerate() {
            for (j, b) in self.components.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(a, b) - want).abs());
            }
        }
        worst
    }
}

/// Pair each with-atoms frame with a probe rebuilt from the probe ensemble,
/// fitted outside the atomic region (`fit_mask` true where no atoms are).
pub fn pca_probe_reconstruct(
    probes: &[RealMap],
    with_atoms: &[RealMap],
    fit_mask: &[bool],
    n_components: usize,
) -> Result<Vec<RealMap>> {
    let basis = ProbeBasis::new(probes, n_components)?;
    with_atoms.iter().map(|f| basis.reconstruct(f, fit_mask)).collect()
}

/// Subtract from every density map its reconstruction from the ensemble mean
/// and the `n_components` leading principal components.
pub fn extract_fluctuations(densities: &[RealMap], n_components: usize) -> Result<Vec<RealMap>> {
    if densities.len() < 2 {
        return Err(invalid("need at least two density maps"));
    }
    if n_components >= densities.len() {
        return Err(invalid(format!(
            "{n_components} components requested from {} maps",
            densities.len()
        )));
    }
    for d in densities {
        densities[0].same_shape(d)?;
    }
    if n_components == 0 {
        let n = densities.len() as f64;
        let mut mean = vec![0.0; densities[0].len()];
        for d in densities {
            for (m, v) in mean.iter_mut().zip(&d.data) {
                *m += v / n;
            }
        }
        return densities
            .iter()
            .map(|d| RealMap::from_vec(d.nx, d.ny, d.data.iter().zip(&mean).map(|(v, m)| v - m).collect()))
            .collect();
    }
    let rows: Vec<Vec<f64>> = densities.iter().map(|d| d.data.clone()).collect();
    let pca = decompose(&rows, true);
    let mean = pca.mean.as_ref().expect("centred decomposition");
    densities
        .iter()
        .map(|d| {
            let proj = pca.project(&d.data, n_components);
            let data = d.data.iter().zip(mean).zip(&proj).map(|((v, m), p)| v - m - p).collect();
            RealMap::from_vec(d.nx, d.ny, data)
        })
        .collect()
}

/// Squircle-supported Tukey window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowGeometry {
    /// Semi-axis along x, m.
    pub semi_x: f64,
    /// Semi-axis along y, m.
    pub semi_y: f64,
    /// Fraction of the radius over which the weight tapers to zero.
    pub taper: f64,
    /// Centre offset from the grid centre, m.
    pub center: (f64, f64),
}

/// Default horizontal extent relative to the cloud half-length.
pub const WINDOW_MARGIN: f64 = 1.1;
pub const DEFAULT_TAPER: f64 = 0.2;

impl WindowGeometry {
    pub fn for_cloud(radius_long: f64, semi_y: f64) -> Self {
        Self { semi_x: WINDOW_MARGIN * radius_long, semi_y, taper: DEFAULT_TAPER, center: (0.0, 0.0) }
    }

    /// Superellipse radius (|x/a|⁴ + |y/b|⁴)^{1/4}.
    pub fn radius(&self, x: f64, y: f64) -> f64 {
        let u = ((x - self.center.0) / self.semi_x).abs().powi(4);
        let v = ((y - self.center.1) / self.semi_y).abs().powi(4);
        (u + v).powf(0.25)
    }

    /// Tukey profile as a function of the squircle radius.
    pub fn profile(&self, r: f64) -> f64 {
        if r >= 1.0 {
            0.0
        } else if self.taper <= 0.0 || r <= 1.0 - self.taper {
            1.0
        } else {
            let s = (r - (1.0 - self.taper)) / self.taper;
            0.5 * (1.0 + (std::f64::consts::PI * s).cos())
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.semi_x > 0.0 && self.semi_y > 0.0) || !(0.0..=1.0).contains(&self.taper) {
            return Err(invalid("window semi-axes must be positive and taper in [0, 1]"));
        }
        let half_x = 0.5 * grid.nx as f64 * grid.pitch;
        let half_y = 0.5 * grid.ny as f64 * grid.pitch;
        if self.center.0.abs() + self.semi_x > half_x || self.center.1.abs() + self.semi_y > half_y {
            return Err(invalid("window support extends beyond the frame"));
        }
        Ok(())
    }

    pub fn build(&self, grid: &Grid) -> Result<Window> {
        self.validate(grid)?;
        let weights = RealMap::from_fn(grid.nx, grid.ny, |i, j| self.profile(self.radius(grid.x(i), grid.y(j))));
        let energy = weights.sum_sq();
        Ok(Window { geometry: *self, weights, energy })
    }
}

#[derive(Debug, Clone)]
pub struct Window {
    pub geometry: WindowGeometry,
    pub weights: RealMap,
    /// Σ w².
    pub energy: f64,
}

impl Window {
    pub fn apply(&self, map: &RealMap) -> Result<RealMap> {
        map.same_shape(&self.weights)?;
        let data = map.data.iter().zip(&self.weights.data).map(|(a, w)| a * w).collect();
        RealMap::from_vec(map.nx, map.ny, data)
    }

    pub fn support(&self) -> Vec<bool> {
        self.weights.data.iter().map(|&w| w > 0.0).collect()
    }
}
