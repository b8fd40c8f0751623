//! Power and cross-power spectral densities and their artifact treatments.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::pca::{decompose, Components};
use crate::error::{invalid, Result};
use crate::fourier::fft2_real;
use crate::grid::{Array2, ComplexMap, Grid, RealMap};

/// Boolean k-space mask in FFT ordering.
pub type KMask = Array2<bool>;

/// Spectrum normalised so that white noise of variance σ² (under the window)
/// has a flat PSD equal to σ².
pub fn spectrum(map: &RealMap, window_energy: f64) -> Result<ComplexMap> {
    if !(window_energy > 0.0) {
        return Err(invalid("window energy must be positive"));
    }
    let mut f = fft2_real(map);
    let s = (map.len() as f64 / window_energy).sqrt();
    f.data.iter_mut().for_each(|v| *v *= s);
    Ok(f)
}

/// CPSD = ñ₁ ñ₂* of two normalised spectra.
pub fn cpsd_of_spectra(a: &ComplexMap, b: &ComplexMap) -> Result<ComplexMap> {
    a.same_shape(b)?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x * y.conj()).collect();
    ComplexMap::from_vec(a.nx, a.ny, data)
}

pub fn psd(map: &RealMap, window_energy: f64) -> Result<ComplexMap> {
    let s = spectrum(map, window_energy)?;
    cpsd_of_spectra(&s, &s)
}

pub fn cpsd(a: &RealMap, b: &RealMap, window_energy: f64) -> Result<ComplexMap> {
    a.same_shape(b)?;
    cpsd_of_spectra(&spectrum(a, window_energy)?, &spectrum(b, window_energy)?)
}

/// Subtract the mean PSD level outside `na_mask` and zero everything outside.
/// Returns the subtracted offset.
pub fn remove_shot_noise_offset(psd: &mut ComplexMap, na_mask: &KMask) -> Result<f64> {
    psd.same_shape(na_mask)?;
    let outside: Vec<f64> = psd
        .data
        .iter()
        .zip(&na_mask.data)
        .filter(|(_, &inside)| !inside)
        .map(|(v, _)| v.re)
        .collect();
    if outside.is_empty() {
        return Err(invalid("the NA mask leaves no region to estimate the shot-noise offset"));
    }
    let offset = crate::stats::mean(&outside);
    for (v, &inside) in psd.data.iter_mut().zip(&na_mask.data) {
        *v = if inside { *v - offset } else { Complex64::default() };
    }
    Ok(offset)
}

/// Zero everything outside the NA disk (no offset; used for CPSDs).
pub fn restrict_to_na(spec: &mut ComplexMap, na_mask: &KMask) -> Result<()> {
    spec.same_shape(na_mask)?;
    for (v, &inside) in spec.data.iter_mut().zip(&na_mask.data) {
        if !inside {
            *v = Complex64::default();
        }
    }
    Ok(())
}

/// Region of k-space treated as artifact-prone. Wavenumbers in 1/m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KMaskSpec {
    Empty,
    Full,
    /// |k| ≤ radius.
    Disk { radius: f64 },
    /// Band along one axis: |k_y| ≤ half_width and |k_x| ≤ extent.
    Strip { extent: f64, half_width: f64 },
    /// Closed polygon in (k_x, k_y); mirrored through the origin.
    Polygon { vertices: Vec<(f64, f64)> },
    Union { parts: Vec<KMaskSpec> },
}

fn in_polygon(p: (f64, f64), v: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = v.len();
    for i in 0..n {
        let (a, b) = (v[i], v[(i + n - 1) % n]);
        if (a.1 > p.1) != (b.1 > p.1) {
            let x = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
            if p.0 < x {
                inside = !inside;
            }
        }
    }
    inside
}

impl KMaskSpec {
    pub fn contains(&self, kx: f64, ky: f64) -> bool {
        match self {
            KMaskSpec::Empty => false,
            KMaskSpec::Full => true,
            KMaskSpec::Disk { radius } => kx * kx + ky * ky <= radius * radius,
            KMaskSpec::Strip { extent, half_width } => kx.abs() <= *extent && ky.abs() <= *half_width,
            KMaskSpec::Polygon { vertices } => {
                in_polygon((kx, ky), vertices) || in_polygon((-kx, -ky), vertices)
            }
            KMaskSpec::Union { parts } => parts.iter().any(|p| p.contains(kx, ky)),
        }
    }

    pub fn build(&self, grid: &Grid) -> KMask {
        Array2::from_fn(grid.nx, grid.ny, |i, j| self.contains(grid.kx(i), grid.ky(j)))
    }
}

/// Zero the masked region in place.
pub fn small_k_mask(spec: &mut ComplexMap, mask: &KMask) -> Result<()> {
    spec.same_shape(mask)?;
    for (v, &m) in spec.data.iter_mut().zip(&mask.data) {
        if m {
            *v = Complex64::default();
        }
    }
    Ok(())
}

/// How many components to subtract in [`pca_small_k_removal`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Retain {
    Count(usize),
    /// Smallest count whose cumulative explained variance reaches the value.
    Variance(f64),
}

pub const DEFAULT_RETAINED_VARIANCE: f64 = 0.87;

#[derive(Debug, Clone)]
pub struct SmallKReport {
    pub retained: usize,
    pub basis_size: usize,
    pub explained: f64,
}

/// Principal components of mismatched-shot CPSDs restricted to a k-space mask.
#[derive(Debug, Clone)]
pub struct SmallKCleaner {
    idx: Vec<usize>,
    pca: Option<Components<Complex64>>,
    pub report: SmallKReport,
}

impl SmallKCleaner {
    pub fn fit(mismatched: &[ComplexMap], mask: &KMask, retain: Retain) -> Result<Self> {
        for c in mismatched {
            c.same_shape(mask)?;
        }
        let idx: Vec<usize> = (0..mask.len()).filter(|&i| mask.data[i]).collect();
        let empty = SmallKReport { retained: 0, basis_size: mismatched.len(), explained: 0.0 };
        if matches!(retain, Retain::Count(0)) || mismatched.is_empty() || idx.is_empty() {
            return Ok(Self { idx, pca: None, report: empty });
        }
        let rows: Vec<Vec<Complex64>> =
            mismatched.iter().map(|c| idx.iter().map(|&i| c.data[i]).collect()).collect();
        let pca = decompose(&rows, false);
        let k = match retain {
            Retain::Count(k) => k.min(pca.vectors.len()),
            Retain::Variance(f) => pca.count_for_variance(f),
        };
        let explained = if pca.total > 0.0 { pca.variances.iter().take(k).sum::<f64>() / pca.total } else { 0.0 };
        Ok(Self { idx, pca: Some(pca), report: SmallKReport { retained: k, basis_size: mismatched.len(), explained } })
    }

    /// Subtract the retained projections inside the mask.
    pub fn apply(&self, cpsd: &mut ComplexMap) {
        let Some(pca) = &self.pca else { return };
        if self.report.retained == 0 {
            return;
        }
        let x: Vec<Complex64> = self.idx.iter().map(|&i| cpsd.data[i]).collect();
        let p = pca.project(&x, self.report.retained);
        for (&i, v) in self.idx.iter().zip(p) {
            cpsd.data[i] -= v;
        }
    }
}

/// Remove small-k artifacts from `cpsds` using principal components of
/// CPSDs between mismatched shots. Only entries inside `mask` change.
pub fn pca_small_k_removal(
    cpsds: &mut [ComplexMap],
    mismatched: &[ComplexMap],
    mask: &KMask,
    retain: Retain,
) -> Result<SmallKReport> {
    for c in cpsds.iter() {
        c.same_shape(mask)?;
    }
    let cleaner = SmallKCleaner::fit(mismatched, mask, retain)?;
    for c in cpsds.iter_mut() {
        cleaner.apply(c);
    }
    Ok(cleaner.report)
}

/// Deterministic list of mismatched (shot, other shot) pairings, at most `limit`.
pub fn mismatched_pairs(shots: usize, limit: usize) -> Result<Vec<(usize, usize)>> {
    let available = shots * shots.saturating_sub(1);
    if limit > available {
        return Err(invalid(format!("basis of {limit} exceeds the {available} available mismatched pairings")));
    }
    let mut out = Vec::with_capacity(limit);
    'outer: for offset in 1..shots {
        for j in 0..shots {
            if out.len() == limit {
                break 'outer;
            }
            out.push((j, (j + offset) % shots));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::disk_mask;
    use crate::stats::{mean, sem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn noise(g: &Grid, sd: f64, rng: &mut ChaCha8Rng) -> RealMap {
        RealMap::from_fn(g.nx, g.ny, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn cpsd_with_itself_is_psd_and_hermitian() {
        let g = Grid::new(32, 16, 1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b) = (noise(&g, 1.0, &mut rng), noise(&g, 1.0, &mut rng));
        assert_eq!(psd(&a, 512.0).unwrap().data, cpsd(&a, &a, 512.0).unwrap().data);
        let c = cpsd(&a, &b, 512.0).unwrap();
        for j in 0..16 {
            for i in 0..32 {
                let m = c[((32 - i) % 32, (16 - j) % 16)];
                assert!((c[(i, j)] - m.conj()).norm() < 1e-12);
            }
        }
        assert!(cpsd(&a, &RealMap::zeros(8, 8), 1.0).is_err());
    }

    #[test]
    fn white_noise_psd_equals_variance() {
        let g = Grid::new(32, 16, 1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sd = 1.7;
        let mut acc = vec![0.0; g.len()];
        let n = 1000;
        for _ in 0..n {
            let p = psd(&noise(&g, sd, &mut rng), g.len() as f64).unwrap();
            for (a, v) in acc.iter_mut().zip(&p.data) {
                *a += v.re / n as f64;
            }
        }
        let m = mean(&acc);
        assert!((m / (sd * sd) - 1.0).abs() < 0.01, "mean {m}");
        // Flat: every bin within 5 standard errors of σ².
        let se = sd * sd / (n as f64).sqrt();
        assert!(acc.iter().all(|v| (v - sd * sd).abs() < 5.0 * se));
    }

    #[test]
    fn shot_noise_removal() {
        let g = Grid::new(64, 32, 1e-6).unwrap();
        let mask = disk_mask(&g, 1.5e6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut inside_means = Vec::new();
        for _ in 0..200 {
            let mut p = psd(&noise(&g, 2.0, &mut rng), g.len() as f64).unwrap();
            remove_shot_noise_offset(&mut p, &mask).unwrap();
            let inside: Vec<f64> = p.data.iter().zip(&mask.data).filter(|(_, &m)| m).map(|(v, _)| v.re).collect();
            inside_means.push(mean(&inside));
            assert!(p.data.iter().zip(&mask.data).all(|(v, &m)| m || *v == Complex64::default()));
        }
        assert!(mean(&inside_means).abs() < 3.0 * sem(&inside_means));

        let full = Array2::from_fn(g.nx, g.ny, |_, _| true);
        let mut p = psd(&noise(&g, 1.0, &mut rng), 1.0).unwrap();
        assert!(remove_shot_noise_offset(&mut p, &full).is_err());
    }

    #[test]
    fn signal_inside_mask_is_untouched() {
        let g = Grid::new(16, 8, 1e-6).unwrap();
        let mask = disk_mask(&g, 2.0e6);
        let mut p = ComplexMap::from_fn(g.nx, g.ny, |i, j| {
            if mask[(i, j)] { Complex64::new(i as f64 + 1.0, 0.0) } else { Complex64::default() }
        });
        let before = p.clone();
        remove_shot_noise_offset(&mut p, &mask).unwrap();
        assert_eq!(p.data, before.data);
    }

    #[test]
    fn small_k_mask_cases() {
        let g = Grid::new(16, 8, 1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base = ComplexMap::from_fn(16, 8, |_, _| Complex64::new(rng.random(), rng.random()));
        let mut a = base.clone();
        small_k_mask(&mut a, &KMaskSpec::Empty.build(&g)).unwrap();
        assert_eq!(a.data, base.data);
        let mut b = base.clone();
        small_k_mask(&mut b, &KMaskSpec::Full.build(&g)).unwrap();
        assert!(b.data.iter().all(|v| *v == Complex64::default()));
        let m = KMaskSpec::Disk { radius: 1.0e6 }.build(&g);
        let mut c = base.clone();
        small_k_mask(&mut c, &m).unwrap();
        let once = c.clone();
        small_k_mask(&mut c, &m).unwrap();
        assert_eq!(c.data, once.data);
    }

    #[test]
    fn polygon_mask_is_point_symmetric() {
        let spec = KMaskSpec::Polygon { vertices: vec![(0.1, 0.0), (1.0, 0.0), (1.0, 0.5), (0.1, 0.5)] };
        assert!(spec.contains(0.5, 0.25));
        assert!(spec.contains(-0.5, -0.25));
        assert!(!spec.contains(-0.5, 0.25));
    }

    #[test]
    fn zero_retained_is_identity() {
        let g = Grid::new(16, 8, 1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mk = |rng: &mut ChaCha8Rng| ComplexMap::from_fn(16, 8, |_, _| Complex64::new(rng.random(), rng.random()));
        let mut c: Vec<ComplexMap> = (0..4).map(|_| mk(&mut rng)).collect();
        let mm: Vec<ComplexMap> = (0..10).map(|_| mk(&mut rng)).collect();
        let before = c.clone();
        let mask = KMaskSpec::Disk { radius: 2e6 }.build(&g);
        pca_small_k_removal(&mut c, &mm, &mask, Retain::Count(0)).unwrap();
        assert_eq!(c[0].data, before[0].data);
        pca_small_k_removal(&mut c, &mm, &mask, Retain::Variance(0.87)).unwrap();
        for (x, y) in c.iter().zip(&before) {
            for k in 0..x.len() {
                if !mask.data[k] {
                    assert_eq!(x.data[k], y.data[k]);
                }
            }
        }
    }

    #[test]
    fn pairing_limits() {
        assert_eq!(mismatched_pairs(4, 12).unwrap().len(), 12);
        assert!(mismatched_pairs(4, 13).is_err());
        assert!(mismatched_pairs(5, 20).unwrap().iter().all(|(a, b)| a != b));
    }
}
