//! 1D cross-correlation functions, the Van Hove matrix and the dynamical
//! structure factor.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::fourier::{fft1, fftshift1};
use crate::grid::{fft_index, ComplexMap};

/// y-averaged 1D CCF on centred lags δx = −Nx/2 … Nx/2 − 1 pixels:
/// ccf(δx) = (1/Nx) Σ_kx CPSD(kx, 0) e^{−i kx δx}.
///
/// With the window normalisation of the spectra this equals
/// Σ_{x, y, y'} a(x, y) b(x + δx, y') / Σw², i.e. the spatial cross
/// correlation summed over all transverse offsets.
pub fn to_1d_ccf(cpsd: &ComplexMap) -> Vec<f64> {
    let row: Vec<Complex64> = cpsd.row(0).to_vec();
    let s = 1.0 / (cpsd.nx as f64).sqrt();
    fftshift1(&fft1(&row)).iter().map(|v| v.re * s).collect()
}

/// Centred lag axis in metres matching [`to_1d_ccf`].
pub fn lag_axis(nx: usize, pitch: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..nx).map(|i| fft_index(i, nx) as f64 * pitch).collect();
    fftshift1(&raw)
}

/// Average a centred-lag curve with its mirror image δx → −δx.
pub fn symmetrize(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let c = n / 2;
    (0..n)
        .map(|i| {
            let lag = i as isize - c as isize;
            let mirror = (c as isize - lag).rem_euclid(n as isize) as usize;
            0.5 * (values[i] + values[mirror])
        })
        .collect()
}

/// G(δx, δt): one CCF per time separation.
#[derive(Debug, Clone, PartialEq)]
pub struct VanHove {
    pub dx: Vec<f64>,
    pub dt: Vec<f64>,
    /// `values[t][x]`.
    pub values: Vec<Vec<f64>>,
    /// Standard errors, same layout.
    pub errors: Vec<Vec<f64>>,
    pub symmetrized: bool,
}

pub fn assemble_van_hove(
    dx: Vec<f64>,
    slices: Vec<(f64, Vec<f64>, Vec<f64>)>,
    symmetrized: bool,
) -> Result<VanHove> {
    if slices.is_empty() {
        return Err(invalid("no CCF slices"));
    }
    let mut slices = slices;
    slices.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = VanHove { dx, dt: Vec::new(), values: Vec::new(), errors: Vec::new(), symmetrized };
    for (t, v, e) in slices {
        if v.len() != out.dx.len() || e.len() != out.dx.len() {
            return Err(invalid("CCF slice length does not match the lag axis"));
        }
        out.dt.push(t);
        if symmetrized {
            out.values.push(symmetrize(&v));
            // Mirrored pairs are averaged; errors shrink by at most √2, keep the conservative value.
            out.errors.push(symmetrize(&e));
        } else {
            out.values.push(v);
            out.errors.push(e);
        }
    }
    Ok(out)
}

impl VanHove {
    /// Linear interpolation onto a uniform δt grid `start + i·step`.
    pub fn resample(&self, start: f64, step: f64, count: usize) -> Result<VanHove> {
        if self.dt.len() < 2 || !(step > 0.0) {
            return Err(invalid("resampling needs at least two slices and a positive step"));
        }
        let mut out = VanHove { dt: Vec::new(), values: Vec::new(), errors: Vec::new(), ..self.clone() };
        for i in 0..count {
            let t = start + step * i as f64;
            if t < self.dt[0] - 1e-12 || t > self.dt[self.dt.len() - 1] + 1e-12 {
                return Err(invalid(format!("δt = {t} s lies outside the measured range")));
            }
            let hi = self.dt.partition_point(|&d| d < t).clamp(1, self.dt.len() - 1);
            let (t0, t1) = (self.dt[hi - 1], self.dt[hi]);
            let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            let lerp = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (1.0 - w) * x + w * y).collect();
            out.dt.push(t);
            out.values.push(lerp(&self.values[hi - 1], &self.values[hi]));
            out.errors.push(lerp(&self.errors[hi - 1], &self.errors[hi]));
        }
        Ok(out)
    }
}

/// S(k, ω) on k ∈ [−k_NA, k_NA] and ω ≥ 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Dsf {
    /// Angular wavenumber, rad/m.
    pub k: Vec<f64>,
    /// Angular frequency, rad/s.
    pub omega: Vec<f64>,
    /// `values[k][ω]`.
    pub values: Vec<Vec<f64>>,
}

impl Dsf {
    /// Wavenumber axis in cycles per metre (k/2π), as used for display.
    pub fn k_cycles(&self) -> Vec<f64> {
        self.k.iter().map(|k| k / (2.0 * PI)).collect()
    }

    pub fn frequency_hz(&self) -> Vec<f64> {
        self.omega.iter().map(|w| w / (2.0 * PI)).collect()
    }

    /// ω at the spectral-weight maximum of each k column.
    pub fn ridge(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|col| {
                let best = (0..col.len()).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap_or(0);
                self.omega[best]
            })
            .collect()
    }

    pub fn omega_step(&self) -> f64 {
        self.omega.get(1).map_or(0.0, |w| w - self.omega[0])
    }
}

/// Two-dimensional transform S(k, ω) = Σ G(δx, δt) e^{−i(k δx − ω δt)} δx_step δt_step.
///
/// Negative time separations are filled from G(δx, −δt) = G(−δx, δt), so the
/// stored δt values must be non-negative and, once mirrored, uniformly
/// spaced (e.g. 0, Δ, 2Δ, … or Δ/2, 3Δ/2, …). Use [`VanHove::resample`]
/// for other grids.
pub fn dsf(vh: &VanHove, k_na: f64) -> Result<Dsf> {
    let nt = vh.dt.len();
    if nt < 2 {
        return Err(invalid("the DSF needs at least two δt slices"));
    }
    if vh.dt[0] < 0.0 {
        return Err(invalid("δt values must be non-negative"));
    }
    let step = vh.dt[1] - vh.dt[0];
    let uniform = vh.dt.windows(2).all(|w| ((w[1] - w[0]) - step).abs() <= 1e-6 * step);
    let zero_start = vh.dt[0].abs() <= 1e-9 * step;
    let half_start = (vh.dt[0] - 0.5 * step).abs() <= 1e-6 * step;
    if !(step > 0.0 && uniform && (zero_start || half_start)) {
        return Err(invalid("δt grid is not uniform after mirroring; resample first"));
    }

    let nx = vh.dx.len();
    let pitch = vh.dx[1] - vh.dx[0];
    let c = nx / 2;
    let mirror = |row: &[f64]| -> Vec<f64> {
        (0..nx).map(|i| row[(2 * c + nx - i) % nx]).collect()
    };
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for t in (0..nt).rev() {
        if zero_start && t == 0 {
            continue;
        }
        times.push(-vh.dt[t]);
        rows.push(mirror(&vh.values[t]));
    }
    for t in 0..nt {
        times.push(vh.dt[t]);
        rows.push(vh.values[t].clone());
    }
    let n_time = times.len();

    // Spatial transform of each row; rows are on centred lags, so undo the shift first.
    let spatial: Vec<Vec<Complex64>> = rows
        .iter()
        .map(|row| {
            let unshifted: Vec<Complex64> = (0..nx).map(|i| Complex64::new(row[(i + c) % nx], 0.0)).collect();
            let s = (nx as f64).sqrt() * pitch;
            fft1(&unshifted).into_iter().map(|v| v * s).collect()
        })
        .collect();

    let k_all: Vec<f64> = (0..nx).map(|i| 2.0 * PI * fft_index(i, nx) as f64 / (nx as f64 * pitch)).collect();
    let mut kept: Vec<usize> = (0..nx).filter(|&i| k_all[i].abs() <= k_na).collect();
    kept.sort_by(|&a, &b| k_all[a].total_cmp(&k_all[b]));
    let d_omega = 2.0 * PI / (n_time as f64 * step);
    let omega: Vec<f64> = (0..=n_time / 2).map(|m| m as f64 * d_omega).collect();
    let values = kept
        .iter()
        .map(|&ki| {
            omega
                .iter()
                .map(|&w| {
                    let mut acc = Complex64::default();
                    for (t, s) in times.iter().zip(&spatial) {
                        acc += s[ki] * Complex64::from_polar(1.0, w * t);
                    }
                    acc.re * step
                })
                .collect()
        })
        .collect();
    Ok(Dsf { k: kept.iter().map(|&i| k_all[i]).collect(), omega, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::spectral::cpsd;
    use crate::grid::{Grid, RealMap};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn delta_correlation_gives_delta_ccf() {
        let (nx, ny) = (16, 4);
        let flat = ComplexMap::from_fn(nx, ny, |_, _| Complex64::new(1.0, 0.0));
        let ccf = to_1d_ccf(&flat);
        for (i, v) in ccf.iter().enumerate() {
            let want = if i == nx / 2 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12, "{i}: {v}");
        }
    }

    #[test]
    fn wiener_khinchin() {
        let g = Grid::new(24, 6, 1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = RealMap::from_fn(g.nx, g.ny, |_, _| rng.random::<f64>() - 0.5);
        let b = RealMap::from_fn(g.nx, g.ny, |_, _| rng.random::<f64>() - 0.5);
        let energy = 37.0;
        let ccf = to_1d_ccf(&cpsd(&a, &b, energy).unwrap());
        let lags = lag_axis(g.nx, 1.0);
        for (v, lag) in ccf.iter().zip(&lags) {
            let d = *lag as isize;
            let mut direct = 0.0;
            for y in 0..g.ny {
                for y2 in 0..g.ny {
                    for x in 0..g.nx {
                        let x2 = (x as isize + d).rem_euclid(g.nx as isize) as usize;
                        direct += a[(x, y)] * b[(x2, y2)];
                    }
                }
            }
            direct /= energy;
            assert!((v - direct).abs() <= 1e-10 * direct.abs().max(1e-3), "lag {d}: {v} vs {direct}");
        }
    }

    #[test]
    fn symmetrize_is_even() {
        let v: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let s = symmetrize(&v);
        for l in 1..4 {
            assert_eq!(s[4 + l], s[4 - l]);
        }
    }

    fn travelling(k0: f64, w0: f64, dt: &[f64], nx: usize, pitch: f64) -> VanHove {
        let dx = lag_axis(nx, pitch);
        let values: Vec<Vec<f64>> = dt.iter().map(|t| dx.iter().map(|x| (k0 * x - w0 * t).cos()).collect()).collect();
        let errors = vec![vec![0.0; nx]; dt.len()];
        VanHove { dx, dt: dt.to_vec(), values, errors, symmetrized: false }
    }

    #[test]
    fn travelling_cosine_peaks_at_its_frequency() {
        let (nx, pitch) = (128, 0.5e-6);
        let dk = 2.0 * PI / (nx as f64 * pitch);
        let k0 = 12.0 * dk;
        let step = 0.5e-3;
        let dt: Vec<f64> = (0..8).map(|i| (i as f64 + 0.5) * step).collect();
        let w0 = 3.0 * 2.0 * PI / (16.0 * step);
        let s = dsf(&travelling(k0, w0, &dt, nx, pitch), 2.6e6).unwrap();
        let (mut best, mut at) = (f64::MIN, (0.0, 0.0));
        for (ki, col) in s.values.iter().enumerate() {
            for (wi, v) in col.iter().enumerate() {
                if *v > best {
                    best = *v;
                    at = (s.k[ki], s.omega[wi]);
                }
            }
        }
        assert!((at.0 - k0).abs() < 0.5 * dk && (at.1 - w0).abs() < 0.5 * s.omega_step(), "{at:?}");
        assert!(s.k.iter().all(|k| k.abs() <= 2.6e6));
    }

    #[test]
    fn dsf_rejects_irregular_grid() {
        let vh = travelling(1e6, 1e3, &[0.0, 1e-3, 3e-3], 32, 1e-6);
        assert!(dsf(&vh, 2e6).is_err());
        let fixed = vh.resample(0.0, 1e-3, 4).unwrap();
        assert_eq!(fixed.dt.len(), 4);
        assert!(dsf(&fixed, 2e6).is_ok());
        assert!(vh.resample(0.0, 1e-3, 5).is_err());
    }

    #[test]
    fn na_band_edge() {
        let c = crate::model::PhysicalConstants::rb87_d2();
        let edge = c.k_na(0.32) / (2.0 * PI) * 1e-6;
        assert!((edge - 0.41).abs() < 0.005, "{edge}");
    }
}
