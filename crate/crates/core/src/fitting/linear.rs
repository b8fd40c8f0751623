use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::sound_speed_ratio;

/// Weighted straight line y = intercept + slope·x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub var_slope: f64,
    pub var_intercept: f64,
    pub cov: f64,
    pub chi2: f64,
}

impl LineFit {
    pub fn slope_err(&self) -> f64 {
        self.var_slope.sqrt()
    }

    pub fn intercept_err(&self) -> f64 {
        self.var_intercept.sqrt()
    }

    /// Written as a(x − b): returns (b, σ_b) by error propagation.
    pub fn x_intercept(&self) -> (f64, f64) {
        let (a, c) = (self.slope, self.intercept);
        let b = -c / a;
        let var = self.var_intercept / (a * a) + c * c * self.var_slope / a.powi(4) - 2.0 * c * self.cov / a.powi(3);
        (b, var.max(0.0).sqrt())
    }
}

/// Least-squares line through points with standard errors `se`.
pub fn fit_line(x: &[f64], y: &[f64], se: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() != se.len() {
        return Err(invalid("x, y and se lengths differ"));
    }
    if x.len() < 2 {
        return Err(invalid("a line needs at least two points"));
    }
    if se.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(invalid("standard errors must be positive"));
    }
    let (mut s, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&xi, &yi), &e) in x.iter().zip(y).zip(se) {
        let w = 1.0 / (e * e);
        s += w;
        sx += w * xi;
        sxx += w * xi * xi;
        sy += w * yi;
        sxy += w * xi * yi;
    }
    let det = s * sxx - sx * sx;
    if det.abs() <= 1e-14 * s * sxx {
        return Err(invalid("all x values coincide"));
    }
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let chi2 = x
        .iter()
        .zip(y)
        .zip(se)
        .map(|((&xi, &yi), &e)| ((yi - intercept - slope * xi) / e).powi(2))
        .sum();
    Ok(LineFit { slope, intercept, var_slope: s / det, var_intercept: sxx / det, cov: -sx / det, chi2 })
}

/// Per-shot amplitudes of a fixed line shape: each row is projected onto
/// `template` with weights 1/se².
pub fn template_projections(template: &[f64], rows: &[Vec<f64>], se: &[f64]) -> Result<Vec<f64>> {
    if template.len() != se.len() || rows.iter().any(|r| r.len() != template.len()) {
        return Err(invalid("template, rows and errors must share one lag axis"));
    }
    if rows.len() < 2 {
        return Err(invalid("need at least two per-shot rows"));
    }
    let w: Vec<f64> = se.iter().map(|s| if *s > 0.0 && s.is_finite() { 1.0 / (s * s) } else { 0.0 }).collect();
    let den: f64 = template.iter().zip(&w).map(|(t, w)| w * t * t).sum();
    if !(den > 0.0) {
        return Err(invalid("template carries no weight"));
    }
    Ok(rows
        .iter()
        .map(|r| r.iter().zip(template).zip(&w).map(|((y, t), w)| w * t * y).sum::<f64>() / den)
        .collect())
}

/// Amplitude of a fixed line shape in a curve built as the mean of per-shot
/// `rows`, with a standard error that accounts for correlations between lags.
pub fn template_amplitude(template: &[f64], rows: &[Vec<f64>], se: &[f64]) -> Result<(f64, f64)> {
    let amps = template_projections(template, rows, se)?;
    Ok((crate::stats::mean(&amps), crate::stats::sem(&amps)))
}

/// Ratio of mean per-shot amplitudes ā/b̄ with its delta-method standard
/// error, sem(a − R b)/|b̄|, which keeps the shot-by-shot correlation.
pub fn amplitude_ratio(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(invalid("ratio needs two equal-length samples of at least two shots"));
    }
    let (ma, mb) = (crate::stats::mean(a), crate::stats::mean(b));
    if mb == 0.0 {
        return Err(invalid("reference amplitude is zero"));
    }
    let r = ma / mb;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - r * y).collect();
    Ok((r, crate::stats::sem(&d) / mb.abs()))
}

/// One (R_c, c) measurement with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoundPoint {
    pub condensate_fraction: f64,
    pub sound_speed: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoundFit {
    /// Speed of sound of the fully condensed cloud.
    pub c0: f64,
    pub c0_err: f64,
    pub chi2: f64,
    pub omega_ratio_sq: f64,
}

impl SoundFit {
    pub fn curve(&self, rc: f64) -> Result<f64> {
        Ok(self.c0 * sound_speed_ratio(rc, self.omega_ratio_sq)?)
    }
}

/// Single-parameter fit c = c0 · ratio(R_c). Closed form since the model is
/// linear in c0.
pub fn fit_sound_vs_rc(points: &[SoundPoint], omega_ratio_sq: f64) -> Result<SoundFit> {
    if points.is_empty() {
        return Err(invalid("no (R_c, c) points"));
    }
    let (mut num, mut den) = (0.0, 0.0);
    let mut ratios = Vec::with_capacity(points.len());
    for p in points {
        if !(p.error > 0.0 && p.error.is_finite()) {
            return Err(invalid("sound-speed errors must be positive"));
        }
        let r = sound_speed_ratio(p.condensate_fraction, omega_ratio_sq)?;
        let w = 1.0 / (p.error * p.error);
        num += w * r * p.sound_speed;
        den += w * r * r;
        ratios.push(r);
    }
    if !(den > 0.0) {
        return Err(invalid("degenerate points"));
    }
    let c0 = num / den;
    let chi2 = points.iter().zip(&ratios).map(|(p, r)| ((p.sound_speed - c0 * r) / p.error).powi(2)).sum();
    Ok(SoundFit { c0, c0_err: den.recip().sqrt(), chi2, omega_ratio_sq })
}

/// Back-solve ω_c²/ω_0² so the model passes through (R_c, c) given c0.
pub fn calibrate_omega_ratio_sq(c0: f64, rc: f64, c: f64) -> Result<f64> {
    if !(rc > 0.0 && rc < 1.0) {
        return Err(invalid("calibration needs 0 < R_c < 1"));
    }
    // (c/c0)^{10/3} = R_c^{2/3} [x + R_c(1 − x)] is linear in x.
    let lhs = (c / c0).powf(10.0 / 3.0) / rc.powf(2.0 / 3.0);
    let x = (lhs - rc) / (1.0 - rc);
    if x < 1.0 {
        return Err(invalid("target lies below the ω_c = ω_0 curve"));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn exact_line() {
        let x = [0.3, 0.6, 1.0];
        let y: Vec<f64> = x.iter().map(|g| 2.0 * (g - 0.1)).collect();
        let f = fit_line(&x, &y, &[0.1; 3]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        let (b, _) = f.x_intercept();
        assert!((b - 0.1).abs() < 1e-12);
        assert!(f.chi2 < 1e-20);
        assert!(fit_line(&[1.0, 1.0], &[0.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn line_errors_match_monte_carlo() {
        let x = [0.3, 0.6, 1.0];
        let se = [0.05, 0.08, 0.1];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = Normal::new(0.0, 1.0).unwrap();
        let (mut sb, mut sb2) = (0.0, 0.0);
        let trials = 20000;
        let mut predicted = 0.0;
        for _ in 0..trials {
            let y: Vec<f64> = x.iter().zip(&se).map(|(g, s)| 1.5 * g + s * n.sample(&mut rng)).collect();
            let f = fit_line(&x, &y, &se).unwrap();
            let (b, eb) = f.x_intercept();
            sb += b;
            sb2 += b * b;
            predicted += eb / trials as f64;
        }
        let sd = (sb2 / trials as f64 - (sb / trials as f64).powi(2)).sqrt();
        assert!((sd / predicted - 1.0).abs() < 0.1, "{sd} vs {predicted}");
    }

    #[test]
    fn template_amplitude_of_scaled_rows() {
        let t = [0.0, 1.0, 2.0, 1.0, 0.0];
        let rows: Vec<Vec<f64>> = (0..4).map(|k| t.iter().map(|v| v * (1.0 + 0.1 * k as f64)).collect()).collect();
        let (a, e) = template_amplitude(&t, &rows, &[1.0; 5]).unwrap();
        assert!((a - 1.15).abs() < 1e-12);
        let want = crate::stats::sem(&[1.0, 1.1, 1.2, 1.3]);
        assert!((e - want).abs() < 1e-12);
    }

    #[test]
    fn recovers_c0_exactly() {
        let c0 = 1.37e-3;
        let x = calibrate_omega_ratio_sq(c0, 0.49, 1.28e-3).unwrap();
        assert!((c0 * sound_speed_ratio(0.49, x).unwrap() - 1.28e-3).abs() < 1e-15);
        let points: Vec<SoundPoint> = [0.3, 0.49, 0.7, 0.85, 1.0]
            .iter()
            .map(|&rc| SoundPoint {
                condensate_fraction: rc,
                sound_speed: c0 * sound_speed_ratio(rc, x).unwrap(),
                error: 2e-5,
            })
            .collect();
        let fit = fit_sound_vs_rc(&points, x).unwrap();
        assert!((fit.c0 / c0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_full_fraction_point() {
        let p = SoundPoint { condensate_fraction: 1.0, sound_speed: 1.42e-3, error: 2e-5 };
        let fit = fit_sound_vs_rc(&[p], 3.0).unwrap();
        assert_eq!(fit.c0, 1.42e-3);
        assert!(fit_sound_vs_rc(&[], 3.0).is_err());
    }

    #[test]
    fn noisy_points_within_three_sigma() {
        let c0 = 1.37e-3;
        let x = 2.1;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = Normal::new(0.0, 1.0).unwrap();
        let mut pulls = Vec::new();
        for _ in 0..200 {
            let points: Vec<SoundPoint> = [0.35, 0.5, 0.65, 0.8, 0.95]
                .iter()
                .map(|&rc| {
                    let c = c0 * sound_speed_ratio(rc, x).unwrap();
                    SoundPoint { condensate_fraction: rc, sound_speed: c * (1.0 + 0.02 * n.sample(&mut rng)), error: 0.02 * c }
                })
                .collect();
            let fit = fit_sound_vs_rc(&points, x).unwrap();
            pulls.push((fit.c0 - c0) / fit.c0_err);
        }
        assert!(pulls.iter().all(|p| p.abs() < 4.5));
        let sd = crate::stats::variance(&pulls).sqrt();
        assert!((sd - 1.0).abs() < 0.15, "{sd}");
    }
}
