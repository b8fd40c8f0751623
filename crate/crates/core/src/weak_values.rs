//! Post-selected weak values of the second measurement.
//!
//! A pixel of the first measurement is selected when its outcome exceeds
//! T times the per-pixel ensemble width; the conditional mean of the second
//! measurement at lag δx is the weak-value signal. Selecting from a Gaussian
//! of width σ above Tσ leaves the fraction r = ½ erfc(T/√2) and shifts the
//! conditional mean by σ √(2/π) e^{−T²/2}/erfc(T/√2).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{invalid, Error, Result};
use crate::grid::RealMap;
use crate::stats::{mean, pairwise_sum, sem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    PositiveOnly,
    /// Combine [δn⁺ − δn⁻]/2 so that both tails are used.
    SignWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostSelectionSpec {
    /// Threshold in units of the first-measurement noise width.
    pub threshold: f64,
    pub mode: SelectionMode,
}

impl PostSelectionSpec {
    pub fn new(threshold: f64, mode: SelectionMode) -> Result<Self> {
        if !(threshold >= 0.0) || !threshold.is_finite() {
            return Err(invalid("threshold must be finite and non-negative"));
        }
        Ok(Self { threshold, mode })
    }

    pub fn from_discarded(fd: f64, mode: SelectionMode) -> Result<Self> {
        Self::new(threshold_from_fd(fd, mode)?, mode)
    }

    pub fn discarded_fraction(&self) -> f64 {
        discarded_fraction(self.threshold, self.mode)
    }

    pub fn amplification(&self) -> f64 {
        amplification(self.threshold)
    }
}

/// One-sided retained fraction r = ½ erfc(T/√2).
pub fn retained_fraction(threshold: f64) -> f64 {
    0.5 * erfc(threshold / std::f64::consts::SQRT_2)
}

pub fn discarded_fraction(threshold: f64, mode: SelectionMode) -> f64 {
    let r = retained_fraction(threshold);
    match mode {
        SelectionMode::SignWeighted => 1.0 - 2.0 * r,
        SelectionMode::PositiveOnly => 1.0 - r,
    }
}

/// Threshold that discards the fraction `fd`.
///
/// Positive-only selection discards at least half of the data, so `fd` must
/// lie in [0.5, 1) there; sign-weighted selection accepts [0, 1).
pub fn threshold_from_fd(fd: f64, mode: SelectionMode) -> Result<f64> {
    if !(0.0..1.0).contains(&fd) {
        return Err(invalid(format!("discarded fraction must lie in [0, 1), got {fd}")));
    }
    let r = match mode {
        SelectionMode::SignWeighted => 0.5 * (1.0 - fd),
        SelectionMode::PositiveOnly => {
            if fd < 0.5 {
                return Err(invalid("positive-only selection discards at least half of the data"));
            }
            1.0 - fd
        }
    };
    Ok((std::f64::consts::SQRT_2 * erfc_inv(2.0 * r)).max(0.0))
}

/// Weak-value amplification e^{−T²/2}/erfc(T/√2) relative to T = 0.
pub fn amplification(threshold: f64) -> f64 {
    (-0.5 * threshold * threshold).exp() / erfc(threshold / std::f64::consts::SQRT_2)
}

/// Attenuation (1 + φ²/ϑ²)^{−1/2} from technical noise of strength ϑ.
pub fn attenuation(phi: f64, theta: Option<f64>) -> Result<f64> {
    if !(phi > 0.0) {
        return Err(invalid("measurement strength must be positive"));
    }
    match theta {
        None => Ok(1.0),
        Some(t) if t > 0.0 => Ok((1.0 + (phi / t).powi(2)).powf(-0.5)),
        Some(_) => Err(invalid("technical-noise strength must be positive")),
    }
}

/// Expected weak value of a single selected pixel: φ₁ G / √π × attenuation × amplification,
/// where G is the anticommutator ⟨{δn_x, δn_{x+δx}(δt)}⟩.
pub fn expected_weak_value(phi: f64, anticommutator: f64, attenuation: f64, threshold: f64) -> f64 {
    phi * anticommutator / std::f64::consts::PI.sqrt() * attenuation * amplification(threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakValueResult {
    /// Lags in pixels along x.
    pub lags: Vec<isize>,
    /// Conditional-mean curve ([δn⁺ − δn⁻]/2 or δn⁺), atoms per pixel.
    pub mean: Vec<f64>,
    pub sem: Vec<f64>,
    /// Selected pixel count per lag (both tails).
    pub retained: Vec<usize>,
    pub spec: PostSelectionSpec,
    pub amplification: f64,
    pub discarded_fraction: f64,
    pub shots: usize,
    /// Per-shot contributions `[shot][lag]`; their mean is `mean`.
    #[serde(skip)]
    pub shot_curves: Vec<Vec<f64>>,
}

/// Per-pixel ensemble standard deviation.
pub fn pixel_width(maps: &[RealMap]) -> Result<Vec<f64>> {
    if maps.len() < 2 {
        return Err(invalid("need at least two shots to estimate the noise width"));
    }
    let p = maps[0].len();
    let mut column = vec![0.0; maps.len()];
    Ok((0..p)
        .map(|i| {
            for (c, m) in column.iter_mut().zip(maps) {
                *c = m.data[i];
            }
            crate::stats::variance(&column).sqrt()
        })
        .collect())
}

/// Sign-weighted (or positive-only) conditional mean of `second` at lags
/// `-max_lag..=max_lag` along x, selecting on `first` within `support`.
pub fn qwv_estimate(
    first: &[RealMap],
    second: &[RealMap],
    support: &[bool],
    spec: &PostSelectionSpec,
    max_lag: usize,
) -> Result<WeakValueResult> {
    let m = first.len();
    if m != second.len() || m < 2 {
        return Err(invalid("need matching first/second ensembles of at least two shots"));
    }
    for (a, b) in first.iter().zip(second) {
        first[0].same_shape(a)?;
        first[0].same_shape(b)?;
    }
    let (nx, ny) = (first[0].nx, first[0].ny);
    if support.len() != nx * ny {
        return Err(invalid("support mask does not match the maps"));
    }
    let width = pixel_width(first)?;
    let t = spec.threshold;
    let lags: Vec<isize> = (-(max_lag as isize)..=max_lag as isize).collect();

    let sign_weighted = spec.mode == SelectionMode::SignWeighted;
    let inside: Vec<(usize, usize)> =
        (0..ny).flat_map(|j| (0..nx).map(move |i| (j, i))).filter(|&(j, i)| support[j * nx + i]).collect();

    // Per shot and lag: (sum over +, count +, sum over −, count −).
    let per_shot: Vec<Vec<(f64, usize, f64, usize)>> = first
        .par_iter()
        .zip(second.par_iter())
        .map(|(a, b)| {
            // +1 / −1 for pixels passing the upper / lower cut, 0 otherwise.
            let class: Vec<i8> = inside
                .iter()
                .map(|&(j, i)| {
                    let x = j * nx + i;
                    let (v, cut) = (a.data[x], t * width[x]);
                    if v > cut && (t > 0.0 || v > 0.0) {
                        1
                    } else if sign_weighted && v < -cut && (t > 0.0 || v < 0.0) {
                        -1
                    } else {
                        0
                    }
                })
                .collect();
            let (mut sp, mut sm) = (Vec::with_capacity(inside.len()), Vec::with_capacity(inside.len()));
            lags.iter()
                .map(|&lag| {
                    sp.clear();
                    sm.clear();
                    for (&(j, i), &c) in inside.iter().zip(&class) {
                        if c == 0 {
                            continue;
                        }
                        let i2 = i as isize + lag;
                        if i2 < 0 || i2 >= nx as isize {
                            continue;
                        }
                        let y = j * nx + i2 as usize;
                        if !support[y] {
                            continue;
                        }
                        if c > 0 {
                            sp.push(b.data[y]);
                        } else {
                            sm.push(b.data[y]);
                        }
                    }
                    (pairwise_sum(&sp), sp.len(), pairwise_sum(&sm), sm.len())
                })
                .collect()
        })
        .collect();

    let mut means = Vec::with_capacity(lags.len());
    let mut sems = Vec::with_capacity(lags.len());
    let mut retained = Vec::with_capacity(lags.len());
    let mut shot_curves = vec![Vec::with_capacity(lags.len()); m];
    for l in 0..lags.len() {
        let np: usize = per_shot.iter().map(|s| s[l].1).sum();
        let nm: usize = per_shot.iter().map(|s| s[l].3).sum();
        let needs_minus = spec.mode == SelectionMode::SignWeighted;
        if np == 0 || (needs_minus && nm == 0) {
            return Err(Error::EmptySelection { retained: np + nm });
        }
        let (fp, fm) = (m as f64 / np as f64, if nm > 0 { m as f64 / nm as f64 } else { 0.0 });
        let q: Vec<f64> = per_shot
            .iter()
            .map(|s| match spec.mode {
                SelectionMode::SignWeighted => 0.5 * (s[l].0 * fp - s[l].2 * fm),
                SelectionMode::PositiveOnly => s[l].0 * fp,
            })
            .collect();
        means.push(mean(&q));
        sems.push(sem(&q));
        for (c, v) in shot_curves.iter_mut().zip(&q) {
            c.push(*v);
        }
        retained.push(np + nm);
    }
    Ok(WeakValueResult {
        lags,
        mean: means,
        sem: sems,
        retained,
        spec: *spec,
        amplification: amplification(t),
        discarded_fraction: discarded_fraction(t, spec.mode),
        shots: m,
        shot_curves,
    })
}

/// Weak-value curves for every requested pulse pair, e.g. (0,1), (1,2), (0,2).
pub fn qwv_pairs(
    maps: &[Vec<RealMap>],
    pairs: &[(usize, usize)],
    support: &[bool],
    spec: &PostSelectionSpec,
    max_lag: usize,
) -> Result<Vec<((usize, usize), WeakValueResult)>> {
    pairs
        .iter()
        .map(|&(a, b)| {
            if a >= maps.len() || b >= maps.len() || a >= b {
                return Err(invalid(format!("invalid pulse pair ({a}, {b})")));
            }
            Ok(((a, b), qwv_estimate(&maps[a], &maps[b], support, spec, max_lag)?))
        })
        .collect()
}

/// Amplitude-only weighted fit of `template` to a curve, and SNR = |a| / RMS(SE).
pub fn template_snr(template: &[f64], curve: &[f64], se: &[f64]) -> Result<(f64, f64)> {
    if template.len() != curve.len() || curve.len() != se.len() || curve.is_empty() {
        return Err(invalid("template, curve and errors must have equal non-zero length"));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for ((t, y), s) in template.iter().zip(curve).zip(se) {
        let w = if *s > 0.0 { 1.0 / (s * s) } else { 0.0 };
        num += w * t * y;
        den += w * t * t;
    }
    if den <= 0.0 {
        return Err(invalid("template carries no weight"));
    }
    let amp = num / den;
    let rms = (se.iter().map(|s| s * s).sum::<f64>() / se.len() as f64).sqrt();
    Ok((amp, if rms > 0.0 { amp.abs() / rms } else { 0.0 }))
}

/// One point of an SNR-versus-discarded-fraction sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    pub discarded_fraction: f64,
    pub threshold: f64,
    pub amplitude: f64,
    pub snr: f64,
}

/// SNR of the weak-value curve for each discarded fraction. The amplitude is
/// fitted against `template` (a line shape sampled on the same lags).
pub fn snr_vs_fd(
    first: &[RealMap],
    second: &[RealMap],
    support: &[bool],
    fd_grid: &[f64],
    template: &[f64],
    max_lag: usize,
) -> Result<Vec<SnrPoint>> {
    fd_grid
        .iter()
        .map(|&fd| {
            let spec = PostSelectionSpec::from_discarded(fd, SelectionMode::SignWeighted)?;
            let r = qwv_estimate(first, second, support, &spec, max_lag)?;
            let (amplitude, snr) = template_snr(template, &r.mean, &r.sem)?;
            Ok(SnrPoint { discarded_fraction: fd, threshold: spec.threshold, amplitude, snr })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Bisection inverse of the retained fraction, independent of erfc⁻¹.
    fn bisect_threshold(r: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if retained_fraction(mid) > r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn fraction_threshold_round_trip() {
        assert_eq!(retained_fraction(0.0), 0.5);
        assert_eq!(threshold_from_fd(0.0, SelectionMode::SignWeighted).unwrap(), 0.0);
        let t = threshold_from_fd(0.8, SelectionMode::SignWeighted).unwrap();
        assert!((retained_fraction(t) - 0.1).abs() < 1e-10);
        assert!((t - bisect_threshold(0.1)).abs() < 1e-9);
        assert!((t - std::f64::consts::SQRT_2 * erfc_inv(0.2)).abs() < 1e-12);
        for fd in [0.05, 0.3, 0.6, 0.95, 0.999] {
            let t = threshold_from_fd(fd, SelectionMode::SignWeighted).unwrap();
            assert!((discarded_fraction(t, SelectionMode::SignWeighted) - fd).abs() < 1e-10);
        }
        assert!(retained_fraction(30.0) < 1e-100);
        assert!(threshold_from_fd(1.0, SelectionMode::SignWeighted).is_err());
        assert!(threshold_from_fd(0.3, SelectionMode::PositiveOnly).is_err());
        let tp = threshold_from_fd(0.9, SelectionMode::PositiveOnly).unwrap();
        assert!((retained_fraction(tp) - 0.1).abs() < 1e-10);
    }

    #[test]
    fn amplification_properties() {
        assert!((amplification(0.0) - 1.0).abs() < 1e-15);
        let mut last = 1.0;
        for i in 1..200 {
            let a = amplification(i as f64 * 0.025);
            assert!(a > last);
            last = a;
        }
        for fd in [0.1, 0.4, 0.8, 0.99] {
            let t = threshold_from_fd(fd, SelectionMode::SignWeighted).unwrap();
            let r = retained_fraction(t);
            assert!((amplification(t) * 2.0 * r * (0.5 * t * t).exp() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn amplification_matches_gaussian_tail_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..1_000_000).map(|_| rng.sample(StandardNormal)).collect();
        let base = mean(&xs.iter().copied().filter(|&x| x > 0.0).collect::<Vec<_>>());
        let t = threshold_from_fd(0.8, SelectionMode::SignWeighted).unwrap();
        let tail = mean(&xs.iter().copied().filter(|&x| x > t).collect::<Vec<_>>());
        assert!((tail / base / amplification(t) - 1.0).abs() < 0.01);
    }

    #[test]
    fn attenuation_limits() {
        assert_eq!(attenuation(0.1, None).unwrap(), 1.0);
        assert!((attenuation(0.1, Some(0.1)).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((attenuation(1.0, Some(1e-4)).unwrap() / 1e-4 - 1.0).abs() < 1e-6);
        assert!(attenuation(0.0, None).is_err());
    }

    fn maps(m: usize, nx: usize, ny: usize, rng: &mut ChaCha8Rng) -> Vec<RealMap> {
        (0..m).map(|_| RealMap::from_fn(nx, ny, |_, _| rng.sample(StandardNormal))).collect()
    }

    #[test]
    fn uncorrelated_maps_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = maps(200, 32, 4, &mut rng);
        let b = maps(200, 32, 4, &mut rng);
        let support = vec![true; 128];
        let spec = PostSelectionSpec::new(0.5, SelectionMode::SignWeighted).unwrap();
        let r = qwv_estimate(&a, &b, &support, &spec, 3).unwrap();
        for (m, s) in r.mean.iter().zip(&r.sem) {
            assert!(m.abs() < 4.0 * s, "{m} ± {s}");
        }
    }

    #[test]
    fn correlated_copy_recovers_tail_mean() {
        // second = κ · first at lag +1: conditional mean is κ σ √(2/π) × amplification.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = maps(400, 40, 4, &mut rng);
        let kappa = 0.3;
        let b: Vec<RealMap> = a
            .iter()
            .map(|m| RealMap::from_fn(40, 4, |i, j| if i > 0 { kappa * m[(i - 1, j)] } else { 0.0 }))
            .collect();
        let support = vec![true; 160];
        for fd in [0.0, 0.6] {
            let spec = PostSelectionSpec::from_discarded(fd, SelectionMode::SignWeighted).unwrap();
            let r = qwv_estimate(&a, &b, &support, &spec, 2).unwrap();
            let expect = kappa * (2.0 / std::f64::consts::PI).sqrt() * amplification(spec.threshold);
            let at = r.lags.iter().position(|&l| l == 1).unwrap();
            assert!((r.mean[at] / expect - 1.0).abs() < 0.03, "{} vs {expect}", r.mean[at]);
        }
        let pos = PostSelectionSpec::new(0.0, SelectionMode::PositiveOnly).unwrap();
        let neg_maps: Vec<RealMap> = a.iter().map(|m| m.map(|v| -v)).collect();
        let rp = qwv_estimate(&a, &b, &support, &pos, 1).unwrap();
        let rn = qwv_estimate(&neg_maps, &b, &support, &pos, 1).unwrap();
        assert!((rp.mean[2] + rn.mean[2]).abs() < 3.0 * (rp.sem[2].hypot(rn.sem[2])));
    }

    #[test]
    fn empty_selection_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = maps(4, 8, 2, &mut rng);
        let spec = PostSelectionSpec::new(50.0, SelectionMode::SignWeighted).unwrap();
        match qwv_estimate(&a, &a, &[true; 16], &spec, 0) {
            Err(Error::EmptySelection { retained: 0 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicated_ensemble_gains_root_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = maps(300, 24, 4, &mut rng);
        let b: Vec<RealMap> = a
            .iter()
            .map(|m| RealMap::from_fn(24, 4, |i, j| 0.2 * m[(i, j)] + rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let support = vec![true; 96];
        let template = vec![0.0, 1.0, 0.0];
        let one = snr_vs_fd(&a, &b, &support, &[0.0], &template, 1).unwrap()[0].snr;
        let a2: Vec<RealMap> = a.iter().chain(&a).cloned().collect();
        let b2: Vec<RealMap> = b.iter().chain(&b).cloned().collect();
        let two = snr_vs_fd(&a2, &b2, &support, &[0.0], &template, 1).unwrap()[0].snr;
        assert!((two / one / 2f64.sqrt() - 1.0).abs() < 0.02, "{one} → {two}");
    }
}
