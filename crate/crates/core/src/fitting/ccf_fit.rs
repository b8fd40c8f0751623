//! Individual and global least-squares fits of CCF slices.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lineshape::{LineShapeModel, LineShapeParams};
use super::lm::{levenberg_marquardt, LmOptions, Problem};
use crate::analysis::VanHove;
use crate::error::{invalid, Error, Result};

/// Default half-width of the region around δx = 0 left out of fits.
pub const DEFAULT_EXCLUSION: f64 = 1.5e-6;

/// One δt slice of data.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSlice {
    pub dt: f64,
    pub dx: Vec<f64>,
    pub y: Vec<f64>,
    pub err: Vec<f64>,
}

impl FitSlice {
    pub fn from_van_hove(vh: &VanHove) -> Vec<FitSlice> {
        vh.dt
            .iter()
            .enumerate()
            .map(|(t, &dt)| FitSlice { dt, dx: vh.dx.clone(), y: vh.values[t].clone(), err: vh.errors[t].clone() })
            .collect()
    }

    pub fn reflected(&self) -> FitSlice {
        let mut s = self.clone();
        s.dx.iter_mut().for_each(|x| *x = -*x);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    /// Points with |δx| below this are ignored, m.
    pub exclusion: f64,
    /// Points with |δx| above this are ignored, m.
    pub max_dx: Option<f64>,
    /// Weight residuals by the per-point standard errors.
    pub weighted: bool,
    /// Which of [c, s_p, h_f, γ_f, σ_res] the global fit varies.
    pub free: [bool; 5],
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { exclusion: DEFAULT_EXCLUSION, max_dx: None, weighted: true, free: [true; 5], max_iterations: 200 }
    }
}

impl FitOptions {
    fn keep(&self, dx: f64) -> bool {
        dx.abs() >= self.exclusion && self.max_dx.is_none_or(|m| dx.abs() <= m)
    }

    fn lm(&self) -> LmOptions {
        LmOptions { max_iterations: self.max_iterations, ..LmOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    Individual,
    Global,
}

#[derive(Debug, Clone, Serialize)]
pub struct SliceFit {
    pub dt: f64,
    pub params: LineShapeParams,
    /// Standard errors; zero for parameters held fixed.
    pub errors: [f64; 5],
    pub chi2: f64,
    pub points: usize,
    /// Data minus model on the fitted points, with their lags.
    pub residuals: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub mode: FitMode,
    pub slices: Vec<SliceFit>,
    /// Covariance of the varied parameters (global) or of the first slice's.
    #[serde(skip)]
    pub covariance: DMatrix<f64>,
    pub free: Vec<&'static str>,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

impl FitResult {
    /// The shared parameters of a global fit.
    pub fn params(&self) -> LineShapeParams {
        self.slices[0].params
    }

    pub fn errors(&self) -> [f64; 5] {
        self.slices[0].errors
    }

    pub fn reduced_chi2(&self) -> f64 {
        self.chi2 / self.dof.max(1) as f64
    }
}

struct Points {
    dt: f64,
    dx: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

fn select(slice: &FitSlice, opts: &FitOptions) -> Result<Points> {
    if slice.dx.len() != slice.y.len() || slice.dx.len() != slice.err.len() {
        return Err(invalid("slice lengths differ"));
    }
    let mut p = Points { dt: slice.dt, dx: vec![], y: vec![], w: vec![] };
    for i in 0..slice.dx.len() {
        if !opts.keep(slice.dx[i]) {
            continue;
        }
        let w = if opts.weighted {
            let e = slice.err[i];
            if !(e > 0.0 && e.is_finite()) {
                continue;
            }
            1.0 / e
        } else {
            1.0
        };
        p.dx.push(slice.dx[i]);
        p.y.push(slice.y[i]);
        p.w.push(w);
    }
    Ok(p)
}

/// Least-squares problem over a set of slices. `layout[s][k]` maps
/// line-shape parameter k of slice s to a fit parameter, or `None` if fixed.
struct CcfProblem<'a> {
    model: &'a LineShapeModel,
    data: Vec<Points>,
    layout: Vec<[Option<usize>; 5]>,
    fixed: Vec<LineShapeParams>,
    n: usize,
}

impl CcfProblem<'_> {
    fn slice_params(&self, s: usize, p: &[f64]) -> LineShapeParams {
        let mut v = self.fixed[s].to_vec();
        for (k, idx) in self.layout[s].iter().enumerate() {
            if let Some(i) = idx {
                v[k] = p[*i];
            }
        }
        LineShapeParams::from_slice(&v)
    }

    fn len(&self) -> usize {
        self.data.iter().map(|d| d.dx.len()).sum()
    }
}

impl Problem for CcfProblem<'_> {
    fn n_params(&self) -> usize {
        self.n
    }

    fn evaluate(&self, p: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let blocks: Vec<(Vec<f64>, Vec<[f64; 5]>)> = self
            .data
            .par_iter()
            .enumerate()
            .map(|(s, d)| {
                let lp = self.slice_params(s, p);
                let mut r = Vec::with_capacity(d.dx.len());
                let mut g = Vec::with_capacity(d.dx.len());
                for i in 0..d.dx.len() {
                    let (f, grad) = self.model.evaluate(d.dx[i], d.dt, &lp);
                    r.push((d.y[i] - f) * d.w[i]);
                    g.push(grad.map(|v| v * d.w[i]));
                }
                (r, g)
            })
            .collect();
        let mut jac = DMatrix::zeros(self.len(), self.n);
        let mut res = Vec::with_capacity(self.len());
        let mut row = 0;
        for (s, (r, g)) in blocks.into_iter().enumerate() {
            for (ri, gi) in r.into_iter().zip(g) {
                res.push(ri);
                for (k, idx) in self.layout[s].iter().enumerate() {
                    if let Some(i) = idx {
                        jac[(row, *i)] = gi[k];
                    }
                }
                row += 1;
            }
        }
        (res, jac)
    }

    fn admissible(&self, p: &[f64]) -> bool {
        (0..self.data.len()).all(|s| self.slice_params(s, p).is_valid())
    }
}

fn run(problem: &CcfProblem, start: &[f64], opts: &FitOptions) -> Result<(Vec<f64>, DMatrix<f64>, f64, usize)> {
    let fit = levenberg_marquardt(problem, start, opts.lm())?;
    Ok((fit.params, fit.covariance, fit.chi2, fit.iterations))
}

fn slice_fit(problem: &CcfProblem, s: usize, p: &[f64], cov: &DMatrix<f64>) -> SliceFit {
    let d = &problem.data[s];
    let params = problem.slice_params(s, p);
    let mut errors = [0.0; 5];
    for (k, idx) in problem.layout[s].iter().enumerate() {
        if let Some(i) = idx {
            errors[k] = cov[(*i, *i)].max(0.0).sqrt();
        }
    }
    let residuals: Vec<(f64, f64)> =
        d.dx.iter().zip(&d.y).map(|(&x, &y)| (x, y - problem.model.evaluate(x, d.dt, &params).0)).collect();
    let chi2 = residuals.iter().zip(&d.w).map(|((_, r), w)| (r * w).powi(2)).sum();
    SliceFit { dt: d.dt, params, errors, chi2, points: d.dx.len(), residuals }
}

/// Shared c, s_p, (h_f, γ_f) and σ across all slices.
pub fn fit_global(
    model: &LineShapeModel,
    slices: &[FitSlice],
    init: &LineShapeParams,
    opts: &FitOptions,
) -> Result<FitResult> {
    if slices.len() < 2 {
        return Err(invalid("a global fit needs at least two δt slices"));
    }
    let data = slices.iter().map(|s| select(s, opts)).collect::<Result<Vec<_>>>()?;
    let mut layout = [None; 5];
    let mut n = 0;
    for k in 0..5 {
        if opts.free[k] {
            layout[k] = Some(n);
            n += 1;
        }
    }
    if n == 0 {
        return Err(invalid("no free parameters"));
    }
    let problem = CcfProblem { model, layout: vec![layout; data.len()], fixed: vec![*init; data.len()], data, n };
    let points = problem.len();
    if points <= n {
        return Err(invalid(format!("{points} points cannot constrain {n} parameters")));
    }
    let all = init.to_vec();
    let start: Vec<f64> = (0..5).filter(|&k| opts.free[k]).map(|k| all[k]).collect();
    let (p, cov, chi2, iterations) = run(&problem, &start, opts)?;
    let slices = (0..problem.data.len()).map(|s| slice_fit(&problem, s, &p, &cov)).collect();
    Ok(FitResult {
        mode: FitMode::Global,
        slices,
        covariance: cov,
        free: (0..5).filter(|&k| opts.free[k]).map(|k| LineShapeParams::NAMES[k]).collect(),
        chi2,
        dof: points - n,
        iterations,
    })
}

/// Per-slice fits of c, s_p and the forward amplitude; γ_f and σ stay at
/// `init`. The global solution is a feasible point of every slice, so the
/// summed χ² never exceeds the global χ².
pub fn fit_individual(
    model: &LineShapeModel,
    slices: &[FitSlice],
    init: &LineShapeParams,
    opts: &FitOptions,
) -> Result<FitResult> {
    if slices.is_empty() {
        return Err(invalid("no δt slices"));
    }
    let fits = slices
        .par_iter()
        .map(|s| {
            let data = select(s, opts)?;
            // c is unconstrained at zero delay.
            let free_c = s.dt > 0.0;
            let mut layout = [None; 5];
            let mut start = vec![];
            if free_c {
                layout[0] = Some(0);
                start.push(init.sound_speed);
            }
            layout[1] = Some(start.len());
            start.push(init.phonon_amplitude);
            layout[2] = Some(start.len());
            start.push(init.forward_amplitude);
            let n = start.len();
            let problem = CcfProblem { model, data: vec![data], layout: vec![layout], fixed: vec![*init], n };
            if problem.len() <= n {
                return Err(invalid(format!("slice at δt = {} has too few points", s.dt)));
            }
            let (p, cov, chi2, it) = run(&problem, &start, opts)?;
            Ok((slice_fit(&problem, 0, &p, &cov), cov, chi2, it, problem.len() - n))
        })
        .collect::<Result<Vec<_>>>()?;
    let covariance = fits[0].1.clone();
    let chi2 = fits.iter().map(|f| f.2).sum();
    let iterations = fits.iter().map(|f| f.3).max().unwrap_or(0);
    let dof = fits.iter().map(|f| f.4).sum();
    Ok(FitResult {
        mode: FitMode::Individual,
        slices: fits.into_iter().map(|f| f.0).collect(),
        covariance,
        free: vec!["c", "s_p", "h_f"],
        chi2,
        dof,
        iterations,
    })
}

/// Starting point: c from the outermost peak of the two longest-delay
/// slices refined by a scan, s_p and h_f by linear least squares, γ_f from
/// the two-point log ratio of per-slice forward amplitudes.
pub fn initial_guess(model: &LineShapeModel, slices: &[FitSlice], opts: &FitOptions, resolution: f64) -> Result<LineShapeParams> {
    if slices.is_empty() {
        return Err(invalid("no δt slices"));
    }
    let data = slices.iter().map(|s| select(s, opts)).collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data[b].dt.total_cmp(&data[a].dt));

    let mut tracked = Vec::new();
    for &s in order.iter().take(2) {
        let d = &data[s];
        if d.dt <= 0.0 {
            continue;
        }
        let best = (0..d.dx.len()).filter(|&i| d.dx[i].abs() > 0.0).max_by(|&a, &b| d.y[a].total_cmp(&d.y[b]));
        if let Some(i) = best {
            tracked.push(d.dx[i].abs() / d.dt);
        }
    }
    let guess = if tracked.is_empty() { 1.3e-3 } else { tracked.iter().sum::<f64>() / tracked.len() as f64 };
    let gamma0 = 2.0e3;

    let profile = |c: f64, gamma: f64| -> Option<(f64, f64, f64)> {
        let base = LineShapeParams {
            sound_speed: c,
            phonon_amplitude: 1.0,
            forward_amplitude: 1.0,
            forward_decay: gamma,
            resolution,
        };
        let mut rows: Vec<[f64; 2]> = Vec::new();
        let mut b = Vec::new();
        for d in &data {
            for i in 0..d.dx.len() {
                let (_, g) = model.evaluate(d.dx[i], d.dt, &base);
                rows.push([g[1] * d.w[i], g[2] * d.w[i]]);
                b.push(d.y[i] * d.w[i]);
            }
        }
        let a = DMatrix::from_fn(rows.len(), 2, |i, k| rows[i][k]);
        let bv = DVector::from_vec(b);
        let sol = a.clone().svd(true, true).solve(&bv, 1e-12).ok()?;
        let chi2 = (a * &sol - bv).norm_squared();
        Some((chi2, sol[0], sol[1]))
    };

    // Scan c on a log grid around the tracked value, then a finer pass.
    let mut best_c = guess;
    let mut best = f64::INFINITY;
    for pass in 0..2 {
        let (lo, hi, steps) = if pass == 0 { (0.4, 2.5, 60) } else { (0.95, 1.05, 21) };
        let center = best_c;
        for i in 0..steps {
            let c = center * lo * (hi / lo).powf(i as f64 / (steps - 1) as f64);
            if let Some((chi2, _, _)) = profile(c, gamma0) {
                if chi2 < best {
                    best = chi2;
                    best_c = c;
                }
            }
        }
    }
    if !best.is_finite() {
        return Err(Error::Data("initial linear solve failed".into()));
    }

    // Per-slice forward amplitudes at the chosen c.
    let mut forward: Vec<(f64, f64)> = Vec::new();
    for d in &data {
        let base = LineShapeParams {
            sound_speed: best_c,
            phonon_amplitude: 1.0,
            forward_amplitude: 1.0,
            forward_decay: 0.0,
            resolution,
        };
        let mut a = DMatrix::zeros(d.dx.len(), 2);
        for i in 0..d.dx.len() {
            let (_, g) = model.evaluate(d.dx[i], d.dt, &base);
            a[(i, 0)] = g[1] * d.w[i];
            a[(i, 1)] = g[2] * d.w[i];
        }
        let bv = DVector::from_iterator(d.dx.len(), d.y.iter().zip(&d.w).map(|(y, w)| y * w));
        if let Ok(sol) = a.svd(true, true).solve(&bv, 1e-12) {
            forward.push((d.dt, sol[1]));
        }
    }
    forward.sort_by(|a, b| a.0.total_cmp(&b.0));
    let gamma = match forward.as_slice() {
        [(t0, f0), (t1, f1), ..] if *f0 > 0.0 && *f1 > 0.0 && f1 < f0 && t1 > t0 => (f0 / f1).ln() / (t1 - t0),
        _ => gamma0,
    };
    let (_, sp, hf) = profile(best_c, gamma).ok_or_else(|| Error::Data("initial linear solve failed".into()))?;
    Ok(LineShapeParams { sound_speed: best_c, phonon_amplitude: sp, forward_amplitude: hf, forward_decay: gamma, resolution })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::lineshape::DispersionModel;
    use crate::model::PhysicalConstants;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn model() -> LineShapeModel {
        let c = PhysicalConstants::rb87_d2();
        LineShapeModel::new(c.k_na(0.32), c.atom_mass, 1.31e-3, 19e-9, DispersionModel::Bogoliubov)
    }

    fn truth() -> LineShapeParams {
        LineShapeParams {
            sound_speed: 1.31e-3,
            phonon_amplitude: 3.0,
            forward_amplitude: 1.2,
            forward_decay: 2.0e3,
            resolution: 0.7e-6,
        }
    }

    fn synthetic(noise: f64, seed: u64) -> Vec<FitSlice> {
        let m = model();
        let p = truth();
        let dx: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.5e-6).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        (0..8)
            .map(|t| {
                let dt = (t as f64 + 0.5) * 0.5e-3;
                let y = m.curve(&dx, dt, &p).into_iter().map(|v| v + noise * n.sample(&mut rng)).collect();
                FitSlice { dt, dx: dx.clone(), y, err: vec![noise.max(1e-3); dx.len()] }
            })
            .collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a / b - 1.0).abs()
    }

    #[test]
    fn noiseless_global_recovers_parameters() {
        let m = model();
        let slices = synthetic(0.0, 0);
        let opts = FitOptions { exclusion: 0.0, ..FitOptions::default() };
        let init = initial_guess(&m, &slices, &opts, 0.9e-6).unwrap();
        assert!(rel(init.sound_speed, 1.31e-3) < 0.05, "{init:?}");
        let fit = fit_global(&m, &slices, &init, &opts).unwrap();
        let (p, t) = (fit.params().to_vec(), truth().to_vec());
        for k in 0..5 {
            assert!(rel(p[k], t[k]) < 1e-6, "{}: {} vs {}", LineShapeParams::NAMES[k], p[k], t[k]);
        }
    }

    #[test]
    fn noiseless_individual_recovers_speed() {
        let m = model();
        let slices = synthetic(0.0, 0);
        let opts = FitOptions::default();
        let init = LineShapeParams { sound_speed: 1.2e-3, phonon_amplitude: 2.0, ..truth() };
        let fit = fit_individual(&m, &slices, &init, &opts).unwrap();
        for s in &fit.slices[2..] {
            assert!(rel(s.params.sound_speed, 1.31e-3) < 1e-6, "{}", s.params.sound_speed);
        }
    }

    #[test]
    fn noisy_fit_is_reflection_invariant_and_nested() {
        let m = model();
        let slices = synthetic(0.02, 5);
        let opts = FitOptions { exclusion: 0.0, ..FitOptions::default() };
        let init = initial_guess(&m, &slices, &opts, 0.9e-6).unwrap();
        let global = fit_global(&m, &slices, &init, &opts).unwrap();
        let c = global.params();
        assert!((c.sound_speed - 1.31e-3).abs() < 3.0 * global.errors()[0] + 1e-9);

        let mirrored: Vec<FitSlice> = slices.iter().map(FitSlice::reflected).collect();
        let g2 = fit_global(&m, &mirrored, &init, &opts).unwrap();
        assert!(rel(g2.params().sound_speed, c.sound_speed) < 1e-8);
        assert!(rel(g2.chi2, global.chi2) < 1e-8);

        let ind = fit_individual(&m, &slices, &global.params(), &opts).unwrap();
        let extra = (ind.dof as i64 - global.dof as i64).unsigned_abs() as f64;
        assert!(ind.chi2 <= global.chi2 * (1.0 + 1e-9));
        assert!(global.chi2 <= ind.chi2 + extra + 5.0 * (2.0 * extra).sqrt());
    }

    #[test]
    fn covariance_is_symmetric_psd() {
        let m = model();
        let slices = synthetic(0.02, 9);
        let opts = FitOptions { exclusion: 0.0, ..FitOptions::default() };
        let init = initial_guess(&m, &slices, &opts, 0.9e-6).unwrap();
        let fit = fit_global(&m, &slices, &init, &opts).unwrap();
        let c = &fit.covariance;
        assert!((c - c.transpose()).abs().max() <= 1e-12 * c.abs().max());
        let eig = c.clone().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&e| e >= -1e-12 * c.abs().max()));
    }

    #[test]
    fn exclusion_drops_central_points() {
        let slices = synthetic(0.0, 0);
        let p = select(&slices[0], &FitOptions::default()).unwrap();
        assert!(p.dx.iter().all(|x| x.abs() >= 1.5e-6));
        assert_eq!(p.dx.len(), 81 - 5);
        let opts = FitOptions { max_dx: Some(5e-6), ..FitOptions::default() };
        assert_eq!(select(&slices[0], &opts).unwrap().dx.len(), 2 * 8);
        assert!(fit_global(&model(), &slices[..1], &truth(), &opts).is_err());
    }
}
