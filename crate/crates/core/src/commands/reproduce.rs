//! Desk-scale recipes: the sound-speed series (`fig2`), the strength and
//! post-selection series (`fig3`) and the temperature series (`fig4`).
//! Each runs entirely in memory from a bundled configuration and writes
//! CSV tables, plots, containers and a manifest of hashes.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::info;
use serde::Serialize;

use super::analyze::{analyze, Products};
use super::ensemble::simulate;
use super::fit::{run_fit, write_fit};
use super::qwv::{weak_values, QwvReport};
use super::{Manifest, OutputDir};
use crate::error::{Error, Result};
use crate::fitting::{fit_line, fit_sound_vs_rc, FitResult, LineFit, SoundFit, SoundPoint};
use crate::io::plot::Series;
use crate::io::RunConfig;
use crate::model::{bogoliubov_omega, sound_speed_ratio};
use crate::simulator::PhysicsConfig;
use crate::stats::sem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
}

impl Figure {
    pub const ALL: [Figure; 3] = [Figure::Fig2, Figure::Fig3, Figure::Fig4];

    /// The bundled TOML configuration of the recipe.
    pub fn bundled_config(self) -> &'static str {
        match self {
            Figure::Fig2 => include_str!("../../configs/fig2.toml"),
            Figure::Fig3 => include_str!("../../configs/fig3.toml"),
            Figure::Fig4 => include_str!("../../configs/fig4.toml"),
        }
    }

    pub fn config(self, overrides: &[String]) -> Result<RunConfig> {
        RunConfig::from_toml(self.bundled_config(), overrides)
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
        })
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown figure {s:?}; expected fig2, fig3 or fig4")))
    }
}

/// DSF ridge against the dispersion relation, one entry per k column.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RidgePoint {
    pub k: f64,
    pub omega_peak: f64,
    pub omega_expected: f64,
    /// (peak − expected) in units of the ω grid step.
    pub cells: f64,
}

pub struct SoundSpeedRun {
    pub physics: PhysicsConfig,
    pub products: Products,
    pub fit: FitResult,
    pub model: crate::fitting::LineShapeModel,
    pub ridge: Vec<RidgePoint>,
}

impl SoundSpeedRun {
    pub fn injected(&self) -> f64 {
        self.physics.condensate.sound_speed
    }

    pub fn recovered(&self) -> (f64, f64) {
        (self.fit.params().sound_speed, self.fit.errors()[0])
    }

    /// As [`recovered`](Self::recovered), with the error inflated by
    /// √χ²_red when the fit is worse than its statistical errors allow.
    pub fn recovered_scaled(&self) -> (f64, f64) {
        let (c, e) = self.recovered();
        (c, e * self.fit.reduced_chi2().max(1.0).sqrt())
    }
}

/// simulate → analyze → fit, plus the DSF ridge check.
pub fn sound_speed_run(config: &RunConfig) -> Result<SoundSpeedRun> {
    let data = simulate(config)?;
    let physics = data.physics.clone();
    let fs = data.fluctuations(&config.analysis.to_config())?;
    drop(data);
    let products = analyze(&fs, &config.analysis)?;
    let (fit, model) = run_fit(&products.van_hove, config, &physics)?;
    let ridge = match &products.dsf {
        Some(d) => {
            let step = d.omega_step();
            d.k.iter()
                .zip(d.ridge())
                .map(|(&k, peak)| {
                    let want = bogoliubov_omega(k.abs(), &physics.condensate)?;
                    Ok(RidgePoint { k, omega_peak: peak, omega_expected: want, cells: (peak - want) / step })
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => Vec::new(),
    };
    Ok(SoundSpeedRun { physics, products, fit, model, ridge })
}

/// One probe strength of the strength series.
pub struct StrengthPoint {
    pub g: f64,
    pub phi: f64,
    pub report: QwvReport,
}

/// Measured against predicted amplification of the weak-value slope.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AmplificationPoint {
    pub discarded_fraction: f64,
    pub threshold: f64,
    pub expected: f64,
    pub measured: f64,
    pub error: f64,
}

pub struct StrengthSeries {
    pub points: Vec<StrengthPoint>,
    /// CCF amplitude against g.
    pub ccf_line: LineFit,
    /// Weak-value amplitude (reference fraction) against g.
    pub qwv_line: LineFit,
    pub amplification: Vec<AmplificationPoint>,
}

/// Ratio of through-origin slopes of weak-value amplitude against g, for
/// fraction index `f` over the reference index 0. Per-strength terms use
/// the paired per-shot projections, so the error keeps their correlation.
fn slope_ratio(points: &[StrengthPoint], f: usize) -> Result<(f64, f64)> {
    let terms: Vec<(f64, &[f64], &[f64])> = points
        .iter()
        .map(|p| {
            let e0 = &p.report.entries[0];
            let w = 1.0 / (e0.amplitude_err * e0.amplitude_err);
            (w * p.g, p.report.entries[f].projections.as_slice(), e0.projections.as_slice())
        })
        .collect();
    let num: f64 = terms.iter().map(|(c, a, _)| c * crate::stats::mean(a)).sum();
    let den: f64 = terms.iter().map(|(c, _, b)| c * crate::stats::mean(b)).sum();
    if den == 0.0 {
        return Err(Error::InvalidArgument("reference slope is zero".into()));
    }
    let r = num / den;
    let var: f64 = terms
        .iter()
        .map(|(c, a, b)| {
            let d: Vec<f64> = a.iter().zip(*b).map(|(x, y)| x - r * y).collect();
            (c * sem(&d)).powi(2)
        })
        .sum();
    Ok((r, var.sqrt() / den.abs()))
}

/// CCF and weak values of the first pulse pair for every strength in
/// `sweep.strengths` (applied to the first pulse).
pub fn strength_series(config: &RunConfig) -> Result<StrengthSeries> {
    let mut points = Vec::new();
    for (n, &g) in config.sweep.strengths.iter().enumerate() {
        let mut c = config.clone();
        let np = c.simulation.pulse_times_ms.len();
        let mut strengths = if c.simulation.strengths.len() == 1 { vec![c.simulation.strengths[0]; np] } else { c.simulation.strengths.clone() };
        strengths[0] = g;
        c.simulation.strengths = strengths;
        c.simulation.seed = config.simulation.seed + n as u64;
        info!("strength series: g = {g}");
        let data = simulate(&c)?;
        let phi = data.pulses[0].phi;
        let fs = data.fluctuations(&c.analysis.to_config())?;
        drop(data);
        let report = weak_values(&fs, &c)?;
        points.push(StrengthPoint { g, phi, report });
    }
    if points.len() < 2 {
        return Err(Error::Config("the strength series needs at least two strengths".into()));
    }
    let gs: Vec<f64> = points.iter().map(|p| p.g).collect();
    let pick = |f: &dyn Fn(&StrengthPoint) -> (f64, f64)| -> (Vec<f64>, Vec<f64>) { points.iter().map(f).unzip() };
    let (ca, ce) = pick(&|p| (p.report.ccf[0].amplitude, p.report.ccf[0].amplitude_err));
    let ccf_line = fit_line(&gs, &ca, &ce)?;
    let (qa, qe) = pick(&|p| (p.report.entries[0].amplitude, p.report.entries[0].amplitude_err));
    let qwv_line = fit_line(&gs, &qa, &qe)?;

    let nf = config.qwv.discarded_fractions.len();
    let first = &points[0].report.entries;
    let mut amplification = Vec::new();
    for f in 0..nf {
        let (measured, error) = if f == 0 { (1.0, 0.0) } else { slope_ratio(&points, f)? };
        amplification.push(AmplificationPoint {
            discarded_fraction: first[f].discarded_fraction,
            threshold: first[f].threshold,
            expected: first[f].expected_ratio,
            measured,
            error,
        });
    }
    Ok(StrengthSeries { points, ccf_line, qwv_line, amplification })
}

/// One condensate fraction of the temperature series.
pub struct TemperaturePoint {
    pub condensate_fraction: f64,
    pub temperature_hz: f64,
    pub injected: f64,
    pub run: SoundSpeedRun,
    pub weak_values: QwvReport,
}

pub struct TemperatureSeries {
    pub points: Vec<TemperaturePoint>,
    pub sound: SoundFit,
    /// Injected c0 of the series.
    pub reference: f64,
}

pub fn temperature_series(config: &RunConfig) -> Result<TemperatureSeries> {
    let w = &config.sweep;
    let x = config.physics.omega_ratio_sq;
    let mut points = Vec::new();
    for (n, (&rc, &t)) in w.condensate_fractions.iter().zip(&w.temperatures_hz).enumerate() {
        let mut c = config.clone();
        let injected = w.reference_sound_speed_mm_s * sound_speed_ratio(rc, x)?;
        c.physics.condensate_fraction = rc;
        c.physics.temperature_hz = t;
        c.physics.sound_speed_mm_s = injected;
        c.simulation.seed = config.simulation.seed + n as u64;
        c.validate()?;
        info!("temperature series: R_c = {rc}, T = {t} Hz, c = {injected:.4} mm/s");
        let data = simulate(&c)?;
        let physics = data.physics.clone();
        let fs = data.fluctuations(&c.analysis.to_config())?;
        drop(data);
        let products = analyze(&fs, &c.analysis)?;
        let (fit, model) = run_fit(&products.van_hove, &c, &physics)?;
        let weak = weak_values(&fs, &c)?;
        let run = SoundSpeedRun { physics, products, fit, model, ridge: Vec::new() };
        points.push(TemperaturePoint { condensate_fraction: rc, temperature_hz: t, injected: injected * 1e-3, run, weak_values: weak });
    }
    let sp: Vec<SoundPoint> = points
        .iter()
        .map(|p| {
            let (c, e) = p.run.recovered_scaled();
            SoundPoint { condensate_fraction: p.condensate_fraction, sound_speed: c, error: e }
        })
        .collect();
    let sound = fit_sound_vs_rc(&sp, x)?;
    Ok(TemperatureSeries { points, sound, reference: w.reference_sound_speed_mm_s * 1e-3 })
}

fn write_sound_speed(out: &mut OutputDir, run: &SoundSpeedRun, config: &RunConfig) -> Result<()> {
    out.container("products.vhl", &run.products.to_container(config, None)?)?;
    run.products.write_reports(out)?;
    write_fit(out, &run.products.van_hove, &run.fit, &run.model, config, None)?;
    if !run.ridge.is_empty() {
        let col = |f: fn(&RidgePoint) -> f64| run.ridge.iter().map(f).collect::<Vec<_>>();
        let (k, peak, want, cells) = (col(|r| r.k), col(|r| r.omega_peak), col(|r| r.omega_expected), col(|r| r.cells));
        out.columns("dsf_ridge_check.csv", &[("k_rad_m", &k), ("omega_peak", &peak), ("omega_bogoliubov", &want), ("cells", &cells)])?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Fig2Summary {
    injected_c: f64,
    recovered_c: f64,
    recovered_c_err: f64,
    relative_error: f64,
    reduced_chi2: f64,
    max_ridge_cells: f64,
}

#[derive(Serialize)]
struct Fig3Summary {
    ccf_slope: f64,
    ccf_slope_err: f64,
    qwv_slope: f64,
    qwv_slope_err: f64,
    qwv_offset: f64,
    qwv_offset_err: f64,
    amplification: Vec<AmplificationPoint>,
}

#[derive(Serialize)]
struct Fig4Summary {
    reference_c0: f64,
    fitted_c0: f64,
    fitted_c0_err: f64,
    chi2: f64,
    omega_ratio_sq: f64,
    /// c(last)/c(first): injected, recovered and its error. Errors of the
    /// individual fits are scaled by √χ²_red.
    speed_ratio: [f64; 3],
}

/// Run a recipe and write everything to `out_root/<figure>/`.
pub fn cmd_reproduce(figure: Figure, overrides: &[String], out_root: &Path) -> Result<Manifest> {
    let config = figure.config(overrides)?;
    let dir = out_root.join(figure.to_string());
    let mut out = OutputDir::create(&dir, &format!("reproduce {figure}"), &config.hash())?;
    out.text("config.toml", &config.to_toml())?;
    match figure {
        Figure::Fig2 => {
            let run = sound_speed_run(&config)?;
            write_sound_speed(&mut out, &run, &config)?;
            let (c, e) = run.recovered();
            out.json(
                "summary.json",
                &Fig2Summary {
                    injected_c: run.injected(),
                    recovered_c: c,
                    recovered_c_err: e,
                    relative_error: c / run.injected() - 1.0,
                    reduced_chi2: run.fit.reduced_chi2(),
                    max_ridge_cells: run.ridge.iter().map(|r| r.cells.abs()).fold(0.0, f64::max),
                },
            )?;
        }
        Figure::Fig3 => {
            let s = strength_series(&config)?;
            for p in &s.points {
                let mut c = p.report.to_container(&config)?;
                c.set_attribute("g", p.g);
                out.container(&format!("qwv_g{}.vhl", p.g), &c)?;
                p.report.write_reports(&mut out, &format!("g{}_", p.g))?;
            }
            let gs: Vec<f64> = s.points.iter().map(|p| p.g).collect();
            let mut cols: Vec<(String, Vec<f64>)> = vec![
                ("g".into(), gs.clone()),
                ("phi".into(), s.points.iter().map(|p| p.phi).collect()),
                ("ccf_amplitude".into(), s.points.iter().map(|p| p.report.ccf[0].amplitude).collect()),
                ("ccf_err".into(), s.points.iter().map(|p| p.report.ccf[0].amplitude_err).collect()),
            ];
            for (f, a) in s.amplification.iter().enumerate() {
                cols.push((format!("qwv_fd{}", a.discarded_fraction), s.points.iter().map(|p| p.report.entries[f].amplitude).collect()));
                cols.push((format!("qwv_fd{}_err", a.discarded_fraction), s.points.iter().map(|p| p.report.entries[f].amplitude_err).collect()));
            }
            let named: Vec<(&str, &[f64])> = cols.iter().map(|(n, v)| (n.as_str(), v.as_slice())).collect();
            out.columns("strength_series.csv", &named)?;
            let col = |f: fn(&AmplificationPoint) -> f64| s.amplification.iter().map(f).collect::<Vec<_>>();
            let fd = col(|a| a.discarded_fraction);
            let (expected, measured) = (col(|a| a.expected), col(|a| a.measured));
            out.columns(
                "amplification.csv",
                &[("discarded_fraction", &fd), ("threshold", &col(|a| a.threshold)), ("expected", &expected), ("measured", &measured), ("error", &col(|a| a.error))],
            )?;
            out.lines(
                "amplification.svg",
                "Weak-value amplification",
                "discarded fraction",
                "slope ratio",
                &[Series { label: "theory".into(), x: &fd, y: &expected }, Series { label: "simulated".into(), x: &fd, y: &measured }],
            )?;
            let (b, be) = s.qwv_line.x_intercept();
            out.json(
                "summary.json",
                &Fig3Summary {
                    ccf_slope: s.ccf_line.slope,
                    ccf_slope_err: s.ccf_line.slope_err(),
                    qwv_slope: s.qwv_line.slope,
                    qwv_slope_err: s.qwv_line.slope_err(),
                    qwv_offset: b,
                    qwv_offset_err: be,
                    amplification: s.amplification.clone(),
                },
            )?;
        }
        Figure::Fig4 => {
            let s = temperature_series(&config)?;
            let mut rows = Vec::new();
            for (n, p) in s.points.iter().enumerate() {
                let mut sub = OutputDir::create(&dir.join(format!("point{n}")), "reproduce fig4 point", &config.hash())?;
                write_sound_speed(&mut sub, &p.run, &config)?;
                p.weak_values.write_reports(&mut sub, "")?;
                for (name, hash) in sub.finish()?.files {
                    out.files_mut().insert(format!("point{n}/{name}"), hash);
                }
                let (c, e) = p.run.recovered_scaled();
                rows.push([p.condensate_fraction, p.temperature_hz, p.injected, c, e, s.sound.curve(p.condensate_fraction)?]);
            }
            let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<_>>();
            out.columns(
                "sound_vs_rc.csv",
                &[("condensate_fraction", &col(0)), ("temperature_hz", &col(1)), ("injected_c", &col(2)), ("recovered_c", &col(3)), ("recovered_err", &col(4)), ("model_c", &col(5))],
            )?;
            let rc_grid: Vec<f64> = (1..=50).map(|i| i as f64 / 50.0).collect();
            let curve = rc_grid.iter().map(|&r| s.sound.curve(r)).collect::<Result<Vec<_>>>()?;
            let (rc, rec) = (col(0), col(3));
            out.lines(
                "sound_vs_rc.svg",
                "Sound speed against condensate fraction",
                "R_c",
                "c (m/s)",
                &[Series { label: "fit".into(), x: &rc_grid, y: &curve }, Series { label: "recovered".into(), x: &rc, y: &rec }],
            )?;
            let (first, last) = (&s.points[0], &s.points[s.points.len() - 1]);
            let ((c1, e1), (c2, e2)) = (first.run.recovered_scaled(), last.run.recovered_scaled());
            let r = c2 / c1;
            out.json(
                "summary.json",
                &Fig4Summary {
                    reference_c0: s.reference,
                    fitted_c0: s.sound.c0,
                    fitted_c0_err: s.sound.c0_err,
                    chi2: s.sound.chi2,
                    omega_ratio_sq: s.sound.omega_ratio_sq,
                    speed_ratio: [last.injected / first.injected, r, r * ((e1 / c1).powi(2) + (e2 / c2).powi(2)).sqrt()],
                },
            )?;
        }
    }
    out.finish()
}
