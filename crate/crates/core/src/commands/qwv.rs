use std::path::Path;

use log::info;
use serde::Serialize;

use super::ensemble::{merge_config, EnsembleData};
use super::{read_container, OutputDir};
use crate::analysis::FluctuationSet;
use crate::error::{Error, Result};
use crate::fitting::{amplitude_ratio, template_amplitude, template_projections, LineShapeParams};
use crate::io::plot::Series;
use crate::io::{RunConfig, TensorContainer};
use crate::stats::{mean, sem};
use crate::weak_values::{qwv_estimate, PostSelectionSpec, WeakValueResult};

pub const KIND: &str = "weak-values";

/// Weak value of one pulse pair at one discarded fraction.
#[derive(Debug, Clone, Serialize)]
pub struct QwvEntry {
    pub first: usize,
    pub second: usize,
    pub delay: f64,
    pub discarded_fraction: f64,
    pub threshold: f64,
    /// Predicted amplification relative to the pair's reference fraction.
    pub expected_ratio: f64,
    /// Line-shape amplitude of the weak-value curve.
    pub amplitude: f64,
    pub amplitude_err: f64,
    /// Amplitude relative to the reference fraction, with delta-method error.
    pub ratio: f64,
    pub ratio_err: f64,
    #[serde(skip)]
    pub curve: WeakValueResult,
    #[serde(skip)]
    pub projections: Vec<f64>,
}

/// Ordinary CCF amplitude of a pulse pair, for comparison with the weak values.
#[derive(Debug, Clone, Serialize)]
pub struct CcfAmplitude {
    pub first: usize,
    pub second: usize,
    pub delay: f64,
    pub amplitude: f64,
    pub amplitude_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QwvReport {
    pub entries: Vec<QwvEntry>,
    pub ccf: Vec<CcfAmplitude>,
    /// Pixel pitch, to turn lags into distances.
    pub pitch: f64,
}

/// Line shape used as the amplitude template: the phonon part of the model
/// at the configured sound speed and resolution, with unit strength.
fn template_params(config: &RunConfig, c: f64) -> LineShapeParams {
    LineShapeParams {
        sound_speed: c,
        phonon_amplitude: 1.0,
        forward_amplitude: 0.0,
        forward_decay: 0.0,
        resolution: config.fit.resolution_um * 1e-6,
    }
}

/// Post-selected weak values for every configured pair and discarded
/// fraction, with template amplitudes and amplification ratios.
pub fn weak_values(fs: &FluctuationSet, config: &RunConfig) -> Result<QwvReport> {
    let physics = &fs.physics;
    let q = &config.qwv;
    let n = fs.maps.len();
    let pairs: Vec<(usize, usize)> =
        if q.pairs.is_empty() { (0..n.saturating_sub(1)).map(|a| (a, a + 1)).collect() } else { q.pairs.iter().map(|p| (p[0], p[1])).collect() };
    if pairs.is_empty() || q.discarded_fractions.is_empty() {
        return Err(Error::InvalidArgument("weak values need at least one pair and one discarded fraction".into()));
    }
    let model = config.fit.model(physics);
    let params = template_params(config, physics.condensate.sound_speed);
    let pitch = physics.grid.pitch;
    let reach = q.max_lag_px as f64 * pitch;
    let support = fs.window.support();
    let analysis = config.analysis.to_config();
    let mut fds = q.discarded_fractions.clone();
    fds.sort_by(f64::total_cmp);

    let mut entries = Vec::new();
    let mut ccf = Vec::new();
    for (a, b) in pairs {
        if a >= n || b >= n || a >= b {
            return Err(Error::InvalidArgument(format!("invalid pulse pair ({a}, {b})")));
        }
        let delay = fs.times[b] - fs.times[a];
        info!("weak values of pulses {a} and {b} (dt = {:.3} ms)", delay * 1e3);

        let c = fs.ccf(a, b, &analysis)?;
        let tmpl: Vec<f64> = c.dx.iter().map(|&x| if x.abs() <= reach { model.evaluate(x, delay, &params).0 } else { 0.0 }).collect();
        let (amp, err) = template_amplitude(&tmpl, &c.rows, &c.sem)?;
        ccf.push(CcfAmplitude { first: a, second: b, delay, amplitude: amp, amplitude_err: err });

        let mut reference: Option<(Vec<f64>, f64)> = None;
        for &fd in &fds {
            let spec = PostSelectionSpec::from_discarded(fd, q.mode)?;
            let curve = qwv_estimate(&fs.maps[a], &fs.maps[b], &support, &spec, q.max_lag_px)?;
            let tmpl: Vec<f64> = curve.lags.iter().map(|&l| model.evaluate(l as f64 * pitch, delay, &params).0).collect();
            let projections = template_projections(&tmpl, &curve.shot_curves, &curve.sem)?;
            let (ratio, ratio_err, expected_ratio) = match &reference {
                None => (1.0, 0.0, 1.0),
                Some((r, amp0)) => {
                    let (x, e) = amplitude_ratio(&projections, r)?;
                    (x, e, curve.amplification / amp0)
                }
            };
            if reference.is_none() {
                reference = Some((projections.clone(), curve.amplification));
            }
            entries.push(QwvEntry {
                first: a,
                second: b,
                delay,
                discarded_fraction: curve.discarded_fraction,
                threshold: spec.threshold,
                expected_ratio,
                amplitude: mean(&projections),
                amplitude_err: sem(&projections),
                ratio,
                ratio_err,
                curve,
                projections,
            });
        }
    }
    Ok(QwvReport { entries, ccf, pitch })
}

impl QwvReport {
    pub fn to_container(&self, config: &RunConfig) -> Result<TensorContainer> {
        let mut c = TensorContainer::new(KIND, &config.hash());
        c.set_attribute("config", config);
        c.set_attribute("entries", &self.entries);
        c.set_attribute("ccf", &self.ccf);
        let (ne, nl) = (self.entries.len(), self.entries.first().map_or(0, |e| e.curve.lags.len()));
        if let Some(e) = self.entries.first() {
            c.push("lags", &[nl], "pixels", crate::io::ArrayData::I64(e.curve.lags.iter().map(|&l| l as i64).collect()))?;
        }
        c.push_f64("qwv", &[ne, nl], "atoms/pixel", self.entries.iter().flat_map(|e| e.curve.mean.iter().copied()).collect())?;
        c.push_f64("qwv_err", &[ne, nl], "atoms/pixel", self.entries.iter().flat_map(|e| e.curve.sem.iter().copied()).collect())?;
        Ok(c)
    }

    /// `qwv_curves.csv`, `qwv_amplitudes.csv`, `ccf_amplitudes.csv` and a plot.
    pub fn write_reports(&self, out: &mut OutputDir, prefix: &str) -> Result<()> {
        let mut curves = Vec::new();
        for e in &self.entries {
            for (k, &lag) in e.curve.lags.iter().enumerate() {
                curves.push(vec![
                    e.first.to_string(),
                    e.second.to_string(),
                    e.discarded_fraction.to_string(),
                    lag.to_string(),
                    (lag as f64 * self.pitch * 1e6).to_string(),
                    e.curve.mean[k].to_string(),
                    e.curve.sem[k].to_string(),
                    e.curve.retained[k].to_string(),
                ]);
            }
        }
        out.rows(
            &format!("{prefix}qwv_curves.csv"),
            &["first", "second", "discarded_fraction", "lag_px", "dx_um", "qwv", "qwv_err", "retained"],
            &curves,
        )?;
        let amps: Vec<Vec<String>> = self
            .entries
            .iter()
            .map(|e| {
                [e.first as f64, e.second as f64, e.delay, e.discarded_fraction, e.threshold, e.amplitude, e.amplitude_err, e.ratio, e.ratio_err, e.expected_ratio]
                    .iter()
                    .map(f64::to_string)
                    .collect()
            })
            .collect();
        out.rows(
            &format!("{prefix}qwv_amplitudes.csv"),
            &["first", "second", "delay_s", "discarded_fraction", "threshold", "amplitude", "amplitude_err", "ratio", "ratio_err", "expected_ratio"],
            &amps,
        )?;
        let ccf: Vec<Vec<String>> = self
            .ccf
            .iter()
            .map(|c| [c.first as f64, c.second as f64, c.delay, c.amplitude, c.amplitude_err].iter().map(f64::to_string).collect())
            .collect();
        out.rows(&format!("{prefix}ccf_amplitudes.csv"), &["first", "second", "delay_s", "amplitude", "amplitude_err"], &ccf)?;

        let xs: Vec<Vec<f64>> = self.entries.iter().map(|e| e.curve.lags.iter().map(|&l| l as f64 * self.pitch * 1e6).collect()).collect();
        let series: Vec<Series> = self
            .entries
            .iter()
            .zip(&xs)
            .map(|(e, x)| Series { label: format!("{}-{} fd {:.2}", e.first, e.second, e.discarded_fraction), x, y: &e.curve.mean })
            .collect();
        out.lines(&format!("{prefix}qwv.svg"), "Post-selected weak values", "dx (um)", "QWV (atoms/pixel)", &series)
    }
}

/// Weak values of an ensemble file.
pub fn cmd_qwv(ensemble: &Path, config: Option<&RunConfig>, out_dir: &Path) -> Result<super::Manifest> {
    let c = read_container(ensemble, super::ensemble::KIND)?;
    let data = EnsembleData::from_container(&c)?;
    let cfg = merge_config(&data.config, config)?;
    let fs = data.fluctuations(&cfg.analysis.to_config())?;
    let report = weak_values(&fs, &cfg)?;
    let mut out = OutputDir::create(out_dir, "qwv", &cfg.hash())?;
    let mut container = report.to_container(&cfg)?;
    container.set_attribute("source", c.content_hash());
    out.container("qwv.vhl", &container)?;
    report.write_reports(&mut out, "")?;
    out.finish()
}
