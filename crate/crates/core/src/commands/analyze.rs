use std::collections::BTreeMap;
use std::path::Path;

use log::{info, warn};

use super::ensemble::{merge_config, EnsembleData};
use super::{ms, read_container, um, OutputDir};
use crate::analysis::{assemble_van_hove, dsf, Dsf, FluctuationSet, VanHove};
use crate::error::{Error, Result};
use crate::io::config::AnalysisSection;
use crate::io::plot::Series;
use crate::io::{RunConfig, TensorContainer};

pub const KIND: &str = "products";

/// Correlation products of one ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Products {
    pub van_hove: VanHove,
    /// Pulse pairs averaged into each Van Hove slice.
    pub slice_pairs: Vec<Vec<(usize, usize)>>,
    /// Equal-time CCF of the reference pulse (shot-noise offset removed).
    pub auto: Option<(Vec<f64>, Vec<f64>)>,
    pub dsf: Option<Dsf>,
    /// Retained / offered principal components of small-k cleaning, per pair.
    pub small_k: Vec<(usize, usize)>,
}

/// Inverse-variance average of CCFs that share a delay.
fn combine(curves: &[(Vec<f64>, Vec<f64>)]) -> (Vec<f64>, Vec<f64>) {
    if curves.len() == 1 {
        return curves[0].clone();
    }
    let n = curves[0].0.len();
    let mut mean = vec![0.0; n];
    let mut err = vec![0.0; n];
    for i in 0..n {
        let (mut sw, mut swy) = (0.0, 0.0);
        for (y, e) in curves {
            let w = if e[i] > 0.0 { 1.0 / (e[i] * e[i]) } else { 0.0 };
            sw += w;
            swy += w * y[i];
        }
        if sw > 0.0 {
            mean[i] = swy / sw;
            err[i] = sw.sqrt().recip();
        }
    }
    (mean, err)
}

/// CCFs for every configured pulse pair, the Van Hove matrix and the DSF.
pub fn analyze(fs: &FluctuationSet, section: &AnalysisSection) -> Result<Products> {
    let cfg = section.to_config();
    let n = fs.maps.len();
    let r = section.reference_pulse;
    if r >= n {
        return Err(Error::InvalidArgument(format!("reference pulse {r} of {n}")));
    }
    let pairs: Vec<(usize, usize)> = if section.all_pairs {
        (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect()
    } else {
        (r + 1..n).map(|b| (r, b)).collect()
    };
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no pulse pairs after the reference pulse".into()));
    }
    // Group by delay at nanosecond resolution.
    let mut groups: BTreeMap<i64, Vec<(usize, usize)>> = BTreeMap::new();
    for &(a, b) in &pairs {
        let dt = fs.times[b] - fs.times[a];
        groups.entry((dt * 1e9).round() as i64).or_default().push((a, b));
    }
    let mut dx = Vec::new();
    let mut slices = Vec::new();
    let mut slice_pairs = Vec::new();
    let mut small_k = Vec::new();
    for (key, members) in groups {
        let mut curves = Vec::new();
        for &(a, b) in &members {
            info!("CCF of pulses {a} and {b}");
            let c = fs.ccf(a, b, &cfg)?;
            if let Some(rep) = c.small_k {
                small_k.push((rep.retained, rep.basis_size));
            }
            dx = c.dx;
            curves.push((c.mean, c.sem));
        }
        let (mean, err) = combine(&curves);
        slices.push((key as f64 * 1e-9, mean, err));
        slice_pairs.push(members);
    }
    let van_hove = assemble_van_hove(dx, slices, section.symmetrize)?;
    let auto = {
        let c = fs.ccf(r, r, &cfg)?;
        Some((c.mean, c.sem))
    };
    let dsf = match dsf(&van_hove, fs.physics.k_na()) {
        Ok(d) => Some(d),
        Err(e) => {
            warn!("no DSF: {e}");
            None
        }
    };
    Ok(Products { van_hove, slice_pairs, auto, dsf, small_k })
}

impl Products {
    pub fn to_container(&self, config: &RunConfig, source_hash: Option<&str>) -> Result<TensorContainer> {
        let vh = &self.van_hove;
        let (nt, nx) = (vh.dt.len(), vh.dx.len());
        let mut c = TensorContainer::new(KIND, &config.hash());
        c.set_attribute("config", config);
        c.set_attribute("symmetrized", vh.symmetrized);
        c.set_attribute("slice_pairs", &self.slice_pairs);
        c.set_attribute("small_k", &self.small_k);
        if let Some(h) = source_hash {
            c.set_attribute("source", h);
        }
        c.push_f64("dx", &[nx], "m", vh.dx.clone())?;
        c.push_f64("dt", &[nt], "s", vh.dt.clone())?;
        c.push_f64("van_hove", &[nt, nx], "atoms^2", vh.values.concat())?;
        c.push_f64("van_hove_err", &[nt, nx], "atoms^2", vh.errors.concat())?;
        if let Some((m, e)) = &self.auto {
            c.push_f64("auto_ccf", &[nx], "atoms^2", m.clone())?;
            c.push_f64("auto_ccf_err", &[nx], "atoms^2", e.clone())?;
        }
        if let Some(d) = &self.dsf {
            c.push_f64("dsf_k", &[d.k.len()], "rad/m", d.k.clone())?;
            c.push_f64("dsf_omega", &[d.omega.len()], "rad/s", d.omega.clone())?;
            c.push_f64("dsf", &[d.k.len(), d.omega.len()], "atoms^2 m s", d.values.concat())?;
        }
        Ok(c)
    }

    pub fn from_container(c: &TensorContainer) -> Result<Self> {
        if c.kind != KIND {
            return Err(Error::Data(format!("expected a products container, found {:?}", c.kind)));
        }
        let dx = c.f64("dx")?.1.to_vec();
        let dt = c.f64("dt")?.1.to_vec();
        let rows = |name: &str| -> Result<Vec<Vec<f64>>> {
            let (dims, v) = c.f64(name)?;
            if dims != [dt.len(), dx.len()] {
                return Err(Error::DimensionMismatch(format!("{name} has dims {dims:?}")));
            }
            Ok(v.chunks_exact(dx.len()).map(<[f64]>::to_vec).collect())
        };
        let van_hove =
            VanHove { values: rows("van_hove")?, errors: rows("van_hove_err")?, symmetrized: c.attribute("symmetrized")?, dx, dt };
        let auto = match (c.f64("auto_ccf"), c.f64("auto_ccf_err")) {
            (Ok(m), Ok(e)) => Some((m.1.to_vec(), e.1.to_vec())),
            _ => None,
        };
        let dsf = match (c.f64("dsf_k"), c.f64("dsf_omega"), c.f64("dsf")) {
            (Ok(k), Ok(w), Ok(v)) => Some(Dsf {
                k: k.1.to_vec(),
                omega: w.1.to_vec(),
                values: v.1.chunks_exact(w.1.len()).map(<[f64]>::to_vec).collect(),
            }),
            _ => None,
        };
        Ok(Self { van_hove, slice_pairs: c.attribute("slice_pairs")?, auto, dsf, small_k: c.attribute("small_k")? })
    }

    /// CSV tables and plots of the products.
    pub fn write_reports(&self, out: &mut OutputDir) -> Result<()> {
        let vh = &self.van_hove;
        let dx_um = um(&vh.dx);
        let dt_ms = ms(&vh.dt);
        out.matrix("van_hove.csv", "dt_ms\\dx_um", &dt_ms, &dx_um, &vh.values)?;
        out.matrix("van_hove_err.csv", "dt_ms\\dx_um", &dt_ms, &dx_um, &vh.errors)?;
        let mut cols: Vec<(String, &[f64])> = vec![("dx_um".into(), &dx_um)];
        if let Some((m, e)) = &self.auto {
            cols.push(("auto".into(), m));
            cols.push(("auto_err".into(), e));
        }
        for (t, (v, e)) in dt_ms.iter().zip(vh.values.iter().zip(&vh.errors)) {
            cols.push((format!("dt_{t}ms"), v));
            cols.push((format!("dt_{t}ms_err"), e));
        }
        let named: Vec<(&str, &[f64])> = cols.iter().map(|(n, v)| (n.as_str(), *v)).collect();
        out.columns("ccf.csv", &named)?;

        let series: Vec<Series> = vh
            .values
            .iter()
            .zip(&dt_ms)
            .map(|(v, t)| Series { label: format!("{t} ms"), x: &dx_um, y: v })
            .collect();
        out.lines("ccf.svg", "Cross-correlation per delay", "dx (um)", "CCF (atoms^2)", &series)?;
        // Heatmap rows are delays, columns lags.
        out.heatmap("van_hove.png", &vh.values, 4)?;
        if let Some(d) = &self.dsf {
            let k = d.k_cycles().iter().map(|v| v * 1e-6).collect::<Vec<_>>();
            let f = d.frequency_hz();
            out.matrix("dsf.csv", "k_per_um\\f_hz", &k, &f, &d.values)?;
            // Transposed so ω runs up the image and k across it.
            let t: Vec<Vec<f64>> = (0..d.omega.len()).map(|w| d.values.iter().map(|col| col[w]).collect()).collect();
            out.heatmap("dsf.png", &t, 8)?;
            let ridge = d.ridge();
            out.columns("dsf_ridge.csv", &[("k_per_um", &k), ("omega_peak_rad_s", &ridge)])?;
        }
        Ok(())
    }
}

/// Analyse an ensemble file: products container, CSV tables and plots.
pub fn cmd_analyze(ensemble: &Path, config: Option<&RunConfig>, out_dir: &Path) -> Result<super::Manifest> {
    let c = read_container(ensemble, super::ensemble::KIND)?;
    let data = EnsembleData::from_container(&c)?;
    let cfg = merge_config(&data.config, config)?;
    let fs = data.fluctuations(&cfg.analysis.to_config())?;
    let products = analyze(&fs, &cfg.analysis)?;
    let mut out = OutputDir::create(out_dir, "analyze", &cfg.hash())?;
    out.container("products.vhl", &products.to_container(&cfg, Some(&c.content_hash()))?)?;
    products.write_reports(&mut out)?;
    out.finish()
}
