use std::path::Path;

use log::info;
use serde::Serialize;

use super::analyze::{Products, KIND as PRODUCTS};
use super::{ms, read_container, um, OutputDir};
use crate::analysis::VanHove;
use crate::error::{Error, Result};
use crate::fitting::{fit_global, fit_individual, initial_guess, FitMode, FitResult, FitSlice, LineShapeModel, LineShapeParams};
use crate::io::plot::Series;
use crate::io::RunConfig;
use crate::simulator::PhysicsConfig;

/// Fit the Van Hove slices with the configured mode.
pub fn run_fit(vh: &VanHove, config: &RunConfig, physics: &PhysicsConfig) -> Result<(FitResult, LineShapeModel)> {
    let opts = config.fit.options()?;
    let model = config.fit.model(physics);
    let slices = FitSlice::from_van_hove(vh);
    let init = initial_guess(&model, &slices, &opts, config.fit.resolution_um * 1e-6)?;
    info!("initial c = {:.4} mm/s", init.sound_speed * 1e3);
    let result = match config.fit.mode {
        FitMode::Global => fit_global(&model, &slices, &init, &opts)?,
        FitMode::Individual => fit_individual(&model, &slices, &init, &opts)?,
    };
    Ok((result, model))
}

#[derive(Serialize)]
struct Sidecar<'a> {
    kind: &'static str,
    config_hash: String,
    source: Option<&'a str>,
    mode: FitMode,
    free: &'a [&'static str],
    chi2: f64,
    dof: usize,
    reduced_chi2: f64,
    iterations: usize,
    parameters: [&'static str; LineShapeParams::N],
    units: [&'static str; LineShapeParams::N],
    slices: &'a [crate::fitting::SliceFit],
}

const UNITS: [&str; LineShapeParams::N] = ["m/s", "1", "1", "1/s", "m"];

/// Fit tables (`fit_params.csv`, `fit_model.csv`), plot and JSON sidecar.
pub fn write_fit(out: &mut OutputDir, vh: &VanHove, fit: &FitResult, model: &LineShapeModel, config: &RunConfig, source: Option<&str>) -> Result<()> {
    let rows: Vec<Vec<String>> = fit
        .slices
        .iter()
        .flat_map(|s| {
            let p = s.params.to_vec();
            (0..LineShapeParams::N).map(move |k| {
                vec![s.dt.to_string(), LineShapeParams::NAMES[k].to_string(), p[k].to_string(), s.errors[k].to_string(), UNITS[k].to_string()]
            })
        })
        .collect();
    out.rows("fit_params.csv", &["dt_s", "parameter", "value", "error", "units"], &rows)?;

    let dx_um = um(&vh.dx);
    let curves: Vec<Vec<f64>> = fit.slices.iter().map(|s| model.curve(&vh.dx, s.dt, &s.params)).collect();
    let mut cols: Vec<(String, &[f64])> = vec![("dx_um".into(), &dx_um)];
    for (t, (data, m)) in ms(&vh.dt).iter().zip(vh.values.iter().zip(&curves)) {
        cols.push((format!("data_{t}ms"), data));
        cols.push((format!("model_{t}ms"), m));
    }
    let named: Vec<(&str, &[f64])> = cols.iter().map(|(n, v)| (n.as_str(), *v)).collect();
    out.columns("fit_model.csv", &named)?;

    let max_dx = config.fit.max_dx_um.unwrap_or(f64::INFINITY);
    let keep: Vec<usize> = (0..dx_um.len()).filter(|&i| dx_um[i].abs() <= max_dx).collect();
    let xs: Vec<f64> = keep.iter().map(|&i| dx_um[i]).collect();
    let picked: Vec<(String, Vec<f64>)> = vh
        .dt
        .iter()
        .enumerate()
        .flat_map(|(t, dt)| {
            let d = keep.iter().map(|&i| vh.values[t][i]).collect();
            let m = keep.iter().map(|&i| curves[t][i]).collect();
            [(format!("{:.2} ms", dt * 1e3), d), (format!("{:.2} ms fit", dt * 1e3), m)]
        })
        .collect();
    let series: Vec<Series> = picked.iter().map(|(l, y)| Series { label: l.clone(), x: &xs, y }).collect();
    out.lines("fit.svg", "Line-shape fit", "dx (um)", "CCF (atoms^2)", &series)?;

    let sidecar = Sidecar {
        kind: "fit",
        config_hash: config.hash(),
        source,
        mode: fit.mode,
        free: &fit.free,
        chi2: fit.chi2,
        dof: fit.dof,
        reduced_chi2: fit.reduced_chi2(),
        iterations: fit.iterations,
        parameters: LineShapeParams::NAMES,
        units: UNITS,
        slices: &fit.slices,
    };
    out.json("fit.json", &sidecar)
}

/// Fit a products file. The physics comes from the products' own
/// configuration; `config` supplies the fit section.
pub fn cmd_fit(products: &Path, config: Option<&RunConfig>, out_dir: &Path) -> Result<super::Manifest> {
    let c = read_container(products, PRODUCTS)?;
    let p = Products::from_container(&c)?;
    let stored: RunConfig = c.attribute("config")?;
    let mut cfg = stored.clone();
    if let Some(u) = config {
        if u.grid != stored.grid {
            return Err(Error::Data("grid mismatch between products and configuration".into()));
        }
        cfg.fit = u.fit.clone();
    }
    let physics = cfg.physics()?;
    let (fit, model) = run_fit(&p.van_hove, &cfg, &physics)?;
    let mut out = OutputDir::create(out_dir, "fit", &cfg.hash())?;
    write_fit(&mut out, &p.van_hove, &fit, &model, &cfg, Some(&c.content_hash()))?;
    out.finish()
}
