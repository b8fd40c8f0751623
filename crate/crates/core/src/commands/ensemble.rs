use std::path::Path;

use log::info;

use super::{read_container, write_container};
use crate::analysis::pipeline::densities_from_frames;
use crate::analysis::{AnalysisConfig, FluctuationSet};
use crate::error::{Error, Result};
use crate::grid::RealMap;
use crate::io::{ArrayData, RunConfig, TensorContainer};
use crate::simulator::{render_ensemble, run_sequence, FrameTriplet, MeasurementPulse, PhysicsConfig, RenderedShot};

pub const KIND: &str = "ensemble";

/// A simulated dataset as stored on disk: measured densities per pulse and
/// shot, and optionally the raw PCI frames they were imaged from.
#[derive(Debug, Clone)]
pub struct EnsembleData {
    pub config: RunConfig,
    pub physics: PhysicsConfig,
    pub pulses: Vec<MeasurementPulse>,
    /// `densities[pulse][shot]`, atoms per pixel.
    pub densities: Vec<Vec<RealMap>>,
    pub mean_profile: RealMap,
    pub atom_scale: Vec<f64>,
    pub center_offset: Vec<f64>,
    pub frames: Option<Vec<RenderedShot>>,
}

/// Run the configured pulse sequence, and render frames if requested.
pub fn simulate(config: &RunConfig) -> Result<EnsembleData> {
    let physics = config.physics()?;
    let pulses = config.pulses(&physics);
    let s = &config.simulation;
    info!("simulating {} shots of {} pulses (seed {})", s.shots, pulses.len(), s.seed);
    let e = run_sequence(&physics, &pulses, s.shots, s.seed)?;
    let frames = if s.render {
        info!("rendering PCI frames");
        Some(render_ensemble(&e, &config.render())?)
    } else {
        None
    };
    let densities = (0..pulses.len()).map(|p| e.shots.iter().map(|r| r.outcomes[p].clone()).collect()).collect();
    Ok(EnsembleData {
        config: config.clone(),
        physics,
        pulses,
        densities,
        mean_profile: e.mean_profile,
        atom_scale: e.shots.iter().map(|r| r.atom_scale).collect(),
        center_offset: e.shots.iter().map(|r| r.center_offset).collect(),
        frames,
    })
}

impl EnsembleData {
    pub fn shots(&self) -> usize {
        self.densities.first().map_or(0, Vec::len)
    }

    pub fn times(&self) -> Vec<f64> {
        self.pulses.iter().map(|p| p.time).collect()
    }

    /// Fluctuation maps, from the frames when present.
    pub fn fluctuations(&self, analysis: &AnalysisConfig) -> Result<FluctuationSet> {
        let densities = match &self.frames {
            Some(frames) => {
                let window = analysis.window(&self.physics)?;
                (0..self.pulses.len())
                    .map(|p| densities_from_frames(frames, p, &self.physics, &window, analysis.probe_components))
                    .collect::<Result<Vec<_>>>()?
            }
            None => self.densities.clone(),
        };
        FluctuationSet::from_densities(densities, &self.physics, self.times(), analysis)
    }

    pub fn to_container(&self) -> Result<TensorContainer> {
        let g = self.physics.grid;
        let (np, m) = (self.pulses.len(), self.shots());
        let mut c = TensorContainer::new(KIND, &self.config.hash());
        c.set_attribute("config", &self.config);
        c.set_attribute("pulses", &self.pulses);
        c.set_attribute("rendered", self.frames.is_some());
        let outcomes: Vec<f64> = self.densities.iter().flatten().flat_map(|d| d.data.iter().copied()).collect();
        c.push_f64("outcomes", &[np, m, g.ny, g.nx], "atoms/pixel", outcomes)?;
        c.push_f64("mean_profile", &[g.ny, g.nx], "atoms/pixel", self.mean_profile.data.clone())?;
        c.push_f64("pulse_time", &[np], "s", self.times())?;
        c.push_f64("pulse_g", &[np], "1", self.pulses.iter().map(|p| p.g).collect())?;
        c.push_f64("pulse_phi", &[np], "1", self.pulses.iter().map(|p| p.phi).collect())?;
        c.push_f64("atom_scale", &[m], "1", self.atom_scale.clone())?;
        c.push_f64("center_offset", &[m], "m", self.center_offset.clone())?;
        if let Some(frames) = &self.frames {
            let mut data = Vec::with_capacity(np * m * 3 * g.len());
            for p in 0..np {
                for s in frames {
                    let f = &s.frames[p];
                    for map in [&f.with_atoms, &f.probe, &f.dark] {
                        data.extend(map.data.iter().map(|&v| v as f32));
                    }
                }
            }
            c.push("frames", &[np, m, 3, g.ny, g.nx], "photons", ArrayData::F32(data))?;
            c.push("clamped", &[m], "pixels", ArrayData::I64(frames.iter().map(|s| s.clamped as i64).collect()))?;
        }
        Ok(c)
    }

    pub fn from_container(c: &TensorContainer) -> Result<Self> {
        if c.kind != KIND {
            return Err(Error::Data(format!("expected an ensemble container, found {:?}", c.kind)));
        }
        let config: RunConfig = c.attribute("config")?;
        let pulses: Vec<MeasurementPulse> = c.attribute("pulses")?;
        let physics = config.physics()?;
        let g = physics.grid;
        let (dims, outcomes) = c.f64("outcomes")?;
        if dims.len() != 4 || dims[0] != pulses.len() || dims[2] != g.ny || dims[3] != g.nx {
            return Err(Error::DimensionMismatch(format!("outcomes {dims:?} do not match {} pulses on {}x{}", pulses.len(), g.nx, g.ny)));
        }
        let m = dims[1];
        let maps: Vec<RealMap> =
            outcomes.chunks_exact(g.len()).map(|d| RealMap::from_vec(g.nx, g.ny, d.to_vec())).collect::<Result<_>>()?;
        let densities = maps.chunks_exact(m).map(<[RealMap]>::to_vec).collect();
        let (_, mean) = c.f64("mean_profile")?;
        let frames = if c.attribute::<bool>("rendered")? {
            let a = c.get("frames")?;
            let ArrayData::F32(data) = &a.data else {
                return Err(Error::Data("frames must be f32".into()));
            };
            let (_, clamped) = c.i64("clamped")?;
            let to_map = |k: usize| {
                let d = data[k * g.len()..(k + 1) * g.len()].iter().map(|&v| v as f64).collect();
                RealMap::from_vec(g.nx, g.ny, d)
            };
            let mut shots: Vec<RenderedShot> = (0..m)
                .map(|s| RenderedShot { shot_id: s as u64, frames: Vec::new(), clamped: clamped[s] as usize })
                .collect();
            for p in 0..pulses.len() {
                for (s, shot) in shots.iter_mut().enumerate() {
                    let base = (p * m + s) * 3;
                    shot.frames.push(FrameTriplet { with_atoms: to_map(base)?, probe: to_map(base + 1)?, dark: to_map(base + 2)? });
                }
            }
            Some(shots)
        } else {
            None
        };
        Ok(Self {
            physics,
            pulses,
            densities,
            mean_profile: RealMap::from_vec(g.nx, g.ny, mean.to_vec())?,
            atom_scale: c.f64("atom_scale")?.1.to_vec(),
            center_offset: c.f64("center_offset")?.1.to_vec(),
            frames,
            config,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_container(&read_container(path, KIND)?)
    }
}

/// Merge the analysis-side sections of `user` into the configuration an
/// ensemble was simulated with. The grids must agree.
pub fn merge_config(ensemble: &RunConfig, user: Option<&RunConfig>) -> Result<RunConfig> {
    let Some(u) = user else { return Ok(ensemble.clone()) };
    if u.grid != ensemble.grid {
        return Err(Error::Data(format!(
            "grid mismatch: input was simulated on {}x{} at {} um, configuration asks for {}x{} at {} um",
            ensemble.grid.nx, ensemble.grid.ny, ensemble.grid.pitch_um, u.grid.nx, u.grid.ny, u.grid.pitch_um
        )));
    }
    let mut out = ensemble.clone();
    out.analysis = u.analysis.clone();
    out.qwv = u.qwv.clone();
    out.fit = u.fit.clone();
    out.sweep = u.sweep.clone();
    Ok(out)
}

/// Simulate and write the ensemble container. Returns its content hash.
pub fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<String> {
    let data = simulate(config)?;
    let c = data.to_container()?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_container(out, &c)?;
    info!("wrote {} ({} shots)", out.display(), data.shots());
    Ok(c.content_hash())
}
