//! Remove a shot-to-shot fringe at small k from pulse-pair CPSDs with the
//! mismatched-shot principal components.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vanhove_lab::analysis::spectral::{KMaskSpec, Retain};
use vanhove_lab::analysis::{AnalysisConfig, FluctuationSet, SmallK};
use vanhove_lab::commands::Figure;
use vanhove_lab::grid::RealMap;

fn main() -> vanhove_lab::Result<()> {
    let physics = Figure::Fig2.config(&[])?.physics()?;
    let g = physics.grid;
    let kf = 2.0 * PI * 3.0 / (g.nx as f64 * g.pitch);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut densities = vec![Vec::new(), Vec::new()];
    for _ in 0..64 {
        let (amp, phase) = (rng.sample::<f64, _>(StandardNormal), rng.random::<f64>() * 2.0 * PI);
        for d in densities.iter_mut() {
            d.push(RealMap::from_fn(g.nx, g.ny, |i, _| 50.0 + rng.sample::<f64, _>(StandardNormal) + amp * (kf * g.x(i) + phase).cos()));
        }
    }
    let mask = KMaskSpec::Disk { radius: 2.0 * PI * 5.5 / (g.nx as f64 * g.pitch) };
    let base = AnalysisConfig { fluctuation_components: 0, ..AnalysisConfig::default() };
    let fs = FluctuationSet::from_densities(densities, &physics, vec![0.0, 1e-3], &base)?;
    let inside = mask.build(&g);
    let masked = |c: &vanhove_lab::analysis::CcfEstimate| -> f64 {
        c.cpsd.data.iter().zip(&inside.data).filter(|(_, &m)| m).map(|(v, _)| v.norm()).sum()
    };
    let raw = fs.ccf(0, 1, &base)?;
    for retain in [Retain::Count(0), Retain::Count(1), Retain::Variance(0.87)] {
        let cfg = AnalysisConfig { small_k: SmallK::Pca { mask: mask.clone(), basis_size: 512, retain }, ..base.clone() };
        let c = fs.ccf(0, 1, &cfg)?;
        let kept = c.small_k.as_ref().map_or(0, |r| r.retained);
        println!("{retain:?}: {kept} components, masked |CPSD| {:.3e} -> {:.3e}", masked(&raw), masked(&c));
    }
    Ok(())
}
