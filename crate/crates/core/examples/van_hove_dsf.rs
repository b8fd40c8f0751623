//! Van Hove matrix and dynamical structure factor of a small pulse train.
//! Delays of Δ/2, 3Δ/2, … mirror onto a uniform grid for the transform.

use vanhove_lab::commands::{analyze, simulate};
use vanhove_lab::io::RunConfig;
use vanhove_lab::model::bogoliubov_omega;

fn main() -> vanhove_lab::Result<()> {
    let config = RunConfig::from_toml(
        r#"
[simulation]
shots = 64
seed = 11
pulse_times_ms = [0.0, 0.25, 0.75, 1.25, 1.75, 2.25]

[physics]
temperature_hz = 400.0
"#,
        &[],
    )?;
    let data = simulate(&config)?;
    let fs = data.fluctuations(&config.analysis.to_config())?;
    let products = analyze(&fs, &config.analysis)?;
    let vh = &products.van_hove;
    for (t, row) in vh.dt.iter().zip(&vh.values) {
        // Strongest positive-lag peak of each slice.
        let (i, v) = row
            .iter()
            .enumerate()
            .filter(|(i, _)| vh.dx[*i] > 0.0)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        println!("dt {:.2} ms: peak {v:.3e} at dx = {:.1} um", t * 1e3, vh.dx[i] * 1e6);
    }
    if let Some(dsf) = &products.dsf {
        let ridge = dsf.ridge();
        println!("omega grid step {:.0} rad/s", dsf.omega_step());
        for (k, w) in dsf.k.iter().zip(&ridge).filter(|(k, _)| **k > 0.0).step_by(8) {
            let want = bogoliubov_omega(*k, &data.physics.condensate)?;
            println!("k = {:.3} 1/um: ridge {:.0} rad/s, Bogoliubov {:.0} rad/s", k * 1e-6, w, want);
        }
    }
    Ok(())
}
