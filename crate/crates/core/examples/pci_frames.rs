//! Render phase-contrast frames (with atoms, probe, dark) for an ensemble
//! and recover the densities from them.

use vanhove_lab::analysis::pipeline::densities_from_frames;
use vanhove_lab::commands::simulate;
use vanhove_lab::io::RunConfig;

fn main() -> vanhove_lab::Result<()> {
    let config = RunConfig::from_toml(
        r#"
[simulation]
shots = 16
pulse_times_ms = [0.0, 1.0]
render = true
fringe_amplitude = 0.05
"#,
        &[],
    )?;
    let data = simulate(&config)?;
    let frames = data.frames.as_ref().expect("rendered");
    let analysis = config.analysis.to_config();
    let window = analysis.window(&data.physics)?;
    let recovered = densities_from_frames(frames, 0, &data.physics, &window, analysis.probe_components)?;
    let support = window.support();
    for (s, (r, d)) in recovered.iter().zip(&data.densities[0]).enumerate().take(4) {
        let (mut num, mut den) = (0.0, 0.0);
        for i in (0..d.len()).filter(|&i| support[i]) {
            num += (r.data[i] - d.data[i]).powi(2);
            den += d.data[i].powi(2);
        }
        println!("shot {s}: clamped {} pixels, relative rms error in window {:.2e}", frames[s].clamped, (num / den).sqrt());
    }
    Ok(())
}
