//! Simulate a two-pulse ensemble and save it as a container.
//!
//! cargo run --release --example simulate_ensemble -- [out.vhl]

use vanhove_lab::commands::{simulate, write_container};
use vanhove_lab::io::RunConfig;
use vanhove_lab::stats::{mean, variance};

fn main() -> vanhove_lab::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "ensemble.vhl".into());
    let config = RunConfig::from_toml(
        r#"
[simulation]
shots = 64
seed = 3
pulse_times_ms = [0.0, 1.0]
strengths = [1.0]
"#,
        &[],
    )?;
    let data = simulate(&config)?;
    for (p, pulse) in data.pulses.iter().enumerate() {
        let totals: Vec<f64> = data.densities[p].iter().map(|d| d.data.iter().sum()).collect();
        println!(
            "pulse {p} at {:.2} ms: g = {:.2}, phi = {:.4}, atoms/shot {:.0} (sd {:.0})",
            pulse.time * 1e3,
            pulse.g,
            pulse.phi,
            mean(&totals),
            variance(&totals).sqrt()
        );
    }
    let c = data.to_container()?;
    write_container(std::path::Path::new(&out), &c)?;
    println!("wrote {out} ({})", c.content_hash());
    Ok(())
}
