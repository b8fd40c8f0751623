//! Post-selected weak values at increasing discarded fraction, compared
//! with the Gaussian amplification law.

use vanhove_lab::commands::{simulate, weak_values, Figure};
use vanhove_lab::weak_values::amplification;

fn main() -> vanhove_lab::Result<()> {
    let config = Figure::Fig3.config(&["simulation.shots=256".into(), "qwv.discarded_fractions=[0.0, 0.3, 0.6, 0.8]".into()])?;
    let data = simulate(&config)?;
    let fs = data.fluctuations(&config.analysis.to_config())?;
    let report = weak_values(&fs, &config)?;
    println!("CCF amplitude {:.4} ± {:.4}", report.ccf[0].amplitude, report.ccf[0].amplitude_err);
    println!("{:>6} {:>7} {:>10} {:>16}", "f_d", "T", "theory", "measured");
    for e in &report.entries {
        println!(
            "{:>6.2} {:>7.3} {:>10.4} {:>8.4} ± {:.4}",
            e.discarded_fraction,
            e.threshold,
            amplification(e.threshold),
            e.ratio,
            e.ratio_err
        );
    }
    Ok(())
}
