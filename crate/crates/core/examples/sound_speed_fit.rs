//! Inject a sound speed, recover it with the global line-shape fit.

use vanhove_lab::commands::reproduce::sound_speed_run;
use vanhove_lab::commands::Figure;

fn main() -> vanhove_lab::Result<()> {
    let config = Figure::Fig2.config(&["simulation.shots=64".into(), "physics.sound_speed_mm_s=1.5".into()])?;
    let run = sound_speed_run(&config)?;
    let (c, e) = run.recovered();
    println!("injected c = {:.3} mm/s", run.injected() * 1e3);
    println!("recovered c = {:.4} ± {:.4} mm/s, chi2_red {:.2}", c * 1e3, e * 1e3, run.fit.reduced_chi2());
    let p = run.fit.params();
    println!("s_p = {:.3}, h_f = {:.3}, gamma_f = {:.0} 1/s, sigma = {:.2} um", p.phonon_amplitude, p.forward_amplitude, p.forward_decay, p.resolution * 1e6);
    Ok(())
}
