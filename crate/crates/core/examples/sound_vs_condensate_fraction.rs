//! Finite-temperature sound speed against condensate fraction, and the
//! one-parameter fit of c0 to a few points.

use vanhove_lab::fitting::{calibrate_omega_ratio_sq, fit_sound_vs_rc, SoundPoint};
use vanhove_lab::model::sound_speed_ratio;

fn main() -> vanhove_lab::Result<()> {
    let c0 = 1.37e-3;
    let x = calibrate_omega_ratio_sq(c0, 0.49, 1.28e-3)?;
    println!("omega_c^2/omega_0^2 = {x:.5}");
    for rc in [1.0, 0.9, 0.75, 0.6, 0.49, 0.3, 0.1] {
        println!("R_c = {rc:.2}: c = {:.4} mm/s", c0 * sound_speed_ratio(rc, x)? * 1e3);
    }
    let points: Vec<SoundPoint> = [(1.0, 1.39e-3), (0.75, 1.35e-3), (0.49, 1.27e-3)]
        .iter()
        .map(|&(rc, c)| SoundPoint { condensate_fraction: rc, sound_speed: c, error: 1.5e-5 })
        .collect();
    let fit = fit_sound_vs_rc(&points, x)?;
    println!("fitted c0 = {:.4} ± {:.4} mm/s (chi2 {:.2})", fit.c0 * 1e3, fit.c0_err * 1e3, fit.chi2);
    Ok(())
}
