use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::render::{atoms_per_signal, photon_budget};
use super::*;
use crate::grid::{Grid, RealMap};
use crate::model::{temperature_from_hz, PLANCK};
use crate::stats::{mean, sem};

fn small_config(temperature_hz: f64) -> PhysicsConfig {
    let mut c = PhysicsConfig::desk_scale();
    c.grid = Grid { nx: 96, ny: 6, pitch: 1.0e-6 };
    c.probe.pixel_area = c.grid.pixel_area();
    c.condensate.radius_long = 30e-6;
    c.condensate.atom_number = 4.0e4;
    c.transverse_width = 1.5e-6;
    c.condensate.temperature = temperature_from_hz(temperature_hz);
    c
}

fn pulse(time: f64, phi: f64) -> MeasurementPulse {
    MeasurementPulse { time, g: 1.0, phi, technical_noise: None }
}

/// Mean and standard error of Σ_rows Σ_i a(i, j) b(i + shift, j) over shots.
fn lagged_products(pairs: &[(&RealMap, &RealMap)], shift: usize) -> (f64, f64) {
    let v: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| {
            let mut s = 0.0;
            for j in 0..a.ny {
                for i in 0..a.nx - shift {
                    s += a[(i, j)] * b[(i + shift, j)];
                }
            }
            s
        })
        .collect();
    (mean(&v), sem(&v))
}

fn analytic_lagged(basis: &ModeBasis, shift: usize, dt: f64) -> (f64, f64, f64) {
    let g = basis.grid;
    let (mut s, mut q, mut f) = (0.0, 0.0, 0.0);
    for j in 0..g.ny {
        for i in 0..g.nx - shift {
            let (a, b, c) = basis.correlator((i, j), (i + shift, j), dt);
            s += a;
            q += b;
            f += c;
        }
    }
    (s, q, f)
}

#[test]
fn zero_temperature_is_quantum_floor() {
    let c = small_config(0.0);
    let b = ModeBasis::new(&c).unwrap();
    assert!(b.thermal.iter().all(|&n| n == 0.0));
    assert!(b.occupation().iter().all(|&n| n == 0.5));
}

#[test]
fn modes_below_thermal_scale_are_highly_occupied() {
    let c = small_config(400.0);
    let b = ModeBasis::new(&c).unwrap();
    let kt = PLANCK * 400.0;
    let mut checked = 0;
    for (w, n) in b.omega.iter().zip(b.occupation()) {
        if w / (2.0 * PI) < 400.0 {
            assert!(n > 1.0, "symmetrized occupation {n} at {} Hz", w / (2.0 * PI));
            checked += 1;
        }
    }
    assert!(checked > 5);
    assert!((kt / crate::model::K_B - c.condensate.temperature).abs() < 1e-15);
}

#[test]
fn negative_temperature_rejected() {
    let mut c = small_config(0.0);
    c.condensate.temperature = -1e-9;
    assert!(ModeBasis::new(&c).is_err());
}

#[test]
fn mean_profile_holds_all_atoms() {
    let c = PhysicsConfig::desk_scale();
    let b = ModeBasis::new(&c).unwrap();
    let total: f64 = b.mean_profile(&c, 0.0, 1.0).data.iter().sum();
    assert!((total / c.condensate.atom_number - 1.0).abs() < 1e-3, "total {total}");
}

#[test]
fn sampled_covariance_matches_analytic() {
    let c = small_config(400.0);
    let basis = Arc::new(ModeBasis::new(&c).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pairs = [((48, 2), (48, 2)), ((48, 2), (51, 3)), ((40, 2), (50, 2))];
    let mut prods = vec![Vec::new(); pairs.len()];
    for _ in 0..10_000 {
        let d = PhononField::sample(Arc::clone(&basis), &mut rng).density_fluctuation();
        for (p, &(a, b)) in pairs.iter().enumerate() {
            prods[p].push(d[a] * d[b]);
        }
    }
    for (p, &(a, b)) in pairs.iter().enumerate() {
        let (stat, _, _) = basis.correlator(a, b, 0.0);
        let (m, se) = (mean(&prods[p]), sem(&prods[p]));
        assert!((m - stat).abs() < 3.0 * se, "pair {p}: {m} vs {stat} (se {se})");
    }
}

#[test]
fn two_time_correlator_matches_analytic() {
    let c = small_config(400.0);
    let basis = Arc::new(ModeBasis::new(&c).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let dt = 1.5e-3;
    let (a, b) = ((45, 2), (49, 2));
    let mut v = Vec::new();
    for _ in 0..10_000 {
        let f0 = PhononField::sample(Arc::clone(&basis), &mut rng);
        let f1 = f0.evolve(dt).unwrap();
        v.push(f0.density_fluctuation()[a] * f1.density_fluctuation()[b]);
    }
    let (stat, _, _) = basis.correlator(a, b, dt);
    assert!((mean(&v) - stat).abs() < 3.0 * sem(&v), "{} vs {stat}", mean(&v));
}

#[test]
fn evolution_identity_period_and_composition() {
    let c = small_config(400.0);
    let basis = Arc::new(ModeBasis::new(&c).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = PhononField::sample(Arc::clone(&basis), &mut rng);
    let same = f.evolve(0.0).unwrap();
    assert_eq!(same.phonon, f.phonon);

    let m = 4;
    let period = 2.0 * PI / basis.omega[m];
    let back = f.evolve(period).unwrap();
    let j = basis.modes();
    assert!((back.phonon[m] - f.phonon[m]).norm() < 1e-12 * (1.0 + f.phonon[m].norm()));
    assert!((back.phonon[j + m] - f.phonon[j + m]).norm() < 1e-12 * (1.0 + f.phonon[j + m].norm()));

    let ab = f.evolve(1.1e-3).unwrap().evolve(2.3e-3).unwrap();
    let direct = f.evolve(3.4e-3).unwrap();
    for (x, y) in ab.phonon.iter().zip(&direct.phonon) {
        assert!((x - y).norm() < 1e-12 * (1.0 + y.norm()));
    }
    assert!(f.evolve(-1.0).is_err());
}

#[test]
fn line_coefficients_are_hermitian() {
    let c = small_config(400.0);
    let basis = Arc::new(ModeBasis::new(&c).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut f = PhononField::sample(Arc::clone(&basis), &mut rng);
    let m = RealMap::from_fn(c.grid.nx, c.grid.ny, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
    f.kick(&m, 0.05);
    for mode in 0..basis.modes() {
        let (p, n) = f.line_coefficients(mode);
        assert!((p - n.conj()).norm() <= 1e-12 * (1.0 + p.norm()));
    }
}

#[test]
fn strong_measurement_of_quiet_field_has_no_noise() {
    let c = small_config(0.0);
    let basis = Arc::new(ModeBasis::new(&c).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let out = weak_measure(&PhononField::quiet(basis), &pulse(0.0, 1e3), &mut rng).unwrap();
    assert!(out.outcome.data.iter().all(|v| v.abs() < 1e-2));
}

#[test]
fn zero_strength_rejected() {
    let c = small_config(0.0);
    let basis = Arc::new(ModeBasis::new(&c).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    assert!(weak_measure(&PhononField::quiet(basis), &pulse(0.0, 0.0), &mut rng).is_err());
}

#[test]
fn outcomes_have_zero_mean() {
    let c = small_config(400.0);
    let e = run_sequence(&c, &[pulse(0.0, 0.05), pulse(1e-3, 0.05)], 2000, 9).unwrap();
    for p in 0..2 {
        let v: Vec<f64> = e.shots.iter().map(|s| s.noise(p, &e.mean_profile)[(48, 3)]).collect();
        assert!(mean(&v).abs() < 3.0 * sem(&v));
    }
}

#[test]
fn backaction_matches_anticommutator_kernel() {
    let mut c = small_config(0.0);
    c.forward.ratio = 0.5;
    let basis = Arc::new(ModeBasis::new(&c).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = RealMap::from_fn(c.grid.nx, c.grid.ny, |_, _| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng));
    let phi = 0.07;
    let dt = 0.8e-3;
    let mut f = PhononField::quiet(Arc::clone(&basis));
    f.kick(&m, phi);
    let after = f.evolve(dt).unwrap().density_fluctuation();
    for b in [(40, 2), (47, 3), (60, 1)] {
        let mut kernel = 0.0;
        for j in 0..c.grid.ny {
            for i in 0..c.grid.nx {
                let (_, q, fw) = basis.correlator((i, j), b, dt);
                kernel += m[(i, j)] * 2.0 * (q + fw);
            }
        }
        let expect = phi * kernel;
        assert!((after[b] - expect).abs() < 1e-10 * (1.0 + expect.abs()), "{} vs {expect}", after[b]);
    }
}

#[test]
fn conditional_mean_after_kick_matches_kernel() {
    let c = small_config(400.0);
    let basis = Arc::new(ModeBasis::new(&c).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = RealMap::from_fn(c.grid.nx, c.grid.ny, |i, _| if (40..56).contains(&i) { 0.7 } else { 0.0 });
    let (phi, dt, b) = (0.1, 0.5e-3, (50, 3));
    let mut v = Vec::new();
    for _ in 0..4000 {
        let mut f = PhononField::sample(Arc::clone(&basis), &mut rng);
        f.kick(&m, phi);
        v.push(f.evolve(dt).unwrap().density_fluctuation()[b]);
    }
    let mut kernel = 0.0;
    for j in 0..c.grid.ny {
        for i in 0..c.grid.nx {
            kernel += m[(i, j)] * 2.0 * basis.correlator((i, j), b, dt).1;
        }
    }
    let expect = phi * kernel;
    assert!((mean(&v) - expect).abs() < 3.0 * sem(&v), "{} vs {expect}", mean(&v));
}

fn ccf_check(phi1: f64, phi2: f64, seed: u64) {
    let c = small_config(150.0);
    let dt = 1.0e-3;
    let e = run_sequence(&c, &[pulse(0.0, phi1), pulse(dt, phi2)], 4096, seed).unwrap();
    let basis = ModeBasis::new(&c).unwrap();
    let noise: Vec<(RealMap, RealMap)> =
        e.shots.iter().map(|s| (s.noise(0, &e.mean_profile), s.noise(1, &e.mean_profile))).collect();
    let pairs: Vec<(&RealMap, &RealMap)> = noise.iter().map(|(a, b)| (a, b)).collect();
    for shift in [0usize, 2, 5] {
        let (m, se) = lagged_products(&pairs, shift);
        let (s, q, f) = analytic_lagged(&basis, shift, dt);
        let expect = s + q + f;
        assert!((m - expect).abs() < 3.0 * se, "φ=({phi1},{phi2}) shift {shift}: {m} vs {expect} (se {se})");
    }
}

#[test]
fn ccf_converges_independent_of_strength() {
    ccf_check(0.08, 0.08, 21);
    ccf_check(0.15, 0.04, 22);
}

#[test]
fn mismatched_shots_are_uncorrelated() {
    let c = small_config(150.0);
    let e = run_sequence(&c, &[pulse(0.0, 0.08), pulse(1e-3, 0.08)], 2048, 23).unwrap();
    let noise: Vec<RealMap> = e.shots.iter().map(|s| s.noise(0, &e.mean_profile)).collect();
    let later: Vec<RealMap> = e.shots.iter().map(|s| s.noise(1, &e.mean_profile)).collect();
    let pairs: Vec<(&RealMap, &RealMap)> = (0..noise.len()).map(|j| (&noise[j], &later[(j + 1) % later.len()])).collect();
    let (m, se) = lagged_products(&pairs, 2);
    assert!(m.abs() < 3.0 * se, "{m} (se {se})");
}

#[test]
fn backaction_is_linear_in_first_strength() {
    let c = small_config(0.0);
    let dt = 1.0e-3;
    let basis = ModeBasis::new(&c).unwrap();
    let phis = [0.03, 0.06, 0.09];
    let mut ys = Vec::new();
    for (k, &phi1) in phis.iter().enumerate() {
        let e = run_sequence(&c, &[pulse(0.0, phi1), pulse(dt, 1.0)], 1024, 30 + k as u64).unwrap();
        let records: Vec<(RealMap, RealMap)> = e
            .shots
            .iter()
            .map(|s| (s.detection[0].map(|d| d * phi1), s.noise(1, &e.mean_profile)))
            .collect();
        let pairs: Vec<(&RealMap, &RealMap)> = records.iter().map(|(a, b)| (a, b)).collect();
        ys.push(lagged_products(&pairs, 0).0);
    }
    let xm = mean(&phis);
    let ym = mean(&ys);
    let sxy: f64 = phis.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = phis.iter().map(|x| (x - xm).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - ym).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    assert!(r2 > 0.99, "R² = {r2}");
    let (_, q, _) = analytic_lagged(&basis, 0, dt);
    let slope = sxy / sxx;
    assert!(slope * q > 0.0 && (slope / q - 1.0).abs() < 0.2, "slope {slope} vs {q}");
}

#[test]
fn sequence_contract() {
    let c = small_config(100.0);
    let ps = [pulse(0.0, 0.05), pulse(1e-3, 0.05)];
    let e = run_sequence(&c, &ps, 128, 1).unwrap();
    assert_eq!(e.shots.len(), 128);
    assert!(e.shots.iter().all(|s| s.outcomes.len() == 2));
    assert!(run_sequence(&c, &ps, 1, 1).is_err());
    assert!(run_sequence(&c, &ps[..1], 4, 1).is_err());
    assert!(run_sequence(&c, &[pulse(1e-3, 0.05), pulse(1e-3, 0.05)], 4, 1).is_err());

    let again = run_sequence(&c, &ps, 128, 1).unwrap();
    for (a, b) in e.shots.iter().zip(&again.shots) {
        assert_eq!(a.outcomes[1].data, b.outcomes[1].data);
    }
    let three = [pulse(0.0, 0.05), pulse(1e-3, 0.05), pulse(2e-3, 0.05)];
    assert_eq!(run_sequence(&c, &three, 4, 1).unwrap().shots[0].outcomes.len(), 3);
}

#[test]
fn empty_cloud_renders_flat_frames() {
    let c = small_config(0.0);
    let zero = RealMap::zeros(c.grid.nx, c.grid.ny);
    let record = ShotRecord {
        shot_id: 0,
        seed: 0,
        atom_scale: 1.0,
        center_offset: 0.0,
        outcomes: vec![zero.clone(), zero.clone()],
        detection: vec![zero.clone(), zero],
    };
    let r = RenderConfig { photon_noise: PhotonNoise::None, ..RenderConfig::default() };
    let shot = render_frames(&record, &[pulse(0.0, 0.05), pulse(1e-3, 0.05)], &c, &r).unwrap();
    for f in &shot.frames {
        assert_eq!(f.with_atoms.data, f.probe.data);
    }
    assert_eq!(shot.clamped, 0);
}

#[test]
fn photon_budget_reproduces_projection_noise() {
    let c = small_config(0.0);
    let g = 0.8;
    let p = MeasurementPulse::new(0.0, g, &c);
    let zero = RealMap::zeros(c.grid.nx, c.grid.ny);
    let r = RenderConfig { photon_noise: PhotonNoise::Independent, na_filter: false, ..RenderConfig::default() };
    let budget = photon_budget(&c, g);
    let scale = atoms_per_signal(&c);
    let mut samples = Vec::new();
    let mut id = 0;
    while samples.len() < 10_000 {
        let record = ShotRecord {
            shot_id: id,
            seed: 0,
            atom_scale: 1.0,
            center_offset: 0.0,
            outcomes: vec![zero.clone(), zero.clone()],
            detection: vec![zero.clone(), zero.clone()],
        };
        id += 1;
        let shot = render_frames(&record, &[p, MeasurementPulse { time: 1.0, ..p }], &c, &r).unwrap();
        samples.extend(shot.frames[0].with_atoms.data.iter().map(|i| scale * (1.0 - i / budget)));
    }
    let sd = crate::stats::variance(&samples).sqrt();
    let target = 1.0 / (2f64.sqrt() * p.phi);
    assert!((sd / target - 1.0).abs() < 0.02, "Δn = {sd}, expected {target}");
}
