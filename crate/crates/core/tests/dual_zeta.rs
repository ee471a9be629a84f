//! The dual on a large patch behaves like the collision-free ζ process, and
//! ζ extinction matches its exact survival equation.

use patchsim::micro_dual::{dual_replicas, zeta_extinction_replicas, zeta_replicas};
use patchsim::ModelParams;

/// `rho(t)` for `rho' = s rho^2 (1 - rho) - rho`, `rho(0) = 1`: the
/// probability that ζ is still nonempty at dual time `t` (first-step
/// analysis of the root point).
fn rho(s: f64, t: f64) -> f64 {
    let f = |r: f64| s * r * r * (1.0 - r) - r;
    let steps = (t / 1e-4).ceil() as usize;
    let h = t / steps as f64;
    let mut r = 1.0;
    for _ in 0..steps {
        let k1 = f(r);
        let k2 = f(r + 0.5 * h * k1);
        let k3 = f(r + 0.5 * h * k2);
        let k4 = f(r + h * k3);
        r += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    r
}

fn within(freq: f64, expected: f64, n: u64, sds: f64) -> bool {
    let se = (expected * (1.0 - expected) / n as f64).sqrt().max(1.0 / n as f64);
    (freq - expected).abs() < sds * se
}

#[test]
fn zeta_extinction_matches_survival_equation() {
    let n = 20_000;
    for (a, b, t) in [(0.5, 0.5, 1.0), (1.0, 1.5, 2.0), (2.0, 1.5, 5.0), (3.0, 3.0, 2.0)] {
        let runs = zeta_extinction_replicas(a, b, t, n, 41).unwrap();
        let freq = runs.iter().filter(|r| r.extinct).count() as f64 / n as f64;
        let expected = 1.0 - rho(a + b, t);
        assert!(within(freq, expected, n, 4.0), "a+b={} t={t}: {freq} vs {expected}", a + b);
    }
}

#[test]
fn forward_zeta_matches_survival_equation() {
    let n = 20_000;
    let (a, b, t) = (1.0, 1.0, 1.5);
    let runs = zeta_replicas(a, b, t, n, 42, &[]).unwrap();
    let freq = runs.iter().filter(|r| !r.alive()).count() as f64 / n as f64;
    let expected = 1.0 - rho(a + b, t);
    assert!(within(freq, expected, n, 4.0), "{freq} vs {expected}");
}

#[test]
fn collision_free_dual_matches_zeta() {
    let (a, b, t) = (0.5, 0.5, 1.0);
    let p = ModelParams::new(a, b, 200, 1, 3).unwrap();
    let duals = dual_replicas(&p, t, 10_000, 43).unwrap();
    let clean: Vec<_> = duals.iter().filter(|d| !d.collided).collect();
    assert!(clean.len() > 8_000, "only {} collision-free runs", clean.len());
    let dual_freq = clean.iter().filter(|d| d.extinct).count() as f64 / clean.len() as f64;

    let zetas = zeta_extinction_replicas(a, b, t, 20_000, 44).unwrap();
    let zeta_freq = zetas.iter().filter(|z| z.extinct).count() as f64 / 20_000.0;
    let se = (dual_freq * (1.0 - dual_freq) / clean.len() as f64 + zeta_freq * (1.0 - zeta_freq) / 20_000.0).sqrt();
    assert!((dual_freq - zeta_freq).abs() < 3.0 * se, "dual {dual_freq} vs zeta {zeta_freq}");
}

#[test]
fn pure_death_dual_is_a_single_clock() {
    let p = ModelParams::new(0.0, 0.0, 5, 1, 3).unwrap();
    let n = 8_000u64;
    let duals = dual_replicas(&p, 0.7, n, 45).unwrap();
    assert!(duals.iter().all(|d| !d.collided && d.max_family == 1));
    let freq = duals.iter().filter(|d| d.extinct).count() as f64 / n as f64;
    assert!(within(freq, 1.0 - (-0.7f64).exp(), n, 4.0));
}
