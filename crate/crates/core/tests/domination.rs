//! A single patch without immigration is dominated by the truncated
//! birth-death chain with up rate `(a/4) j` below `N`.

use patchsim::bounds::birth_death_states_at;
use patchsim::meso_sim::MesoSim;
use patchsim::rng::replica_rng;
use patchsim::{MesoConfig, ModelParams};

/// `P(X >= i)` for `i = 0..=n` from a sample of states.
fn tail(states: &[u32], n: u32) -> Vec<f64> {
    (0..=n).map(|i| states.iter().filter(|&&s| s >= i).count() as f64 / states.len() as f64).collect()
}

#[test]
fn isolated_patch_dominated_by_birth_death_chain() {
    let (a, n, replicas) = (2.0, 10u32, 5_000u64);
    let times = [1.0, 5.0];
    let p = ModelParams::new(a, 0.0, n, 1, 3).unwrap();
    let mut patch = vec![Vec::new(); times.len()];
    for r in 0..replicas {
        let mut rng = replica_rng(51, 0, r);
        let mut sim = MesoSim::new(&MesoConfig::single_full_patch(&p, 1), &p).unwrap();
        for (k, &t) in times.iter().enumerate() {
            while sim.advance(&mut rng, t).unwrap().is_some() {}
            patch[k].push(sim.counts()[1]);
            assert!(sim.counts()[0] == 0 && sim.counts()[2] == 0);
        }
    }
    let chain = birth_death_states_at(a, n, &times, replicas, 52).unwrap();
    for k in 0..times.len() {
        let (x, z) = (tail(&patch[k], n), tail(&chain[k], n));
        for i in 0..=n as usize {
            let se = ((x[i] * (1.0 - x[i]) + z[i] * (1.0 - z[i])) / replicas as f64).sqrt();
            assert!(x[i] <= z[i] + 3.0 * se, "t={} i={i}: {} > {}", times[k], x[i], z[i]);
        }
    }
}
