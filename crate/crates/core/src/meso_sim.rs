//! Exact event-driven simulation of the mesoscopic chain and Monte Carlo
//! survival estimates.
//!
//! Each patch carries its own total rate `up(x) + down(x)`. The rates live in
//! the leaves of a sum tree, so an event is selected with one uniform draw by
//! descending from the root. An event at `x` changes the ordered pair count of
//! `x`, which enters the birth rate of every patch within distance `M`; those
//! `2M + 1` leaves are recomputed from the integer state, so the cached rates
//! never accumulate rounding error beyond the internal node sums. The tree is
//! checked against a from-scratch rebuild every [`REBUILD_INTERVAL`] events.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::bounds::survival_upper_bound;
use crate::error::{Error, Result};
use crate::model::{birth_rate, down_rate, ordered_pairs, up_rate, MesoConfig, ModelParams};
use crate::rng::{replica_rng, SimRng};
use crate::stats::Proportion;

pub const DEFAULT_EVENT_CAP: u64 = 1_000_000_000;
pub const REBUILD_INTERVAL: u64 = 1_000_000;
const REBUILD_TOL: f64 = 1e-9;

/// One transition of the chain: `xi(patch) += delta` at `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub patch: usize,
    pub delta: i8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    ExtinctAt(f64),
    AliveAtHorizon,
}

impl Outcome {
    pub fn survived(&self) -> bool {
        matches!(self, Outcome::AliveAtHorizon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub events: Vec<Event>,
    pub initial: MesoConfig,
    pub terminal_time: f64,
    pub outcome: Outcome,
}

impl Trajectory {
    /// Replays every event from the initial state, checking that each patch
    /// stays in `0..=N` and that the outcome agrees with the replay.
    pub fn replay(&self) -> Result<MesoConfig> {
        let mut state = self.initial.clone();
        let mut last = 0.0;
        for (k, e) in self.events.iter().enumerate() {
            if e.time <= last && k > 0 {
                return Err(Error::Domain(format!("event {k} at t={} is not after t={last}", e.time)));
            }
            last = e.time;
            state.apply(e.patch, i32::from(e.delta))?;
            let extinct = state.is_extinct();
            let final_event = k + 1 == self.events.len();
            if extinct && !final_event {
                return Err(Error::Domain(format!("replay extinct at event {k} before the end")));
            }
        }
        match self.outcome {
            Outcome::ExtinctAt(t) => {
                let hit = state.is_extinct() && self.events.last().map_or(t == 0.0, |e| e.time == t);
                if !hit {
                    return Err(Error::Domain(format!("outcome says extinct at {t}, replay disagrees")));
                }
            }
            Outcome::AliveAtHorizon => {
                if state.is_extinct() {
                    return Err(Error::Domain("outcome says alive, replay is extinct".into()));
                }
            }
        }
        Ok(state)
    }

    /// State just after all events up to and including time `t`.
    pub fn state_at(&self, t: f64) -> Result<MesoConfig> {
        let mut state = self.initial.clone();
        for e in self.events.iter().take_while(|e| e.time <= t) {
            state.apply(e.patch, i32::from(e.delta))?;
        }
        Ok(state)
    }
}

/// Outcome of a single Gillespie step from a given configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Absorbed,
    Jump { wait: f64, patch: usize, delta: i8 },
}

/// One exact step computed from scratch: exponential waiting time with rate
/// `total_rate`, then an event chosen proportionally to its rate by a linear
/// scan over patches (death before birth within a patch).
pub fn step(config: &MesoConfig, params: &ModelParams, rng: &mut SimRng) -> Step {
    let rates: Vec<(f64, f64)> =
        (0..config.len()).map(|x| (down_rate(config, x), up_rate(config, x, params))).collect();
    let total: f64 = rates.iter().map(|(d, u)| d + u).sum();
    if total <= 0.0 {
        return Step::Absorbed;
    }
    let wait = rng.sample::<f64, _>(Exp1) / total;
    let mut r = rng.random::<f64>() * total;
    let mut chosen = None;
    for (x, &(down, up)) in rates.iter().enumerate() {
        if down + up == 0.0 {
            continue;
        }
        chosen = Some((x, down, up));
        if r < down {
            return Step::Jump { wait, patch: x, delta: -1 };
        }
        r -= down;
        if r < up {
            return Step::Jump { wait, patch: x, delta: 1 };
        }
        r -= up;
    }
    // rounding left r past the last positive rate; fall back to its last event
    let (x, _, up) = chosen.expect("positive total rate");
    Step::Jump { wait, patch: x, delta: if up > 0.0 { 1 } else { -1 } }
}

/// Binary sum tree over per-patch rates.
#[derive(Debug, Clone)]
struct RateTree {
    width: usize,
    nodes: Vec<f64>,
}

impl RateTree {
    fn new(len: usize) -> Self {
        let width = len.next_power_of_two();
        Self { width, nodes: vec![0.0; 2 * width] }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn leaf(&self, x: usize) -> f64 {
        self.nodes[self.width + x]
    }

    fn set(&mut self, x: usize, value: f64) {
        let mut i = self.width + x;
        self.nodes[i] = value;
        while i > 1 {
            i /= 2;
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
    }

    fn rebuild(&mut self, leaves: impl Iterator<Item = f64>) {
        self.nodes.iter_mut().for_each(|v| *v = 0.0);
        for (x, v) in leaves.enumerate() {
            self.nodes[self.width + x] = v;
        }
        for i in (1..self.width).rev() {
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
    }

    /// Leaf selected by `r` in `[0, total)` and the remainder inside it.
    fn find(&self, mut r: f64) -> (usize, f64) {
        let mut i = 1;
        while i < self.width {
            let left = self.nodes[2 * i];
            if r >= left && self.nodes[2 * i + 1] > 0.0 {
                r -= left;
                i = 2 * i + 1;
            } else {
                i *= 2;
            }
        }
        let x = i - self.width;
        (x, r.min(self.nodes[i]))
    }
}

/// Receives every event of a run as it happens.
pub trait Observer {
    /// Called after `event` has been applied; `counts` is the new state.
    fn on_event(&mut self, _event: &Event, _counts: &[u32]) -> Result<()> {
        Ok(())
    }

    /// Called once when the run stops, at extinction or at the horizon.
    fn on_end(&mut self, _time: f64, _counts: &[u32]) {}
}

impl Observer for () {}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn on_event(&mut self, event: &Event, counts: &[u32]) -> Result<()> {
        self.0.on_event(event, counts)?;
        self.1.on_event(event, counts)
    }

    fn on_end(&mut self, time: f64, counts: &[u32]) {
        self.0.on_end(time, counts);
        self.1.on_end(time, counts);
    }
}

impl Observer for Vec<Event> {
    fn on_event(&mut self, event: &Event, _counts: &[u32]) -> Result<()> {
        self.push(*event);
        Ok(())
    }
}

/// Fails the run as soon as a birth lands within `M` patches of the seam
/// between patch `L - 1` and patch `0`. Runs started at `L / 2` that never
/// trip the guard are indistinguishable from runs on the infinite line.
#[derive(Debug, Clone, Copy)]
pub struct SeamGuard {
    range: usize,
    size: usize,
}

impl SeamGuard {
    pub fn new(params: &ModelParams) -> Self {
        Self { range: params.range(), size: params.size() }
    }

    pub fn touches(&self, patch: usize) -> bool {
        patch < self.range || patch >= self.size - self.range
    }
}

impl Observer for SeamGuard {
    fn on_event(&mut self, event: &Event, _counts: &[u32]) -> Result<()> {
        if event.delta > 0 && self.touches(event.patch) {
            return Err(Error::SeamTouched { patch: event.patch, size: self.size, range: self.range });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub event_cap: u64,
    pub seam_guard: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { event_cap: DEFAULT_EVENT_CAP, seam_guard: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub outcome: Outcome,
    pub terminal_time: f64,
    pub events: u64,
}

/// Incrementally maintained simulation state.
#[derive(Debug, Clone)]
pub struct MesoSim {
    params: ModelParams,
    counts: Vec<u32>,
    /// `sum over y ~ x of k_y (k_y - 1)`, kept exact in integers.
    pair_sums: Vec<u64>,
    tree: RateTree,
    population: u64,
    time: f64,
    events: u64,
}

impl MesoSim {
    pub fn new(initial: &MesoConfig, params: &ModelParams) -> Result<Self> {
        if initial.len() != params.size() || initial.capacity() != params.capacity() {
            return Err(Error::InvalidParams(format!(
                "configuration has {} patches of capacity {}, parameters expect {} of {}",
                initial.len(),
                initial.capacity(),
                params.size(),
                params.capacity()
            )));
        }
        let mut sim = Self {
            params: *params,
            counts: initial.counts().to_vec(),
            pair_sums: Vec::new(),
            tree: RateTree::new(params.size()),
            population: initial.population(),
            time: 0.0,
            events: 0,
        };
        sim.pair_sums = sim.fresh_pair_sums();
        sim.rebuild_tree();
        Ok(sim)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    pub fn is_extinct(&self) -> bool {
        self.population == 0
    }

    fn fresh_pair_sums(&self) -> Vec<u64> {
        let m = self.params.range() as isize;
        (0..self.counts.len())
            .map(|x| {
                (-m..=m)
                    .filter(|&d| d != 0)
                    .map(|d| ordered_pairs(self.counts[self.params.offset(x, d)]))
                    .sum()
            })
            .collect()
    }

    fn down(&self, x: usize) -> f64 {
        f64::from(self.counts[x])
    }

    fn up(&self, x: usize) -> f64 {
        let k = self.counts[x];
        if k == self.params.capacity() {
            return 0.0;
        }
        let vacancies = f64::from(self.params.capacity() - k);
        birth_rate(ordered_pairs(k) as f64, self.pair_sums[x] as f64, vacancies, &self.params)
    }

    fn patch_rate(&self, x: usize) -> f64 {
        self.down(x) + self.up(x)
    }

    fn rebuild_tree(&mut self) {
        let leaves: Vec<f64> = (0..self.counts.len()).map(|x| self.patch_rate(x)).collect();
        self.tree.rebuild(leaves.into_iter());
    }

    fn apply(&mut self, x: usize, delta: i8) {
        let before = ordered_pairs(self.counts[x]);
        if delta > 0 {
            self.counts[x] += 1;
            self.population += 1;
        } else {
            self.counts[x] -= 1;
            self.population -= 1;
        }
        let after = ordered_pairs(self.counts[x]);
        self.tree.set(x, self.patch_rate(x));
        if before != after {
            let m = self.params.range() as isize;
            for d in (-m..=m).filter(|&d| d != 0) {
                let y = self.params.offset(x, d);
                self.pair_sums[y] = self.pair_sums[y] + after - before;
                if self.counts[y] < self.params.capacity() {
                    self.tree.set(y, self.patch_rate(y));
                }
            }
        }
    }

    /// Recomputes every rate from the integer state and compares with the
    /// cached tree.
    pub fn check_consistency(&mut self) -> Result<()> {
        let fresh = self.fresh_pair_sums();
        let cached = self.tree.total();
        let pairs_ok = fresh == self.pair_sums;
        self.pair_sums = fresh;
        self.rebuild_tree();
        let rebuilt = self.tree.total();
        let relative = if rebuilt == 0.0 { cached.abs() } else { (cached - rebuilt).abs() / rebuilt };
        if !pairs_ok || relative > REBUILD_TOL {
            return Err(Error::RateDrift { relative, events: self.events });
        }
        Ok(())
    }

    /// Performs the next event if it occurs no later than `horizon`.
    /// Returns `None` when the chain is absorbed or the next event would fall
    /// after the horizon; in the latter case the clock is set to the horizon.
    pub fn advance(&mut self, rng: &mut SimRng, horizon: f64) -> Result<Option<Event>> {
        let total = self.tree.total();
        if self.population == 0 || total <= 0.0 {
            return Ok(None);
        }
        let wait = rng.sample::<f64, _>(Exp1) / total;
        if self.time + wait > horizon {
            self.time = horizon;
            return Ok(None);
        }
        let (x, r) = self.tree.find(rng.random::<f64>() * total);
        let delta = if r < self.down(x) || self.up(x) == 0.0 { -1 } else { 1 };
        self.time += wait;
        self.apply(x, delta);
        self.events += 1;
        if self.events % REBUILD_INTERVAL == 0 {
            self.check_consistency()?;
        }
        debug_assert!(self.tree.leaf(x) >= 0.0);
        Ok(Some(Event { time: self.time, patch: x, delta }))
    }
}

/// Runs the chain until extinction or `horizon`, streaming every event to
/// `observer`. Nothing is stored unless the observer stores it.
pub fn simulate<O: Observer>(
    initial: &MesoConfig,
    params: &ModelParams,
    horizon: f64,
    rng: &mut SimRng,
    options: &RunOptions,
    observer: &mut O,
) -> Result<RunSummary> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidParams(format!("horizon must be positive, got {horizon}")));
    }
    let mut sim = MesoSim::new(initial, params)?;
    let mut guard = options.seam_guard.then(|| SeamGuard::new(params));
    if sim.is_extinct() {
        observer.on_end(0.0, sim.counts());
        return Ok(RunSummary { outcome: Outcome::ExtinctAt(0.0), terminal_time: 0.0, events: 0 });
    }
    while let Some(event) = sim.advance(rng, horizon)? {
        if let Some(g) = guard.as_mut() {
            g.on_event(&event, sim.counts())?;
        }
        observer.on_event(&event, sim.counts())?;
        if sim.is_extinct() {
            observer.on_end(sim.time(), sim.counts());
            return Ok(RunSummary {
                outcome: Outcome::ExtinctAt(sim.time()),
                terminal_time: sim.time(),
                events: sim.events(),
            });
        }
        if sim.events() >= options.event_cap {
            return Err(Error::Runaway {
                cap: options.event_cap,
                time: sim.time(),
                partial: Box::new(Trajectory {
                    events: Vec::new(),
                    initial: initial.clone(),
                    terminal_time: sim.time(),
                    outcome: Outcome::AliveAtHorizon,
                }),
            });
        }
    }
    observer.on_end(horizon, sim.counts());
    Ok(RunSummary { outcome: Outcome::AliveAtHorizon, terminal_time: horizon, events: sim.events() })
}

/// Records a full trajectory with the default event cap.
pub fn run(initial: &MesoConfig, params: &ModelParams, horizon: f64, seed: u64) -> Result<Trajectory> {
    run_with(initial, params, horizon, &mut replica_rng(seed, 0, 0), &RunOptions::default())
}

pub fn run_with(
    initial: &MesoConfig,
    params: &ModelParams,
    horizon: f64,
    rng: &mut SimRng,
    options: &RunOptions,
) -> Result<Trajectory> {
    let mut events = Vec::new();
    match simulate(initial, params, horizon, rng, options, &mut events) {
        Ok(summary) => Ok(Trajectory {
            events,
            initial: initial.clone(),
            terminal_time: summary.terminal_time,
            outcome: summary.outcome,
        }),
        Err(Error::Runaway { cap, time, .. }) => Err(Error::Runaway {
            cap,
            time,
            partial: Box::new(Trajectory {
                events,
                initial: initial.clone(),
                terminal_time: time,
                outcome: Outcome::AliveAtHorizon,
            }),
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalEstimate {
    pub params: ModelParams,
    pub replicas: u64,
    pub horizon: f64,
    pub survived: u64,
    pub point: f64,
    pub ci_halfwidth: f64,
    pub seed: u64,
}

impl SurvivalEstimate {
    pub fn from_outcomes(params: ModelParams, horizon: f64, seed: u64, outcomes: &[ReplicaOutcome]) -> Self {
        let survived = outcomes.iter().filter(|o| o.outcome.survived()).count() as u64;
        let p = Proportion::new(survived, outcomes.len() as u64);
        Self {
            params,
            replicas: p.trials,
            horizon,
            survived,
            point: p.point,
            ci_halfwidth: p.ci_halfwidth,
            seed,
        }
    }
}

/// Result of one survival replica.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicaOutcome {
    pub replica: u64,
    pub outcome: Outcome,
    pub terminal_time: f64,
    pub events: u64,
}

/// Runs `replicas` independent copies started from a single full patch at
/// `L / 2`, replica `r` using stream `(point, r)`. Results are in replica
/// order regardless of scheduling.
pub fn survival_replicas(
    params: &ModelParams,
    horizon: f64,
    replicas: u64,
    seed: u64,
    point: u32,
    options: &RunOptions,
) -> Result<Vec<ReplicaOutcome>> {
    if replicas == 0 {
        return Err(Error::InvalidParams("replicas must be >= 1".into()));
    }
    let initial = MesoConfig::single_full_patch(params, params.size() / 2);
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, point, r);
            let s = simulate(&initial, params, horizon, &mut rng, options, &mut ())?;
            Ok(ReplicaOutcome { replica: r, outcome: s.outcome, terminal_time: s.terminal_time, events: s.events })
        })
        .collect()
}

pub fn estimate_survival(params: &ModelParams, horizon: f64, replicas: u64, seed: u64) -> Result<SurvivalEstimate> {
    let outcomes = survival_replicas(params, horizon, replicas, seed, 0, &RunOptions::default())?;
    Ok(SurvivalEstimate::from_outcomes(*params, horizon, seed, &outcomes))
}

/// One dispersal range of a sweep, annotated with the analytic upper bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub estimate: SurvivalEstimate,
    pub bound: f64,
}

/// Survival estimates for each range in `ranges`, the `k`-th range using
/// stream point `k`. Every run is guarded against the torus seam.
pub fn range_sweep(
    params: &ModelParams,
    ranges: &[usize],
    horizon: f64,
    replicas: u64,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    let options = RunOptions { seam_guard: true, ..RunOptions::default() };
    ranges
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let p = params.with_range(m)?;
            let point = u32::try_from(k).map_err(|_| Error::InvalidParams("too many sweep points".into()))?;
            let outcomes = survival_replicas(&p, horizon, replicas, seed, point, &options)?;
            let bound = survival_upper_bound(p.a(), p.b(), p.capacity(), m);
            Ok(SweepPoint { estimate: SurvivalEstimate::from_outcomes(p, horizon, seed, &outcomes), bound })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::total_rate;
    use crate::stats::{ks_two_sample, Welford};

    fn params(a: f64, b: f64, n: u32, m: usize, l: usize) -> ModelParams {
        ModelParams::new(a, b, n, m, l).unwrap()
    }

    #[test]
    fn step_absorbed_on_empty() {
        let p = params(1.0, 1.0, 5, 1, 5);
        let mut rng = replica_rng(1, 0, 0);
        assert_eq!(step(&MesoConfig::empty(&p), &p, &mut rng), Step::Absorbed);
    }

    #[test]
    fn step_death_probability_one_third() {
        let p = params(3.0, 2.0, 10, 2, 9);
        let config = MesoConfig::single_full_patch(&p, 4);
        assert!((total_rate(&config, &p) - 30.0).abs() < 1e-12);
        let mut rng = replica_rng(2, 0, 0);
        let trials = 30_000;
        let deaths = (0..trials)
            .filter(|_| matches!(step(&config, &p, &mut rng), Step::Jump { delta: -1, .. }))
            .count();
        let freq = deaths as f64 / trials as f64;
        let se = (1.0 / 3.0 * 2.0 / 3.0 / trials as f64).sqrt();
        assert!((freq - 1.0 / 3.0).abs() < 4.0 * se, "death frequency {freq}");
    }

    #[test]
    fn mean_waiting_time_matches_rate() {
        let p = params(2.0, 3.0, 8, 1, 5);
        let config = MesoConfig::new(vec![0, 3, 8, 5, 0], 8).unwrap();
        let total = total_rate(&config, &p);
        let mut rng = replica_rng(3, 0, 0);
        let mut w = Welford::default();
        for _ in 0..100_000 {
            if let Step::Jump { wait, .. } = step(&config, &p, &mut rng) {
                w.push(wait);
            }
        }
        assert!((w.mean() - 1.0 / total).abs() < 3.0 * w.standard_error());
    }

    #[test]
    fn tree_rates_match_generator() {
        let p = params(4.5, 2.5, 12, 2, 11);
        let mut config = MesoConfig::single_full_patch(&p, 5);
        let mut sim = MesoSim::new(&config, &p).unwrap();
        let mut rng = replica_rng(4, 0, 0);
        for _ in 0..2000 {
            let Some(e) = sim.advance(&mut rng, f64::INFINITY).unwrap() else { break };
            config.apply(e.patch, i32::from(e.delta)).unwrap();
            assert_eq!(sim.counts(), config.counts());
            for x in 0..p.size() {
                let direct = up_rate(&config, x, &p) + down_rate(&config, x);
                assert!((sim.tree.leaf(x) - direct).abs() <= 1e-12 * direct.max(1.0));
            }
            let total = total_rate(&config, &p);
            assert!((sim.total_rate() - total).abs() <= 1e-12 * total.max(1.0));
        }
        sim.check_consistency().unwrap();
    }

    #[test]
    fn tree_find_skips_zero_leaves() {
        let mut tree = RateTree::new(5);
        tree.rebuild([0.0, 2.0, 0.0, 0.0, 1.0].into_iter());
        assert_eq!(tree.find(0.0).0, 1);
        assert_eq!(tree.find(1.999).0, 1);
        assert_eq!(tree.find(2.0).0, 4);
        assert_eq!(tree.find(3.5).0, 4);
    }

    #[test]
    fn empty_start_is_extinct_at_zero() {
        let p = params(1.0, 1.0, 5, 1, 5);
        let t = run(&MesoConfig::empty(&p), &p, 10.0, 1).unwrap();
        assert!(t.events.is_empty());
        assert_eq!(t.outcome, Outcome::ExtinctAt(0.0));
        t.replay().unwrap();
    }

    #[test]
    fn runs_are_deterministic_and_replay_cleanly() {
        let p = params(5.0, 3.0, 10, 1, 7);
        let init = MesoConfig::single_full_patch(&p, 3);
        let a = run(&init, &p, 20.0, 77).unwrap();
        let b = run(&init, &p, 20.0, 77).unwrap();
        assert_eq!(a, b);
        a.replay().unwrap();
        let c = run(&init, &p, 20.0, 78).unwrap();
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn event_cap_returns_partial_trajectory() {
        let p = params(5.0, 3.0, 10, 1, 7);
        let init = MesoConfig::single_full_patch(&p, 3);
        let options = RunOptions { event_cap: 50, seam_guard: false };
        let err = run_with(&init, &p, 1e6, &mut replica_rng(5, 0, 0), &options).unwrap_err();
        match err {
            Error::Runaway { cap, partial, .. } => {
                assert_eq!(cap, 50);
                assert_eq!(partial.events.len(), 50);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pure_death_extinction_is_max_of_exponentials() {
        let p = params(0.0, 0.0, 5, 1, 3);
        let init = MesoConfig::new(vec![0, 5, 0], 5).unwrap();
        let mut rng = replica_rng(6, 0, 0);
        let mut simulated = Vec::new();
        let mut direct = Vec::new();
        for _ in 0..1000 {
            let s = simulate(&init, &p, 1e9, &mut rng, &RunOptions::default(), &mut ()).unwrap();
            let Outcome::ExtinctAt(t) = s.outcome else { panic!("pure death cannot survive") };
            assert_eq!(s.events, 5);
            simulated.push(t);
            direct.push((0..5).map(|_| rng.sample::<f64, _>(Exp1)).fold(0.0, f64::max));
        }
        let (_, pval) = ks_two_sample(&simulated, &direct);
        assert!(pval > 0.01, "p = {pval}");
    }

    #[test]
    fn isolated_patches_factorize() {
        let p = params(3.0, 0.0, 5, 1, 3);
        let two = MesoConfig::new(vec![5, 5, 0], 5).unwrap();
        let one = MesoConfig::new(vec![5, 0, 0], 5).unwrap();
        let opts = RunOptions::default();
        let extinction = |init: &MesoConfig, rng: &mut SimRng| match simulate(init, &p, 1e9, rng, &opts, &mut ())
            .unwrap()
            .outcome
        {
            Outcome::ExtinctAt(t) => t,
            Outcome::AliveAtHorizon => panic!("isolated patch cannot survive"),
        };
        let mut rng = replica_rng(7, 0, 0);
        let joint: Vec<f64> = (0..1000).map(|_| extinction(&two, &mut rng)).collect();
        let product: Vec<f64> =
            (0..1000).map(|_| extinction(&one, &mut rng).max(extinction(&one, &mut rng))).collect();
        let (_, pval) = ks_two_sample(&joint, &product);
        assert!(pval > 0.01, "p = {pval}");
    }

    #[test]
    fn isolated_patches_die_out() {
        let p = params(6.0, 0.0, 10, 1, 5);
        let est = estimate_survival(&p, 1e5, 50, 8).unwrap();
        assert_eq!(est.survived, 0);
    }

    #[test]
    fn estimate_is_reproducible_and_consistent() {
        let p = params(0.0, 6.0, 12, 1, 61);
        let a = estimate_survival(&p, 8.0, 40, 9).unwrap();
        let b = estimate_survival(&p, 8.0, 40, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.point, a.survived as f64 / 40.0);
        let sweep = range_sweep(&p, &[1], 8.0, 40, 9).unwrap();
        assert_eq!(sweep[0].estimate, a);
    }

    #[test]
    fn seam_guard_trips_on_small_torus() {
        let p = params(0.0, 12.0, 20, 2, 7);
        let err = range_sweep(&p, &[2], 50.0, 4, 10).unwrap_err();
        assert!(matches!(err, Error::SeamTouched { .. }));
    }
}
