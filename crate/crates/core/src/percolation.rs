//! Oriented site percolation on `H = {(z, n) : z + n even}` with edges
//! `(z, n) -> (z +- 1, n + 1)`, and extraction of good sites from
//! mesoscopic trajectories.
//!
//! Good sites are indexed by `z` relative to the patch that was initially
//! occupied, `patch = x0 + z mod L`. Two variants are supported:
//!
//! - `A1`: both `xi(z)` and `xi(z + 1)` exceed `N / 2` throughout the open
//!   window `((2n + 2) N, (2n + 4) N)`;
//! - `A2`: `xi(z)` exceeds `c_+ N - 3 sqrt(N)` at time `4 n N`.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mean_field;
use crate::meso_sim::{Event, Observer, Trajectory};
use crate::model::{MesoConfig, ModelParams};
use crate::rng::{replica_rng, SimRng};
use crate::stats::Proportion;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PercParams {
    pub q: f64,
    pub levels: usize,
    /// Largest `|z|` tracked; sites beyond it are dropped.
    pub width_cap: i64,
}

impl PercParams {
    /// Width cap equal to the light cone of `W_0 = {0}`.
    pub fn new(q: f64, levels: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidParams(format!("closure probability must be in [0, 1], got {q}")));
        }
        Ok(Self { q, levels, width_cap: levels as i64 + 1 })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WetSet {
    pub level: usize,
    /// Sorted, with `z + level` even.
    pub wet: Vec<i64>,
}

impl WetSet {
    pub fn origin() -> Self {
        Self { level: 0, wet: vec![0] }
    }

    pub fn is_empty(&self) -> bool {
        self.wet.is_empty()
    }

    pub fn parity_ok(&self) -> bool {
        self.wet.iter().all(|z| (z + self.level as i64).rem_euclid(2) == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evolved {
    pub next: WetSet,
    /// Set when a candidate site lay beyond the width cap.
    pub truncated: bool,
}

/// One generation: each candidate `z'` adjacent to a wet site is open with
/// probability `1 - q`, decided in increasing `z'`.
pub fn evolve(w: &WetSet, q: f64, width_cap: i64, rng: &mut SimRng) -> Evolved {
    let mut candidates: Vec<i64> = w.wet.iter().flat_map(|&z| [z - 1, z + 1]).collect();
    candidates.sort_unstable();
    candidates.dedup();
    let mut truncated = false;
    let mut wet = Vec::with_capacity(candidates.len());
    for z in candidates {
        if z.abs() > width_cap {
            truncated = true;
            continue;
        }
        if rng.random::<f64>() >= q {
            wet.push(z);
        }
    }
    Evolved { next: WetSet { level: w.level + 1, wet }, truncated }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PercEstimate {
    pub params: PercParams,
    pub replicas: u64,
    pub survived: u64,
    pub point: f64,
    pub ci_halfwidth: f64,
    pub truncated: u64,
    pub seed: u64,
}

/// Outcome of one percolation replica: whether `W` is nonempty at the last
/// level, the deepest nonempty level, and whether the front was clipped.
pub fn perc_replica(params: &PercParams, rng: &mut SimRng) -> (bool, usize, bool) {
    let mut w = WetSet::origin();
    let mut truncated = false;
    for _ in 0..params.levels {
        let e = evolve(&w, params.q, params.width_cap, rng);
        truncated |= e.truncated;
        if e.next.is_empty() {
            return (false, w.level, truncated);
        }
        w = e.next;
    }
    (true, w.level, truncated)
}

pub fn estimate_perc_survival(params: &PercParams, replicas: u64, seed: u64) -> Result<PercEstimate> {
    if replicas == 0 {
        return Err(Error::InvalidParams("replicas must be >= 1".into()));
    }
    let runs: Vec<(bool, usize, bool)> =
        (0..replicas).into_par_iter().map(|r| perc_replica(params, &mut replica_rng(seed, 0, r))).collect();
    let survived = runs.iter().filter(|r| r.0).count() as u64;
    let p = Proportion::new(survived, replicas);
    Ok(PercEstimate {
        params: *params,
        replicas,
        survived,
        point: p.point,
        ci_halfwidth: p.ci_halfwidth,
        truncated: runs.iter().filter(|r| r.2).count() as u64,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    A1,
    A2,
}

/// Good sites per level; `levels[n]` holds the good `z` with `z + n` even.
#[derive(Debug, Clone, PartialEq)]
pub struct GoodSites {
    pub variant: Variant,
    pub levels: Vec<Vec<i64>>,
}

impl GoodSites {
    pub fn is_good(&self, z: i64, n: usize) -> bool {
        self.levels.get(n).is_some_and(|l| l.binary_search(&z).is_ok())
    }

    /// Number of levels reached by the cluster of good sites connected to
    /// `(0, 0)` through edges of `H`; zero when `(0, 0)` is not good.
    pub fn cluster_depth(&self) -> usize {
        if !self.is_good(0, 0) {
            return 0;
        }
        let mut front = vec![0i64];
        let mut depth = 1;
        for n in 1..self.levels.len() {
            let mut next: Vec<i64> = front
                .iter()
                .flat_map(|&z| [z - 1, z + 1])
                .filter(|&z| self.is_good(z, n))
                .collect();
            next.sort_unstable();
            next.dedup();
            if next.is_empty() {
                break;
            }
            depth += 1;
            front = next;
        }
        depth
    }
}

/// Streaming evaluation of good sites during a run.
#[derive(Debug, Clone)]
pub struct GoodSiteTracker {
    variant: Variant,
    params: ModelParams,
    origin: usize,
    threshold: f64,
    levels: usize,
    counts: Vec<u32>,
    /// Index of the window or snapshot currently open.
    next: usize,
    window_min: Vec<u32>,
    good: Vec<Vec<i64>>,
    extinct: bool,
}

impl GoodSiteTracker {
    /// Tracks `levels` levels of the given variant for a run started from
    /// `initial`, with `z = 0` at patch `origin`.
    pub fn new(variant: Variant, params: &ModelParams, initial: &MesoConfig, origin: usize, levels: usize) -> Result<Self> {
        let n = f64::from(params.capacity());
        let threshold = match variant {
            Variant::A1 => n / 2.0,
            Variant::A2 => match mean_field::roots(params.a())? {
                Some(r) if !r.degenerate => r.c_plus * n - 3.0 * n.sqrt(),
                _ => return Err(Error::Domain(format!("A2 good sites need a > 4, got a={}", params.a()))),
            },
        };
        Ok(Self {
            variant,
            params: *params,
            origin,
            threshold,
            levels,
            counts: initial.counts().to_vec(),
            next: 0,
            window_min: initial.counts().to_vec(),
            good: Vec::new(),
            extinct: false,
        })
    }

    fn capacity(&self) -> f64 {
        f64::from(self.params.capacity())
    }

    fn window(&self, level: usize) -> (f64, f64) {
        let n = self.capacity();
        ((2 * level + 2) as f64 * n, (2 * level + 4) as f64 * n)
    }

    fn snapshot_time(&self, level: usize) -> f64 {
        (4 * level) as f64 * self.capacity()
    }

    fn patch(&self, z: i64) -> usize {
        (self.origin as i64 + z).rem_euclid(self.params.size() as i64) as usize
    }

    /// Largest `|z|` evaluated, keeping `z` and `z + 1` on distinct patches
    /// without wrapping around the torus.
    fn z_limit(&self, level: usize) -> i64 {
        (level as i64).min(self.params.size() as i64 / 2 - 1)
    }

    fn finalize(&mut self, values: &[u32]) {
        let level = self.next;
        let lim = self.z_limit(level);
        let good: Vec<i64> = (-lim..=lim)
            .filter(|z| (z + level as i64).rem_euclid(2) == 0)
            .filter(|&z| match self.variant {
                Variant::A1 => {
                    f64::from(values[self.patch(z)]) > self.threshold
                        && f64::from(values[self.patch(z + 1)]) > self.threshold
                }
                Variant::A2 => f64::from(values[self.patch(z)]) > self.threshold,
            })
            .collect();
        self.good.push(good);
        self.next += 1;
    }

    /// Closes every window ending at or before `t` (or every snapshot taken
    /// strictly before `t`), using the state that held up to `t`.
    fn roll(&mut self, t: f64, inclusive: bool) {
        while self.next < self.levels {
            match self.variant {
                Variant::A1 => {
                    let (_, end) = self.window(self.next);
                    if t < end {
                        return;
                    }
                    let mins = std::mem::take(&mut self.window_min);
                    self.finalize(&mins);
                    self.window_min = self.counts.clone();
                }
                Variant::A2 => {
                    let at = self.snapshot_time(self.next);
                    if t < at || (t == at && !inclusive) {
                        return;
                    }
                    let counts = self.counts.clone();
                    self.finalize(&counts);
                }
            }
        }
    }

    pub fn result(&self) -> GoodSites {
        GoodSites { variant: self.variant, levels: self.good.clone() }
    }

    /// Levels fully evaluated so far.
    pub fn evaluated(&self) -> usize {
        self.good.len()
    }
}

impl Observer for GoodSiteTracker {
    fn on_event(&mut self, event: &Event, counts: &[u32]) -> Result<()> {
        self.roll(event.time, false);
        self.counts.copy_from_slice(counts);
        if self.variant == Variant::A1 && self.next < self.levels {
            let (start, end) = self.window(self.next);
            let x = event.patch;
            if event.time <= start {
                // before the window opens the running minimum is the state itself
                self.window_min[x] = counts[x];
            } else if event.time < end {
                self.window_min[x] = self.window_min[x].min(counts[x]);
            }
        }
        Ok(())
    }

    fn on_end(&mut self, time: f64, counts: &[u32]) {
        self.counts.copy_from_slice(counts);
        self.extinct = counts.iter().all(|&c| c == 0);
        if self.extinct {
            // the state stays empty forever, so every later level is decided
            self.roll(f64::INFINITY, true);
        } else {
            self.roll(time, true);
        }
    }
}

/// Good sites of a recorded trajectory, replayed through the tracker. Sites
/// are indexed relative to the first initially occupied patch.
pub fn good_sites(traj: &Trajectory, variant: Variant, params: &ModelParams, levels: usize) -> Result<GoodSites> {
    let origin = traj
        .initial
        .counts()
        .iter()
        .position(|&c| c > 0)
        .unwrap_or(params.size() / 2);
    let mut tracker = GoodSiteTracker::new(variant, params, &traj.initial, origin, levels)?;
    let mut state = traj.initial.clone();
    for e in &traj.events {
        state.apply(e.patch, i32::from(e.delta))?;
        tracker.on_event(e, state.counts())?;
    }
    tracker.on_end(traj.terminal_time, state.counts());
    if tracker.evaluated() < levels {
        return Err(Error::Coverage {
            horizon: traj.terminal_time,
            max_level: tracker.evaluated().checked_sub(1),
            requested: levels,
        });
    }
    Ok(tracker.result())
}
