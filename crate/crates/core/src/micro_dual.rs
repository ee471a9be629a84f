//! Graphical representation on a finite window, forward microscopic
//! dynamics, the dual process and its collision-free counterpart.
//!
//! A location is a flat index `patch * N + slot`. The three families of
//! Poisson processes attached to every target location are sampled as their
//! superpositions: for target `x`, A-births arrive at total rate `a` with a
//! parent pair uniform over the `N (N - 1)` ordered pairs of `x`'s patch,
//! B-births at total rate `b` with a uniform neighbouring patch and a uniform
//! ordered pair in it, and deaths at rate 1. Thinning a superposition by
//! independent uniform marks gives exactly the per-pair processes with
//! intensities `a / (N (N - 1))` and `(b / 2M) / (N (N - 1))`, so the
//! realization is the same in law; it is stored as one time-ordered list.

use std::collections::HashMap;
use std::hash::Hash;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mean_field;
use crate::model::{MicroConfig, ModelParams};
use crate::rng::{replica_rng, SimRng};

pub const DEFAULT_ARRIVAL_CAP: u64 = 10_000_000;
pub const DEFAULT_FAMILY_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BirthKind {
    /// Parents in the target's own patch.
    Within,
    /// Parents in a patch at distance `1..=M`.
    Dispersal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mark {
    Birth { kind: BirthKind, target: u32, parents: (u32, u32) },
    Death { target: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub time: f64,
    pub mark: Mark,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphicalRep {
    params: ModelParams,
    t_max: f64,
    seed: u64,
    arrivals: Vec<Arrival>,
}

impl GraphicalRep {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// All arrivals in increasing time.
    pub fn arrivals(&self) -> &[Arrival] {
        &self.arrivals
    }

    pub fn births(&self, kind: BirthKind) -> impl Iterator<Item = &Arrival> {
        self.arrivals.iter().filter(move |e| matches!(e.mark, Mark::Birth { kind: k, .. } if k == kind))
    }

    pub fn deaths(&self) -> impl Iterator<Item = &Arrival> {
        self.arrivals.iter().filter(|e| matches!(e.mark, Mark::Death { .. }))
    }

    pub fn locations(&self) -> usize {
        self.params.size() * self.params.capacity() as usize
    }

    pub fn patch_of(&self, loc: u32) -> usize {
        loc as usize / self.params.capacity() as usize
    }

    /// A representation with explicitly given arrivals, sorted by time.
    pub fn from_arrivals(params: ModelParams, t_max: f64, mut arrivals: Vec<Arrival>) -> Result<Self> {
        let locs = (params.size() * params.capacity() as usize) as u32;
        for e in &arrivals {
            if !(0.0..=t_max).contains(&e.time) {
                return Err(Error::InvalidParams(format!("arrival at {} outside [0, {t_max}]", e.time)));
            }
            let ok = match e.mark {
                Mark::Death { target } => target < locs,
                Mark::Birth { target, parents: (y, z), .. } => target < locs && y < locs && z < locs && y != z,
            };
            if !ok {
                return Err(Error::InvalidParams(format!("malformed arrival {e:?}")));
            }
        }
        arrivals.sort_by(|u, v| u.time.total_cmp(&v.time));
        Ok(Self { params, t_max, seed: 0, arrivals })
    }
}

/// Whether `(y, z)` is in `A(x)`: distinct locations in `x`'s patch.
pub fn in_within_set(params: &ModelParams, x: u32, (y, z): (u32, u32)) -> bool {
    let n = params.capacity();
    y != z && y / n == x / n && z / n == x / n
}

/// Whether `(y, z)` is in `B(x)`: distinct locations sharing one patch at
/// distance `1..=M` from `x`'s patch.
pub fn in_dispersal_set(params: &ModelParams, x: u32, (y, z): (u32, u32)) -> bool {
    let n = params.capacity();
    let d = params.distance((x / n) as usize, (y / n) as usize);
    y != z && y / n == z / n && d >= 1 && d <= params.range()
}

/// Expected number of arrivals in a window of length `t_max`.
pub fn expected_arrivals(params: &ModelParams, t_max: f64) -> f64 {
    params.size() as f64 * f64::from(params.capacity()) * t_max * (1.0 + params.a() + params.b())
}

pub fn build_rep(params: &ModelParams, t_max: f64, seed: u64) -> Result<GraphicalRep> {
    build_rep_with(params, t_max, seed, &mut replica_rng(seed, 0, 0), DEFAULT_ARRIVAL_CAP)
}

fn poisson(mean: f64, rng: &mut SimRng) -> u64 {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
    }
}

fn ordered_pair(patch: usize, n: u32, rng: &mut SimRng) -> (u32, u32) {
    let base = patch as u32 * n;
    let y = rng.random_range(0..n);
    let mut z = rng.random_range(0..n - 1);
    if z >= y {
        z += 1;
    }
    (base + y, base + z)
}

pub fn build_rep_with(params: &ModelParams, t_max: f64, seed: u64, rng: &mut SimRng, cap: u64) -> Result<GraphicalRep> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidParams(format!("window length must be positive, got {t_max}")));
    }
    let expected = expected_arrivals(params, t_max);
    if expected > cap as f64 {
        return Err(Error::WindowTooLarge { expected, cap });
    }
    let n = params.capacity();
    let m = params.range() as i64;
    let mut arrivals = Vec::with_capacity(expected.ceil() as usize);
    for x in 0..params.size() * n as usize {
        let target = x as u32;
        let patch = x / n as usize;
        for _ in 0..poisson(params.a() * t_max, rng) {
            let parents = ordered_pair(patch, n, rng);
            let time = rng.random::<f64>() * t_max;
            arrivals.push(Arrival { time, mark: Mark::Birth { kind: BirthKind::Within, target, parents } });
        }
        for _ in 0..poisson(params.b() * t_max, rng) {
            let mut d = rng.random_range(1..=m);
            if rng.random_bool(0.5) {
                d = -d;
            }
            let parents = ordered_pair(params.offset(patch, d as isize), n, rng);
            let time = rng.random::<f64>() * t_max;
            arrivals.push(Arrival { time, mark: Mark::Birth { kind: BirthKind::Dispersal, target, parents } });
        }
        for _ in 0..poisson(t_max, rng) {
            let time = rng.random::<f64>() * t_max;
            arrivals.push(Arrival { time, mark: Mark::Death { target } });
        }
    }
    arrivals.sort_by(|u, v| u.time.total_cmp(&v.time));
    Ok(GraphicalRep { params: *params, t_max, seed, arrivals })
}

/// A change of one location during a forward run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flip {
    pub time: f64,
    pub location: u32,
    pub occupied: bool,
}

fn check_shape(rep: &GraphicalRep, config: &MicroConfig) -> Result<()> {
    if config.patches() != rep.params.size() || config.capacity() != rep.params.capacity() {
        return Err(Error::InvalidParams("configuration and representation differ in shape".into()));
    }
    Ok(())
}

/// Forward dynamics driven by `rep` up to time `t` (inclusive), reporting
/// each effective change.
pub fn forward_micro_path(rep: &GraphicalRep, initial: &MicroConfig, t: f64) -> Result<(MicroConfig, Vec<Flip>)> {
    check_shape(rep, initial)?;
    let mut occ = initial.grid().to_vec();
    let mut flips = Vec::new();
    for e in rep.arrivals.iter().take_while(|e| e.time <= t) {
        match e.mark {
            Mark::Birth { target, parents: (y, z), .. } => {
                if occ[y as usize] && occ[z as usize] && !occ[target as usize] {
                    occ[target as usize] = true;
                    flips.push(Flip { time: e.time, location: target, occupied: true });
                }
            }
            Mark::Death { target } => {
                if occ[target as usize] {
                    occ[target as usize] = false;
                    flips.push(Flip { time: e.time, location: target, occupied: false });
                }
            }
        }
    }
    let config = MicroConfig::from_grid(occ, initial.patches(), initial.capacity())?;
    Ok((config, flips))
}

pub fn forward_micro_until(rep: &GraphicalRep, initial: &MicroConfig, t: f64) -> Result<MicroConfig> {
    forward_micro_path(rep, initial, t).map(|(c, _)| c)
}

/// State at the end of the window.
pub fn forward_micro(rep: &GraphicalRep, initial: &MicroConfig) -> Result<MicroConfig> {
    forward_micro_until(rep, initial, rep.t_max)
}

/// A collection of finite sets with set semantics, indexed by point so that
/// the sets containing a point and the union of all sets are cheap to query.
#[derive(Debug, Clone)]
pub struct Family<P> {
    sets: Vec<Option<Vec<P>>>,
    lookup: HashMap<Vec<P>, usize>,
    members: HashMap<P, Vec<usize>>,
    multiplicity: HashMap<P, u32>,
    points: Vec<P>,
    position: HashMap<P, usize>,
    live: usize,
}

impl<P: Copy + Eq + Hash + Ord> Family<P> {
    pub fn singleton(p: P) -> Self {
        let mut f = Self {
            sets: Vec::new(),
            lookup: HashMap::new(),
            members: HashMap::new(),
            multiplicity: HashMap::new(),
            points: Vec::new(),
            position: HashMap::new(),
            live: 0,
        };
        f.insert(vec![p]);
        f
    }

    pub fn len(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    /// Number of distinct points in the union of the family.
    pub fn union_len(&self) -> usize {
        self.points.len()
    }

    pub fn union_contains(&self, p: P) -> bool {
        self.position.contains_key(&p)
    }

    pub fn union_point(&self, k: usize) -> P {
        self.points[k]
    }

    /// Inserts a set given as any list of points; returns false if the set
    /// was already present.
    pub fn insert(&mut self, mut set: Vec<P>) -> bool {
        set.sort_unstable();
        set.dedup();
        if self.lookup.contains_key(&set) {
            return false;
        }
        let id = self.sets.len();
        for &p in &set {
            self.members.entry(p).or_default().push(id);
            let count = self.multiplicity.entry(p).or_insert(0);
            *count += 1;
            if *count == 1 {
                self.position.insert(p, self.points.len());
                self.points.push(p);
            }
        }
        self.lookup.insert(set.clone(), id);
        self.sets.push(Some(set));
        self.live += 1;
        true
    }

    fn live_ids(&mut self, p: P) -> Vec<usize> {
        let Some(ids) = self.members.get_mut(&p) else { return Vec::new() };
        let sets = &self.sets;
        ids.retain(|&id| sets[id].is_some());
        ids.clone()
    }

    /// The sets currently containing `p`, in insertion order.
    pub fn containing(&mut self, p: P) -> Vec<Vec<P>> {
        self.live_ids(p).into_iter().map(|id| self.sets[id].clone().expect("live")).collect()
    }

    pub fn remove_containing(&mut self, p: P) -> usize {
        let ids = self.live_ids(p);
        for &id in &ids {
            let set = self.sets[id].take().expect("live");
            for &q in &set {
                let count = self.multiplicity.get_mut(&q).expect("counted");
                *count -= 1;
                if *count == 0 {
                    self.multiplicity.remove(&q);
                    let k = self.position.remove(&q).expect("indexed");
                    self.points.swap_remove(k);
                    if k < self.points.len() {
                        self.position.insert(self.points[k], k);
                    }
                }
            }
            self.lookup.remove(&set);
        }
        self.members.remove(&p);
        self.live -= ids.len();
        ids.len()
    }

    /// Replaces `p` by `replacement` in every set containing `p`, keeping
    /// the originals. Returns the number of new sets.
    pub fn branch(&mut self, p: P, replacement: &[P]) -> usize {
        let mut added = 0;
        for set in self.containing(p) {
            let mut next: Vec<P> = set.into_iter().filter(|&q| q != p).collect();
            next.extend_from_slice(replacement);
            if self.insert(next) {
                added += 1;
            }
        }
        added
    }

    /// All live sets in canonical order.
    pub fn snapshot(&self) -> Vec<Vec<P>> {
        let mut out: Vec<Vec<P>> = self.sets.iter().flatten().cloned().collect();
        out.sort();
        out
    }
}

/// The dual family at one dual time.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub s: f64,
    pub sets: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualRun {
    pub origin: (u32, f64),
    /// Family after every change, starting with `{{w}}` at `s = 0`.
    /// Empty unless recording was requested.
    pub states: Vec<DualState>,
    pub final_sets: Vec<Vec<u32>>,
    /// Dual time at which the family became empty.
    pub emptied_at: Option<f64>,
    /// Dual times of collisions.
    pub collisions: Vec<f64>,
    pub max_family: usize,
}

impl DualRun {
    pub fn collided(&self) -> bool {
        !self.collisions.is_empty()
    }
}

/// Runs the dual from `(w, t)` backwards through the arrivals of `rep`.
pub fn dual_run(rep: &GraphicalRep, w: u32, t: f64) -> Result<DualRun> {
    dual_run_with(rep, w, t, true, DEFAULT_FAMILY_CAP)
}

pub fn dual_run_with(rep: &GraphicalRep, w: u32, t: f64, record: bool, cap: usize) -> Result<DualRun> {
    if !(0.0..=rep.t_max).contains(&t) {
        return Err(Error::InvalidParams(format!("dual time {t} outside window [0, {}]", rep.t_max)));
    }
    if w as usize >= rep.locations() {
        return Err(Error::InvalidParams(format!("location {w} outside the lattice")));
    }
    let mut family = Family::singleton(w);
    let mut states = Vec::new();
    if record {
        states.push(DualState { s: 0.0, sets: family.snapshot() });
    }
    let mut collisions = Vec::new();
    let mut emptied_at = None;
    let mut max_family = 1;
    let end = rep.arrivals.partition_point(|e| e.time <= t);
    for e in rep.arrivals[..end].iter().rev() {
        let s = t - e.time;
        let changed = match e.mark {
            Mark::Birth { target, parents: (y, z), .. } => {
                if !family.union_contains(target) {
                    continue;
                }
                if family.union_contains(y) || family.union_contains(z) {
                    collisions.push(s);
                }
                family.branch(target, &[y, z]) > 0
            }
            Mark::Death { target } => family.remove_containing(target) > 0,
        };
        if family.len() > cap {
            return Err(Error::Explosion { cap, time: s });
        }
        max_family = max_family.max(family.len());
        if changed && record {
            states.push(DualState { s, sets: family.snapshot() });
        }
        if family.is_empty() {
            emptied_at = Some(s);
            break;
        }
    }
    Ok(DualRun { origin: (w, t), states, final_sets: family.snapshot(), emptied_at, collisions, max_family })
}

/// Both sides of the duality relation at `(w, t)`: whether `w` is occupied
/// at time `t` forward, and whether some set of the dual at `s = t` is
/// contained in the initial configuration.
pub fn duality_sides(rep: &GraphicalRep, initial: &MicroConfig, w: u32, t: f64) -> Result<(bool, bool)> {
    let forward = forward_micro_until(rep, initial, t)?;
    let dual = dual_run_with(rep, w, t, false, DEFAULT_FAMILY_CAP)?;
    let grid = initial.grid();
    let backward = dual.final_sets.iter().any(|b| b.iter().all(|&p| grid[p as usize]));
    Ok((forward.grid()[w as usize], backward))
}

pub fn duality_check(rep: &GraphicalRep, initial: &MicroConfig, w: u32, t: f64) -> Result<bool> {
    duality_sides(rep, initial, w, t).map(|(f, b)| f == b)
}

/// Summary of a dual run used for Monte Carlo estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSummary {
    pub replica: u64,
    pub extinct: bool,
    pub collided: bool,
    pub max_family: usize,
}

/// Independent dual runs from `(w, t)` with `w` the first location of patch
/// `L / 2`, each on its own graphical representation over `[0, t]`.
pub fn dual_replicas(params: &ModelParams, t: f64, replicas: u64, seed: u64) -> Result<Vec<DualSummary>> {
    let w = (params.size() / 2) as u32 * params.capacity();
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, 0, r);
            let rep = build_rep_with(params, t, seed, &mut rng, DEFAULT_ARRIVAL_CAP)?;
            let run = dual_run_with(&rep, w, t, false, DEFAULT_FAMILY_CAP)?;
            Ok(DualSummary {
                replica: r,
                extinct: run.emptied_at.is_some(),
                collided: run.collided(),
                max_family: run.max_family,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZetaEvent {
    Birth,
    Death,
}

/// Result of one run of the collision-free dual.
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaRun {
    pub died_at: Option<f64>,
    pub first_event: Option<ZetaEvent>,
    pub births: u64,
    /// Largest number of distinct live points seen.
    pub max_points: usize,
    /// Distinct live points at each requested sample time.
    pub points_at: Vec<usize>,
}

impl ZetaRun {
    pub fn alive(&self) -> bool {
        self.died_at.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Gate {
    Leaf,
    Or,
    And,
}

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    gate: Gate,
    parent: u32,
    children: [u32; 2],
    /// Point identifier of a leaf.
    id: u64,
}

/// The ζ family as a read-once monotone formula over its points.
///
/// Identifiers are never reused, so every point occurs once and the family
/// is the set of minimal true assignments of an AND/OR tree: a birth at `u`
/// turns the leaf into `u OR (u+ AND u-)`, and a death sets the leaf to
/// false and simplifies. The family is empty exactly when the root is false,
/// and the points of the family are the leaves of the simplified tree. This
/// keeps the cost linear in the number of points, whereas the number of sets
/// grows like a product over nested branchings.
#[derive(Debug, Clone)]
pub struct ZetaTree {
    nodes: Vec<Node>,
    free: Vec<u32>,
    root: u32,
    leaves: Vec<u32>,
    /// Position in `leaves` of each live leaf node.
    leaf_pos: Vec<u32>,
    next_id: u64,
}

impl ZetaTree {
    pub fn new() -> Self {
        let mut t = Self { nodes: Vec::new(), free: Vec::new(), root: NONE, leaves: Vec::new(), leaf_pos: Vec::new(), next_id: 0 };
        t.root = t.new_leaf(NONE);
        t
    }

    fn alloc(&mut self, node: Node) -> u32 {
        if let Some(k) = self.free.pop() {
            self.nodes[k as usize] = node;
            k
        } else {
            self.nodes.push(node);
            self.leaf_pos.push(NONE);
            (self.nodes.len() - 1) as u32
        }
    }

    fn new_leaf(&mut self, parent: u32) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        let k = self.alloc(Node { gate: Gate::Leaf, parent, children: [NONE; 2], id });
        self.leaf_pos[k as usize] = self.leaves.len() as u32;
        self.leaves.push(k);
        k
    }

    fn drop_leaf(&mut self, k: u32) {
        let pos = self.leaf_pos[k as usize] as usize;
        self.leaves.swap_remove(pos);
        if pos < self.leaves.len() {
            self.leaf_pos[self.leaves[pos] as usize] = pos as u32;
        }
        self.leaf_pos[k as usize] = NONE;
    }

    fn drop_subtree(&mut self, k: u32) {
        let mut stack = vec![k];
        while let Some(k) = stack.pop() {
            let node = self.nodes[k as usize];
            match node.gate {
                Gate::Leaf => self.drop_leaf(k),
                _ => stack.extend(node.children),
            }
            self.free.push(k);
        }
    }

    /// Puts `new` where `old` hangs from its parent.
    fn replace(&mut self, old: u32, new: u32) {
        let parent = self.nodes[old as usize].parent;
        self.nodes[new as usize].parent = parent;
        if parent == NONE {
            self.root = new;
        } else {
            let c = &mut self.nodes[parent as usize].children;
            let slot = usize::from(c[1] == old);
            c[slot] = new;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.root == NONE
    }

    /// Number of distinct points in the family.
    pub fn points(&self) -> usize {
        self.leaves.len()
    }

    /// Identifier of the `k`-th point in the current (unspecified) order.
    pub fn point(&self, k: usize) -> u64 {
        self.nodes[self.leaves[k] as usize].id
    }

    pub fn point_ids(&self) -> Vec<u64> {
        self.leaves.iter().map(|&k| self.nodes[k as usize].id).collect()
    }

    /// Birth at the `k`-th point; returns the two fresh identifiers.
    pub fn birth(&mut self, k: usize) -> (u64, u64) {
        let leaf = self.leaves[k];
        let or = self.alloc(Node { gate: Gate::Or, parent: NONE, children: [leaf, NONE], id: 0 });
        self.replace(leaf, or);
        self.nodes[leaf as usize].parent = or;
        let and = self.alloc(Node { gate: Gate::And, parent: or, children: [NONE; 2], id: 0 });
        self.nodes[or as usize].children[1] = and;
        let l = self.new_leaf(and);
        let r = self.new_leaf(and);
        self.nodes[and as usize].children = [l, r];
        (self.nodes[l as usize].id, self.nodes[r as usize].id)
    }

    /// Death at the `k`-th point.
    pub fn death(&mut self, k: usize) {
        let leaf = self.leaves[k];
        self.drop_leaf(leaf);
        self.free.push(leaf);
        let mut dead = leaf;
        loop {
            let parent = self.nodes[dead as usize].parent;
            if parent == NONE {
                self.root = NONE;
                return;
            }
            let node = self.nodes[parent as usize];
            let sibling = if node.children[0] == dead { node.children[1] } else { node.children[0] };
            self.free.push(parent);
            match node.gate {
                Gate::Or => {
                    self.replace(parent, sibling);
                    return;
                }
                Gate::And => {
                    self.drop_subtree(sibling);
                    dead = parent;
                }
                Gate::Leaf => unreachable!("leaves have no children"),
            }
        }
    }

    /// Number of sets in the family, i.e. of minimal true assignments.
    pub fn set_count(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let mut value = vec![0.0; self.nodes.len()];
        let mut stack = vec![(self.root, false)];
        while let Some((k, expanded)) = stack.pop() {
            let n = self.nodes[k as usize];
            let [l, r] = n.children.map(|c| c as usize);
            value[k as usize] = match (n.gate, expanded) {
                (Gate::Leaf, _) => 1.0,
                (_, false) => {
                    stack.extend([(k, true), (n.children[0], false), (n.children[1], false)]);
                    continue;
                }
                (Gate::Or, true) => value[l] + value[r],
                (Gate::And, true) => value[l] * value[r],
            };
        }
        value[self.root as usize]
    }
}

impl Default for ZetaTree {
    fn default() -> Self {
        Self::new()
    }
}

pub fn zeta_run(a: f64, b: f64, t: f64, seed: u64) -> Result<ZetaRun> {
    zeta_run_with(a, b, t, &mut replica_rng(seed, 0, 0), &[], DEFAULT_FAMILY_CAP)
}

/// Collision-free dual: every live point carries a birth clock of rate
/// `a + b` and a death clock of rate 1. `cap` bounds the number of live
/// points.
pub fn zeta_run_with(a: f64, b: f64, t: f64, rng: &mut SimRng, sample_times: &[f64], cap: usize) -> Result<ZetaRun> {
    if !(a >= 0.0 && b >= 0.0 && (a + b).is_finite()) {
        return Err(Error::InvalidParams(format!("need a, b >= 0, got a={a}, b={b}")));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParams(format!("dual horizon must be positive, got {t}")));
    }
    let birth = a + b;
    let p_birth = birth / (1.0 + birth);
    let mut tree = ZetaTree::new();
    let mut s = 0.0;
    let mut first_event = None;
    let mut births = 0;
    let mut max_points = 1;
    let mut points_at = Vec::with_capacity(sample_times.len());
    let mut pending = sample_times.iter().copied().peekable();
    loop {
        let rate = tree.points() as f64 * (1.0 + birth);
        let wait = rng.sample::<f64, _>(Exp1) / rate;
        while let Some(&st) = pending.peek() {
            if st < s + wait && st <= t {
                points_at.push(tree.points());
                pending.next();
            } else {
                break;
            }
        }
        if s + wait > t {
            points_at.extend(pending.map(|_| tree.points()));
            return Ok(ZetaRun { died_at: None, first_event, births, max_points, points_at });
        }
        s += wait;
        let k = rng.random_range(0..tree.points());
        if rng.random::<f64>() < p_birth {
            first_event.get_or_insert(ZetaEvent::Birth);
            births += 1;
            tree.birth(k);
            if tree.points() > cap {
                return Err(Error::Explosion { cap, time: s });
            }
            max_points = max_points.max(tree.points());
        } else {
            first_event.get_or_insert(ZetaEvent::Death);
            tree.death(k);
            if tree.is_empty() {
                points_at.extend(pending.map(|_| 0));
                return Ok(ZetaRun { died_at: Some(s), first_event, births, max_points, points_at });
            }
        }
    }
}

/// Extinction of the ζ family, decided without building it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaExtinction {
    /// Whether the family is empty by the horizon.
    pub extinct: bool,
    pub first_event: ZetaEvent,
    /// Points whose clocks were sampled.
    pub explored: u64,
}

/// Upper bound on the points explored by [`zeta_extinction`].
pub const DEFAULT_EXPLORE_CAP: u64 = 50_000_000;

const INF: u64 = u64::MAX;

#[derive(Debug, Clone)]
struct SearchNode {
    /// A point (its claim holds if every alternative's does) or an
    /// alternative `u+ AND u-` (its claim holds if either child's does).
    point: bool,
    start: f64,
    parent: u32,
    children: Vec<u32>,
    expanded: bool,
    proof: u64,
    disproof: u64,
}

/// Proof-number search for the claim "the subformula of the root point is
/// false by `horizon`".
///
/// A point's claim is that it dies before the horizon and each alternative
/// gathered before its death is false; an alternative is false as soon as
/// one child is. Clocks of a point are sampled when it is expanded. They
/// are independent of every other point, so the order in which the search
/// expands points does not change the law. Expanding the most-proving node
/// keeps the explored part close to a smallest certificate, which stays
/// small even where the family itself is huge.
struct ProofSearch<'a> {
    nodes: Vec<SearchNode>,
    birth: f64,
    horizon: f64,
    rng: &'a mut SimRng,
    explored: u64,
}

impl ProofSearch<'_> {
    fn add(&mut self, point: bool, start: f64, parent: u32) -> u32 {
        self.nodes.push(SearchNode {
            point,
            start,
            parent,
            children: Vec::new(),
            expanded: false,
            proof: 1,
            disproof: 1,
        });
        (self.nodes.len() - 1) as u32
    }

    fn birth_wait(&mut self) -> f64 {
        if self.birth > 0.0 {
            self.rng.sample::<f64, _>(Exp1) / self.birth
        } else {
            f64::INFINITY
        }
    }

    /// Samples the clocks of point `k`; returns whether its first event is
    /// a birth.
    fn expand_point(&mut self, k: u32) -> bool {
        self.explored += 1;
        let start = self.nodes[k as usize].start;
        let death = start + self.rng.sample::<f64, _>(Exp1);
        let mut s = start + self.birth_wait();
        let first_is_birth = s < death;
        if death < self.horizon {
            while s < death {
                let alt = self.add(false, s, k);
                let l = self.add(true, s, alt);
                let r = self.add(true, s, alt);
                self.nodes[alt as usize].children = vec![l, r];
                self.nodes[alt as usize].expanded = true;
                self.nodes[alt as usize].disproof = 2;
                self.nodes[k as usize].children.push(alt);
                s += self.birth_wait();
            }
        }
        let node = &mut self.nodes[k as usize];
        node.expanded = true;
        if death >= self.horizon {
            (node.proof, node.disproof) = (INF, 0);
        } else {
            let alts = node.children.len() as u64;
            (node.proof, node.disproof) = if alts == 0 { (0, INF) } else { (alts, 2) };
        }
        first_is_birth
    }

    fn recompute(&mut self, k: u32) -> bool {
        let node = &self.nodes[k as usize];
        let children = node.children.iter().map(|&c| &self.nodes[c as usize]);
        let (proof, disproof) = if node.point {
            children.fold((0u64, INF), |(p, d), c| (p.saturating_add(c.proof), d.min(c.disproof)))
        } else {
            children.fold((INF, 0u64), |(p, d), c| (p.min(c.proof), d.saturating_add(c.disproof)))
        };
        let node = &mut self.nodes[k as usize];
        let changed = (node.proof, node.disproof) != (proof, disproof);
        (node.proof, node.disproof) = (proof, disproof);
        changed
    }

    fn most_proving(&self) -> u32 {
        let mut k = 0u32;
        loop {
            let node = &self.nodes[k as usize];
            if !node.expanded {
                return k;
            }
            let key = |&&c: &&u32| {
                let c = &self.nodes[c as usize];
                if node.point { c.disproof } else { c.proof }
            };
            k = *node.children.iter().min_by_key(key).expect("open nodes have children");
        }
    }

    fn run(&mut self, cap: u64) -> Result<bool> {
        loop {
            let root = &self.nodes[0];
            if root.proof == 0 {
                return Ok(true);
            }
            if root.disproof == 0 {
                return Ok(false);
            }
            if self.explored >= cap {
                return Err(Error::Explosion { cap: cap as usize, time: self.horizon });
            }
            let mut k = self.most_proving();
            self.expand_point(k);
            while k != 0 {
                k = self.nodes[k as usize].parent;
                if !self.recompute(k) {
                    break;
                }
            }
        }
    }
}

/// Whether the ζ family started from one point is empty by dual time `t`.
/// Same law as [`zeta_run_with`], but decided by a proof search over the
/// family's formula (see [`ZetaTree`]) instead of following every point.
pub fn zeta_extinction(a: f64, b: f64, t: f64, rng: &mut SimRng, cap: u64) -> Result<ZetaExtinction> {
    if !(a >= 0.0 && b >= 0.0 && (a + b).is_finite()) {
        return Err(Error::InvalidParams(format!("need a, b >= 0, got a={a}, b={b}")));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParams(format!("dual horizon must be positive, got {t}")));
    }
    let mut search = ProofSearch { nodes: Vec::new(), birth: a + b, horizon: t, rng, explored: 0 };
    search.add(true, 0.0, u32::MAX);
    let first_event = if search.expand_point(0) { ZetaEvent::Birth } else { ZetaEvent::Death };
    let extinct = search.run(cap)?;
    Ok(ZetaExtinction { extinct, first_event, explored: search.explored })
}

/// Independent [`zeta_extinction`] runs; replica `r` uses stream `(0, r)`.
pub fn zeta_extinction_replicas(a: f64, b: f64, t: f64, replicas: u64, seed: u64) -> Result<Vec<ZetaExtinction>> {
    (0..replicas)
        .into_par_iter()
        .map(|r| zeta_extinction(a, b, t, &mut replica_rng(seed, 0, r), DEFAULT_EXPLORE_CAP))
        .collect()
}

/// Independent ζ runs; replica `r` uses stream `(0, r)`.
pub fn zeta_replicas(a: f64, b: f64, t: f64, replicas: u64, seed: u64, sample_times: &[f64]) -> Result<Vec<ZetaRun>> {
    (0..replicas)
        .into_par_iter()
        .map(|r| zeta_run_with(a, b, t, &mut replica_rng(seed, 0, r), sample_times, DEFAULT_FAMILY_CAP))
        .collect()
}

/// Roots in `[0, 1]` of `(a + b) rho^2 (1 - rho) - rho`.
pub fn rho_fixed_points(a: f64, b: f64) -> Result<Vec<f64>> {
    let s = a + b;
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Domain(format!("fixed points need a + b > 0, got {s}")));
    }
    if (s - 4.0).abs() < 1e-12 {
        return Ok(vec![0.0, 0.5]);
    }
    Ok(match mean_field::roots(s)? {
        None => vec![0.0],
        Some(r) => vec![0.0, r.c_minus, r.c_plus],
    })
}

/// `K^{-1} e^{2 (a + b) t} + 2 K (K + 1) / N` with `K = N^{0.2}`.
pub fn dual_collision_bound(a: f64, b: f64, n: f64, t: f64) -> f64 {
    let k = n.powf(0.2);
    (2.0 * (a + b) * t).exp() / k + 2.0 * k * (k + 1.0) / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(a: f64, b: f64, n: u32, m: usize, l: usize) -> ModelParams {
        ModelParams::new(a, b, n, m, l).unwrap()
    }

    #[test]
    fn rep_without_births_has_only_deaths() {
        let rep = build_rep(&params(0.0, 0.0, 4, 1, 3), 2.0, 1).unwrap();
        assert!(rep.arrivals().iter().all(|e| matches!(e.mark, Mark::Death { .. })));
        assert!(!rep.arrivals().is_empty());
    }

    #[test]
    fn rep_parents_are_well_formed_and_sorted() {
        let p = params(2.0, 3.0, 4, 2, 7);
        let rep = build_rep(&p, 3.0, 2).unwrap();
        assert!(rep.arrivals().windows(2).all(|w| w[0].time <= w[1].time));
        for e in rep.arrivals() {
            assert!((0.0..=3.0).contains(&e.time));
            if let Mark::Birth { kind, target, parents } = e.mark {
                match kind {
                    BirthKind::Within => assert!(in_within_set(&p, target, parents)),
                    BirthKind::Dispersal => assert!(in_dispersal_set(&p, target, parents)),
                }
            }
        }
    }

    #[test]
    fn within_set_has_n_times_n_minus_one_pairs() {
        let p = params(1.0, 1.0, 5, 1, 3);
        let x = 7;
        let count = (0..15u32)
            .flat_map(|y| (0..15u32).map(move |z| (y, z)))
            .filter(|&pair| in_within_set(&p, x, pair))
            .count();
        assert_eq!(count, 20);
    }

    #[test]
    fn death_arrival_mean() {
        let p = params(0.0, 0.0, 3, 1, 3);
        let counts: Vec<f64> = (0..1000)
            .map(|s| build_rep(&p, 2.0, s).unwrap().deaths().count() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / 1000.0;
        let se = (18.0f64 / 1000.0).sqrt();
        assert!((mean - 18.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn window_cap_enforced() {
        let p = params(10.0, 10.0, 1000, 1, 1001);
        assert!(matches!(build_rep(&p, 10.0, 1), Err(Error::WindowTooLarge { .. })));
    }

    #[test]
    fn empty_stays_empty() {
        let p = params(3.0, 3.0, 3, 1, 3);
        let rep = build_rep(&p, 2.0, 3).unwrap();
        let out = forward_micro(&rep, &MicroConfig::empty(3, 3)).unwrap();
        assert!(out.grid().iter().all(|&o| !o));
    }

    #[test]
    fn single_death_clears_location() {
        let p = params(1.0, 1.0, 3, 1, 3);
        let rep = GraphicalRep::from_arrivals(p, 1.0, vec![Arrival { time: 0.4, mark: Mark::Death { target: 4 } }])
            .unwrap();
        let out = forward_micro(&rep, &MicroConfig::full(3, 3)).unwrap();
        assert!(!out.grid()[4]);
        assert_eq!(out.grid().iter().filter(|&&o| o).count(), 8);

        let dual = dual_run(&rep, 4, 1.0).unwrap();
        assert_eq!(dual.emptied_at, Some(0.6));
        assert!(dual.final_sets.is_empty());
    }

    #[test]
    fn untouched_origin_stays_singleton() {
        let p = params(1.0, 1.0, 3, 1, 3);
        let rep = GraphicalRep::from_arrivals(p, 1.0, vec![Arrival { time: 0.4, mark: Mark::Death { target: 5 } }])
            .unwrap();
        let dual = dual_run(&rep, 4, 1.0).unwrap();
        assert_eq!(dual.final_sets, vec![vec![4]]);
        assert_eq!(dual.emptied_at, None);
    }

    #[test]
    fn birth_adds_parent_set() {
        let p = params(1.0, 1.0, 3, 1, 3);
        let mark = Mark::Birth { kind: BirthKind::Within, target: 0, parents: (1, 2) };
        let rep = GraphicalRep::from_arrivals(p, 1.0, vec![Arrival { time: 0.7, mark }]).unwrap();
        let dual = dual_run(&rep, 0, 1.0).unwrap();
        assert_eq!(dual.states.len(), 2);
        assert_abs_diff_eq!(dual.states[1].s, 0.3, epsilon = 1e-15);
        assert_eq!(dual.final_sets, vec![vec![0], vec![1, 2]]);
        assert!(!dual.collided());
    }

    #[test]
    fn self_parent_birth_is_a_collision() {
        let p = params(1.0, 1.0, 3, 1, 3);
        let mark = Mark::Birth { kind: BirthKind::Within, target: 0, parents: (0, 2) };
        let rep = GraphicalRep::from_arrivals(p, 1.0, vec![Arrival { time: 0.7, mark }]).unwrap();
        let dual = dual_run(&rep, 0, 1.0).unwrap();
        assert!(dual.collided());
        assert_eq!(dual.final_sets, vec![vec![0], vec![0, 2]]);
    }

    #[test]
    fn duality_trivial_cases() {
        let p = params(2.0, 0.5, 3, 1, 3);
        let rep = build_rep(&p, 1.0, 4).unwrap();
        for w in 0..9 {
            assert_eq!(duality_sides(&rep, &MicroConfig::empty(3, 3), w, 1.0).unwrap(), (false, false));
        }
        let p = params(0.0, 0.0, 3, 1, 3);
        let rep = build_rep(&p, 1.0, 5).unwrap();
        let dead: Vec<u32> = rep
            .deaths()
            .map(|e| match e.mark {
                Mark::Death { target } => target,
                _ => unreachable!(),
            })
            .collect();
        for w in (0..9).filter(|w| !dead.contains(w)) {
            assert_eq!(duality_sides(&rep, &MicroConfig::full(3, 3), w, 1.0).unwrap(), (true, true));
        }
    }

    #[test]
    fn pure_death_dual_empties_at_first_death() {
        let p = params(0.0, 0.0, 3, 1, 3);
        for seed in 0..50 {
            let rep = build_rep(&p, 2.0, seed).unwrap();
            let last_death = rep
                .deaths()
                .filter(|e| e.mark == Mark::Death { target: 4 })
                .map(|e| e.time)
                .fold(None, |_, t| Some(t));
            let dual = dual_run(&rep, 4, 2.0).unwrap();
            assert_eq!(dual.emptied_at, last_death.map(|t| 2.0 - t));
        }
    }

    #[test]
    fn random_windows_satisfy_duality() {
        for seed in 0..500u64 {
            let mut rng = replica_rng(11, 0, seed);
            let a = if rng.random_bool(0.5) { 0.5 } else { 2.0 };
            let b = if rng.random_bool(0.5) { 0.5 } else { 2.0 };
            let p = params(a, b, 3, 1, 3);
            let rep = build_rep_with(&p, 1.0, seed, &mut rng, DEFAULT_ARRIVAL_CAP).unwrap();
            let grid: Vec<bool> = (0..9).map(|_| rng.random_bool(0.5)).collect();
            let initial = MicroConfig::from_grid(grid, 3, 3).unwrap();
            for w in 0..9 {
                assert!(duality_check(&rep, &initial, w, 1.0).unwrap(), "seed {seed} w {w}");
            }
        }
    }

    #[test]
    fn family_set_semantics() {
        let mut f = Family::singleton(3u32);
        assert!(!f.insert(vec![3]));
        assert!(f.insert(vec![5, 1, 5]));
        assert_eq!(f.snapshot(), vec![vec![1, 5], vec![3]]);
        assert_eq!(f.union_len(), 3);
        f.branch(5, &[7, 8]);
        assert_eq!(f.snapshot(), vec![vec![1, 5], vec![1, 7, 8], vec![3]]);
        assert_eq!(f.remove_containing(1), 2);
        assert_eq!(f.snapshot(), vec![vec![3]]);
        assert_eq!(f.union_len(), 1);
        assert!(!f.union_contains(7));
    }

    /// Drives the tree and the explicit set family through the same random
    /// births and deaths, choosing points by rank in the sorted union.
    #[test]
    fn zeta_tree_matches_set_family() {
        for seed in 0..200 {
            let mut rng = replica_rng(seed, 0, 0);
            let mut tree = ZetaTree::new();
            let mut family = Family::singleton(0u64);
            for _ in 0..40 {
                let mut ids = tree.point_ids();
                ids.sort_unstable();
                let mut union: Vec<u64> = (0..family.union_len()).map(|k| family.union_point(k)).collect();
                union.sort_unstable();
                assert_eq!(ids, union, "seed {seed}");
                assert_eq!(tree.set_count(), family.len() as f64, "seed {seed}");
                if tree.is_empty() {
                    assert!(family.is_empty());
                    break;
                }
                let p = ids[rng.random_range(0..ids.len())];
                let k = tree.point_ids().iter().position(|&q| q == p).unwrap();
                if rng.random_bool(0.55) {
                    let (u, v) = tree.birth(k);
                    family.branch(p, &[u, v]);
                } else {
                    tree.death(k);
                    family.remove_containing(p);
                }
            }
        }
    }

    #[test]
    fn zeta_proof_search_agrees_with_forward_tree() {
        let (a, b, t, n) = (1.0, 1.5, 2.0, 20_000u64);
        let forward = zeta_replicas(a, b, t, n, 21, &[]).unwrap();
        let dfs = zeta_extinction_replicas(a, b, t, n, 22).unwrap();
        let p1 = forward.iter().filter(|r| !r.alive()).count() as f64 / n as f64;
        let p2 = dfs.iter().filter(|r| r.extinct).count() as f64 / n as f64;
        let se = ((p1 * (1.0 - p1) + p2 * (1.0 - p2)) / n as f64).sqrt();
        assert!((p1 - p2).abs() < 4.0 * se, "extinct by t: {p1} vs {p2}");
        let births = dfs.iter().filter(|r| r.first_event == ZetaEvent::Birth).count() as f64 / n as f64;
        let expected = (a + b) / (1.0 + a + b);
        assert!((births - expected).abs() < 4.0 * (expected * (1.0 - expected) / n as f64).sqrt());
    }

    #[test]
    fn zeta_extinction_without_births() {
        let runs = zeta_extinction_replicas(0.0, 0.0, 1.0, 4000, 23).unwrap();
        assert!(runs.iter().all(|r| r.explored == 1 && r.first_event == ZetaEvent::Death));
        let dead = runs.iter().filter(|r| r.extinct).count() as f64 / 4000.0;
        let p = 1.0 - (-1.0f64).exp();
        assert!((dead - p).abs() < 3.0 * (p * (1.0 - p) / 4000.0).sqrt());
    }

    #[test]
    fn zeta_extinction_respects_explore_cap() {
        let mut rng = replica_rng(3, 0, 0);
        let mut capped = false;
        for _ in 0..200 {
            if let Err(Error::Explosion { .. }) = zeta_extinction(5.0, 5.0, 50.0, &mut rng, 20) {
                capped = true;
            }
        }
        assert!(capped);
    }

    #[test]
    fn zeta_without_births_is_one_exponential() {
        let t = 1.0;
        let runs = zeta_replicas(0.0, 0.0, t, 4000, 12, &[]).unwrap();
        let dead = runs.iter().filter(|r| !r.alive()).count() as f64 / 4000.0;
        let p = 1.0 - (-t as f64).exp();
        assert!((dead - p).abs() < 3.0 * (p * (1.0 - p) / 4000.0).sqrt());
        assert!(runs.iter().all(|r| r.births == 0));
    }

    #[test]
    fn zeta_points_dominated_by_pair_branching() {
        let (a, b, s) = (0.5, 0.5, 0.5);
        let runs = zeta_replicas(a, b, 1.0, 4000, 13, &[s]).unwrap();
        let mean = runs.iter().map(|r| r.points_at[0] as f64).sum::<f64>() / 4000.0;
        assert!(mean <= (2.0 * (a + b) * s).exp() * 1.05, "mean {mean}");
    }

    #[test]
    fn fixed_points() {
        assert_eq!(rho_fixed_points(2.0, 1.9).unwrap(), vec![0.0]);
        assert_eq!(rho_fixed_points(2.0, 2.0).unwrap(), vec![0.0, 0.5]);
        let r = rho_fixed_points(3.0, 2.0).unwrap();
        assert_abs_diff_eq!(r[1], 0.276393202250021, epsilon = 1e-12);
        assert_abs_diff_eq!(r[2], 0.723606797749979, epsilon = 1e-12);
        assert!(rho_fixed_points(0.0, 0.0).is_err());
    }

    #[test]
    fn collision_bound_examples() {
        let v = dual_collision_bound(1.0, 1.0, 1e6, 1.0);
        let k = 1e6f64.powf(0.2);
        assert_abs_diff_eq!(k, 15.848931924611133, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 4f64.exp() / k + 2.0 * k * (k + 1.0) / 1e6, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 3.445, epsilon = 1e-3);
        let seq: Vec<f64> = [1e4, 1e8, 1e12].iter().map(|&n| dual_collision_bound(1.0, 1.0, n, 1.0)).collect();
        assert!(seq[0] > seq[1] && seq[1] > seq[2]);
    }
}
