//! Parameters, lattice geometry and the exact transition rates of the
//! microscopic and mesoscopic generators.
//!
//! Births are driven by *ordered* pairs of distinct occupied locations, so a
//! patch holding `k` individuals contributes `k (k - 1)` pairs. The rates
//! below keep that factor exactly; replacing it by the unordered count
//! `k (k - 1) / 2` would halve every birth rate.

use crate::error::{Error, Result};

/// Model coefficients and lattice dimensions.
///
/// The infinite lattice is replaced by a torus of `size` patches, which must
/// be at least `2 * range + 1` so that every neighbourhood holds exactly
/// `2 * range` distinct patches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    a: f64,
    b: f64,
    n: u32,
    m: usize,
    l: usize,
}

impl ModelParams {
    pub fn new(a: f64, b: f64, capacity: u32, range: usize, size: usize) -> Result<Self> {
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::InvalidParams(format!("a must be finite and >= 0, got {a}")));
        }
        if !(b.is_finite() && b >= 0.0) {
            return Err(Error::InvalidParams(format!("b must be finite and >= 0, got {b}")));
        }
        if capacity < 2 {
            return Err(Error::InvalidParams(format!("N must be >= 2, got {capacity}")));
        }
        if range < 1 {
            return Err(Error::InvalidParams("M must be >= 1".into()));
        }
        if size < 2 * range + 1 {
            return Err(Error::InvalidParams(format!(
                "L={size} is smaller than 2M+1={}",
                2 * range + 1
            )));
        }
        Ok(Self { a, b, n: capacity, m: range, l: size })
    }

    /// Internal birth coefficient.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Dispersal birth coefficient.
    pub fn b(&self) -> f64 {
        self.b
    }

    /// Patch capacity `N`.
    pub fn capacity(&self) -> u32 {
        self.n
    }

    /// Dispersal range `M`.
    pub fn range(&self) -> usize {
        self.m
    }

    /// Torus size `L`.
    pub fn size(&self) -> usize {
        self.l
    }

    pub fn with_range(self, range: usize) -> Result<Self> {
        Self::new(self.a, self.b, self.n, range, self.l)
    }

    pub fn with_births(self, a: f64, b: f64) -> Result<Self> {
        Self::new(a, b, self.n, self.m, self.l)
    }

    /// `N (N - 1)`, the number of ordered pairs of distinct locations in a
    /// patch.
    pub fn pair_norm(&self) -> f64 {
        let n = f64::from(self.n);
        n * (n - 1.0)
    }

    /// Torus distance between two patches.
    pub fn distance(&self, x: usize, y: usize) -> usize {
        let d = x.abs_diff(y);
        d.min(self.l - d)
    }

    /// Patch reached from `x` by a signed offset.
    pub fn offset(&self, x: usize, delta: isize) -> usize {
        let l = self.l as isize;
        (x as isize + delta).rem_euclid(l) as usize
    }
}

/// Ordered pairs of distinct locations among `k` occupied ones.
#[inline]
pub fn ordered_pairs(k: u32) -> u64 {
    let k = u64::from(k);
    k * k.saturating_sub(1)
}

/// Patch-level occupancy: the number of individuals in each patch.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MesoConfig {
    counts: Vec<u32>,
    capacity: u32,
}

impl MesoConfig {
    pub fn new(counts: Vec<u32>, capacity: u32) -> Result<Self> {
        if let Some((x, &c)) = counts.iter().enumerate().find(|(_, &c)| c > capacity) {
            return Err(Error::InvalidParams(format!(
                "patch {x} holds {c} individuals, capacity is {capacity}"
            )));
        }
        Ok(Self { counts, capacity })
    }

    pub fn empty(params: &ModelParams) -> Self {
        Self { counts: vec![0; params.size()], capacity: params.capacity() }
    }

    /// All individuals in one fully occupied patch.
    pub fn single_full_patch(params: &ModelParams, x: usize) -> Self {
        let mut config = Self::empty(params);
        config.counts[x] = params.capacity();
        config
    }

    pub fn full(params: &ModelParams) -> Self {
        Self { counts: vec![params.capacity(); params.size()], capacity: params.capacity() }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn get(&self, x: usize) -> u32 {
        self.counts[x]
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn is_extinct(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    pub fn population(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// Adds `delta` individuals to patch `x`, refusing to leave `0..=N`.
    pub fn apply(&mut self, x: usize, delta: i32) -> Result<()> {
        let next = i64::from(self.counts[x]) + i64::from(delta);
        if next < 0 || next > i64::from(self.capacity) {
            return Err(Error::InvalidParams(format!(
                "patch {x} would hold {next} individuals (capacity {})",
                self.capacity
            )));
        }
        self.counts[x] = next as u32;
        Ok(())
    }
}

/// Location-level occupancy, stored patch-major: slot `j` of patch `x` is
/// entry `x * N + j` (slots are 0-based here).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MicroConfig {
    occupied: Vec<bool>,
    patches: usize,
    capacity: u32,
}

/// A micro location `(patch, slot)`.
pub type Location = (usize, u32);

impl MicroConfig {
    pub fn empty(patches: usize, capacity: u32) -> Self {
        Self { occupied: vec![false; patches * capacity as usize], patches, capacity }
    }

    pub fn full(patches: usize, capacity: u32) -> Self {
        Self { occupied: vec![true; patches * capacity as usize], patches, capacity }
    }

    pub fn from_grid(occupied: Vec<bool>, patches: usize, capacity: u32) -> Result<Self> {
        if occupied.len() != patches * capacity as usize {
            return Err(Error::InvalidParams(format!(
                "grid has {} cells, expected {patches} x {capacity}",
                occupied.len()
            )));
        }
        Ok(Self { occupied, patches, capacity })
    }

    pub fn patches(&self) -> usize {
        self.patches
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    #[inline]
    pub fn index(&self, (x, j): Location) -> usize {
        x * self.capacity as usize + j as usize
    }

    #[inline]
    pub fn is_occupied(&self, loc: Location) -> bool {
        self.occupied[self.index(loc)]
    }

    #[inline]
    pub fn set(&mut self, loc: Location, value: bool) {
        let i = self.index(loc);
        self.occupied[i] = value;
    }

    pub fn patch_slots(&self, x: usize) -> &[bool] {
        let n = self.capacity as usize;
        &self.occupied[x * n..(x + 1) * n]
    }

    pub fn occupied_in(&self, x: usize) -> u32 {
        self.patch_slots(x).iter().filter(|&&o| o).count() as u32
    }

    pub fn grid(&self) -> &[bool] {
        &self.occupied
    }
}

/// The `2M` patches within distance `M` of `x`, excluding `x`, ordered by
/// offset `-M, ..., -1, 1, ..., M`.
pub fn neighbors(x: usize, params: &ModelParams) -> Vec<usize> {
    let m = params.range() as isize;
    (-m..=m).filter(|&d| d != 0).map(|d| params.offset(x, d)).collect()
}

/// Rate at which `xi(x)` increases by one.
pub fn up_rate(config: &MesoConfig, x: usize, params: &ModelParams) -> f64 {
    let k = config.get(x);
    let vacancies = f64::from(params.capacity() - k);
    if vacancies == 0.0 {
        return 0.0;
    }
    let inside = ordered_pairs(k) as f64;
    let outside: u64 = neighbors(x, params).into_iter().map(|y| ordered_pairs(config.get(y))).sum();
    birth_rate(inside, outside as f64, vacancies, params)
}

/// Shared arithmetic of the mesoscopic birth term given the ordered pair
/// counts inside the patch and summed over its neighbourhood.
#[inline]
pub(crate) fn birth_rate(inside_pairs: f64, outside_pairs: f64, vacancies: f64, params: &ModelParams) -> f64 {
    let dispersal = params.b() / (2.0 * params.range() as f64);
    (params.a() * inside_pairs + dispersal * outside_pairs) * vacancies / params.pair_norm()
}

/// Rate at which `xi(x)` decreases by one: every individual dies at rate one.
pub fn down_rate(config: &MesoConfig, x: usize) -> f64 {
    f64::from(config.get(x))
}

/// Sum of all up and down rates; zero exactly on the empty configuration.
pub fn total_rate(config: &MesoConfig, params: &ModelParams) -> f64 {
    (0..config.len()).map(|x| up_rate(config, x, params) + down_rate(config, x)).sum()
}

/// Column sums of a microscopic configuration.
pub fn project(micro: &MicroConfig) -> MesoConfig {
    let counts = (0..micro.patches()).map(|x| micro.occupied_in(x)).collect();
    MesoConfig { counts, capacity: micro.capacity() }
}

/// Microscopic birth rate into `loc`, obtained by enumerating the parent
/// pairs of the within-patch set `A(loc)` and the neighbourhood set `B(loc)`.
///
/// Zero when `loc` is already occupied (the birth is suppressed).
pub fn micro_up_rate_into(micro: &MicroConfig, loc: Location, params: &ModelParams) -> f64 {
    if micro.is_occupied(loc) {
        return 0.0;
    }
    let (x, _) = loc;
    let inside = occupied_ordered_pairs(micro.patch_slots(x));
    let outside: u64 = neighbors(x, params)
        .into_iter()
        .map(|y| occupied_ordered_pairs(micro.patch_slots(y)))
        .sum();
    let norm = params.pair_norm();
    params.a() / norm * inside as f64
        + params.b() / (2.0 * params.range() as f64) / norm * outside as f64
}

/// Total death rate out of patch `x` in the microscopic model.
pub fn micro_down_rate(micro: &MicroConfig, x: usize) -> f64 {
    f64::from(micro.occupied_in(x))
}

/// Counts ordered pairs `(y, z)`, `y != z`, with both slots occupied.
fn occupied_ordered_pairs(slots: &[bool]) -> u64 {
    let mut pairs = 0;
    for (i, &y) in slots.iter().enumerate() {
        for (j, &z) in slots.iter().enumerate() {
            if i != j && y && z {
                pairs += 1;
            }
        }
    }
    pairs
}
