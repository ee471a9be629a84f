//! Contact process with sexual reproduction on a one-dimensional
//! metapopulation lattice.
//!
//! Each patch of a torus of `L` patches hosts up to `N` individuals. Births
//! happen at a rate proportional to the number of ordered pairs of occupied
//! locations in the parents' patch, which produces a strong Allee effect.
//! Offspring stay in the parents' patch (coefficient `a`) or are sent to one
//! of the `2M` patches within distance `M` (coefficient `b`).
//!
//! The crate is organised by concern:
//!
//! - [`model`]: parameters, configurations and exact transition rates of the
//!   microscopic and mesoscopic generators.
//! - [`mean_field`]: the cubic mean-field ODE, its roots and regimes.
//! - [`meso_sim`]: exact event-driven simulation of the patch-count chain and
//!   survival estimation.
//! - [`micro_dual`]: graphical representation, forward microscopic dynamics,
//!   the dual process and its collision-free version.
//! - [`bounds`]: closed-form occupation times, extinction bounds for long
//!   dispersal ranges and exhaustive drift scans.
//! - [`percolation`]: oriented site percolation and good-site extraction.
//! - [`rng`] and [`stats`]: seeded stream splitting and the small amount of
//!   statistics needed to compare Monte Carlo output with closed forms.

pub mod bounds;
pub mod error;
pub mod mean_field;
pub mod meso_sim;
pub mod micro_dual;
pub mod model;
pub mod percolation;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use model::{MesoConfig, MicroConfig, ModelParams};
