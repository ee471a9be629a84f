use thiserror::Error;

use crate::meso_sim::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical instability at t={time}: u={value} left [0, 1] (step too large?)")]
    NumericalInstability { time: f64, value: f64 },

    #[error("event cap of {cap} exceeded at t={time}")]
    Runaway {
        cap: u64,
        time: f64,
        /// Events recorded before the cap was hit; empty when the run was
        /// not recording.
        partial: Box<Trajectory>,
    },

    #[error("cached rate table drifted: relative error {relative} after {events} events")]
    RateDrift { relative: f64, events: u64 },

    #[error("occupied region reached the torus seam (patch {patch}, L={size}, M={range})")]
    SeamTouched { patch: usize, size: usize, range: usize },

    #[error("graphical representation too large: expected {expected:.0} arrivals, cap {cap}")]
    WindowTooLarge { expected: f64, cap: u64 },

    #[error("dual exceeded its size cap of {cap} at dual time {time}")]
    Explosion { cap: usize, time: f64 },

    #[error("region of {lemma} is empty for N={n}; smallest N with a nonempty region is {min_n}")]
    DegenerateRegion { lemma: String, n: u32, min_n: u32 },

    #[error("trajectory horizon {horizon} covers good-site levels up to {max_level:?} only (requested {requested})")]
    Coverage {
        horizon: f64,
        max_level: Option<usize>,
        requested: usize,
    },
}
