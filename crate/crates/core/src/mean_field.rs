//! Mean-field dynamics of the fraction of occupied locations in one patch,
//! `u' = Q(u)` with `Q(u) = a u^2 (1 - u) - u`.
//!
//! For `a < 4` the only root in `[0, 1]` is zero and every trajectory dies
//! out. For `a > 4` there are two further roots `c_- < 1/2 < c_+`; `c_-` is
//! unstable and separates the extinction basin from the basin of `c_+`.
//! `a = 4` is kept as its own branch with the double root `1/2`.

use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 200.0;
/// Tolerance used to classify the state reached at the horizon.
pub const CLASSIFY_TOL: f64 = 1e-3;
/// Slack allowed outside `[0, 1]` before integration is declared unstable.
const RANGE_SLACK: f64 = 1e-9;
/// Maximum number of samples kept in an integrated trajectory.
const MAX_SAMPLES: usize = 2000;

pub fn q_eval(u: f64, a: f64) -> f64 {
    a * u * u * (1.0 - u) - u
}

/// Derivative `Q'(u) = 2 a u - 3 a u^2 - 1`.
pub fn q_prime(u: f64, a: f64) -> f64 {
    2.0 * a * u - 3.0 * a * u * u - 1.0
}

/// Nontrivial roots of `Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldRoots {
    pub c_minus: f64,
    pub c_plus: f64,
    /// Set at `a = 4`, where both roots collapse onto `1/2`.
    pub degenerate: bool,
}

/// Nontrivial roots for `a >= 4`, `None` for `0 < a < 4`.
pub fn roots(a: f64) -> Result<Option<MeanFieldRoots>> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::Domain(format!("mean-field roots need a > 0, got {a}")));
    }
    if a < 4.0 {
        return Ok(None);
    }
    if a == 4.0 {
        return Ok(Some(MeanFieldRoots { c_minus: 0.5, c_plus: 0.5, degenerate: true }));
    }
    let half_gap = (0.25 - 1.0 / a).sqrt();
    let c_plus = 0.5 + half_gap;
    // c_minus via the product c_minus c_plus = 1/a avoids cancellation for large a
    let c_minus = 1.0 / (a * c_plus);
    Ok(Some(MeanFieldRoots { c_minus, c_plus, degenerate: false }))
}

/// Lower bound on `b` in the survival condition for `a > 4`: `2 a^3 c_-^4`.
pub fn inner_threshold(a: f64) -> Result<f64> {
    match roots(a)? {
        Some(r) if !r.degenerate => Ok(2.0 * a.powi(3) * r.c_minus.powi(4)),
        _ => Err(Error::Domain(format!("inner threshold needs a > 4, got {a}"))),
    }
}

/// The same threshold written through the root identities as
/// `2 c_- / c_+^3`.
pub fn inner_threshold_via_roots(a: f64) -> Result<f64> {
    match roots(a)? {
        Some(r) if !r.degenerate => Ok(2.0 * r.c_minus / r.c_plus.powi(3)),
        _ => Err(Error::Domain(format!("inner threshold needs a > 4, got {a}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Extinct,
    UpperEquilibrium,
    Undetermined,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Extinct => "extinct",
            Regime::UpperEquilibrium => "upper_equilibrium",
            Regime::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MeanFieldTrajectory {
    /// `(t, u)` samples, always including `t = 0` and the horizon.
    pub samples: Vec<(f64, f64)>,
    pub final_value: f64,
    pub regime: Regime,
}

/// Fixed-step classical Runge-Kutta integration of `u' = Q(u)` up to
/// `horizon`. The step is shrunk slightly so that an integer number of steps
/// lands exactly on the horizon.
pub fn integrate(u0: f64, a: f64, step: f64, horizon: f64) -> Result<MeanFieldTrajectory> {
    if !(u0 > 0.0 && u0 < 1.0) {
        return Err(Error::Domain(format!("u0 must lie in (0, 1), got {u0}")));
    }
    if !(step > 0.0 && step.is_finite()) || !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain("step and horizon must be positive".into()));
    }
    if !(a.is_finite() && a >= 0.0) {
        return Err(Error::Domain(format!("a must be finite and >= 0, got {a}")));
    }
    let steps = (horizon / step).ceil().max(1.0) as usize;
    let h = horizon / steps as f64;
    let stride = steps.div_ceil(MAX_SAMPLES).max(1);
    let f = |u: f64| q_eval(u, a);

    let mut u = u0;
    let mut samples = vec![(0.0, u0)];
    for k in 1..=steps {
        let k1 = f(u);
        let k2 = f(u + 0.5 * h * k1);
        let k3 = f(u + 0.5 * h * k2);
        let k4 = f(u + h * k3);
        u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let t = k as f64 * h;
        if !(-RANGE_SLACK..=1.0 + RANGE_SLACK).contains(&u) || !u.is_finite() {
            return Err(Error::NumericalInstability { time: t, value: u });
        }
        if k % stride == 0 || k == steps {
            samples.push((t, u));
        }
    }
    let regime = classify(u, a)?;
    Ok(MeanFieldTrajectory { samples, final_value: u, regime })
}

pub fn classify(u: f64, a: f64) -> Result<Regime> {
    if u < CLASSIFY_TOL {
        return Ok(Regime::Extinct);
    }
    if a > 0.0 {
        if let Some(r) = roots(a)? {
            if (u - r.c_plus).abs() < CLASSIFY_TOL {
                return Ok(Regime::UpperEquilibrium);
            }
        }
    }
    Ok(Regime::Undetermined)
}
