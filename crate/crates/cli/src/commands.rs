//! One function per subcommand. Each resolves its flags against the config,
//! fills in defaults, runs, writes the CSV and then the manifest.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use patchsim::bounds::{self, DriftParams, Lemma};
use patchsim::mean_field::{self, Regime};
use patchsim::meso_sim::{self, Outcome, RunOptions};
use patchsim::micro_dual::{self, ZetaEvent};
use patchsim::percolation::{self, PercParams};
use patchsim::rng::replica_rng;
use patchsim::stats::{binomial_se, Proportion};
use patchsim::{MicroConfig, ModelParams};

use crate::config::{merge, Run};
use crate::csv_out::{self, float, opt_float};
use crate::CliError;

fn req<T: Clone>(value: &Option<T>, flag: &str) -> Result<T, CliError> {
    value.clone().ok_or_else(|| CliError::Usage(format!("missing required flag --{flag}")))
}

fn default_out(out: &mut Option<PathBuf>, command: &str) -> PathBuf {
    out.get_or_insert_with(|| PathBuf::from(format!("{command}.csv"))).clone()
}

fn finish(mut run: Run, outputs: &[&Path]) -> Result<(), CliError> {
    for p in outputs {
        run.output(p);
    }
    let manifest = run.finish()?;
    println!("wrote {}", outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "));
    println!("manifest {}", manifest.display());
    Ok(())
}

fn positive(x: f64, flag: &str) -> Result<f64, CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Usage(format!("--{flag} must be positive, got {x}")))
    }
}

fn at_least_one(x: u64, flag: &str) -> Result<u64, CliError> {
    if x >= 1 {
        Ok(x)
    } else {
        Err(CliError::Usage(format!("--{flag} must be >= 1")))
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MeanfieldArgs {
    /// Internal birth coefficient.
    #[arg(long)]
    pub a: Option<f64>,
    /// Initial fraction, in (0, 1).
    #[arg(long)]
    pub u0: Option<f64>,
    /// Runge-Kutta step [default: 1e-3].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Integration horizon [default: 200].
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn meanfield(flags: MeanfieldArgs, config: Option<&Path>) -> Result<(), CliError> {
    let mut args = merge(&flags, config, "meanfield")?;
    let a = req(&args.a, "a")?;
    let u0 = req(&args.u0, "u0")?;
    if !(u0 > 0.0 && u0 < 1.0) {
        return Err(CliError::Usage(format!("--u0 must lie in (0, 1), got {u0}")));
    }
    let dt = *args.dt.get_or_insert(mean_field::DEFAULT_STEP);
    let t_max = *args.t_max.get_or_insert(mean_field::DEFAULT_HORIZON);
    let out = default_out(&mut args.out, "meanfield");
    let run = Run::start("meanfield", &args, None, &out)?;

    let traj = mean_field::integrate(u0, a, dt, t_max)?;
    csv_out::write(&out, &["t", "u"], traj.samples.iter().map(|&(t, u)| vec![float(t), float(u)]))?;
    match traj.regime {
        Regime::UpperEquilibrium => println!("{} {:.4}", traj.regime.as_str(), traj.final_value),
        r => println!("{}", r.as_str()),
    }
    println!("u({t_max}) = {:e}", traj.final_value);
    finish(run, &[&out])
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateArgs {
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    /// Patch capacity N.
    #[arg(long)]
    pub n: Option<u32>,
    /// Dispersal range M [default: 1].
    #[arg(long)]
    pub m: Option<usize>,
    /// Number of patches L, at least 2M+1.
    #[arg(long)]
    pub l: Option<usize>,
    /// Time horizon [default: 40 N].
    #[arg(long)]
    pub horizon: Option<f64>,
    /// [default: 100]
    #[arg(long)]
    pub replicas: Option<u64>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn simulate(flags: SimulateArgs, config: Option<&Path>) -> Result<(), CliError> {
    let mut args = merge(&flags, config, "simulate")?;
    let n = req(&args.n, "n")?;
    let m = *args.m.get_or_insert(1);
    let params = ModelParams::new(req(&args.a, "a")?, req(&args.b, "b")?, n, m, req(&args.l, "l")?)?;
    let horizon = positive(*args.horizon.get_or_insert(40.0 * f64::from(n)), "horizon")?;
    let replicas = at_least_one(*args.replicas.get_or_insert(100), "replicas")?;
    let seed = *args.seed.get_or_insert(0);
    let out = default_out(&mut args.out, "simulate");
    let run = Run::start("simulate", &args, Some(seed), &out)?;

    let outcomes = meso_sim::survival_replicas(&params, horizon, replicas, seed, 0, &RunOptions::default())?;
    csv_out::write(
        &out,
        &["replica", "survived", "extinction_time", "terminal_time", "events"],
        outcomes.iter().map(|o| {
            let extinct_at = match o.outcome {
                Outcome::ExtinctAt(t) => Some(t),
                Outcome::AliveAtHorizon => None,
            };
            vec![
                o.replica.to_string(),
                u8::from(o.outcome.survived()).to_string(),
                opt_float(extinct_at),
                float(o.terminal_time),
                o.events.to_string(),
            ]
        }),
    )?;
    let est = meso_sim::SurvivalEstimate::from_outcomes(params, horizon, seed, &outcomes);
    println!(
        "survival point={} ci_halfwidth={} survived={}/{}",
        est.point, est.ci_halfwidth, est.survived, est.replicas
    );
    finish(run, &[&out])
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SweepArgs {
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub l: Option<usize>,
    /// Comma-separated dispersal ranges.
    #[arg(long, value_delimiter = ',')]
    pub m_list: Option<Vec<usize>>,
    /// [default: 40 N]
    #[arg(long)]
    pub horizon: Option<f64>,
    /// [default: 100]
    #[arg(long)]
    pub replicas: Option<u64>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn sweep(flags: SweepArgs, config: Option<&Path>) -> Result<(), CliError> {
    let mut args = merge(&flags, config, "sweep")?;
    let ms = req(&args.m_list, "m-list")?;
    if ms.is_empty() {
        return Err(CliError::Usage("--m-list must name at least one range".into()));
    }
    let n = req(&args.n, "n")?;
    let l = req(&args.l, "l")?;
    let base = ModelParams::new(req(&args.a, "a")?, req(&args.b, "b")?, n, ms[0], l)?;
    for &m in &ms {
        base.with_range(m)?;
    }
    let horizon = positive(*args.horizon.get_or_insert(40.0 * f64::from(n)), "horizon")?;
    let replicas = at_least_one(*args.replicas.get_or_insert(100), "replicas")?;
    let seed = *args.seed.get_or_insert(0);
    let out = default_out(&mut args.out, "sweep");
    let run = Run::start("sweep", &args, Some(seed), &out)?;

    let points = meso_sim::range_sweep(&base, &ms, horizon, replicas, seed)?;
    csv_out::write(
        &out,
        &["m", "replicas", "survived", "point", "ci_halfwidth", "bound", "collision_exact", "collision_bound"],
        points.iter().map(|p| {
            let m = p.estimate.params.range();
            vec![
                m.to_string(),
                p.estimate.replicas.to_string(),
                p.estimate.survived.to_string(),
                float(p.estimate.point),
                float(p.estimate.ci_halfwidth),
                float(p.bound),
                float(bounds::collision_prob_exact(m)),
                float(bounds::collision_prob_bound(m)),
            ]
        }),
    )?;
    for p in &points {
        println!(
            "m={} survival={} ci_halfwidth={} bound={}",
            p.estimate.params.range(),
            p.estimate.point,
            p.estimate.ci_halfwidth,
            p.bound
        );
    }
    finish(run, &[&out])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DualMode {
    /// Collision-free dual on fresh points.
    Zeta,
    /// Dual on a graphical representation of the finite torus.
    Full,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DualArgs {
    #[arg(long, value_enum)]
    pub mode: Option<DualMode>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    /// Dual horizon.
    #[arg(long)]
    pub t: Option<f64>,
    /// Patches (full mode).
    #[arg(long)]
    pub l: Option<usize>,
    /// Patch capacity (full mode).
    #[arg(long)]
    pub n: Option<u32>,
    /// Dispersal range (full mode) [default: 1].
    #[arg(long)]
    pub m: Option<usize>,
    /// [default: 10000]
    #[arg(long)]
    pub replicas: Option<u64>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Full mode: compare forward and dual on a random window per replica.
    #[arg(long, num_args = 0, default_missing_value = "true")]
    pub check_duality: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn dual(flags: DualArgs, config: Option<&Path>) -> Result<(), CliError> {
    let mut args = merge(&flags, config, "dual")?;
    let mode = req(&args.mode, "mode")?;
    let a = req(&args.a, "a")?;
    let b = req(&args.b, "b")?;
    let t = positive(req(&args.t, "t")?, "t")?;
    let replicas = at_least_one(*args.replicas.get_or_insert(10_000), "replicas")?;
    let seed = *args.seed.get_or_insert(0);
    let check = *args.check_duality.get_or_insert(false);
    if mode == DualMode::Full {
        args.m.get_or_insert(1);
    } else if check {
        return Err(CliError::Usage("--check-duality needs --mode full".into()));
    }
    let out = default_out(&mut args.out, "dual");
    let run = Run::start("dual", &args, Some(seed), &out)?;
    match mode {
        DualMode::Zeta => dual_zeta(a, b, t, replicas, seed, &out)?,
        DualMode::Full => {
            let params = ModelParams::new(a, b, req(&args.n, "n")?, args.m.unwrap_or(1), req(&args.l, "l")?)?;
            dual_full(&params, t, replicas, seed, check, &out)?
        }
    }
    finish(run, &[&out])
}

fn dual_zeta(a: f64, b: f64, t: f64, replicas: u64, seed: u64, out: &Path) -> Result<(), CliError> {
    let runs = micro_dual::zeta_extinction_replicas(a, b, t, replicas, seed)?;
    csv_out::write(
        out,
        &["replica", "extinct", "first_event", "explored"],
        runs.iter().enumerate().map(|(r, z)| {
            let first = match z.first_event {
                ZetaEvent::Birth => "birth",
                ZetaEvent::Death => "death",
            };
            vec![
                r.to_string(),
                u8::from(z.extinct).to_string(),
                first.to_owned(),
                z.explored.to_string(),
            ]
        }),
    )?;
    let extinct = runs.iter().filter(|z| z.extinct).count() as u64;
    let ext = Proportion::new(extinct, replicas);
    println!("extinction frequency={} ci_halfwidth={} ({extinct}/{replicas})", ext.point, ext.ci_halfwidth);
    println!("survival frequency={}", 1.0 - ext.point);
    let first_births = runs.iter().filter(|z| z.first_event == ZetaEvent::Birth).count() as u64;
    let fb = first_births as f64 / replicas as f64;
    println!(
        "first-event-birth frequency={fb} se={} expected={}",
        binomial_se(fb, replicas),
        (a + b) / (1.0 + a + b)
    );
    if a + b > 0.0 {
        let roots = micro_dual::rho_fixed_points(a, b)?;
        println!("fixed points {{{}}}", roots.iter().map(|r| format!("{r:.6}")).collect::<Vec<_>>().join(", "));
    }
    Ok(())
}

fn dual_full(params: &ModelParams, t: f64, replicas: u64, seed: u64, check: bool, out: &Path) -> Result<(), CliError> {
    let w = (params.size() / 2) as u32 * params.capacity();
    let rows: Vec<(bool, bool, usize, Option<bool>)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, 0, r);
            let rep = micro_dual::build_rep_with(params, t, seed, &mut rng, micro_dual::DEFAULT_ARRIVAL_CAP)?;
            let dual = micro_dual::dual_run_with(&rep, w, t, false, micro_dual::DEFAULT_FAMILY_CAP)?;
            let duality = if check {
                let grid = (0..rep.locations()).map(|_| rng.random_bool(0.5)).collect();
                let initial = MicroConfig::from_grid(grid, params.size(), params.capacity())?;
                let target = rng.random_range(0..rep.locations() as u32);
                let window = t * rng.random::<f64>();
                Some(micro_dual::duality_check(&rep, &initial, target, window)?)
            } else {
                None
            };
            Ok((dual.emptied_at.is_some(), dual.collided(), dual.max_family, duality))
        })
        .collect::<Result<_, patchsim::Error>>()?;
    csv_out::write(
        out,
        &["replica", "extinct", "collided", "max_family", "duality_ok"],
        rows.iter().enumerate().map(|(r, &(e, c, f, d))| {
            vec![
                r.to_string(),
                u8::from(e).to_string(),
                u8::from(c).to_string(),
                f.to_string(),
                d.map(|ok| u8::from(ok).to_string()).unwrap_or_default(),
            ]
        }),
    )?;
    let extinct = rows.iter().filter(|r| r.0).count() as u64;
    let collided = rows.iter().filter(|r| r.1).count() as u64;
    println!("extinction frequency={} ({extinct}/{replicas})", extinct as f64 / replicas as f64);
    println!("collision frequency={} ({collided}/{replicas})", collided as f64 / replicas as f64);
    if check {
        let passed = rows.iter().filter(|r| r.3 == Some(true)).count();
        println!("{passed}/{replicas} duality checks passed");
        if passed as u64 != replicas {
            return Err(CliError::Check(format!("{} duality checks failed", replicas - passed as u64)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct BoundsArgs {
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Also writes the occupation table of the single-patch birth-death chain
/// to `<out>.occupation.csv` with columns j,v,sigma,v_simplified,sigma_simplified.
pub fn bounds(flags: BoundsArgs, config: Option<&Path>) -> Result<(), CliError> {
    let mut args = merge(&flags, config, "bounds")?;
    let a = req(&args.a, "a")?;
    let b = req(&args.b, "b")?;
    let n = req(&args.n, "n")?;
    let m = req(&args.m, "m")?;
    if !(a.is_finite() && a >= 0.0 && b.is_finite() && b >= 0.0) || n < 2 || m < 1 {
        return Err(CliError::Usage("need a, b >= 0, N >= 2 and M >= 1".into()));
    }
    let out = default_out(&mut args.out, "bounds");
    let run = Run::start("bounds", &args, None, &out)?;

    let survival = bounds::survival_upper_bound(a, b, n, m);
    let emigrants = bounds::mean_emigrants_bound(a, b, n);
    csv_out::write(
        &out,
        &["a", "b", "n", "m", "mean_emigrants", "collision_exact", "collision_bound", "survival_bound"],
        [vec![
            float(a),
            float(b),
            n.to_string(),
            m.to_string(),
            float(emigrants),
            float(bounds::collision_prob_exact(m)),
            float(bounds::collision_prob_bound(m)),
            float(survival),
        ]],
    )?;
    let table = bounds::occupation_table(a, n)?;
    let mut occ = out.as_os_str().to_owned();
    occ.push(".occupation.csv");
    let occ = PathBuf::from(occ);
    csv_out::write(
        &occ,
        &["j", "v", "sigma", "v_simplified", "sigma_simplified"],
        (1..=n as usize).map(|j| {
            vec![
                j.to_string(),
                float(table.v[j]),
                float(table.sigma[j]),
                float(table.v_simplified[j]),
                float(table.sigma_simplified[j]),
            ]
        }),
    )?;
    println!("{survival:.4}");
    println!("survival_upper_bound={survival} mean_emigrants_bound={emigrants}");
    println!("weighted occupation time={} (bound {})", table.weighted_time(), table.weighted_bound);
    finish(run, &[&out, &occ])
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DriftScanArgs {
    /// outer-sum, outer-difference, outer-up, inner-1, inner-drift-1,
    /// inner-drift-2 or all.
    #[arg(long)]
    pub lemma: Option<String>,
    /// [default: 0]
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn drift_scan(flags: DriftScanArgs, config: Option<&Path>) -> Result<(), CliError> {
    let mut args = merge(&flags, config, "drift-scan")?;
    let name = req(&args.lemma, "lemma")?;
    let lemmas = if name == "all" {
        Lemma::ALL.to_vec()
    } else {
        vec![Lemma::parse(&name).ok_or_else(|| CliError::Usage(format!("unknown lemma `{name}`")))?]
    };
    let p = DriftParams { a: *args.a.get_or_insert(0.0), b: req(&args.b, "b")?, n: req(&args.n, "n")? };
    let out = default_out(&mut args.out, "drift-scan");
    let run = Run::start("drift-scan", &args, None, &out)?;

    let mut results = Vec::new();
    for lemma in lemmas {
        match bounds::scan_lemma(lemma, &p) {
            Ok(r) => results.push(r),
            // `all` skips lemmas that do not apply to these parameters
            Err(e) if name == "all" => println!("{} SKIP {e}", lemma.name()),
            Err(e) => return Err(e.into()),
        }
    }
    let state = |(i, j): (u32, Option<u32>)| (i.to_string(), j.map(|j| j.to_string()).unwrap_or_default());
    csv_out::write(
        &out,
        &[
            "lemma",
            "a",
            "b",
            "n",
            "target",
            "states",
            "margin",
            "argmin_i",
            "argmin_j",
            "leading_margin",
            "leading_argmin_i",
            "leading_argmin_j",
            "pass",
        ],
        results.iter().map(|r| {
            let (i, j) = state(r.argmin);
            let (li, lj) = state(r.leading_argmin);
            vec![
                r.lemma.name().to_owned(),
                float(p.a),
                float(p.b),
                p.n.to_string(),
                float(r.target),
                r.states.to_string(),
                float(r.margin),
                i,
                j,
                float(r.leading_margin),
                li,
                lj,
                u8::from(r.pass).to_string(),
            ]
        }),
    )?;
    for r in &results {
        let argmin = match r.argmin {
            (i, Some(j)) => format!("({i}, {j})"),
            (i, None) => format!("({i})"),
        };
        println!(
            "{} margin={:e} argmin={argmin} lemma={} target={} states={} leading_margin={:e}",
            if r.pass { "PASS" } else { "FAIL" },
            r.margin,
            r.lemma.name(),
            r.target,
            r.states,
            r.leading_margin
        );
    }
    let failed: Vec<_> = results.iter().filter(|r| !r.pass).map(|r| r.lemma.name()).collect();
    finish(run, &[&out])?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::ScanFail(format!("drift scan failed for {}", failed.join(", "))))
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PercolationArgs {
    /// Probability that a site is closed.
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub levels: Option<usize>,
    /// [default: 1000]
    #[arg(long)]
    pub replicas: Option<u64>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn percolation(flags: PercolationArgs, config: Option<&Path>) -> Result<(), CliError> {
    let mut args = merge(&flags, config, "percolation")?;
    let params = PercParams::new(req(&args.q, "q")?, req(&args.levels, "levels")?)?;
    let replicas = at_least_one(*args.replicas.get_or_insert(1000), "replicas")?;
    let seed = *args.seed.get_or_insert(0);
    let out = default_out(&mut args.out, "percolation");
    let run = Run::start("percolation", &args, Some(seed), &out)?;

    let runs: Vec<(bool, usize, bool)> = (0..replicas)
        .into_par_iter()
        .map(|r| percolation::perc_replica(&params, &mut replica_rng(seed, 0, r)))
        .collect();
    csv_out::write(
        &out,
        &["replica", "survived", "depth", "truncated"],
        runs.iter().enumerate().map(|(r, &(s, d, t))| {
            vec![r.to_string(), u8::from(s).to_string(), d.to_string(), u8::from(t).to_string()]
        }),
    )?;
    let survived = runs.iter().filter(|r| r.0).count() as u64;
    let p = Proportion::new(survived, replicas);
    println!("survival {:?} ci_halfwidth={} ({survived}/{replicas})", p.point, p.ci_halfwidth);
    let truncated = runs.iter().filter(|r| r.2).count();
    if truncated > 0 {
        eprintln!("warning: {truncated} replicas hit the width cap");
    }
    finish(run, &[&out])
}
