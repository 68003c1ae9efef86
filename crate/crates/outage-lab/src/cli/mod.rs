//! Command-line front end over the outage operators.
//!
//! Five subcommands share one CSV schema on standard output: `outage` for
//! single-split estimates, `derivatives` for transfer-curve slopes with
//! finite-difference cross-checks, `check` for conjecture verdicts at one
//! parameter point, `sweep` for rate/power grids, and `plot` for SVG output.
//! Human-readable notes go to standard error. Exit codes: 0 on success
//! whatever the verdict, 2 for usage errors, 3 for numerical failures.

pub mod config;
pub mod csv;
pub mod svg;
pub mod sweep;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::mcsim::{
    mc_outage_direct, mc_outage_timo_reduced, McError, OutageEstimate, RandomStream,
    RNG_ALGORITHM,
};
use crate::mimo_general::{
    mc_outage_special_q, theorem2_check, MimoError, PerturbationVerdict, SpecialQ,
    DEFAULT_EPS_FRACTION,
};
use crate::specfun::{QuadratureSpec, SpecFunError};
use crate::timo::{
    outage_timo, theorem1_check, total_first_derivative, total_second_derivative, ChannelSpec,
    PowerSplit, TimoError, DEFAULT_SLOPE_TOL,
};

use csv::CsvRow;
use svg::WhiskerPoint;
use sweep::{RangeSpec, SweepCell, SweepContext, Verdict};

/// Errors surfaced by the command layer, mapped onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Invalid arguments or malformed inputs; exits with code 2.
    Usage(String),
    /// An evaluation failed to converge; exits with code 3.
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<String> for CliError {
    fn from(m: String) -> Self {
        CliError::Usage(m)
    }
}

impl From<SpecFunError> for CliError {
    fn from(e: SpecFunError) -> Self {
        match e {
            SpecFunError::Domain(_) => CliError::Usage(e.to_string()),
            SpecFunError::NoConvergence { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<TimoError> for CliError {
    fn from(e: TimoError) -> Self {
        match e {
            TimoError::Quadrature(q) => q.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        match e {
            McError::InvalidRequest(_) => CliError::Usage(e.to_string()),
            McError::AllDrawsFailed(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<MimoError> for CliError {
    fn from(e: MimoError) -> Self {
        match e {
            MimoError::InvalidRequest(_) => CliError::Usage(e.to_string()),
            MimoError::Numerical(_) => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "outage-lab",
    version,
    about = "Outage probabilities and conjecture checks for two-transmitter MIMO channels",
    after_help = "CSV goes to standard output (sweep: --out); notes go to standard error."
)]
struct Cli {
    /// Absolute quadrature tolerance; the relative tolerance is 100x this.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Seed for all random streams (default 0).
    #[arg(long, global = true, env = "OUTAGE_LAB_SEED")]
    seed: Option<u64>,
    /// Worker threads for sweeps; 0 or absent means all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Key=value file supplying defaults for any long flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Interpret --R and --R-range in bits instead of nats.
    #[arg(long, global = true)]
    bits: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Outage probability of one power split.
    Outage(OutageArgs),
    /// Transfer-curve derivatives with finite-difference cross-checks.
    Derivatives(DerivativesArgs),
    /// Conjecture verdict at one parameter point.
    Check(CheckArgs),
    /// Grid sweep over rate and power with per-cell verdicts.
    Sweep(SweepArgs),
    /// Render a split curve or a verdict map as SVG.
    Plot(PlotArgs),
}

/// Estimator selector for `outage`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Deterministic adaptive quadrature with a hard error bound.
    Quadrature,
    /// Monte Carlo on the full channel matrix.
    McDirect,
    /// Monte Carlo through the two-antenna scalar reduction.
    McReduced,
    /// Monte Carlo through the grouped-covariance reduction.
    McSpecialQ,
}

impl std::str::FromStr for MethodArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quadrature" => Ok(MethodArg::Quadrature),
            "mc-direct" => Ok(MethodArg::McDirect),
            "mc-reduced" => Ok(MethodArg::McReduced),
            "mc-special-q" => Ok(MethodArg::McSpecialQ),
            _ => Err(format!("unknown method {s:?}")),
        }
    }
}

/// Output selector for `plot`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    /// Outage versus first power, with optional Monte Carlo overlay.
    Curve,
    /// Rate/power scatter of sweep verdicts.
    Map,
}

impl std::str::FromStr for KindArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "curve" => Ok(KindArg::Curve),
            "map" => Ok(KindArg::Map),
            _ => Err(format!("unknown plot kind {s:?}")),
        }
    }
}

#[derive(Args)]
struct OutageArgs {
    /// Receive antennas.
    #[arg(long)]
    r: Option<u32>,
    /// Target rate (nats unless --bits).
    #[arg(long = "R")]
    rate: Option<f64>,
    /// Total transmit power.
    #[arg(long = "P")]
    power: Option<f64>,
    /// Power on the first antenna; the second receives P - q1.
    #[arg(long)]
    q1: Option<f64>,
    /// Estimator to use (default: quadrature).
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Monte Carlo draws (default: 1000000).
    #[arg(long)]
    n: Option<u64>,
}

#[derive(Args)]
struct DerivativesArgs {
    /// Receive antennas.
    #[arg(long)]
    r: Option<u32>,
    /// Target rate (nats unless --bits).
    #[arg(long = "R")]
    rate: Option<f64>,
    /// Total transmit power.
    #[arg(long = "P")]
    power: Option<f64>,
    /// Split to report at; default reports at q1 = 0 and q1 = P/2.
    #[arg(long)]
    q1: Option<f64>,
}

#[derive(Args)]
struct CheckArgs {
    /// Which local-optimality test to run: 1 or 2.
    #[arg(long)]
    theorem: Option<u8>,
    /// Receive antennas.
    #[arg(long)]
    r: Option<u32>,
    /// Target rate (nats unless --bits).
    #[arg(long = "R")]
    rate: Option<f64>,
    /// Total transmit power.
    #[arg(long = "P")]
    power: Option<f64>,
    /// Transmit antennas (theorem 2; default 2).
    #[arg(long)]
    t: Option<u32>,
    /// Active antennas in the uniform pattern under test (theorem 2).
    #[arg(long)]
    k: Option<u32>,
    /// Perturbation size (theorem 2; default 0.025 of the per-antenna power).
    #[arg(long)]
    eps: Option<f64>,
    /// Paired Monte Carlo draws (theorem 2; default 1000000).
    #[arg(long)]
    n: Option<u64>,
    /// Sign-decision tolerance for derivative tests (theorem 1).
    #[arg(long = "sign-tol")]
    sign_tol: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Receive antennas.
    #[arg(long)]
    r: Option<u32>,
    /// Rate grid start:stop:step in multiples of r (nats unless --bits).
    #[arg(long = "R-range")]
    rate_range: Option<RangeSpec>,
    /// Power grid start:stop:step in multiples of r.
    #[arg(long = "P-range")]
    power_range: Option<RangeSpec>,
    /// Split-grid resolution as a fraction of P (default 0.025).
    #[arg(long = "q-step")]
    q_step: Option<f64>,
    /// Output CSV path; "-" writes to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// What to draw (default: curve).
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// CSV produced by another subcommand to draw from.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output SVG path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Receive antennas (curve mode without --in).
    #[arg(long)]
    r: Option<u32>,
    /// Target rate (curve mode without --in; nats unless --bits).
    #[arg(long = "R")]
    rate: Option<f64>,
    /// Total transmit power (curve mode without --in).
    #[arg(long = "P")]
    power: Option<f64>,
    /// Curve sample count (default 41).
    #[arg(long)]
    points: Option<u32>,
    /// Draws per Monte Carlo overlay point; 0 disables the overlay.
    #[arg(long = "mc-n")]
    mc_n: Option<u64>,
}

/// Effective global settings after config merging.
struct Globals {
    tol: Option<f64>,
    seed: Option<u64>,
    jobs: Option<usize>,
    bits: bool,
}

impl Globals {
    fn quad(&self) -> Result<QuadratureSpec, CliError> {
        match self.tol {
            None => Ok(QuadratureSpec::default()),
            Some(t) => Ok(QuadratureSpec::new(t, t * 100.0, 2000)?),
        }
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn rate_to_nats(&self, rate: f64) -> f64 {
        if self.bits {
            rate * std::f64::consts::LN_2
        } else {
            rate
        }
    }
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| {
        CliError::Usage(format!(
            "missing required value --{flag} (flag or config key \"{flag}\")"
        ))
    })
}

fn emit(rows: &[CsvRow]) {
    print!("{}", csv::render_document(rows));
}

/// Entry point for the binary; returns the process exit code.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                CliError::Numerical(_) => ExitCode::from(3),
            }
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let map = match &cli.config {
        Some(path) => config::load(path)?,
        None => BTreeMap::new(),
    };
    let mut g = Globals {
        tol: cli.tol,
        seed: cli.seed,
        jobs: cli.jobs,
        bits: cli.bits,
    };
    config::fill(&mut g.tol, &map, "tol")?;
    config::fill(&mut g.seed, &map, "seed")?;
    config::fill(&mut g.jobs, &map, "jobs")?;
    config::fill_flag(&mut g.bits, &map, "bits")?;
    match cli.command {
        Command::Outage(a) => cmd_outage(&g, a, &map),
        Command::Derivatives(a) => cmd_derivatives(&g, a, &map),
        Command::Check(a) => cmd_check(&g, a, &map),
        Command::Sweep(a) => cmd_sweep(&g, a, &map),
        Command::Plot(a) => cmd_plot(&g, a, &map),
    }
}

fn cmd_outage(
    g: &Globals,
    mut a: OutageArgs,
    map: &BTreeMap<String, String>,
) -> Result<(), CliError> {
    config::fill(&mut a.r, map, "r")?;
    config::fill(&mut a.rate, map, "R")?;
    config::fill(&mut a.power, map, "P")?;
    config::fill(&mut a.q1, map, "q1")?;
    config::fill(&mut a.method, map, "method")?;
    config::fill(&mut a.n, map, "n")?;

    let r = need(a.r, "r")?;
    let rate = g.rate_to_nats(need(a.rate, "R")?);
    let power = need(a.power, "P")?;
    let q1 = need(a.q1, "q1")?;
    let method = a.method.unwrap_or(MethodArg::Quadrature);
    let n = a.n.unwrap_or(1_000_000);

    let spec = ChannelSpec::timo(r, rate, power)?;
    let split = PowerSplit::from_q1(&spec, q1)?;
    let quad = g.quad()?;

    let (est, seed_col): (OutageEstimate, Option<u64>) = match method {
        MethodArg::Quadrature => (outage_timo(&spec, &split, &quad)?, None),
        MethodArg::McReduced => {
            let mut stream = RandomStream::new(g.seed(), 0);
            (
                mc_outage_timo_reduced(&spec, &split, n, &mut stream)?,
                Some(g.seed()),
            )
        }
        MethodArg::McDirect => {
            let mut stream = RandomStream::new(g.seed(), 0);
            (
                mc_outage_direct(&spec, &[split.q1(), split.q2()], n, &mut stream)?,
                Some(g.seed()),
            )
        }
        MethodArg::McSpecialQ => {
            let sq = SpecialQ::new(0.0, split.q1(), split.q2(), 2)?;
            let mut stream = RandomStream::new(g.seed(), 0);
            (
                mc_outage_special_q(&spec, &sq, n, &mut stream)?,
                Some(g.seed()),
            )
        }
    };

    emit(&[CsvRow {
        method: est.method.token().into(),
        t: Some(2),
        r: Some(r),
        rate: Some(rate),
        power: Some(power),
        q1: Some(split.q1()),
        q2: Some(split.q2()),
        value: Some(est.p_hat),
        uncertainty: Some(est.stderr),
        n_samples: Some(est.n_samples),
        seed: seed_col,
        ..CsvRow::default()
    }]);
    eprintln!(
        "outage = {} +/- {} ({}, n = {}, eval errors = {}, rng = {RNG_ALGORITHM})",
        est.p_hat,
        est.stderr,
        est.method.token(),
        est.n_samples,
        est.n_eval_errors
    );
    Ok(())
}

/// Weighted sum of outage values at nearby splits, for derivative checks.
fn fd_stencil(
    spec: &ChannelSpec,
    quad: &QuadratureSpec,
    stencil: &[(f64, f64)],
    denom: f64,
) -> Result<(f64, f64, u64), CliError> {
    let mut value = 0.0;
    let mut noise = 0.0;
    let mut evals = 0u64;
    for &(q, coef) in stencil {
        let est = outage_timo(spec, &PowerSplit::from_q1(spec, q)?, quad)?;
        value += coef * est.p_hat;
        noise += coef.abs() * est.stderr;
        evals += est.n_samples;
    }
    Ok((value / denom, noise / denom.abs(), evals))
}

fn fd_first(
    spec: &ChannelSpec,
    q: f64,
    quad: &QuadratureSpec,
) -> Result<(f64, f64, u64), CliError> {
    let p = spec.total_power();
    let h = 1e-4 * p;
    let stencil: Vec<(f64, f64)> = if q - h < 0.0 {
        vec![(q, -1.5), (q + h, 2.0), (q + 2.0 * h, -0.5)]
    } else if q + h > p {
        vec![(q - 2.0 * h, 0.5), (q - h, -2.0), (q, 1.5)]
    } else {
        vec![(q - h, -0.5), (q + h, 0.5)]
    };
    fd_stencil(spec, quad, &stencil, h)
}

fn fd_second(
    spec: &ChannelSpec,
    q: f64,
    quad: &QuadratureSpec,
) -> Result<(f64, f64, u64), CliError> {
    let p = spec.total_power();
    let h = 2e-3 * p;
    let stencil: Vec<(f64, f64)> = if q - h < 0.0 {
        vec![
            (q, 2.0),
            (q + h, -5.0),
            (q + 2.0 * h, 4.0),
            (q + 3.0 * h, -1.0),
        ]
    } else if q + h > p {
        vec![
            (q - 3.0 * h, -1.0),
            (q - 2.0 * h, 4.0),
            (q - h, -5.0),
            (q, 2.0),
        ]
    } else {
        vec![(q - h, 1.0), (q, -2.0), (q + h, 1.0)]
    };
    fd_stencil(spec, quad, &stencil, h * h)
}

fn cmd_derivatives(
    g: &Globals,
    mut a: DerivativesArgs,
    map: &BTreeMap<String, String>,
) -> Result<(), CliError> {
    config::fill(&mut a.r, map, "r")?;
    config::fill(&mut a.rate, map, "R")?;
    config::fill(&mut a.power, map, "P")?;
    config::fill(&mut a.q1, map, "q1")?;

    let r = need(a.r, "r")?;
    let rate = g.rate_to_nats(need(a.rate, "R")?);
    let power = need(a.power, "P")?;
    let spec = ChannelSpec::timo(r, rate, power)?;
    let quad = g.quad()?;

    let points = match a.q1 {
        Some(q) => vec![q],
        None => vec![0.0, 0.5 * power],
    };

    let mut rows = Vec::with_capacity(4 * points.len());
    for &q in &points {
        let base = CsvRow {
            t: Some(2),
            r: Some(r),
            rate: Some(rate),
            power: Some(power),
            q1: Some(q),
            q2: Some(power - q),
            ..CsvRow::default()
        };
        let d1 = total_first_derivative(&spec, q, &quad)?;
        let (fd1, fd1_noise, fd1_evals) = fd_first(&spec, q, &quad)?;
        let d2 = total_second_derivative(&spec, q, &quad)?;
        let (fd2, fd2_noise, fd2_evals) = fd_second(&spec, q, &quad)?;
        for (method, value, unc, evals) in [
            ("d1", d1.value, d1.err_bound, d1.evaluations),
            ("d1_fd", fd1, fd1_noise, fd1_evals),
            ("d2", d2.value, d2.err_bound, d2.evaluations),
            ("d2_fd", fd2, fd2_noise, fd2_evals),
        ] {
            rows.push(CsvRow {
                method: method.into(),
                value: Some(value),
                uncertainty: Some(unc),
                n_samples: Some(evals),
                ..base.clone()
            });
        }
        eprintln!(
            "q1 = {q}: d1 = {} (fd {fd1}), d2 = {} (fd {fd2})",
            d1.value, d2.value
        );
    }
    emit(&rows);
    Ok(())
}

fn cmd_check(
    g: &Globals,
    mut a: CheckArgs,
    map: &BTreeMap<String, String>,
) -> Result<(), CliError> {
    config::fill(&mut a.theorem, map, "theorem")?;
    config::fill(&mut a.r, map, "r")?;
    config::fill(&mut a.rate, map, "R")?;
    config::fill(&mut a.power, map, "P")?;
    config::fill(&mut a.t, map, "t")?;
    config::fill(&mut a.k, map, "k")?;
    config::fill(&mut a.eps, map, "eps")?;
    config::fill(&mut a.n, map, "n")?;
    config::fill(&mut a.sign_tol, map, "sign-tol")?;

    let theorem = need(a.theorem, "theorem")?;
    let r = need(a.r, "r")?;
    let rate = g.rate_to_nats(need(a.rate, "R")?);
    let power = need(a.power, "P")?;

    match theorem {
        1 => {
            let spec = ChannelSpec::timo(r, rate, power)?;
            let tol = a.sign_tol.unwrap_or(DEFAULT_SLOPE_TOL);
            let rep = theorem1_check(&spec, tol, &g.quad()?)?;
            let verdict = if rep.counterexample_found {
                "counterexample"
            } else if rep.inconclusive {
                "inconclusive"
            } else {
                "conjecture_holds"
            };
            let base = CsvRow {
                t: Some(2),
                r: Some(r),
                rate: Some(rate),
                power: Some(power),
                ..CsvRow::default()
            };
            emit(&[
                CsvRow {
                    method: "d1".into(),
                    q1: Some(0.0),
                    q2: Some(power),
                    value: Some(rep.d1_at_zero),
                    ..base.clone()
                },
                CsvRow {
                    method: "d2".into(),
                    q1: Some(0.0),
                    q2: Some(power),
                    value: Some(rep.d2_at_zero),
                    ..base.clone()
                },
                CsvRow {
                    method: "d2".into(),
                    q1: Some(0.5 * power),
                    q2: Some(0.5 * power),
                    value: Some(rep.d2_at_half),
                    uncertainty: Some(rep.d2_at_half_err),
                    ..base.clone()
                },
                CsvRow {
                    method: "check1".into(),
                    uncertainty: Some(rep.tol),
                    verdict: Some(verdict.into()),
                    ..base
                },
            ]);
            eprintln!(
                "d1(0) = {}, d2(0) = {}, d2(P/2) = {} +/- {}",
                rep.d1_at_zero, rep.d2_at_zero, rep.d2_at_half, rep.d2_at_half_err
            );
            eprintln!("theorem 1 verdict at sign tolerance {}: {verdict}", rep.tol);
        }
        2 => {
            let t = a.t.unwrap_or(2);
            let k = need(a.k, "k")?;
            if k == 0 {
                return Err(CliError::Usage("k must be at least 1".into()));
            }
            let eps = a
                .eps
                .unwrap_or(DEFAULT_EPS_FRACTION * power / f64::from(k));
            let n = a.n.unwrap_or(1_000_000);
            let spec = ChannelSpec::new(t, r, rate, power)?;
            let mut stream = RandomStream::new(g.seed(), 0);
            let rep = theorem2_check(&spec, k, eps, n, &mut stream)?;
            let verdict = match rep.verdict {
                PerturbationVerdict::Rejected => "rejected_as_local_minimum",
                PerturbationVerdict::NotRejected => "not_rejected",
                PerturbationVerdict::Inconclusive => "inconclusive",
            };
            let base = CsvRow {
                t: Some(t),
                r: Some(r),
                rate: Some(rate),
                power: Some(power),
                n_samples: Some(rep.n_samples),
                seed: Some(g.seed()),
                ..CsvRow::default()
            };
            let mut rows = Vec::new();
            if let Some(dp) = rep.delta_prime {
                rows.push(CsvRow {
                    method: "delta_prime".into(),
                    value: Some(dp.delta),
                    uncertainty: Some(dp.stderr),
                    ..base.clone()
                });
                eprintln!("delta' = {} +/- {}", dp.delta, dp.stderr);
            }
            if let Some(dd) = rep.delta_double_prime {
                rows.push(CsvRow {
                    method: "delta_double_prime".into(),
                    value: Some(dd.delta),
                    uncertainty: Some(dd.stderr),
                    ..base.clone()
                });
                eprintln!("delta'' = {} +/- {}", dd.delta, dd.stderr);
            }
            // the verdict row carries the perturbation size in value
            rows.push(CsvRow {
                method: "check2".into(),
                value: Some(rep.eps),
                verdict: Some(verdict.into()),
                ..base
            });
            emit(&rows);
            eprintln!(
                "theorem 2 verdict for k = {k} at eps = {} (rng = {RNG_ALGORITHM}): {verdict}",
                rep.eps
            );
        }
        other => {
            return Err(CliError::Usage(format!(
                "theorem must be 1 or 2, got {other}"
            )));
        }
    }
    Ok(())
}

fn cell_to_row(cell: &SweepCell, r: u32) -> CsvRow {
    let mut row = CsvRow {
        method: "sweep".into(),
        t: Some(2),
        r: Some(r),
        rate: Some(cell.rate),
        power: Some(cell.power),
        seed: Some(cell.seed),
        verdict: Some(cell.verdict.token().into()),
        ..CsvRow::default()
    };
    if let Some(rep) = &cell.report {
        row.value = Some(cell.depth);
        row.uncertainty = Some(cell.margin);
        row.n_samples = Some(rep.evaluations);
        row.q_star = Some(rep.q_star);
        row.f_star = Some(rep.f_star);
        row.f_at_zero = Some(rep.f_at_zero);
        row.f_at_half = Some(rep.f_at_half);
    }
    row
}

fn build_pool(jobs: Option<usize>) -> Result<Option<rayon::ThreadPool>, CliError> {
    match jobs {
        None | Some(0) => Ok(None),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map(Some)
            .map_err(|e| CliError::Usage(format!("cannot build a {j}-thread pool: {e}"))),
    }
}

fn cmd_sweep(
    g: &Globals,
    mut a: SweepArgs,
    map: &BTreeMap<String, String>,
) -> Result<(), CliError> {
    config::fill(&mut a.r, map, "r")?;
    config::fill(&mut a.rate_range, map, "R-range")?;
    config::fill(&mut a.power_range, map, "P-range")?;
    config::fill(&mut a.q_step, map, "q-step")?;
    config::fill(&mut a.out, map, "out")?;

    let r = need(a.r, "r")?;
    let rate_range = need(a.rate_range, "R-range")?;
    let power_range = need(a.power_range, "P-range")?;
    let out = need(a.out, "out")?;
    let ctx = SweepContext {
        r,
        q_step: a.q_step.unwrap_or(0.025),
        quad: g.quad()?,
        seed: g.seed(),
    };

    let scale = f64::from(r);
    let rate_scale = if g.bits {
        scale * std::f64::consts::LN_2
    } else {
        scale
    };
    let rates = rate_range.values(rate_scale);
    let powers = power_range.values(scale);
    sweep::validate_grid(&ctx, &rates, &powers)?;

    let pool = build_pool(g.jobs)?;
    let mut writer: Box<dyn Write> = if out.as_os_str() == "-" {
        Box::new(std::io::stdout())
    } else {
        let file = std::fs::File::create(&out)
            .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out.display())))?;
        Box::new(std::io::BufWriter::new(file))
    };
    let io_err = |e: std::io::Error| CliError::Usage(format!("cannot write output: {e}"));
    writeln!(writer, "{}", csv::HEADER).map_err(io_err)?;

    let mut counts = [0usize; 4];
    let mut index = 0u64;
    // one rate row at a time: completed rows are flushed so an
    // interrupted sweep keeps its finished cells
    for &rate in &rates {
        let cells = match &pool {
            Some(p) => p.install(|| sweep::run_rate_row(&ctx, rate, &powers, index)),
            None => sweep::run_rate_row(&ctx, rate, &powers, index),
        };
        for cell in &cells {
            let slot = match cell.verdict {
                Verdict::ConjectureHolds => 0,
                Verdict::Counterexample => 1,
                Verdict::Inconclusive => 2,
                Verdict::NumericallyUnstable => 3,
            };
            counts[slot] += 1;
            writeln!(writer, "{}", cell_to_row(cell, r).to_line()).map_err(io_err)?;
        }
        writer.flush().map_err(io_err)?;
        index += powers.len() as u64;
    }
    eprintln!(
        "{} cells: {} conjecture_holds, {} counterexample, {} inconclusive, {} numerically_unstable",
        rates.len() * powers.len(),
        counts[0],
        counts[1],
        counts[2],
        counts[3]
    );
    Ok(())
}

fn cmd_plot(g: &Globals, mut a: PlotArgs, map: &BTreeMap<String, String>) -> Result<(), CliError> {
    config::fill(&mut a.kind, map, "kind")?;
    config::fill(&mut a.input, map, "in")?;
    config::fill(&mut a.out, map, "out")?;
    config::fill(&mut a.r, map, "r")?;
    config::fill(&mut a.rate, map, "R")?;
    config::fill(&mut a.power, map, "P")?;
    config::fill(&mut a.points, map, "points")?;
    config::fill(&mut a.mc_n, map, "mc-n")?;

    let kind = a.kind.unwrap_or(KindArg::Curve);
    let out = need(a.out, "out")?;

    let document = match kind {
        KindArg::Curve => {
            if let Some(input) = &a.input {
                let rows = read_rows(input)?;
                let line: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|row| row.method == "quadrature")
                    .filter_map(|row| Some((row.q1?, row.value?)))
                    .collect();
                let points: Vec<WhiskerPoint> = rows
                    .iter()
                    .filter(|row| row.method.starts_with("mc_"))
                    .filter_map(|row| {
                        Some(WhiskerPoint {
                            q1: row.q1?,
                            value: row.value?,
                            stderr: row.uncertainty.unwrap_or(0.0),
                        })
                    })
                    .collect();
                if line.is_empty() && points.is_empty() {
                    return Err(CliError::Usage(
                        "no drawable rows: need quadrature or mc_* rows with q1 and value".into(),
                    ));
                }
                svg::render_curve(&curve_title(rows.first()), &line, &points)
            } else {
                let r = need(a.r, "r")?;
                let rate = g.rate_to_nats(need(a.rate, "R")?);
                let power = need(a.power, "P")?;
                let spec = ChannelSpec::timo(r, rate, power)?;
                let quad = g.quad()?;
                let line = svg::curve_samples(&spec, a.points.unwrap_or(41), &quad)?;
                let mut points = Vec::new();
                let mc_n = a.mc_n.unwrap_or(0);
                if mc_n > 0 {
                    // overlay every fourth sample; stream index keeps the
                    // points independent yet reproducible
                    for (i, &(q1, _)) in line.iter().enumerate().step_by(4) {
                        let mut stream = RandomStream::new(g.seed(), i as u64);
                        let est = mc_outage_timo_reduced(
                            &spec,
                            &PowerSplit::from_q1(&spec, q1)?,
                            mc_n,
                            &mut stream,
                        )?;
                        points.push(WhiskerPoint {
                            q1,
                            value: est.p_hat,
                            stderr: est.stderr,
                        });
                    }
                }
                let title = format!("outage vs q1 (r={r}, R={rate}, P={power})");
                svg::render_curve(&title, &line, &points)
            }
        }
        KindArg::Map => {
            let input = need(a.input.as_ref(), "in")?;
            let rows = read_rows(input)?;
            let mut cells = Vec::new();
            for row in &rows {
                let Some(token) = &row.verdict else { continue };
                let verdict = Verdict::from_token(token).ok_or_else(|| {
                    CliError::Usage(format!("unknown verdict token {token:?}"))
                })?;
                let (Some(rate), Some(power)) = (row.rate, row.power) else {
                    return Err(CliError::Usage(
                        "verdict rows must carry R and P for a map".into(),
                    ));
                };
                cells.push((rate, power, verdict));
            }
            if cells.is_empty() {
                return Err(CliError::Usage("no verdict rows to draw".into()));
            }
            let title = match rows.iter().find_map(|row| row.r) {
                Some(r) => format!("conjecture test map (r={r})"),
                None => "conjecture test map".into(),
            };
            svg::render_map(&title, &cells)
        }
    };

    std::fs::write(&out, document)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", out.display())))?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn curve_title(first: Option<&CsvRow>) -> String {
    match first {
        Some(row) => match (row.r, row.rate, row.power) {
            (Some(r), Some(rate), Some(power)) => {
                format!("outage vs q1 (r={r}, R={rate}, P={power})")
            }
            _ => "outage vs q1".into(),
        },
        None => "outage vs q1".into(),
    }
}

fn read_rows(path: &PathBuf) -> Result<Vec<CsvRow>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    csv::parse_document(&text).map_err(CliError::Usage)
}
