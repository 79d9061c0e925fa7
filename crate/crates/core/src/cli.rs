//! Command-line front end.
//!
//! Exit codes: 0 success (including runs stopped by the iteration limit),
//! 1 usage or I/O error, 2 deadline too short for the UAV to reach its end
//! point, 3 infeasible initial plan, 4 solver failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::{run_scheme, Scheme};
use crate::output::{
    self, MeanRow, OutputError, PlacementRow, ResultRow, MEANS_FILE, PLACEMENTS_FILE, RESULTS_FILE,
};
use crate::sca::{ScaConfig, ScaError};
use crate::scenario::{
    load_scenario, validate_deadline, Access, FlightModel, Scenario, ScenarioError, TableTwo, TimeGrid,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DEADLINE: i32 = 2;
pub const EXIT_INFEASIBLE_START: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "uav-cloudlet", version, about = "Plan offloading through a UAV-mounted cloudlet")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize one scenario (joint scheme unless --scheme is given).
    Solve(SolveArgs),
    /// Sweep deadlines over random user placements.
    Sweep(SweepArgs),
    /// Run one reference scheme on a scenario.
    Baseline(BaselineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AccessArg {
    Oma,
    Noma,
}

impl From<AccessArg> for Access {
    fn from(a: AccessArg) -> Self {
        match a {
            AccessArg::Oma => Access::Orthogonal,
            AccessArg::Noma => Access::NonOrthogonal,
        }
    }
}

#[derive(Debug, Args)]
pub struct Common {
    /// Override the access scheme of the scenario.
    #[arg(long, value_enum)]
    pub access: Option<AccessArg>,
    /// Override the flight energy model of the scenario.
    #[arg(long = "flight-model", value_parser = clap::value_parser!(u8).range(1..=2))]
    pub flight_model: Option<u8>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    /// Stationarity tolerance of the outer loop.
    #[arg(long)]
    pub tol: Option<f64>,
}

impl Common {
    fn config(&self) -> Result<ScaConfig, CliError> {
        let mut cfg = ScaConfig::default();
        if let Some(m) = self.max_iters {
            cfg.max_iters = m;
        }
        if let Some(t) = self.tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::Usage(format!("--tol must be positive, got {t}")));
            }
            cfg.tol = t;
        }
        Ok(cfg)
    }

    fn apply(&self, s: &mut Scenario) {
        if let Some(a) = self.access {
            s.access = a.into();
        }
        if let Some(m) = self.flight_model.and_then(FlightModel::from_number) {
            s.flight = m;
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value = "joint")]
    pub scheme: Scheme,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub scheme: Scheme,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Base scenario; the two-user deadline-sweep setup when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Deadlines in seconds, comma separated.
    #[arg(long = "t-list", value_delimiter = ',', required = true, num_args = 1..)]
    pub t_list: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub placements: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Schemes to run, comma separated, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub schemes: Vec<String>,
    /// Side of the square region users are placed in, in meters.
    #[arg(long, default_value_t = 10.0)]
    pub region: f64,
    /// Parallel runs; all cores when omitted.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sca(#[from] ScaError),
    #[error(transparent)]
    Output(#[from] OutputError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Output(_) => EXIT_USAGE,
            CliError::Scenario(ScenarioError::InfeasibleDeadline { .. }) => EXIT_DEADLINE,
            CliError::Scenario(_) => EXIT_USAGE,
            CliError::Sca(e) => sca_exit_code(e),
        }
    }
}

fn sca_exit_code(e: &ScaError) -> i32 {
    match e {
        ScaError::Deadline(ScenarioError::InfeasibleDeadline { .. }) => EXIT_DEADLINE,
        ScaError::Deadline(_) => EXIT_USAGE,
        ScaError::InfeasibleStart { .. } | ScaError::Unevaluable(_) => EXIT_INFEASIBLE_START,
        ScaError::Build(_) | ScaError::Solver { .. } => EXIT_SOLVER,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Messages go to stdout and stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Solve(a) => run_one(&a.scenario, a.scheme, &a.common),
        Command::Baseline(a) => run_one(&a.scenario, a.scheme, &a.common),
        Command::Sweep(a) => sweep(a),
    }
}

fn run_one(path: &Path, scheme: Scheme, common: &Common) -> Result<(), CliError> {
    let mut s = load_scenario(path)?;
    common.apply(&mut s);
    let cfg = common.config()?;
    let r = run_scheme(&s, scheme, &cfg)?;
    let row = output::write_run(&common.out, &s, scheme, &r)?;
    println!(
        "{scheme} {} model {}: mobile {:.6} J, UAV {:.6} J, {} iterations, {}",
        s.access,
        s.flight,
        r.ledger.mobile_total,
        r.ledger.uav_total,
        r.iterations(),
        if row.converged { "converged" } else { "iteration limit reached" }
    );
    Ok(())
}

fn parse_schemes(names: &[String]) -> Result<Vec<Scheme>, CliError> {
    if names.iter().any(|n| n == "all") {
        return Ok(Scheme::ALL.to_vec());
    }
    let mut out = Vec::new();
    for n in names {
        let s: Scheme = n.parse().map_err(CliError::Usage)?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("--schemes is empty".into()));
    }
    Ok(out)
}

/// Uniform placements of `users` users in `[0, side]²`, drawn in order.
pub fn random_placements(seed: u64, count: usize, users: usize, side: f64) -> Vec<Vec<[f64; 2]>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..users).map(|_| [rng.gen_range(0.0..=side), rng.gen_range(0.0..=side)]).collect())
        .collect()
}

/// The base scenario re-gridded to deadline `t` at the base frame length.
pub fn with_deadline(base: &Scenario, t: f64) -> Result<Scenario, ScenarioError> {
    let frames = ((t / base.frame_len()).round() as usize).max(4);
    Ok(base.with_grid(TimeGrid::new(t, frames)?))
}

struct Job {
    t: usize,
    placement: usize,
    access: Access,
    scheme: Scheme,
}

fn sweep(a: &SweepArgs) -> Result<(), CliError> {
    if a.t_list.is_empty() {
        return Err(CliError::Usage("--t-list is empty".into()));
    }
    if let Some(t) = a.t_list.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(CliError::Usage(format!("deadlines must be positive, got {t}")));
    }
    if !(a.region > 0.0 && a.region.is_finite()) {
        return Err(CliError::Usage(format!("--region must be positive, got {}", a.region)));
    }
    if a.jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let schemes = parse_schemes(&a.schemes)?;
    let cfg = a.common.config()?;
    let mut base = match &a.scenario {
        Some(p) => load_scenario(p)?,
        None => TableTwo::fig5([[0.0, 0.0], [0.0, 0.0]], Access::Orthogonal),
    };
    if let Some(m) = a.common.flight_model.and_then(FlightModel::from_number) {
        base.flight = m;
    }
    let accesses = match a.common.access {
        Some(x) => vec![Access::from(x)],
        None => vec![Access::Orthogonal, Access::NonOrthogonal],
    };
    let grids = a
        .t_list
        .iter()
        .map(|&t| with_deadline(&base, t))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let placements = random_placements(a.seed, a.placements, base.num_users(), a.region);

    let mut jobs = Vec::new();
    for t in 0..grids.len() {
        for placement in 0..placements.len() {
            for &access in &accesses {
                for &scheme in &schemes {
                    jobs.push(Job { t, placement, access, scheme });
                }
            }
        }
    }
    let run = |j: &Job| -> ResultRow {
        let mut s = grids[j.t].with_user_positions(&placements[j.placement]);
        s.access = j.access;
        let result = validate_deadline(&s)
            .map_err(ScaError::Deadline)
            .and_then(|_| run_scheme(&s, j.scheme, &cfg));
        match result {
            Ok(r) => ResultRow::from_result(&s, j.scheme, Some(j.placement), &r),
            Err(e) => {
                eprintln!("T={} placement {} {} {}: {e}", s.deadline(), j.placement, j.access, j.scheme);
                ResultRow::failed(&s, j.scheme, Some(j.placement))
            }
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let rows: Vec<ResultRow> = pool.install(|| jobs.par_iter().map(run).collect());

    std::fs::create_dir_all(&a.common.out)
        .map_err(|source| OutputError::Io { path: a.common.out.display().to_string(), source })?;
    let placement_rows: Vec<PlacementRow> = placements
        .iter()
        .enumerate()
        .flat_map(|(p, users)| {
            users.iter().enumerate().map(move |(k, xy)| PlacementRow { placement: p, k, x: xy[0], y: xy[1] })
        })
        .collect();
    output::write_csv(&a.common.out.join(PLACEMENTS_FILE), &placement_rows)?;
    output::write_csv(&a.common.out.join(RESULTS_FILE), &rows)?;
    let means = means(&rows, &grids, &accesses, &schemes, base.flight);
    output::write_csv(&a.common.out.join(MEANS_FILE), &means)?;
    for m in &means {
        match m.mean_mobile_j {
            Some(e) => println!("T={} {} {}: mean mobile energy {e:.4} J over {} runs", m.deadline, m.access, m.scheme, m.runs),
            None => println!("T={} {} {}: all {} runs failed", m.deadline, m.access, m.scheme, m.failed),
        }
    }
    Ok(())
}

fn means(
    rows: &[ResultRow],
    grids: &[Scenario],
    accesses: &[Access],
    schemes: &[Scheme],
    flight: FlightModel,
) -> Vec<MeanRow> {
    let mut out = Vec::new();
    for g in grids {
        for access in accesses {
            for scheme in schemes {
                let sel: Vec<&ResultRow> = rows
                    .iter()
                    .filter(|r| {
                        r.deadline == g.deadline() && r.access == access.to_string() && r.scheme == scheme.name()
                    })
                    .collect();
                let ok: Vec<&ResultRow> = sel.iter().copied().filter(|r| r.mobile_j.is_some()).collect();
                let mean = |f: fn(&ResultRow) -> Option<f64>| {
                    (!ok.is_empty()).then(|| ok.iter().filter_map(|r| f(r)).sum::<f64>() / ok.len() as f64)
                };
                out.push(MeanRow {
                    scheme: scheme.to_string(),
                    access: access.to_string(),
                    model: flight.number(),
                    deadline: g.deadline(),
                    runs: ok.len(),
                    failed: sel.len() - ok.len(),
                    converged: ok.iter().filter(|r| r.converged).count(),
                    mean_mobile_j: mean(|r| r.mobile_j),
                    mean_uav_j: mean(|r| r.uav_j),
                    mean_fly_j: mean(|r| r.fly_j),
                });
            }
        }
    }
    out
}
