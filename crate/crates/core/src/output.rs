//! Result files: comma-separated tables with fixed column order and a TOML
//! run summary.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a
//! table back yields bit-identical values and equal inputs give
//! byte-identical files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::Scheme;
use crate::plan::{FrameBitAlloc, Trajectory};
use crate::sca::{PlanResult, Termination};
use crate::scenario::{FlightModel, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv { path: path.display().to_string(), source }
}

fn format_err(path: &Path, msg: impl Into<String>) -> OutputError {
    OutputError::Format { path: path.display().to_string(), msg: msg.into() }
}

/// One waypoint. Missing kinematic quantities are left empty: Model 1 has
/// no accelerations, and the last waypoint has no outgoing frame velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub n: usize,
    pub x: f64,
    pub y: f64,
    pub vx: Option<f64>,
    pub vy: Option<f64>,
    pub ax: Option<f64>,
    pub ay: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitsRow {
    pub n: usize,
    pub k: usize,
    pub uplink: f64,
    pub compute: f64,
    pub downlink: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective_j: f64,
    pub uav_j: f64,
    pub step_norm: f64,
    pub gamma: f64,
    pub residual: f64,
}

/// One row of the long-format results table. Energies are empty for runs
/// that failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: String,
    pub access: String,
    pub model: u8,
    #[serde(rename = "T")]
    pub deadline: f64,
    pub placement: Option<usize>,
    #[serde(rename = "mobile_J")]
    pub mobile_j: Option<f64>,
    #[serde(rename = "uav_J")]
    pub uav_j: Option<f64>,
    #[serde(rename = "fly_J")]
    pub fly_j: Option<f64>,
    pub iters: Option<usize>,
    pub converged: bool,
}

impl ResultRow {
    pub fn from_result(s: &Scenario, scheme: Scheme, placement: Option<usize>, r: &PlanResult) -> Self {
        ResultRow {
            scheme: scheme.to_string(),
            access: s.access.to_string(),
            model: s.flight.number(),
            deadline: s.deadline(),
            placement,
            mobile_j: Some(r.ledger.mobile_total),
            uav_j: Some(r.ledger.uav_total),
            fly_j: Some(r.ledger.fly_total()),
            iters: Some(r.iterations()),
            converged: r.converged(),
        }
    }

    pub fn failed(s: &Scenario, scheme: Scheme, placement: Option<usize>) -> Self {
        ResultRow {
            scheme: scheme.to_string(),
            access: s.access.to_string(),
            model: s.flight.number(),
            deadline: s.deadline(),
            placement,
            mobile_j: None,
            uav_j: None,
            fly_j: None,
            iters: None,
            converged: false,
        }
    }
}

/// Per-(T, access, scheme) averages over the placements that succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub scheme: String,
    pub access: String,
    pub model: u8,
    #[serde(rename = "T")]
    pub deadline: f64,
    pub runs: usize,
    pub failed: usize,
    pub converged: usize,
    #[serde(rename = "mean_mobile_J")]
    pub mean_mobile_j: Option<f64>,
    #[serde(rename = "mean_uav_J")]
    pub mean_uav_j: Option<f64>,
    #[serde(rename = "mean_fly_J")]
    pub mean_fly_j: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementRow {
    pub placement: usize,
    pub k: usize,
    pub x: f64,
    pub y: f64,
}

/// Human-readable mirror of the energy ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scheme: String,
    pub access: String,
    pub flight_model: u8,
    pub deadline_s: f64,
    pub frames: usize,
    pub termination: String,
    pub converged: bool,
    pub iterations: usize,
    pub mobile_energy_j: f64,
    pub uav_energy_j: f64,
    pub fly_energy_j: f64,
    pub budget_j: f64,
    pub budget_slack_j: f64,
    pub mobile_energy_per_user_j: Vec<f64>,
    pub per_frame: PerFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerFrame {
    pub uplink_j: Vec<f64>,
    pub compute_j: Vec<f64>,
    pub downlink_j: Vec<f64>,
    pub fly_j: Vec<f64>,
}

impl RunSummary {
    pub fn new(s: &Scenario, scheme: Scheme, r: &PlanResult) -> Self {
        let l = &r.ledger;
        RunSummary {
            scheme: scheme.to_string(),
            access: s.access.to_string(),
            flight_model: s.flight.number(),
            deadline_s: s.deadline(),
            frames: s.frames(),
            termination: match r.termination {
                Termination::Stationary => "stationary".into(),
                Termination::MaxIterations => "max_iterations".into(),
            },
            converged: r.converged(),
            iterations: r.iterations(),
            mobile_energy_j: l.mobile_total,
            uav_energy_j: l.uav_total,
            fly_energy_j: l.fly_total(),
            budget_j: s.uav.energy_budget,
            budget_slack_j: l.budget_slack,
            mobile_energy_per_user_j: l.mobile_per_user.clone(),
            per_frame: PerFrame {
                uplink_j: l.uplink.clone(),
                compute_j: l.compute.clone(),
                downlink_j: l.downlink.clone(),
                fly_j: l.fly.clone(),
            },
        }
    }
}

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const BITS_FILE: &str = "bits.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const MEANS_FILE: &str = "means.csv";
pub const PLACEMENTS_FILE: &str = "placements.csv";
pub const SUMMARY_FILE: &str = "summary.toml";

pub fn trajectory_rows(t: &Trajectory, dt: f64) -> Vec<TrajectoryRow> {
    let n = t.frames();
    let dynamic = t.has_dynamics();
    (0..=n)
        .map(|i| {
            let p = t.positions[i];
            let v = if dynamic {
                Some(t.velocities[i])
            } else if i < n {
                Some(t.frame_velocity(i, dt))
            } else {
                None
            };
            let a = (dynamic && i < n).then(|| t.accelerations[i]);
            TrajectoryRow {
                n: i,
                x: p[0],
                y: p[1],
                vx: v.map(|v| v[0]),
                vy: v.map(|v| v[1]),
                ax: a.map(|a| a[0]),
                ay: a.map(|a| a[1]),
            }
        })
        .collect()
}

pub fn bits_rows(b: &FrameBitAlloc) -> Vec<BitsRow> {
    let mut rows = Vec::with_capacity(b.users() * b.frames());
    for n in 0..b.frames() {
        for k in 0..b.users() {
            rows.push(BitsRow {
                n,
                k,
                uplink: b.uplink[k][n],
                compute: b.compute[k][n],
                downlink: b.downlink[k][n],
            });
        }
    }
    rows
}

pub fn trace_rows(r: &PlanResult) -> Vec<TraceRow> {
    let t = &r.trace;
    (0..t.len())
        .map(|i| TraceRow {
            iter: i,
            objective_j: t.objective[i],
            uav_j: t.uav_energy[i],
            step_norm: t.step_norm[i],
            gamma: t.gamma[i],
            residual: t.residual[i],
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, OutputError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err(path))
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<(), OutputError> {
    let text = toml::to_string(summary).map_err(|e| format_err(path, e.to_string()))?;
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_summary(path: &Path) -> Result<RunSummary, OutputError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    toml::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

/// Writes the trajectory, bits, trace, summary and single-row results files
/// of one run into `dir`, creating it if needed.
pub fn write_run(dir: &Path, s: &Scenario, scheme: Scheme, r: &PlanResult) -> Result<ResultRow, OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_csv(&dir.join(TRAJECTORY_FILE), &trajectory_rows(&r.plan.trajectory, s.frame_len()))?;
    write_csv(&dir.join(BITS_FILE), &bits_rows(&r.plan.bits))?;
    write_csv(&dir.join(TRACE_FILE), &trace_rows(r))?;
    write_summary(&dir.join(SUMMARY_FILE), &RunSummary::new(s, scheme, r))?;
    let row = ResultRow::from_result(s, scheme, None, r);
    write_csv(&dir.join(RESULTS_FILE), std::slice::from_ref(&row))?;
    Ok(row)
}

/// Rebuilds a trajectory from its table. Model 1 keeps positions only.
pub fn read_trajectory(path: &Path, model: FlightModel) -> Result<Trajectory, OutputError> {
    let rows: Vec<TrajectoryRow> = read_csv(path)?;
    if rows.len() < 2 || rows.iter().enumerate().any(|(i, r)| r.n != i) {
        return Err(format_err(path, "waypoints must be numbered 0, 1, ... with at least two rows"));
    }
    let positions = rows.iter().map(|r| [r.x, r.y]).collect();
    if model == FlightModel::Model1 {
        return Ok(Trajectory { positions, velocities: Vec::new(), accelerations: Vec::new() });
    }
    let missing = |what: &str, n: usize| format_err(path, format!("row {n}: missing {what}"));
    let mut velocities = Vec::with_capacity(rows.len());
    let mut accelerations = Vec::with_capacity(rows.len() - 1);
    for r in &rows {
        match (r.vx, r.vy) {
            (Some(x), Some(y)) => velocities.push([x, y]),
            _ => return Err(missing("velocity", r.n)),
        }
        if r.n + 1 < rows.len() {
            match (r.ax, r.ay) {
                (Some(x), Some(y)) => accelerations.push([x, y]),
                _ => return Err(missing("acceleration", r.n)),
            }
        }
    }
    Ok(Trajectory { positions, velocities, accelerations })
}

pub fn read_bits(path: &Path, users: usize, frames: usize) -> Result<FrameBitAlloc, OutputError> {
    let rows: Vec<BitsRow> = read_csv(path)?;
    if rows.len() != users * frames {
        return Err(format_err(path, format!("expected {} rows, found {}", users * frames, rows.len())));
    }
    let mut b = FrameBitAlloc::zeros(users, frames);
    for r in rows {
        if r.k >= users || r.n >= frames {
            return Err(format_err(path, format!("row (n={}, k={}) out of range", r.n, r.k)));
        }
        b.uplink[r.k][r.n] = r.uplink;
        b.compute[r.k][r.n] = r.compute;
        b.downlink[r.k][r.n] = r.downlink;
    }
    Ok(b)
}
