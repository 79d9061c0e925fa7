//! Exact energy models: channel, communication, cloudlet computation,
//! flight and local execution.

use crate::plan::{FrameBitAlloc, Trajectory};
use crate::scenario::{Access, FlightModel, MobileUser, Scenario};

/// Speeds below this are treated as zero by the propulsion model.
pub const ZERO_SPEED: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Uplink,
    Downlink,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnergyError {
    #[error("{link:?} interference system in frame {frame} has no nonnegative solution")]
    InterferenceInfeasible { link: Link, frame: usize },
    #[error("zero speed in frame {frame}: propulsion energy is unbounded")]
    ZeroSpeed { frame: usize },
}

/// Channel power gain from a UAV at `p` (altitude `h`) to a ground user.
pub fn channel_gain(p: [f64; 2], user: &MobileUser, h: f64, g0: f64) -> f64 {
    let dx = p[0] - user.position[0];
    let dy = p[1] - user.position[1];
    g0 / (dx * dx + dy * dy + h * h)
}

/// Cloudlet energy per user for computing `l[k]` bits in one frame,
/// γ^c C_k l_k (Σ C l)² / Δ².
pub fn comp_energy_frame(l: &[f64], c: &[f64], gamma_c: f64, dt: f64) -> Vec<f64> {
    let total: f64 = l.iter().zip(c).map(|(l, c)| l * c).sum();
    l.iter()
        .zip(c)
        .map(|(l, c)| gamma_c * c * l * total * total / (dt * dt))
        .collect()
}

/// Energy to send `bits` in a Δ/K slot over a channel with power gain `gain`.
pub fn comm_energy_oma(bits: f64, gain: f64, k: usize, bandwidth: f64, dt: f64, n0: f64) -> f64 {
    let slot_bits = bandwidth * dt / k as f64;
    n0 * slot_bits / gain * pow2m1(bits / slot_bits)
}

/// 2^x − 1 without cancellation for small x.
pub fn pow2m1(x: f64) -> f64 {
    (x * std::f64::consts::LN_2).exp_m1()
}

/// Per-user energies when all users share the whole frame with
/// interference treated as noise.
///
/// Uplink: E_k = (N0BΔ + Σ_{k'≠k} g_{k'}E_{k'})·c_k/g_k.
/// Downlink: E_k = (N0BΔ/g_k + Σ_{k'≠k} E_{k'})·c_k.
/// Both are linear systems (I − diag(c)(11ᵀ − I))x = r in the received
/// (uplink) or transmitted (downlink) energies, solved exactly through the
/// rank-one structure.
pub fn comm_energy_noma(
    bits: &[f64],
    gains: &[f64],
    bandwidth: f64,
    dt: f64,
    n0: f64,
    link: Link,
) -> Result<Vec<f64>, EnergyError> {
    let noise = n0 * bandwidth * dt;
    let c: Vec<f64> = bits.iter().map(|&l| pow2m1(l / (bandwidth * dt))).collect();
    let r: Vec<f64> = match link {
        Link::Uplink => c.iter().map(|ck| ck * noise).collect(),
        Link::Downlink => c.iter().zip(gains).map(|(ck, g)| ck * noise / g).collect(),
    };
    let x = solve_interference(&c, &r).ok_or(EnergyError::InterferenceInfeasible { link, frame: 0 })?;
    Ok(match link {
        Link::Uplink => x.iter().zip(gains).map(|(xk, g)| xk / g).collect(),
        Link::Downlink => x,
    })
}

/// Solves x_k = r_k + c_k Σ_{k'≠k} x_{k'} for x ≥ 0.
fn solve_interference(c: &[f64], r: &[f64]) -> Option<Vec<f64>> {
    // x_k (1 + c_k) = r_k + c_k S with S = Σ x.
    let load: f64 = c.iter().map(|ck| ck / (1.0 + ck)).sum();
    let denom = 1.0 - load;
    if !(denom > 0.0) {
        return None;
    }
    let s = c.iter().zip(r).map(|(ck, rk)| rk / (1.0 + ck)).sum::<f64>() / denom;
    let x: Vec<f64> = c.iter().zip(r).map(|(ck, rk)| (rk + ck * s) / (1.0 + ck)).collect();
    if x.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return None;
    }
    let total: f64 = x.iter().sum();
    for k in 0..x.len() {
        let resid = x[k] - r[k] - c[k] * (total - x[k]);
        if resid.abs() > 1e-9 * (x[k].abs() + r[k].abs() + c[k] * total).max(f64::MIN_POSITIVE) {
            return None;
        }
    }
    Some(x)
}

pub fn fly_energy_model1(v: [f64; 2], kappa: f64) -> f64 {
    kappa * (v[0] * v[0] + v[1] * v[1])
}

pub fn fly_energy_model2(v: [f64; 2], a: [f64; 2], k1: f64, k2: f64, g: f64) -> Result<f64, EnergyError> {
    let speed = v[0].hypot(v[1]);
    if speed < ZERO_SPEED {
        return Err(EnergyError::ZeroSpeed { frame: 0 });
    }
    let a2 = a[0] * a[0] + a[1] * a[1];
    Ok(k1 * speed.powi(3) + k2 / speed * (1.0 + a2 / (g * g)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobileExecution {
    pub total: f64,
    pub per_user: Vec<f64>,
    /// CPU frequency each user needs to finish by the deadline.
    pub frequencies: Vec<f64>,
}

/// Energy for every user to process its input locally within `deadline`.
pub fn mobile_execution_energy(users: &[MobileUser], deadline: f64) -> MobileExecution {
    let per_user: Vec<f64> = users
        .iter()
        .map(|u| u.capacitance * (u.cycles_per_bit * u.input_bits).powi(3) / (deadline * deadline))
        .collect();
    MobileExecution {
        total: per_user.iter().sum(),
        frequencies: users.iter().map(|u| u.cycles_per_bit * u.input_bits / deadline).collect(),
        per_user,
    }
}

/// Exact per-frame breakdown of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    /// Σ of the users' uplink transmit energies.
    pub mobile_total: f64,
    pub uplink: Vec<f64>,
    pub compute: Vec<f64>,
    pub downlink: Vec<f64>,
    pub fly: Vec<f64>,
    /// Per-user uplink energy summed over frames.
    pub mobile_per_user: Vec<f64>,
    pub uav_total: f64,
    pub budget_slack: f64,
}

impl EnergyLedger {
    pub fn fly_total(&self) -> f64 {
        self.fly.iter().sum()
    }

    pub fn within_budget(&self) -> bool {
        self.budget_slack >= 0.0
    }
}

/// Uplink transmit energies E[k] for frame n.
pub fn uplink_energies(s: &Scenario, bits: &[f64], p: [f64; 2], frame: usize) -> Result<Vec<f64>, EnergyError> {
    link_energies(s, bits, p, frame, Link::Uplink)
}

pub fn downlink_energies(s: &Scenario, bits: &[f64], p: [f64; 2], frame: usize) -> Result<Vec<f64>, EnergyError> {
    link_energies(s, bits, p, frame, Link::Downlink)
}

fn link_energies(s: &Scenario, bits: &[f64], p: [f64; 2], frame: usize, link: Link) -> Result<Vec<f64>, EnergyError> {
    let r = &s.radio;
    let dt = s.frame_len();
    let gains: Vec<f64> = s.users.iter().map(|u| channel_gain(p, u, s.uav.altitude, r.ref_gain)).collect();
    match s.access {
        Access::Orthogonal => Ok(bits
            .iter()
            .zip(&gains)
            .map(|(&l, &g)| comm_energy_oma(l, g, s.num_users(), r.bandwidth, dt, r.noise_psd))
            .collect()),
        Access::NonOrthogonal => comm_energy_noma(bits, &gains, r.bandwidth, dt, r.noise_psd, link)
            .map_err(|_| EnergyError::InterferenceInfeasible { link, frame }),
    }
}

/// Flying energy of frame n under the scenario's model.
pub fn fly_energy(s: &Scenario, traj: &Trajectory, n: usize) -> Result<f64, EnergyError> {
    let dt = s.frame_len();
    let v = traj.frame_velocity(n, dt);
    match s.flight {
        FlightModel::Model1 => Ok(fly_energy_model1(v, s.uav.kappa)),
        FlightModel::Model2 => {
            let a = traj.frame_acceleration(n);
            fly_energy_model2(v, a, s.uav.kappa1, s.uav.kappa2, s.uav.gravity)
                .map_err(|_| EnergyError::ZeroSpeed { frame: n })
        }
    }
}

/// Evaluates every energy term of a plan with the exact models.
pub fn uav_energy_total(s: &Scenario, bits: &FrameBitAlloc, traj: &Trajectory) -> Result<EnergyLedger, EnergyError> {
    let n_frames = s.frames();
    let k_users = s.num_users();
    let cycles: Vec<f64> = s.users.iter().map(|u| u.cycles_per_bit).collect();
    let mut led = EnergyLedger {
        mobile_total: 0.0,
        uplink: vec![0.0; n_frames],
        compute: vec![0.0; n_frames],
        downlink: vec![0.0; n_frames],
        fly: vec![0.0; n_frames],
        mobile_per_user: vec![0.0; k_users],
        uav_total: 0.0,
        budget_slack: 0.0,
    };
    for n in 0..n_frames {
        let p = traj.positions[n];
        let up = uplink_energies(s, &bits.uplink_frame(n), p, n)?;
        for (k, e) in up.iter().enumerate() {
            led.mobile_per_user[k] += e;
        }
        led.uplink[n] = up.iter().sum();
        led.compute[n] = comp_energy_frame(&bits.compute_frame(n), &cycles, s.uav.capacitance, s.frame_len())
            .iter()
            .sum();
        led.downlink[n] = downlink_energies(s, &bits.downlink_frame(n), p, n)?.iter().sum();
        led.fly[n] = fly_energy(s, traj, n)?;
    }
    led.mobile_total = led.uplink.iter().sum();
    led.uav_total = led.compute.iter().sum::<f64>() + led.downlink.iter().sum::<f64>() + led.fly.iter().sum::<f64>();
    led.budget_slack = s.uav.energy_budget - led.uav_total;
    Ok(led)
}
