//! Decision variables of one plan: per-frame bit allocations, the UAV
//! trajectory and the auxiliary slacks used by the convex reformulations.
//!
//! Frames are 0-based here. With N frames, uplink bits live in frames
//! `0..=N-3`, computed bits in `1..=N-2` and downlink bits in `2..=N-1`;
//! positions are indexed `0..=N`.

use crate::scenario::{FlightModel, Scenario};

/// Inclusive frame range of each pipeline stage.
pub fn uplink_window(frames: usize) -> std::ops::RangeInclusive<usize> {
    0..=frames - 3
}

pub fn compute_window(frames: usize) -> std::ops::RangeInclusive<usize> {
    1..=frames - 2
}

pub fn downlink_window(frames: usize) -> std::ops::RangeInclusive<usize> {
    2..=frames - 1
}

/// Bits per user and frame, indexed `[k][n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBitAlloc {
    pub uplink: Vec<Vec<f64>>,
    pub compute: Vec<Vec<f64>>,
    pub downlink: Vec<Vec<f64>>,
}

impl FrameBitAlloc {
    pub fn zeros(users: usize, frames: usize) -> Self {
        let z = vec![vec![0.0; frames]; users];
        FrameBitAlloc { uplink: z.clone(), compute: z.clone(), downlink: z }
    }

    /// Every stage spreads its total evenly over its window.
    pub fn equal_split(s: &Scenario) -> Self {
        let n = s.frames();
        let mut b = Self::zeros(s.num_users(), n);
        let slots = (n - 2) as f64;
        for (k, u) in s.users.iter().enumerate() {
            for j in uplink_window(n) {
                b.uplink[k][j] = u.input_bits / slots;
                b.compute[k][j + 1] = u.input_bits / slots;
                b.downlink[k][j + 2] = u.output_bits() / slots;
            }
        }
        b
    }

    pub fn users(&self) -> usize {
        self.uplink.len()
    }

    pub fn frames(&self) -> usize {
        self.uplink.first().map_or(0, Vec::len)
    }

    /// Column n of the compute matrix.
    pub fn compute_frame(&self, n: usize) -> Vec<f64> {
        self.compute.iter().map(|r| r[n]).collect()
    }

    pub fn uplink_frame(&self, n: usize) -> Vec<f64> {
        self.uplink.iter().map(|r| r[n]).collect()
    }

    pub fn downlink_frame(&self, n: usize) -> Vec<f64> {
        self.downlink.iter().map(|r| r[n]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// N+1 waypoints, first and last fixed to the start and end positions.
    pub positions: Vec<[f64; 2]>,
    /// N+1 velocities (Model 2 only; empty for Model 1).
    pub velocities: Vec<[f64; 2]>,
    /// N accelerations (Model 2 only; empty for Model 1).
    pub accelerations: Vec<[f64; 2]>,
}

impl Trajectory {
    /// Constant-velocity straight line from start to end.
    pub fn straight_line(s: &Scenario) -> Self {
        let n = s.frames();
        let (a, b) = (s.uav.start, s.uav.end);
        let positions = (0..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
            })
            .collect();
        Trajectory { positions, velocities: Vec::new(), accelerations: Vec::new() }
    }

    /// Model 2 profile along the straight line: ramp linearly from the
    /// boundary velocity to a constant cruise velocity, hold it, and ramp back
    /// at the end. The ramp spans the fewest frames that keep the
    /// acceleration within its limit; the cruise speed is chosen so the path
    /// ends exactly at the end point.
    pub fn cruise(s: &Scenario) -> Self {
        let n = s.frames();
        let dt = s.frame_len();
        let d = [s.uav.end[0] - s.uav.start[0], s.uav.end[1] - s.uav.start[1]];
        let len = d[0].hypot(d[1]);
        let dir = if len > 0.0 { [d[0] / len, d[1] / len] } else { [1.0, 0.0] };
        let vb = s.uav.boundary_speed;
        let speeds = |u: f64, ramp: usize| -> Vec<f64> {
            (0..=n)
                .map(|i| {
                    let edge = i.min(n - i);
                    if edge >= ramp {
                        u
                    } else {
                        vb + (u - vb) * edge as f64 / ramp as f64
                    }
                })
                .collect()
        };
        let travel = |v: &[f64]| v.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum::<f64>();
        let mut chosen = None;
        for ramp in 1..=n / 2 {
            // Travel is affine in the cruise speed.
            let t0 = travel(&speeds(0.0, ramp));
            let t1 = travel(&speeds(1.0, ramp));
            let u = (len - t0) / (t1 - t0);
            let fits = (u - vb).abs() / (ramp as f64 * dt) <= s.uav.a_max;
            if fits || chosen.is_none() {
                chosen = Some(speeds(u, ramp));
            }
            if fits {
                break;
            }
        }
        let v = chosen.expect("at least two frames");
        let velocities: Vec<[f64; 2]> = v.iter().map(|&x| [x * dir[0], x * dir[1]]).collect();
        let accelerations: Vec<[f64; 2]> =
            v.windows(2).map(|w| [(w[1] - w[0]) / dt * dir[0], (w[1] - w[0]) / dt * dir[1]]).collect();
        let mut positions = Vec::with_capacity(n + 1);
        let mut p = s.uav.start;
        positions.push(p);
        for i in 0..n {
            let (v, a) = (velocities[i], accelerations[i]);
            p = [
                p[0] + v[0] * dt + 0.5 * a[0] * dt * dt,
                p[1] + v[1] * dt + 0.5 * a[1] * dt * dt,
            ];
            positions.push(p);
        }
        // Remove the rounding drift so the endpoint constraint holds exactly.
        positions[n] = s.uav.end;
        Trajectory { positions, velocities, accelerations }
    }

    pub fn frames(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn has_dynamics(&self) -> bool {
        !self.velocities.is_empty()
    }

    /// Velocity during frame n: the stored state for Model 2, the
    /// finite difference of positions otherwise.
    pub fn frame_velocity(&self, n: usize, dt: f64) -> [f64; 2] {
        if self.has_dynamics() {
            self.velocities[n]
        } else {
            let (a, b) = (self.positions[n], self.positions[n + 1]);
            [(b[0] - a[0]) / dt, (b[1] - a[1]) / dt]
        }
    }

    pub fn frame_acceleration(&self, n: usize) -> [f64; 2] {
        if self.has_dynamics() {
            self.accelerations[n]
        } else {
            [0.0; 2]
        }
    }
}

/// One complete iterate of the planner.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanVariables {
    pub bits: FrameBitAlloc,
    pub trajectory: Trajectory,
    /// NOMA uplink slacks α[k][n] (received energies); empty for OMA.
    pub alpha: Vec<Vec<f64>>,
    /// NOMA downlink slacks β[k][n] (transmit energies); empty for OMA.
    pub beta: Vec<Vec<f64>>,
    /// Model 2 speed slacks τ[n]; empty for Model 1.
    pub speed_slack: Vec<f64>,
}

/// Reference to one scalar of a [`PlanVariables`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    Uplink { k: usize, n: usize },
    Compute { k: usize, n: usize },
    Downlink { k: usize, n: usize },
    Pos { n: usize, axis: usize },
    Vel { n: usize, axis: usize },
    Acc { n: usize, axis: usize },
    SpeedSlack { n: usize },
    Alpha { k: usize, n: usize },
    Beta { k: usize, n: usize },
}

impl PlanVariables {
    /// Plan with the given bits and trajectory and no slacks populated.
    pub fn new(bits: FrameBitAlloc, trajectory: Trajectory) -> Self {
        PlanVariables {
            bits,
            trajectory,
            alpha: Vec::new(),
            beta: Vec::new(),
            speed_slack: Vec::new(),
        }
    }

    pub fn get(&self, v: Var) -> f64 {
        match v {
            Var::Uplink { k, n } => self.bits.uplink[k][n],
            Var::Compute { k, n } => self.bits.compute[k][n],
            Var::Downlink { k, n } => self.bits.downlink[k][n],
            Var::Pos { n, axis } => self.trajectory.positions[n][axis],
            Var::Vel { n, axis } => self.trajectory.velocities[n][axis],
            Var::Acc { n, axis } => self.trajectory.accelerations[n][axis],
            Var::SpeedSlack { n } => self.speed_slack[n],
            Var::Alpha { k, n } => self.alpha[k][n],
            Var::Beta { k, n } => self.beta[k][n],
        }
    }

    pub fn set(&mut self, v: Var, value: f64) {
        let slot = match v {
            Var::Uplink { k, n } => &mut self.bits.uplink[k][n],
            Var::Compute { k, n } => &mut self.bits.compute[k][n],
            Var::Downlink { k, n } => &mut self.bits.downlink[k][n],
            Var::Pos { n, axis } => &mut self.trajectory.positions[n][axis],
            Var::Vel { n, axis } => &mut self.trajectory.velocities[n][axis],
            Var::Acc { n, axis } => &mut self.trajectory.accelerations[n][axis],
            Var::SpeedSlack { n } => &mut self.speed_slack[n],
            Var::Alpha { k, n } => &mut self.alpha[k][n],
            Var::Beta { k, n } => &mut self.beta[k][n],
        };
        *slot = value;
    }

    /// Every variable present in this plan, in a fixed order.
    pub fn vars(&self) -> Vec<Var> {
        let k_count = self.bits.users();
        let n = self.bits.frames();
        let mut out = Vec::new();
        for k in 0..k_count {
            for i in 0..n {
                out.push(Var::Uplink { k, n: i });
                out.push(Var::Compute { k, n: i });
                out.push(Var::Downlink { k, n: i });
            }
        }
        for i in 0..=n {
            for axis in 0..2 {
                out.push(Var::Pos { n: i, axis });
            }
        }
        if self.trajectory.has_dynamics() {
            for i in 0..=n {
                for axis in 0..2 {
                    out.push(Var::Vel { n: i, axis });
                }
            }
            for i in 0..n {
                for axis in 0..2 {
                    out.push(Var::Acc { n: i, axis });
                }
            }
        }
        for i in 0..self.speed_slack.len() {
            out.push(Var::SpeedSlack { n: i });
        }
        for k in 0..self.alpha.len() {
            for i in 0..n {
                out.push(Var::Alpha { k, n: i });
            }
        }
        for k in 0..self.beta.len() {
            for i in 0..n {
                out.push(Var::Beta { k, n: i });
            }
        }
        out
    }

    /// z + γ(ẑ − z), applied to every variable.
    pub fn step_toward(&self, target: &PlanVariables, gamma: f64) -> PlanVariables {
        let mut out = self.clone();
        for v in self.vars() {
            let a = self.get(v);
            out.set(v, a + gamma * (target.get(v) - a));
        }
        out
    }

    /// ‖a − b‖∞ in scaled units.
    pub fn scaled_distance(&self, other: &PlanVariables, units: &Units) -> f64 {
        self.vars()
            .into_iter()
            .map(|v| (self.get(v) - other.get(v)).abs() / units.scale(v))
            .fold(0.0, f64::max)
    }
}

/// Natural scale of each variable family, used to normalize the convex
/// programs and the stationarity test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Units {
    /// B·Δ bits.
    pub bits: f64,
    /// Altitude H in meters.
    pub length: f64,
    pub speed: f64,
    pub accel: f64,
    /// N0·B·Δ, the unit of received energy (α).
    pub noise: f64,
    /// N0·B·Δ·H²/g0, the transmit energy that delivers one noise unit
    /// from directly overhead (β and objective unit).
    pub energy: f64,
}

impl Units {
    pub fn of(s: &Scenario) -> Self {
        let dt = s.frame_len();
        let noise = s.radio.noise_psd * s.radio.bandwidth * dt;
        let h = s.uav.altitude;
        Units {
            bits: s.radio.bandwidth * dt,
            length: h,
            speed: s.uav.v_max,
            accel: s.uav.a_max,
            noise,
            energy: noise * h * h / s.radio.ref_gain,
        }
    }

    pub fn scale(&self, v: Var) -> f64 {
        match v {
            Var::Uplink { .. } | Var::Compute { .. } | Var::Downlink { .. } => self.bits,
            Var::Pos { .. } => self.length,
            Var::Vel { .. } | Var::SpeedSlack { .. } => self.speed,
            Var::Acc { .. } => self.accel,
            Var::Alpha { .. } => self.noise,
            Var::Beta { .. } => self.energy,
        }
    }
}


/// Default no-optimization trajectory for the scenario's flight model.
pub fn reference_trajectory(s: &Scenario) -> Trajectory {
    match s.flight {
        FlightModel::Model1 => Trajectory::straight_line(s),
        FlightModel::Model2 => Trajectory::cruise(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Access, TableTwo};
    use approx::assert_relative_eq;

    #[test]
    fn equal_split_respects_windows_and_totals() {
        let s = TableTwo::fig3(Access::Orthogonal, FlightModel::Model1);
        let b = FrameBitAlloc::equal_split(&s);
        let n = s.frames();
        for (k, u) in s.users.iter().enumerate() {
            assert_eq!(b.uplink[k][n - 2], 0.0);
            assert_eq!(b.uplink[k][n - 1], 0.0);
            assert_eq!(b.compute[k][0], 0.0);
            assert_eq!(b.compute[k][n - 1], 0.0);
            assert_eq!(b.downlink[k][0], 0.0);
            assert_eq!(b.downlink[k][1], 0.0);
            assert_relative_eq!(b.uplink[k].iter().sum::<f64>(), u.input_bits, max_relative = 1e-12);
            assert_relative_eq!(b.compute[k].iter().sum::<f64>(), u.input_bits, max_relative = 1e-12);
            assert_relative_eq!(
                b.downlink[k].iter().sum::<f64>(),
                u.output_bits(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn straight_line_matches_formula() {
        let s = TableTwo::fig3(Access::Orthogonal, FlightModel::Model1);
        let t = Trajectory::straight_line(&s);
        assert_eq!(t.positions.len(), 51);
        assert_eq!(t.positions[0], [0.0, 0.0]);
        assert_relative_eq!(t.positions[50][0], 5.0);
        // x_n = x_I + (n-1)(x_F - x_I)/N with 1-based n
        assert_relative_eq!(t.positions[10][0], 10.0 * 5.0 / 50.0);
        let v = t.frame_velocity(3, s.frame_len());
        assert_relative_eq!(v[0], 5.0 / 2.25, max_relative = 1e-12);
    }

    #[test]
    fn cruise_profile_satisfies_kinematics() {
        let s = TableTwo::fig3(Access::Orthogonal, FlightModel::Model2);
        let t = Trajectory::cruise(&s);
        let dt = s.frame_len();
        let vc = s.uav.boundary_velocity();
        assert_eq!(t.velocities[0], vc);
        assert_eq!(t.velocities[50], vc);
        for n in 0..50 {
            for ax in 0..2 {
                let v_next = t.velocities[n][ax] + t.accelerations[n][ax] * dt;
                assert_relative_eq!(v_next, t.velocities[n + 1][ax], epsilon = 1e-12);
                let p_next = t.positions[n][ax]
                    + t.velocities[n][ax] * dt
                    + 0.5 * t.accelerations[n][ax] * dt * dt;
                assert_relative_eq!(p_next, t.positions[n + 1][ax], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cruise_reduces_to_constant_velocity() {
        let mut s = TableTwo::fig3(Access::Orthogonal, FlightModel::Model2);
        s.uav.boundary_speed = 5.0 / 2.25;
        let t = Trajectory::cruise(&s);
        let line = Trajectory::straight_line(&s);
        for (a, b) in t.positions.iter().zip(&line.positions) {
            assert_relative_eq!(a[0], b[0], epsilon = 1e-12);
        }
        assert!(t.accelerations.iter().all(|a| a[0].abs() < 1e-9 && a[1].abs() < 1e-9));
    }

    #[test]
    fn cruise_ramps_over_several_frames_when_needed() {
        let s = TableTwo::scenario(
            &[[1.0, 1.0]],
            &[1e6],
            2.0,
            20,
            -5.0,
            [0.0, 0.0],
            [10.0, 10.0],
            2.22,
            Access::Orthogonal,
            FlightModel::Model2,
        )
        .unwrap();
        let t = Trajectory::cruise(&s);
        let dt = s.frame_len();
        // A one-frame ramp would need about 51 m/s^2.
        assert!(t.accelerations.iter().all(|a| a[0].hypot(a[1]) <= s.uav.a_max * (1.0 + 1e-12)));
        assert_eq!(t.velocities[0], s.uav.boundary_velocity());
        assert_eq!(t.velocities[20], s.uav.boundary_velocity());
        let mut p = s.uav.start;
        for n in 0..20 {
            for ax in 0..2 {
                p[ax] += t.velocities[n][ax] * dt + 0.5 * t.accelerations[n][ax] * dt * dt;
            }
        }
        assert_relative_eq!(p[0], 10.0, epsilon = 1e-9);
        assert_relative_eq!(p[1], 10.0, epsilon = 1e-9);
    }

    #[test]
    fn var_access_and_damped_step() {
        let s = TableTwo::fig3(Access::Orthogonal, FlightModel::Model2);
        let a = PlanVariables::new(FrameBitAlloc::equal_split(&s), Trajectory::cruise(&s));
        let mut b = a.clone();
        b.set(Var::Pos { n: 4, axis: 1 }, 2.0);
        b.set(Var::Uplink { k: 1, n: 0 }, 0.0);
        let mid = a.step_toward(&b, 0.5);
        assert_relative_eq!(mid.get(Var::Pos { n: 4, axis: 1 }), 1.0);
        assert_relative_eq!(mid.get(Var::Uplink { k: 1, n: 0 }), 0.5 * a.bits.uplink[1][0]);
        let u = Units::of(&s);
        let d = a.scaled_distance(&b, &u);
        assert_relative_eq!(d, (a.bits.uplink[1][0] / u.bits).max(2.0 / u.length), max_relative = 1e-12);
        assert_eq!(a.vars().len(), 3 * 3 * 50 + 2 * 51 + 2 * 51 + 2 * 50);
    }
}
