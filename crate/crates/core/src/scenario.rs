//! Problem instances: mobile users, radio, UAV, time grid and the
//! access/flight-model selectors.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::units::{Dim, Quantity};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario file: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(
        "deadline {deadline} s too short: covering {distance} m at v_max needs T >= {min_deadline} s"
    )]
    InfeasibleDeadline {
        deadline: f64,
        distance: f64,
        min_deadline: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    #[serde(rename = "oma")]
    Orthogonal,
    #[serde(rename = "noma")]
    NonOrthogonal,
}

impl fmt::Display for Access {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Access::Orthogonal => "oma",
            Access::NonOrthogonal => "noma",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlightModel {
    /// Kinetic energy only, κ‖v‖².
    Model1,
    /// Propulsion model κ₁‖v‖³ + κ₂/‖v‖·(1 + ‖a‖²/g²).
    Model2,
}

impl FlightModel {
    pub fn number(self) -> u8 {
        match self {
            FlightModel::Model1 => 1,
            FlightModel::Model2 => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(FlightModel::Model1),
            2 => Some(FlightModel::Model2),
            _ => None,
        }
    }
}

impl fmt::Display for FlightModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobileUser {
    /// Ground position (x, y, 0) in meters.
    pub position: [f64; 3],
    pub input_bits: f64,
    pub cycles_per_bit: f64,
    pub output_ratio: f64,
    pub capacitance: f64,
}

impl MobileUser {
    pub fn xy(&self) -> [f64; 2] {
        [self.position[0], self.position[1]]
    }

    pub fn output_bits(&self) -> f64 {
        self.output_ratio * self.input_bits
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioParams {
    pub bandwidth: f64,
    /// Noise power spectral density in W/Hz.
    pub noise_psd: f64,
    /// Received power at 1 m for 1 W transmitted.
    pub ref_gain: f64,
}

impl RadioParams {
    /// g0/(N0·B), the SNR at the reference distance.
    pub fn ref_snr(&self) -> f64 {
        self.ref_gain / (self.noise_psd * self.bandwidth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WingType {
    Fixed,
    Rotary,
}

/// Airframe constants from which the propulsion coefficients are derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model2PhysicalParams {
    pub wing: WingType,
    pub air_density: f64,
    /// C_D0 for fixed wing, C_Df for rotary wing.
    pub drag_coeff: f64,
    pub ref_area: f64,
    #[serde(default)]
    pub oswald: f64,
    #[serde(default)]
    pub aspect_ratio: f64,
    #[serde(default)]
    pub rotor_area: f64,
    #[serde(default)]
    pub induced_factor: f64,
    pub mass: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

fn default_gravity() -> f64 {
    9.8
}

impl Model2PhysicalParams {
    /// Table II fixed-wing airframe.
    pub fn fixed_wing_default() -> Self {
        Model2PhysicalParams {
            wing: WingType::Fixed,
            air_density: 1.225,
            drag_coeff: 0.0355,
            ref_area: 3.77,
            oswald: 0.85,
            aspect_ratio: 13.0,
            rotor_area: 0.0,
            induced_factor: 0.0,
            mass: 9.65,
            gravity: 9.8,
        }
    }

    fn validate(&self) -> Result<(), String> {
        let mut checks = vec![
            ("air_density", self.air_density),
            ("drag_coeff", self.drag_coeff),
            ("ref_area", self.ref_area),
            ("mass", self.mass),
            ("gravity", self.gravity),
        ];
        match self.wing {
            WingType::Fixed => {
                checks.push(("oswald", self.oswald));
                checks.push(("aspect_ratio", self.aspect_ratio));
            }
            WingType::Rotary => {
                checks.push(("rotor_area", self.rotor_area));
                checks.push(("induced_factor", self.induced_factor));
            }
        }
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("airframe.{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Propulsion coefficients (κ₁, κ₂) for a frame of length `dt`.
pub fn derive_kappas(p: &Model2PhysicalParams, dt: f64) -> (f64, f64) {
    let m2g2 = p.mass * p.mass * p.gravity * p.gravity;
    let k1 = 0.5 * p.air_density * p.drag_coeff * p.ref_area * dt;
    let k2 = match p.wing {
        WingType::Fixed => {
            2.0 * m2g2 * dt
                / (std::f64::consts::PI * p.oswald * p.aspect_ratio * p.air_density * p.ref_area)
        }
        WingType::Rotary => p.induced_factor * m2g2 * dt / (2.0 * p.air_density * p.rotor_area),
    };
    (k1, k2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UavParams {
    pub altitude: f64,
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub v_max: f64,
    pub a_max: f64,
    pub boundary_speed: f64,
    pub energy_budget: f64,
    pub capacitance: f64,
    pub kappa: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub gravity: f64,
    /// When present, κ, κ₁ and κ₂ are re-derived whenever the frame length changes.
    pub airframe: Option<Model2PhysicalParams>,
}

impl UavParams {
    /// Boundary velocity v^c for Model 2, pointing from start to end. When
    /// start and end coincide the +x direction is used.
    pub fn boundary_velocity(&self) -> [f64; 2] {
        let d = [self.end[0] - self.start[0], self.end[1] - self.start[1]];
        let len = d[0].hypot(d[1]);
        if len > 0.0 {
            [self.boundary_speed * d[0] / len, self.boundary_speed * d[1] / len]
        } else {
            [self.boundary_speed, 0.0]
        }
    }

    pub fn displacement(&self) -> f64 {
        (self.end[0] - self.start[0]).hypot(self.end[1] - self.start[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    deadline: f64,
    frames: usize,
}

impl TimeGrid {
    pub fn new(deadline: f64, frames: usize) -> Result<Self, ScenarioError> {
        if !(deadline > 0.0 && deadline.is_finite()) {
            return Err(ScenarioError::Invalid(format!(
                "grid.deadline_s must be positive, got {deadline}"
            )));
        }
        if frames < 4 {
            return Err(ScenarioError::Invalid(format!(
                "grid.frames must be at least 4 for the uplink/compute/downlink pipeline, got {frames}"
            )));
        }
        Ok(TimeGrid { deadline, frames })
    }

    pub fn deadline(&self) -> f64 {
        self.deadline
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Δ = T/N.
    pub fn frame_len(&self) -> f64 {
        self.deadline / self.frames as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub users: Vec<MobileUser>,
    pub radio: RadioParams,
    pub uav: UavParams,
    pub grid: TimeGrid,
    pub access: Access,
    pub flight: FlightModel,
}

impl Scenario {
    /// Checks every field invariant. Does not check the deadline; see
    /// [`validate_deadline`].
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.users.is_empty() {
            return bad("at least one mobile user is required".into());
        }
        for (k, u) in self.users.iter().enumerate() {
            if u.position[2] != 0.0 {
                return bad(format!("users[{k}].position must lie on the ground (z = 0)"));
            }
            if !u.position.iter().all(|c| c.is_finite()) {
                return bad(format!("users[{k}].position must be finite"));
            }
            if !(u.input_bits >= 0.0 && u.input_bits.is_finite()) {
                return bad(format!("users[{k}].input_bits must be >= 0"));
            }
            if !(u.cycles_per_bit > 0.0 && u.cycles_per_bit.is_finite()) {
                return bad(format!("users[{k}].cycles_per_bit must be > 0"));
            }
            if !(u.output_ratio >= 0.0 && u.output_ratio.is_finite()) {
                return bad(format!("users[{k}].output_ratio must be >= 0"));
            }
            if !(u.capacitance > 0.0 && u.capacitance.is_finite()) {
                return bad(format!("users[{k}].capacitance must be > 0"));
            }
        }
        let r = &self.radio;
        for (name, v) in [
            ("radio.bandwidth_hz", r.bandwidth),
            ("radio.noise_psd", r.noise_psd),
            ("radio.ref_gain", r.ref_gain),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let u = &self.uav;
        for (name, v) in [
            ("uav.altitude_m", u.altitude),
            ("uav.v_max", u.v_max),
            ("uav.a_max", u.a_max),
            ("uav.energy_budget_j", u.energy_budget),
            ("uav.capacitance", u.capacitance),
            ("uav.kappa", u.kappa),
            ("uav.kappa1", u.kappa1),
            ("uav.kappa2", u.kappa2),
            ("uav.gravity", u.gravity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(u.boundary_speed >= 0.0 && u.boundary_speed <= u.v_max) {
            return bad(format!(
                "uav.boundary_speed must lie in [0, v_max], got {}",
                u.boundary_speed
            ));
        }
        if !u.start.iter().chain(u.end.iter()).all(|c| c.is_finite()) {
            return bad("uav.start and uav.end must be finite".into());
        }
        if let Some(a) = &u.airframe {
            a.validate().map_err(ScenarioError::Invalid)?;
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn frames(&self) -> usize {
        self.grid.frames()
    }

    pub fn frame_len(&self) -> f64 {
        self.grid.frame_len()
    }

    pub fn deadline(&self) -> f64 {
        self.grid.deadline()
    }

    /// Same instance on a different time grid. Flight coefficients are
    /// re-derived from the airframe when one is attached.
    pub fn with_grid(&self, grid: TimeGrid) -> Scenario {
        let mut s = self.clone();
        s.grid = grid;
        if let Some(a) = &self.uav.airframe {
            let dt = grid.frame_len();
            let (k1, k2) = derive_kappas(a, dt);
            s.uav.kappa = 0.5 * a.mass * dt;
            s.uav.kappa1 = k1;
            s.uav.kappa2 = k2;
            s.uav.gravity = a.gravity;
        }
        s
    }

    /// Same instance with the users moved to `positions`.
    pub fn with_user_positions(&self, positions: &[[f64; 2]]) -> Scenario {
        let mut s = self.clone();
        for (u, p) in s.users.iter_mut().zip(positions) {
            u.position = [p[0], p[1], 0.0];
        }
        s
    }
}

/// Rejects scenarios whose deadline cannot cover the start-to-end distance
/// at v_max.
pub fn validate_deadline(s: &Scenario) -> Result<(), ScenarioError> {
    let distance = s.uav.displacement();
    let deadline = s.deadline();
    if distance / deadline <= s.uav.v_max {
        Ok(())
    } else {
        Err(ScenarioError::InfeasibleDeadline {
            deadline,
            distance,
            min_deadline: distance / s.uav.v_max,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScenarioFile {
    #[serde(default = "default_access")]
    access: Access,
    #[serde(default = "default_model")]
    flight_model: u8,
    grid: GridFile,
    radio: RadioFile,
    uav: UavFile,
    #[serde(skip_serializing_if = "Option::is_none")]
    airframe: Option<Model2PhysicalParams>,
    users: Vec<UserFile>,
}

fn default_access() -> Access {
    Access::Orthogonal
}

fn default_model() -> u8 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridFile {
    deadline_s: Quantity,
    frames: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RadioFile {
    bandwidth_hz: Quantity,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_psd_dbm_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_psd_w_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ref_snr_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ref_gain: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct UavFile {
    altitude_m: Quantity,
    start: [f64; 2],
    end: [f64; 2],
    v_max: f64,
    a_max: f64,
    boundary_speed: f64,
    energy_budget_j: Quantity,
    capacitance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gravity: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct UserFile {
    position: Vec<f64>,
    input_bits: Quantity,
    cycles_per_bit: f64,
    output_ratio: f64,
    capacitance: f64,
}

fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario, ScenarioError> {
        let inv = ScenarioError::Invalid;
        let flight = FlightModel::from_number(self.flight_model)
            .ok_or_else(|| inv(format!("flight_model must be 1 or 2, got {}", self.flight_model)))?;
        let deadline = self.grid.deadline_s.to_si(Dim::Seconds, "grid.deadline_s").map_err(inv)?;
        let grid = TimeGrid::new(deadline, self.grid.frames)?;
        let dt = grid.frame_len();

        let bandwidth = self.radio.bandwidth_hz.to_si(Dim::Hertz, "radio.bandwidth_hz").map_err(inv)?;
        let noise_psd = match (self.radio.noise_psd_w_hz, self.radio.noise_psd_dbm_hz) {
            (Some(w), _) => w,
            (None, Some(dbm)) => dbm_to_watts(dbm),
            (None, None) => {
                return Err(inv("radio needs noise_psd_dbm_hz or noise_psd_w_hz".into()))
            }
        };
        let ref_gain = match (self.radio.ref_snr_db, self.radio.ref_gain) {
            (Some(db), _) => 10f64.powf(db / 10.0) * noise_psd * bandwidth,
            (None, Some(g)) => g,
            (None, None) => return Err(inv("radio needs ref_snr_db or ref_gain".into())),
        };

        let u = self.uav;
        let airframe = self.airframe;
        let derived = airframe.as_ref().map(|a| {
            let (k1, k2) = derive_kappas(a, dt);
            (0.5 * a.mass * dt, k1, k2, a.gravity)
        });
        let pick = |given: Option<f64>, from: Option<f64>, name: &str| {
            given
                .or(from)
                .ok_or_else(|| inv(format!("uav.{name} missing and no [airframe] to derive it from")))
        };
        let kappa = pick(u.kappa, derived.map(|d| d.0), "kappa")?;
        let kappa1 = pick(u.kappa1, derived.map(|d| d.1), "kappa1")?;
        let kappa2 = pick(u.kappa2, derived.map(|d| d.2), "kappa2")?;
        let gravity = u.gravity.or(derived.map(|d| d.3)).unwrap_or(9.8);
        // Explicit coefficients take precedence; drop the airframe so a later
        // re-grid does not silently replace them.
        let keep_airframe = u.kappa.is_none() && u.kappa1.is_none() && u.kappa2.is_none();

        let uav = UavParams {
            altitude: u.altitude_m.to_si(Dim::Meters, "uav.altitude_m").map_err(inv)?,
            start: u.start,
            end: u.end,
            v_max: u.v_max,
            a_max: u.a_max,
            boundary_speed: u.boundary_speed,
            energy_budget: u.energy_budget_j.to_si(Dim::Joules, "uav.energy_budget_j").map_err(inv)?,
            capacitance: u.capacitance,
            kappa,
            kappa1,
            kappa2,
            gravity,
            airframe: if keep_airframe { airframe } else { None },
        };

        let mut users = Vec::with_capacity(self.users.len());
        for (k, f) in self.users.into_iter().enumerate() {
            let position = match f.position.as_slice() {
                [x, y] => [*x, *y, 0.0],
                [x, y, z] => [*x, *y, *z],
                _ => return Err(inv(format!("users[{k}].position needs 2 or 3 coordinates"))),
            };
            users.push(MobileUser {
                position,
                input_bits: f.input_bits.to_si(Dim::Bits, &format!("users[{k}].input_bits")).map_err(inv)?,
                cycles_per_bit: f.cycles_per_bit,
                output_ratio: f.output_ratio,
                capacitance: f.capacitance,
            });
        }

        let s = Scenario {
            users,
            radio: RadioParams { bandwidth, noise_psd, ref_gain },
            uav,
            grid,
            access: self.access,
            flight,
        };
        s.validate()?;
        validate_deadline(&s)?;
        Ok(s)
    }

    fn from_scenario(s: &Scenario) -> ScenarioFile {
        let u = &s.uav;
        let derived = u.airframe.is_some();
        ScenarioFile {
            access: s.access,
            flight_model: s.flight.number(),
            grid: GridFile {
                deadline_s: s.deadline().into(),
                frames: s.frames(),
            },
            radio: RadioFile {
                bandwidth_hz: s.radio.bandwidth.into(),
                noise_psd_dbm_hz: None,
                noise_psd_w_hz: Some(s.radio.noise_psd),
                ref_snr_db: None,
                ref_gain: Some(s.radio.ref_gain),
            },
            uav: UavFile {
                altitude_m: u.altitude.into(),
                start: u.start,
                end: u.end,
                v_max: u.v_max,
                a_max: u.a_max,
                boundary_speed: u.boundary_speed,
                energy_budget_j: u.energy_budget.into(),
                capacitance: u.capacitance,
                kappa: (!derived).then_some(u.kappa),
                kappa1: (!derived).then_some(u.kappa1),
                kappa2: (!derived).then_some(u.kappa2),
                gravity: (!derived).then_some(u.gravity),
            },
            airframe: u.airframe.clone(),
            users: s
                .users
                .iter()
                .map(|m| UserFile {
                    position: m.position.to_vec(),
                    input_bits: m.input_bits.into(),
                    cycles_per_bit: m.cycles_per_bit,
                    output_ratio: m.output_ratio,
                    capacitance: m.capacitance,
                })
                .collect(),
        }
    }
}

/// Parses a scenario from TOML text.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    file.into_scenario()
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

/// Serializes a scenario to TOML in SI units.
pub fn scenario_to_toml(s: &Scenario) -> String {
    toml::to_string(&ScenarioFile::from_scenario(s)).expect("scenario serializes")
}

pub fn save_scenario(s: &Scenario, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, scenario_to_toml(s))
}

/// Table II parameters around a caller-chosen set of users and time grid.
pub struct TableTwo;

impl TableTwo {
    pub const BANDWIDTH: f64 = 40e6;
    pub const NOISE_DBM_HZ: f64 = -174.0;
    pub const CAPACITANCE: f64 = 1e-28;
    pub const OUTPUT_RATIO: f64 = 0.5;
    pub const CYCLES_PER_BIT: f64 = 1550.7;
    pub const ALTITUDE: f64 = 5.0;
    pub const BUDGET: f64 = 500e3;
    pub const V_MAX: f64 = 50.0;
    pub const A_MAX: f64 = 30.0;
    pub const KAPPA: f64 = 0.2171;

    /// Builds a validated scenario with Table II constants.
    #[allow(clippy::too_many_arguments)]
    pub fn scenario(
        positions: &[[f64; 2]],
        input_bits: &[f64],
        deadline: f64,
        frames: usize,
        ref_snr_db: f64,
        start: [f64; 2],
        end: [f64; 2],
        boundary_speed: f64,
        access: Access,
        flight: FlightModel,
    ) -> Result<Scenario, ScenarioError> {
        let noise_psd = dbm_to_watts(Self::NOISE_DBM_HZ);
        let grid = TimeGrid::new(deadline, frames)?;
        let airframe = Model2PhysicalParams::fixed_wing_default();
        let (kappa1, kappa2) = derive_kappas(&airframe, grid.frame_len());
        let s = Scenario {
            users: positions
                .iter()
                .zip(input_bits)
                .map(|(p, &i)| MobileUser {
                    position: [p[0], p[1], 0.0],
                    input_bits: i,
                    cycles_per_bit: Self::CYCLES_PER_BIT,
                    output_ratio: Self::OUTPUT_RATIO,
                    capacitance: Self::CAPACITANCE,
                })
                .collect(),
            radio: RadioParams {
                bandwidth: Self::BANDWIDTH,
                noise_psd,
                ref_gain: 10f64.powf(ref_snr_db / 10.0) * noise_psd * Self::BANDWIDTH,
            },
            uav: UavParams {
                altitude: Self::ALTITUDE,
                start,
                end,
                v_max: Self::V_MAX,
                a_max: Self::A_MAX,
                boundary_speed,
                energy_budget: Self::BUDGET,
                capacitance: Self::CAPACITANCE,
                kappa: Self::KAPPA,
                kappa1,
                kappa2,
                gravity: airframe.gravity,
                airframe: None,
            },
            grid,
            access,
            flight,
        };
        s.validate()?;
        validate_deadline(&s)?;
        Ok(s)
    }

    /// The three-user scenario used for the trajectory figure.
    pub fn fig3(access: Access, flight: FlightModel) -> Scenario {
        Self::scenario(
            &[[0.0, 10.0], [10.0, 10.0], [10.0, 0.0]],
            &[4e6, 6e6, 2e6],
            2.25,
            50,
            -5.0,
            [0.0, 0.0],
            [5.0, 0.0],
            2.22,
            access,
            flight,
        )
        .expect("fixed scenario is valid")
    }

    /// The two-user scenario used for the deadline sweep, with the users at
    /// the given positions.
    pub fn fig5(positions: [[f64; 2]; 2], access: Access) -> Scenario {
        Self::scenario(
            &positions,
            &[8e6, 8e6],
            2.7,
            60,
            -2.5,
            [0.0, 0.0],
            [0.0, 8.0],
            2.22,
            access,
            FlightModel::Model1,
        )
        .expect("fixed scenario is valid")
    }
}
