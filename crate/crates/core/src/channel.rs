//! Indoor laser channel: Gaussian-beam propagation from ceiling access points
//! to angle-diversity receivers on the receiving plane.
//!
//! Each access point is a VCSEL cluster modelled as one Gaussian source. The
//! gain of a link is the photocurrent produced per watt of transmitted optical
//! power, so `gains[k][l] * P` is the signal current at user `k` when AP `l`
//! emits `P` watts.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;

/// Optical front-end and receiver parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalConstants {
    /// m
    pub wavelength: f64,
    /// m
    pub beam_waist: f64,
    /// Hz
    pub laser_bandwidth: f64,
    /// A/W
    pub responsivity: f64,
    /// Noise current spectral density, A/sqrt(Hz).
    pub nsd: f64,
    /// Detection area of the whole receiver, m^2.
    pub receiver_area_total: f64,
    /// rad
    pub fov_half_angle: f64,
    pub num_photodiodes: usize,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            wavelength: 850e-9,
            beam_waist: 10e-6,
            laser_bandwidth: 5e9,
            responsivity: 0.4,
            nsd: 4.47e-12,
            receiver_area_total: 15e-6,
            fov_half_angle: 45f64.to_radians(),
            num_photodiodes: 4,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wavelength", self.wavelength),
            ("beam_waist", self.beam_waist),
            ("laser_bandwidth", self.laser_bandwidth),
            ("responsivity", self.responsivity),
            ("nsd", self.nsd),
            ("receiver_area_total", self.receiver_area_total),
            ("fov_half_angle", self.fov_half_angle),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidScenario(format!(
                    "constant {name} must be finite and > 0, got {v}"
                )));
            }
        }
        if self.fov_half_angle > PI / 2.0 {
            return Err(Error::InvalidScenario(format!(
                "fov_half_angle {} exceeds pi/2",
                self.fov_half_angle
            )));
        }
        if self.num_photodiodes == 0 {
            return Err(Error::InvalidScenario("num_photodiodes must be >= 1".into()));
        }
        Ok(())
    }

    /// Area of a single photodiode, `A_rec / M`.
    pub fn pd_area(&self) -> f64 {
        self.receiver_area_total / self.num_photodiodes as f64
    }

    /// Radius of a single (circular) photodiode.
    pub fn pd_radius(&self) -> f64 {
        (self.pd_area() / PI).sqrt()
    }

    pub fn rayleigh_distance(&self) -> f64 {
        PI * self.beam_waist * self.beam_waist / self.wavelength
    }
}

/// How an access point's beam reaches a user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BeamModel {
    /// The cluster element serving the user is aimed at it; the user is on
    /// the beam axis at the slant distance.
    #[default]
    Aimed,
    /// A single beam points straight down; off-axis users sample the
    /// transverse Gaussian profile.
    Downward,
}

impl std::str::FromStr for BeamModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aimed" => Ok(BeamModel::Aimed),
            "downward" => Ok(BeamModel::Downward),
            other => Err(Error::Config(format!(
                "unknown beam model {other:?} (expected \"aimed\" or \"downward\")"
            ))),
        }
    }
}

impl std::fmt::Display for BeamModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BeamModel::Aimed => "aimed",
            BeamModel::Downward => "downward",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Room extents (x, y, z) in metres; the room spans `[0, extent]` per axis.
    pub room: [f64; 3],
    pub ap_positions: Vec<Point3>,
    pub user_positions: Vec<Point3>,
    /// Per user, the outward normals of its `M` photodiodes.
    pub pd_orientations: Vec<Vec<Point3>>,
    /// Required rate per user, bit/s/Hz.
    pub demands: Vec<f64>,
    pub constants: PhysicalConstants,
    pub beam_model: BeamModel,
    pub rng_seed: u64,
}

impl Scenario {
    pub fn num_users(&self) -> usize {
        self.user_positions.len()
    }

    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.room.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return bad(format!("room extents must be > 0, got {:?}", self.room));
        }
        if self.ap_positions.is_empty() {
            return bad("at least one access point is required".into());
        }
        if self.user_positions.is_empty() {
            return bad("at least one user is required".into());
        }
        let inside = |p: &Point3| (0..3).all(|i| p[i].is_finite() && p[i] >= 0.0 && p[i] <= self.room[i]);
        for (l, p) in self.ap_positions.iter().enumerate() {
            if !inside(p) {
                return bad(format!("access point {l} at {:?} lies outside the room", p.as_slice()));
            }
        }
        for (k, p) in self.user_positions.iter().enumerate() {
            if !inside(p) {
                return bad(format!("user {k} at {:?} lies outside the room", p.as_slice()));
            }
        }
        let k = self.num_users();
        if self.pd_orientations.len() != k || self.demands.len() != k {
            return bad(format!(
                "expected {k} orientation sets and demands, got {} and {}",
                self.pd_orientations.len(),
                self.demands.len()
            ));
        }
        for (u, set) in self.pd_orientations.iter().enumerate() {
            if set.len() != self.constants.num_photodiodes {
                return bad(format!(
                    "user {u} has {} photodiodes, expected {}",
                    set.len(),
                    self.constants.num_photodiodes
                ));
            }
            if let Some(n) = set.iter().find(|n| (n.norm() - 1.0).abs() > 1e-9) {
                return bad(format!("user {u} photodiode normal {:?} is not unit-norm", n.as_slice()));
            }
        }
        if let Some((u, d)) = self.demands.iter().enumerate().find(|(_, d)| !(d.is_finite() && **d > 0.0)) {
            return bad(format!("demand of user {u} must be > 0, got {d}"));
        }
        Ok(())
    }
}

/// Default AP layout: a uniform 2x2 grid on the ceiling.
pub fn grid_access_points(room: [f64; 3]) -> Vec<Point3> {
    let (x, y, z) = (room[0], room[1], room[2]);
    vec![
        Point3::new(0.25 * x, 0.25 * y, z),
        Point3::new(0.25 * x, 0.75 * y, z),
        Point3::new(0.75 * x, 0.25 * y, z),
        Point3::new(0.75 * x, 0.75 * y, z),
    ]
}

/// Photodiode normals of an angle-diversity receiver: `m` faces tilted by
/// `tilt` from vertical, at azimuths 45 deg + i * 360/m.
pub fn adr_orientations(m: usize, tilt: f64) -> Vec<Point3> {
    (0..m)
        .map(|i| {
            let az = (45.0 + 360.0 * i as f64 / m as f64).to_radians();
            Point3::new(tilt.sin() * az.cos(), tilt.sin() * az.sin(), tilt.cos())
        })
        .collect()
}

pub const DEFAULT_PD_TILT_DEG: f64 = 35.0;

/// Gain per user and AP for the selected photodiode of each user.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    /// K x L, A/W.
    pub gains: DMatrix<f64>,
    pub selected_pd: Vec<usize>,
    /// A^2
    pub noise_variance: f64,
}

impl ChannelMatrix {
    pub fn new(gains: DMatrix<f64>, noise_variance: f64) -> Self {
        let k = gains.nrows();
        Self {
            gains,
            selected_pd: vec![0; k],
            noise_variance,
        }
    }

    pub fn num_users(&self) -> usize {
        self.gains.nrows()
    }

    pub fn num_aps(&self) -> usize {
        self.gains.ncols()
    }

    /// Squared norm of the user's channel row.
    pub fn row_energy(&self, user: usize) -> f64 {
        self.gains.row(user).norm_squared()
    }

    /// Matched-filter SNR `p * ||h_k||^2 / sigma^2` of each user.
    pub fn single_user_snr(&self, p: f64) -> Vec<f64> {
        (0..self.num_users())
            .map(|k| p * self.row_energy(k) / self.noise_variance)
            .collect()
    }

    /// CSV dump `user,ap,gain` (1-based indices, row-major) with a
    /// `noise_variance=` footer.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("user,ap,gain\n");
        for k in 0..self.num_users() {
            for l in 0..self.num_aps() {
                out.push_str(&format!("{},{},{:.16e}\n", k + 1, l + 1, self.gains[(k, l)]));
            }
        }
        out.push_str(&format!("noise_variance={:.16e}\n", self.noise_variance));
        out
    }
}

pub fn rayleigh_distance(w0: f64, wavelength: f64) -> Result<f64> {
    if !(w0 > 0.0 && wavelength > 0.0) {
        return Err(Error::domain(format!(
            "rayleigh distance needs w0 > 0 and wavelength > 0, got {w0}, {wavelength}"
        )));
    }
    Ok(PI * w0 * w0 / wavelength)
}

/// Beam radius `W_d` at distance `d` from the waist.
pub fn beam_radius(w0: f64, d: f64, d_ra: f64) -> Result<f64> {
    if !(w0 > 0.0 && d_ra > 0.0) {
        return Err(Error::domain(format!("beam radius needs w0, d_ra > 0, got {w0}, {d_ra}")));
    }
    if !(d >= 0.0) {
        return Err(Error::domain(format!("distance must be >= 0, got {d}")));
    }
    let ratio = d / d_ra;
    Ok(w0 * (1.0 + ratio * ratio).sqrt())
}

/// Transverse irradiance (W/m^2) at radial offset `r` of a beam of radius `w_d`.
pub fn intensity(r: f64, p_t: f64, w_d: f64) -> f64 {
    2.0 * p_t / (PI * w_d * w_d) * (-2.0 * r * r / (w_d * w_d)).exp()
}

/// Power collected by a centred circular aperture of radius `r_m`.
pub fn received_power_onaxis(p_t: f64, r_m: f64, w_d: f64) -> f64 {
    // -expm1 keeps precision when r_m << w_d
    -p_t * (-2.0 * r_m * r_m / (w_d * w_d)).exp_m1()
}

/// Receiver noise variance `nsd^2 * B` (A^2).
pub fn noise_variance(constants: &PhysicalConstants) -> f64 {
    constants.nsd * constants.nsd * constants.laser_bandwidth
}

/// Cosine of the incidence angle, or `None` when the AP is outside the
/// photodiode's field of view.
fn incidence_cos(ap: &Point3, user: &Point3, pd_normal: &Point3, fov: f64) -> Option<f64> {
    let dir = (ap - user).normalize();
    let cos_psi = pd_normal.dot(&dir);
    if cos_psi <= 0.0 || cos_psi < fov.cos() {
        None
    } else {
        Some(cos_psi)
    }
}

fn check_above(ap: &Point3, user: &Point3) -> Result<()> {
    if !(ap.z > user.z) {
        return Err(Error::domain(format!(
            "access point at height {} is not above user at height {}",
            ap.z, user.z
        )));
    }
    Ok(())
}

/// Gain of a downward-pointing beam at an off-axis photodiode.
///
/// The irradiance is point-sampled at the photodiode centre and multiplied by
/// the photodiode area and the incidence cosine; inside the aperture radius
/// the exact on-axis capture is used instead.
pub fn channel_gain(ap: &Point3, user: &Point3, pd_normal: &Point3, constants: &PhysicalConstants) -> Result<f64> {
    check_above(ap, user)?;
    let Some(cos_psi) = incidence_cos(ap, user, pd_normal, constants.fov_half_angle) else {
        return Ok(0.0);
    };
    let d_axial = ap.z - user.z;
    let r_offset = ((ap.x - user.x).powi(2) + (ap.y - user.y).powi(2)).sqrt();
    let d_ra = rayleigh_distance(constants.beam_waist, constants.wavelength)?;
    let w_d = beam_radius(constants.beam_waist, d_axial, d_ra)?;
    let r_m = constants.pd_radius();
    let captured = if r_offset < r_m {
        received_power_onaxis(1.0, r_m, w_d)
    } else {
        intensity(r_offset, 1.0, w_d) * constants.pd_area()
    };
    Ok(constants.responsivity * captured * cos_psi)
}

/// Gain when the cluster element serving the user is aimed at it: the
/// on-axis capture at the slant distance, times the incidence cosine.
pub fn aimed_channel_gain(
    ap: &Point3,
    user: &Point3,
    pd_normal: &Point3,
    constants: &PhysicalConstants,
) -> Result<f64> {
    check_above(ap, user)?;
    let Some(cos_psi) = incidence_cos(ap, user, pd_normal, constants.fov_half_angle) else {
        return Ok(0.0);
    };
    let d = (ap - user).norm();
    let d_ra = rayleigh_distance(constants.beam_waist, constants.wavelength)?;
    let w_d = beam_radius(constants.beam_waist, d, d_ra)?;
    Ok(constants.responsivity * received_power_onaxis(1.0, constants.pd_radius(), w_d) * cos_psi)
}

impl BeamModel {
    pub fn gain(self, ap: &Point3, user: &Point3, pd_normal: &Point3, constants: &PhysicalConstants) -> Result<f64> {
        match self {
            BeamModel::Aimed => aimed_channel_gain(ap, user, pd_normal, constants),
            BeamModel::Downward => channel_gain(ap, user, pd_normal, constants),
        }
    }
}

/// Channel matrix of a scenario with select-best photodiode combining.
pub fn build_channel(scenario: &Scenario) -> Result<ChannelMatrix> {
    scenario.validate()?;
    let k_users = scenario.num_users();
    let l_aps = scenario.num_aps();
    let mut gains = DMatrix::zeros(k_users, l_aps);
    let mut selected_pd = Vec::with_capacity(k_users);
    for (k, user) in scenario.user_positions.iter().enumerate() {
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for (m, normal) in scenario.pd_orientations[k].iter().enumerate() {
            let row = scenario
                .ap_positions
                .iter()
                .map(|ap| scenario.beam_model.gain(ap, user, normal, &scenario.constants))
                .collect::<Result<Vec<f64>>>()?;
            let total: f64 = row.iter().sum();
            if best.as_ref().map_or(true, |(_, t, _)| total > *t) {
                best = Some((m, total, row));
            }
        }
        let (m, total, row) = best.expect("num_photodiodes >= 1");
        if !(total > 0.0) {
            return Err(Error::DisconnectedUser(k));
        }
        for (l, g) in row.into_iter().enumerate() {
            gains[(k, l)] = g;
        }
        selected_pd.push(m);
    }
    Ok(ChannelMatrix {
        gains,
        selected_pd,
        noise_variance: noise_variance(&scenario.constants),
    })
}
