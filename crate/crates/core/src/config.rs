//! Scenario configuration file.
//!
//! ```toml
//! [room]
//! length = 5.0
//! width = 5.0
//! height = 3.0
//!
//! [[aps]]
//! position = [1.25, 1.25, 3.0]
//!
//! [users]
//! count = 6
//! seed = 7
//! height = 0.85
//! groups = 2
//!
//! [constants]
//! beam_waist = 10e-6
//! beam_model = "aimed"
//!
//! [demands]
//! min = 0.5
//! max = 2.0
//!
//! [power]
//! total = 1.0
//! ```
//!
//! Every table and key is optional; missing values take the defaults of the
//! reference deployment (5 x 5 x 3 m room, 2 x 2 AP grid, K = 6, G = 2).

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{adr_orientations, grid_access_points, BeamModel, PhysicalConstants, Point3, Scenario};
use crate::error::{Error, Result};
use crate::optimizer::ConstraintSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoomConfig {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for RoomConfig {
    fn default() -> Self {
        Self {
            length: 5.0,
            width: 5.0,
            height: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApConfig {
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UsersConfig {
    pub count: usize,
    pub seed: u64,
    /// Height of the receiving plane, m.
    pub height: f64,
    /// Number of K-means groups; defaults to `max(1, count / 3)`.
    pub groups: Option<usize>,
    /// Fixed horizontal positions; when present they replace random placement.
    pub positions: Option<Vec<[f64; 2]>>,
    /// Fixed demands; when present they replace random demands.
    pub demands: Option<Vec<f64>>,
}

impl Default for UsersConfig {
    fn default() -> Self {
        Self {
            count: 6,
            seed: 1,
            height: 0.85,
            groups: None,
            positions: None,
            demands: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsConfig {
    pub wavelength: f64,
    pub beam_waist: f64,
    pub laser_bandwidth: f64,
    pub responsivity: f64,
    pub nsd: f64,
    pub receiver_area: f64,
    pub fov_deg: f64,
    pub num_photodiodes: usize,
    pub pd_tilt_deg: f64,
    pub beam_model: String,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        let c = PhysicalConstants::default();
        Self {
            wavelength: c.wavelength,
            beam_waist: c.beam_waist,
            laser_bandwidth: c.laser_bandwidth,
            responsivity: c.responsivity,
            nsd: c.nsd,
            receiver_area: c.receiver_area_total,
            fov_deg: c.fov_half_angle.to_degrees(),
            num_photodiodes: c.num_photodiodes,
            pd_tilt_deg: crate::channel::DEFAULT_PD_TILT_DEG,
            beam_model: BeamModel::default().to_string(),
        }
    }
}

impl ConstantsConfig {
    pub fn physical(&self) -> PhysicalConstants {
        PhysicalConstants {
            wavelength: self.wavelength,
            beam_waist: self.beam_waist,
            laser_bandwidth: self.laser_bandwidth,
            responsivity: self.responsivity,
            nsd: self.nsd,
            receiver_area_total: self.receiver_area,
            fov_half_angle: self.fov_deg.to_radians(),
            num_photodiodes: self.num_photodiodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemandsConfig {
    pub min: f64,
    pub max: f64,
}

impl Default for DemandsConfig {
    fn default() -> Self {
        Self { min: 0.5, max: 2.0 }
    }
}

/// Power budget and the caps derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerConfig {
    /// Total optical power budget `P_T`, W.
    pub total: f64,
    /// Fixed outer-common power as a fraction of `P_T`.
    pub outer_common_fraction: f64,
    /// Per-group cap as a fraction of `P_T - P_oc`.
    pub group_cap_fraction: f64,
    /// Per-user private cap is `factor * (P_T - P_oc) / K`.
    pub user_cap_factor: f64,
    /// Explicit minimum sum rate; defaults to the sum of user demands.
    pub r_min: Option<f64>,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            total: 1.0,
            outer_common_fraction: 0.2,
            group_cap_fraction: 0.75,
            user_cap_factor: 2.0,
            r_min: None,
        }
    }
}

impl PowerConfig {
    pub fn constraints(&self, num_groups: usize, demands: &[f64]) -> ConstraintSet {
        let p_t = self.total;
        let p_oc = self.outer_common_fraction * p_t;
        let variable = p_t - p_oc;
        ConstraintSet {
            p_total_cap: p_t,
            p_oc_fixed: p_oc,
            group_caps: vec![self.group_cap_fraction * variable; num_groups],
            user_cap: self.user_cap_factor * variable / demands.len().max(1) as f64,
            r_min: self.r_min.unwrap_or_else(|| demands.iter().sum()),
        }
    }
}

/// The scenario space: everything needed to draw a concrete [`Scenario`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub room: RoomConfig,
    pub aps: Vec<ApConfig>,
    pub users: UsersConfig,
    pub constants: ConstantsConfig,
    pub demands: DemandsConfig,
    pub power: PowerConfig,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn room_extents(&self) -> [f64; 3] {
        [self.room.length, self.room.width, self.room.height]
    }

    pub fn ap_positions(&self) -> Vec<Point3> {
        if self.aps.is_empty() {
            grid_access_points(self.room_extents())
        } else {
            self.aps.iter().map(|a| Vector3::from(a.position)).collect()
        }
    }

    pub fn beam_model(&self) -> Result<BeamModel> {
        self.constants.beam_model.parse()
    }

    pub fn num_groups(&self) -> usize {
        self.users.groups.unwrap_or_else(|| default_groups(self.users.count))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.users.count == 0 {
            return bad("users.count must be >= 1".into());
        }
        let g = self.num_groups();
        if g == 0 || g > self.users.count {
            return bad(format!("users.groups must be in [1, {}], got {g}", self.users.count));
        }
        if !(self.demands.min > 0.0 && self.demands.max >= self.demands.min && self.demands.max.is_finite()) {
            return bad(format!(
                "demands must satisfy 0 < min <= max, got [{}, {}]",
                self.demands.min, self.demands.max
            ));
        }
        let p = &self.power;
        if !(p.total.is_finite() && p.total >= 0.0) {
            return bad(format!("power.total must be >= 0, got {}", p.total));
        }
        for (name, v) in [
            ("power.outer_common_fraction", p.outer_common_fraction),
            ("power.group_cap_fraction", p.group_cap_fraction),
            ("power.user_cap_factor", p.user_cap_factor),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if p.outer_common_fraction > 1.0 {
            return bad("power.outer_common_fraction must be <= 1".into());
        }
        if let Some(pos) = &self.users.positions {
            if pos.len() != self.users.count {
                return bad(format!("users.positions has {} entries, expected {}", pos.len(), self.users.count));
            }
        }
        if let Some(d) = &self.users.demands {
            if d.len() != self.users.count {
                return bad(format!("users.demands has {} entries, expected {}", d.len(), self.users.count));
            }
        }
        if !(self.users.height >= 0.0 && self.users.height < self.room.height) {
            return bad(format!(
                "users.height {} must lie in [0, room.height)",
                self.users.height
            ));
        }
        self.beam_model()?;
        self.constants.physical().validate()?;
        Ok(())
    }

    /// Draw a scenario: users uniform over the floor at the receiver height
    /// and demands uniform in `[demands.min, demands.max]`.
    pub fn realize(&self, seed: u64) -> Result<Scenario> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = self.users.count;
        let h = self.users.height;
        let user_positions: Vec<Point3> = match &self.users.positions {
            Some(p) => p.iter().map(|xy| Point3::new(xy[0], xy[1], h)).collect(),
            None => (0..k)
                .map(|_| {
                    let x = rng.gen::<f64>() * self.room.length;
                    let y = rng.gen::<f64>() * self.room.width;
                    Point3::new(x, y, h)
                })
                .collect(),
        };
        let demands = match &self.users.demands {
            Some(d) => d.clone(),
            None => (0..k)
                .map(|_| self.demands.min + rng.gen::<f64>() * (self.demands.max - self.demands.min))
                .collect(),
        };
        let constants = self.constants.physical();
        let normals = adr_orientations(constants.num_photodiodes, self.constants.pd_tilt_deg.to_radians());
        let scenario = Scenario {
            room: self.room_extents(),
            ap_positions: self.ap_positions(),
            user_positions,
            pd_orientations: vec![normals; k],
            demands,
            constants,
            beam_model: self.beam_model()?,
            rng_seed: seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn constraints_for(&self, scenario: &Scenario) -> ConstraintSet {
        self.power.constraints(self.num_groups(), &scenario.demands)
    }
}

pub fn default_groups(users: usize) -> usize {
    (users / 3).max(1)
}
