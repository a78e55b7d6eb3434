//! TOML scenario files.
//!
//! Angles that people type by hand (steer limit, field of view, heading,
//! steer and bearing noise) are stored in degrees and converted on load.
//! Everything else is SI. An optional `[adaptation]` table carries adapter
//! hyperparameters and, for reproducibility, trained network parameters as
//! flat lists of 27 numbers (10 centers, 10 widths, 7 singletons).

use std::fs;
use std::path::Path;

use anfekf_core::adaptation::AdaptConfig;
use anfekf_core::anfis::PARAMS;
use anfekf_core::models::{Landmark, NoiseSpec, Pose};
use anfekf_core::sim::Scenario;
use serde::{Deserialize, Serialize};

use crate::{AppError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBlock {
    /// m/s
    pub sigma_v: f64,
    /// degrees
    pub sigma_gamma: f64,
    /// m
    pub sigma_r: f64,
    /// degrees
    pub sigma_theta: f64,
}

impl NoiseBlock {
    fn to_spec(&self) -> Result<NoiseSpec> {
        Ok(NoiseSpec::new(
            self.sigma_v,
            self.sigma_gamma.to_radians(),
            self.sigma_r,
            self.sigma_theta.to_radians(),
        )?)
    }

    fn from_spec(n: &NoiseSpec) -> Self {
        Self {
            sigma_v: n.sigma_v,
            sigma_gamma: n.sigma_gamma.to_degrees(),
            sigma_r: n.sigma_r,
            sigma_theta: n.sigma_theta.to_degrees(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBlocks {
    #[serde(rename = "true")]
    pub truth: NoiseBlock,
    pub assumed: NoiseBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialPose {
    pub x: f64,
    pub y: f64,
    pub phi_deg: f64,
}

/// Optional adapter settings; unset fields keep the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptationBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_floor_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_ceiling_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_net_range: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_net_bearing: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_net: Option<Vec<f64>>,
}

fn net_params(name: &str, v: &[f64]) -> Result<[f64; PARAMS]> {
    v.try_into().map_err(|_| {
        AppError::InvalidConfig(format!(
            "{name} must list exactly {PARAMS} numbers, found {}",
            v.len()
        ))
    })
}

impl AdaptationBlock {
    pub fn apply(&self, cfg: &mut AdaptConfig) -> Result<()> {
        macro_rules! take {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { cfg.$f = v; })*};
        }
        take!(
            window,
            learning_rate,
            r_step,
            r_floor,
            q_ratio,
            q_width,
            q_floor_factor,
            q_ceiling_factor
        );
        match (&self.r_net_range, &self.r_net_bearing) {
            (Some(a), Some(b)) => {
                cfg.r_nets = Some([
                    net_params("r_net_range", a)?,
                    net_params("r_net_bearing", b)?,
                ])
            }
            (None, None) => {}
            _ => {
                return Err(AppError::InvalidConfig(
                    "r_net_range and r_net_bearing must be given together".into(),
                ))
            }
        }
        if let Some(q) = &self.q_net {
            cfg.q_net = Some(net_params("q_net", q)?);
        }
        Ok(())
    }
}

/// On-disk form of a [`Scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub seed: u64,
    /// s
    pub duration: f64,
    pub wheelbase: f64,
    pub speed: f64,
    pub gamma_max_deg: f64,
    pub sensor_range: f64,
    pub sensor_fov_deg: f64,
    pub control_rate: f64,
    pub observe_rate: f64,
    pub waypoint_radius: f64,
    pub gate: f64,
    pub initial_variance: f64,
    pub initial_pose: InitialPose,
    pub waypoints: Vec<(f64, f64)>,
    /// `(id, x, y)`
    pub landmarks: Vec<(u32, f64, f64)>,
    pub noise: NoiseBlocks,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptation: Option<AdaptationBlock>,
}

impl ScenarioFile {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: s.seed,
            duration: s.duration,
            wheelbase: s.wheelbase,
            speed: s.speed,
            gamma_max_deg: s.gamma_max.to_degrees(),
            sensor_range: s.sensor_range,
            sensor_fov_deg: s.sensor_fov.to_degrees(),
            control_rate: s.control_rate,
            observe_rate: s.observe_rate,
            waypoint_radius: s.waypoint_radius,
            gate: s.gate,
            initial_variance: s.initial_variance,
            initial_pose: InitialPose {
                x: s.initial_pose.x(),
                y: s.initial_pose.y(),
                phi_deg: s.initial_pose.phi().to_degrees(),
            },
            waypoints: s.waypoints.clone(),
            landmarks: s.landmarks.iter().map(|l| (l.id, l.x, l.y)).collect(),
            noise: NoiseBlocks {
                truth: NoiseBlock::from_spec(&s.true_noise),
                assumed: NoiseBlock::from_spec(&s.assumed_noise),
            },
            adaptation: None,
        }
    }

    /// The built-in experiment, written with the exact decimal values
    /// (3 m/s, 30°, 4 m, 20 m, 180°, 40 Hz, 5 Hz, 0.3 m/s, 3°, 0.1 m, 1°).
    pub fn builtin() -> Self {
        let mut f = Self::from_scenario(&Scenario::builtin());
        f.gamma_max_deg = 30.0;
        f.sensor_fov_deg = 180.0;
        let noise = NoiseBlock {
            sigma_v: 0.3,
            sigma_gamma: 3.0,
            sigma_r: 0.1,
            sigma_theta: 1.0,
        };
        f.noise = NoiseBlocks {
            truth: noise.clone(),
            assumed: noise,
        };
        f
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(AppError::InvalidConfig(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let s = Scenario {
            landmarks: self
                .landmarks
                .iter()
                .map(|(id, x, y)| Landmark::new(*id, *x, *y))
                .collect(),
            waypoints: self.waypoints.clone(),
            initial_pose: Pose::new(
                self.initial_pose.x,
                self.initial_pose.y,
                self.initial_pose.phi_deg.to_radians(),
            ),
            wheelbase: self.wheelbase,
            speed: self.speed,
            gamma_max: self.gamma_max_deg.to_radians(),
            sensor_range: self.sensor_range,
            sensor_fov: self.sensor_fov_deg.to_radians(),
            control_rate: self.control_rate,
            observe_rate: self.observe_rate,
            waypoint_radius: self.waypoint_radius,
            true_noise: self.noise.truth.to_spec()?,
            assumed_noise: self.noise.assumed.to_spec()?,
            duration: self.duration,
            seed: self.seed,
            gate: self.gate,
            initial_variance: self.initial_variance,
        };
        s.validate()?;
        Ok(s)
    }

    /// Library defaults overlaid with this file's `[adaptation]` table.
    pub fn adapt_config(&self) -> Result<AdaptConfig> {
        let mut cfg = AdaptConfig::default();
        if let Some(block) = &self.adaptation {
            block.apply(&mut cfg)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> Result<String> {
        let body = toml::to_string(self).map_err(|e| AppError::InvalidConfig(e.to_string()))?;
        Ok(format!(
            "# anfekf scenario. Units: meters, seconds, m/s, Hz; angles in degrees where the key\n\
             # says _deg and for noise sigma_gamma / sigma_theta. Landmarks are [id, x, y].\n{body}"
        ))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| AppError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|source| AppError::Parse {
            path: path.to_path_buf(),
            source: Box::new(source),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?).map_err(|source| AppError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
