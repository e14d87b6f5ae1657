use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{ChannelInit, ChannelUpdate, FusionAlgorithm, OmegaCost};
use crate::network::Topology;

/// Top-level scenario file. Exactly one of `tracking` or `cl` must be present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracking: Option<TrackingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cl: Option<ClConfig>,
}

/// Monte-Carlo and fusion settings shared by both scenario families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub algo: FusionAlgorithm,
    pub conservative: bool,
    pub runs: usize,
    pub seed: u64,
    /// Probability that a message is lost.
    pub dropout: f64,
    pub steps: usize,
    pub dt: f64,
    pub omega_cost: OmegaCost,
    pub channel_update: ChannelUpdate,
    pub channel_init: ChannelInit,
    /// Communication rounds after each measurement update.
    pub rounds_per_step: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            algo: FusionAlgorithm::HsCf,
            conservative: true,
            runs: 250,
            seed: 1,
            dropout: 0.0,
            steps: 500,
            dt: 0.1,
            omega_cost: OmegaCost::Trace,
            channel_update: ChannelUpdate::OnSend,
            channel_init: ChannelInit::PriorMarginal,
            rounds_per_step: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingRobot {
    pub id: u32,
    /// Targets in the robot's task.
    pub targets: Vec<u32>,
    /// Biases in the robot's task; defaults to the robot's own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub biases: Option<Vec<u32>>,
    /// Targets the robot observes; defaults to `targets`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured_targets: Option<Vec<u32>>,
    /// Relative target measurement noise, 2×2 row-major.
    pub r_target: Vec<f64>,
    /// Landmark measurement noise, 2×2 row-major.
    pub r_landmark: Vec<f64>,
}

impl TrackingRobot {
    pub fn task_biases(&self) -> Vec<u32> {
        self.biases.clone().unwrap_or_else(|| vec![self.id])
    }

    pub fn observed_targets(&self) -> Vec<u32> {
        self.measured_targets.clone().unwrap_or_else(|| self.targets.clone())
    }

    pub fn r_target_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &self.r_target)
    }

    pub fn r_landmark_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &self.r_landmark)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingConfig {
    pub num_targets: u32,
    /// Diagonal of the per-target process noise covariance.
    pub process_noise: f64,
    pub target_prior_var: f64,
    pub bias_prior_var: f64,
    /// Initial target positions are uniform in `[-spread, spread]²`.
    pub initial_position_spread: f64,
    pub initial_speed_std: f64,
    pub edges: Vec<[u32; 2]>,
    pub robots: Vec<TrackingRobot>,
}

impl TrackingConfig {
    /// Four robots on a chain observing six targets with their own sensor bias.
    pub fn four_robots() -> Self {
        let robot = |id: u32, targets: Vec<u32>, r: [f64; 2]| TrackingRobot {
            id,
            targets,
            biases: None,
            measured_targets: None,
            r_target: vec![r[0], 0.0, 0.0, r[1]],
            r_landmark: vec![r[0], 0.0, 0.0, r[1]],
        };
        TrackingConfig {
            num_targets: 6,
            process_noise: 0.08,
            target_prior_var: 10.0,
            bias_prior_var: 5.0,
            initial_position_spread: 50.0,
            initial_speed_std: 1.0,
            edges: vec![[1, 2], [2, 3], [3, 4]],
            robots: vec![
                robot(1, vec![1, 2, 3], [1.0, 5.0]),
                robot(2, vec![2, 3], [3.0, 3.0]),
                robot(3, vec![2, 3, 4, 5], [4.0, 4.0]),
                robot(4, vec![4, 5, 6], [5.0, 1.0]),
            ],
        }
    }

    /// Same sensors and measurements, but every robot estimates the full state.
    pub fn homogeneous(&self) -> Self {
        let all_targets: Vec<u32> = (1..=self.num_targets).collect();
        let all_biases: Vec<u32> = self.robots.iter().map(|r| r.id).collect();
        let mut out = self.clone();
        for r in &mut out.robots {
            r.measured_targets = Some(r.observed_targets());
            r.biases = Some(all_biases.clone());
            r.targets = all_targets.clone();
        }
        out
    }

    pub fn topology(&self) -> Result<Topology> {
        Topology::new(self.edges.iter().map(|e| (e[0], e[1])))
    }

    pub fn validate(&self) -> Result<()> {
        let ids: BTreeSet<u32> = self.robots.iter().map(|r| r.id).collect();
        if ids.len() != self.robots.len() || ids.is_empty() {
            return Err(Error::Config("robot ids must be unique and non-empty".into()));
        }
        for v in [self.process_noise, self.target_prior_var, self.bias_prior_var] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("variance {v} must be positive")));
            }
        }
        for r in &self.robots {
            for &t in r.targets.iter().chain(r.observed_targets().iter()) {
                if t == 0 || t > self.num_targets {
                    return Err(Error::Config(format!("robot {} references unknown target {t}", r.id)));
                }
            }
            if !r.observed_targets().iter().all(|t| r.targets.contains(t)) {
                return Err(Error::Config(format!("robot {} measures targets outside its task", r.id)));
            }
            let biases = r.task_biases();
            if !biases.contains(&r.id) || !biases.iter().all(|b| ids.contains(b)) {
                return Err(Error::Config(format!("robot {} has an invalid bias list", r.id)));
            }
            for (label, m) in [("r_target", &r.r_target), ("r_landmark", &r.r_landmark)] {
                if m.len() != 4 {
                    return Err(Error::Config(format!("robot {} {label} needs 4 entries", r.id)));
                }
                if !crate::linalg::is_positive_definite(&DMatrix::from_row_slice(2, 2, m)) {
                    return Err(Error::Config(format!("robot {} {label} is not positive definite", r.id)));
                }
            }
        }
        let topo = self.topology()?;
        if let Some(n) = topo.nodes().iter().find(|n| !ids.contains(n)) {
            return Err(Error::Config(format!("edge references unknown robot {n}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClConfig {
    pub groups: u32,
    pub group_size: u32,
    /// Defaults to rings of `group_size` joined into one large loop.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[u32; 2]>>,
    pub wheelbase: f64,
    pub speed: f64,
    pub loop_radius: f64,
    /// Amplitude of the periodic steering perturbation, rad.
    pub steer_amplitude: f64,
    pub steer_period: f64,
    /// Distance between group centers.
    pub group_spacing: f64,
    pub landmark_spacing: f64,
    /// Landmarks cover `[-extent, extent]²`.
    pub landmark_extent: f64,
    pub landmarks_odd: usize,
    pub landmarks_even: usize,
    pub sigma_bearing_deg: f64,
    pub sigma_range_choices: Vec<f64>,
    /// Seed for the per-robot range noise draw, fixed across Monte-Carlo runs.
    pub sigma_range_seed: u64,
    /// Diagonal process noise on `[x, y, θ]`.
    pub process_noise: [f64; 3],
    /// Prior standard deviation on `[x, y, θ]`.
    pub prior_std: [f64; 3],
}

impl Default for ClConfig {
    fn default() -> Self {
        ClConfig {
            groups: 4,
            group_size: 5,
            edges: None,
            wheelbase: 1.0,
            speed: 1.0,
            loop_radius: 10.0,
            steer_amplitude: 0.05,
            steer_period: 20.0,
            group_spacing: 50.0,
            landmark_spacing: 100.0,
            landmark_extent: 100.0,
            landmarks_odd: 3,
            landmarks_even: 4,
            sigma_bearing_deg: 1.0,
            sigma_range_choices: vec![2.0, 4.0, 6.0],
            sigma_range_seed: 2020,
            process_noise: [1e-2, 1e-2, 1e-3],
            prior_std: [1.0, 1.0, 0.1],
        }
    }
}

impl ClConfig {
    pub fn num_robots(&self) -> u32 {
        self.groups * self.group_size
    }

    pub fn topology(&self) -> Result<Topology> {
        match &self.edges {
            Some(e) => Topology::new(e.iter().map(|e| (e[0], e[1]))),
            None => super::cl_default_topology(self.groups, self.group_size),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_robots() < 2 {
            return Err(Error::Config("cooperative localization needs at least two robots".into()));
        }
        if self.sigma_range_choices.is_empty() || self.sigma_range_choices.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("sigma_range_choices must be positive and non-empty".into()));
        }
        if !(self.sigma_bearing_deg > 0.0) || !(self.wheelbase > 0.0) || !(self.landmark_spacing > 0.0) {
            return Err(Error::Config("noise, wheelbase and landmark spacing must be positive".into()));
        }
        if self.process_noise.iter().chain(self.prior_std.iter()).any(|v| !(*v > 0.0)) {
            return Err(Error::Config("process noise and prior std must be positive".into()));
        }
        let topo = self.topology()?;
        if let Some(n) = topo.nodes().iter().find(|&&n| n == 0 || n > self.num_robots()) {
            return Err(Error::Config(format!("edge references unknown robot {n}")));
        }
        Ok(())
    }
}

impl ScenarioConfig {
    /// The four-robot, six-target tracking setup.
    pub fn tracking_default() -> Self {
        ScenarioConfig {
            run: RunConfig::default(),
            tracking: Some(TrackingConfig::four_robots()),
            cl: None,
        }
    }

    /// The twenty-robot cooperative localization setup.
    pub fn cl_default() -> Self {
        ScenarioConfig {
            run: RunConfig {
                algo: FusionAlgorithm::HsCi,
                runs: 25,
                steps: 300,
                omega_cost: OmegaCost::LogDet,
                ..RunConfig::default()
            },
            tracking: None,
            cl: Some(ClConfig::default()),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        if r.runs == 0 || r.steps == 0 || r.rounds_per_step == 0 {
            return Err(Error::Config("runs, steps and rounds_per_step must be positive".into()));
        }
        if !(r.dt > 0.0 && r.dt.is_finite()) {
            return Err(Error::Config(format!("dt {} must be positive", r.dt)));
        }
        if !(0.0..1.0).contains(&r.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", r.dropout)));
        }
        match (&self.tracking, &self.cl) {
            (Some(t), None) => t.validate(),
            (None, Some(c)) => c.validate(),
            _ => Err(Error::Config("exactly one of [tracking] or [cl] is required".into())),
        }
    }
}
