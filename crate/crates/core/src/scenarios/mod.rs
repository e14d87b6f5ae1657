//! The two simulated experiment families: heterogeneous multi-target tracking with
//! sensor biases, and cooperative localization on a cyclic network. Each run
//! draws one truth and measurement stream from its seed and feeds the same data
//! to every estimator, including a centralized filter used as the reference.

mod centralized;
mod cl;
mod config;
pub mod models;
mod tracking;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filtering::{wrap_angle, ConservativeReport};
use crate::fusion::{ChannelInit, ChannelUpdate, FusionAlgorithm, FusionSettings, OmegaCost};
use crate::network::DeliveryRecord;

pub use centralized::InformationFilter;
pub use cl::{cl_default_topology, run_cl, ClLayout};
pub use config::{ClConfig, RunConfig, ScenarioConfig, TrackingConfig, TrackingRobot};
pub use tracking::run_tracking;

/// One decentralized estimator setup run on a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub label: String,
    pub settings: FusionSettings,
    /// Probability that a message is lost.
    pub dropout: f64,
    pub channel_init: ChannelInit,
    pub rounds_per_step: usize,
}

impl Variant {
    pub fn new(algo: FusionAlgorithm, conservative: bool) -> Self {
        let label = format!("{}-{}", algo.label(), if conservative { "cons" } else { "plain" });
        Variant {
            label,
            settings: FusionSettings::new(algo, conservative),
            dropout: 0.0,
            channel_init: ChannelInit::default(),
            rounds_per_step: 1,
        }
    }

    pub fn from_run(run: &RunConfig) -> Self {
        let mut v = Variant::new(run.algo, run.conservative);
        v.settings.omega_cost = run.omega_cost;
        v.settings.channel_update = run.channel_update;
        v.dropout = run.dropout;
        v.channel_init = run.channel_init;
        v.rounds_per_step = run.rounds_per_step;
        v
    }

    pub fn with_dropout(mut self, dropout: f64) -> Self {
        self.dropout = dropout;
        if dropout > 0.0 {
            self.label = format!("{}-drop{}", self.label, dropout);
        }
        self
    }

    pub fn with_rounds(mut self, rounds: usize) -> Self {
        self.rounds_per_step = rounds;
        self
    }

    pub fn with_omega_cost(mut self, cost: OmegaCost) -> Self {
        self.settings.omega_cost = cost;
        self
    }

    pub fn with_channel_update(mut self, update: ChannelUpdate) -> Self {
        self.settings.channel_update = update;
        self
    }
}

/// Error and spread of one group of state components.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GroupStat {
    /// Squared Euclidean norm of the group's error.
    pub sq_err: f64,
    /// Trace of the group's covariance block.
    pub var: f64,
}

/// Per-robot statistics at one time step of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotStep {
    /// `eᵀΣ⁻¹e` over the robot's full estimate.
    pub nees: f64,
    pub dim: usize,
    /// `min eig(Σ − Σ_cent)` over the same variables.
    pub min_eig: f64,
    pub report: Option<ConservativeReport>,
    /// Bytes this robot put on the wire during the step.
    pub bytes: u64,
    /// `sqrt(trace Σ / n)`.
    pub mean_sigma: f64,
    pub groups: Vec<GroupStat>,
}

/// All steps of one estimator in one run, indexed `[step][robot]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorRun {
    pub label: String,
    pub steps: Vec<Vec<RobotStep>>,
    /// Message log, kept when requested.
    pub deliveries: Vec<DeliveryRecord>,
}

/// Everything recorded for one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub seed: u64,
    pub dt: f64,
    pub robots: Vec<u32>,
    /// Group labels per robot, aligned with [`RobotStep::groups`].
    pub group_labels: Vec<Vec<String>>,
    pub estimators: Vec<EstimatorRun>,
}

impl RunOutput {
    pub fn estimator(&self, label: &str) -> Option<&EstimatorRun> {
        self.estimators.iter().find(|e| e.label == label)
    }
}

/// How one robot's estimate vector maps onto the scenario state.
#[derive(Clone, Debug)]
pub(crate) struct RobotLayout {
    /// Indices into the global state vector, in estimate order.
    pub global_idx: Vec<usize>,
    /// Positions within the estimate holding angles.
    pub angle_idx: Vec<usize>,
    /// Positions within the estimate for each reported group.
    pub groups: Vec<Vec<usize>>,
}

impl RobotLayout {
    fn error(&self, mean: &DVector<f64>, truth: &DVector<f64>) -> DVector<f64> {
        let mut e = DVector::from_iterator(self.global_idx.len(), self.global_idx.iter().enumerate().map(|(a, &g)| mean[a] - truth[g]));
        for &a in &self.angle_idx {
            e[a] = wrap_angle(e[a]);
        }
        e
    }

    /// Statistics for an estimate `(mean, cov)` against the global truth and the
    /// centralized covariance.
    pub fn record(
        &self,
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
        truth: &DVector<f64>,
        central_cov: &DMatrix<f64>,
        report: Option<ConservativeReport>,
        bytes: u64,
    ) -> Result<RobotStep> {
        let n = self.global_idx.len();
        if mean.len() != n || cov.nrows() != n {
            return Err(Error::Dimension(format!("estimate of dim {} for a layout of dim {n}", mean.len())));
        }
        let e = self.error(mean, truth);
        let nees = crate::eval::nees(&e, cov)?;
        let central = central_cov.select_rows(&self.global_idx).select_columns(&self.global_idx);
        let min_eig = crate::eval::conservativeness(cov, &central)?;
        let groups = self
            .groups
            .iter()
            .map(|idx| GroupStat {
                sq_err: idx.iter().map(|&a| e[a] * e[a]).sum(),
                var: idx.iter().map(|&a| cov[(a, a)]).sum(),
            })
            .collect();
        Ok(RobotStep {
            nees,
            dim: n,
            min_eig,
            report,
            bytes,
            mean_sigma: (cov.trace() / n as f64).sqrt(),
            groups,
        })
    }
}

/// Bytes sent by `robot` in a delivery log slice.
pub(crate) fn bytes_sent(records: &[DeliveryRecord], robot: u32) -> u64 {
    records.iter().filter(|r| r.sender == robot).map(|r| r.bytes as u64).sum()
}
