use crate::error::{Error, Result};
use crate::network::DeliveryRecord;
use crate::scenarios::{GroupStat, RobotStep, RunOutput};

/// Sums over runs of one robot's statistics at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotAggregate {
    pub dim: usize,
    pub nees_sum: f64,
    pub min_eig_sum: f64,
    pub min_eig_min: f64,
    pub lambda_sum: f64,
    pub lambda_count: usize,
    pub psd_margin_min: f64,
    pub bytes_sum: u64,
    pub mean_sigma_sum: f64,
    pub groups: Vec<GroupStat>,
}

impl RobotAggregate {
    fn new(first: &RobotStep) -> Self {
        RobotAggregate {
            dim: first.dim,
            nees_sum: 0.0,
            min_eig_sum: 0.0,
            min_eig_min: f64::INFINITY,
            lambda_sum: 0.0,
            lambda_count: 0,
            psd_margin_min: f64::INFINITY,
            bytes_sum: 0,
            mean_sigma_sum: 0.0,
            groups: vec![GroupStat::default(); first.groups.len()],
        }
    }

    fn add(&mut self, s: &RobotStep) -> Result<()> {
        if s.dim != self.dim || s.groups.len() != self.groups.len() {
            return Err(Error::Dimension("runs disagree on estimate layout".into()));
        }
        self.nees_sum += s.nees;
        self.min_eig_sum += s.min_eig;
        self.min_eig_min = self.min_eig_min.min(s.min_eig);
        if let Some(r) = s.report {
            self.lambda_sum += r.lambda;
            self.lambda_count += 1;
            self.psd_margin_min = self.psd_margin_min.min(r.psd_margin);
        }
        self.bytes_sum += s.bytes;
        self.mean_sigma_sum += s.mean_sigma;
        for (acc, g) in self.groups.iter_mut().zip(&s.groups) {
            acc.sq_err += g.sq_err;
            acc.var += g.var;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorAggregate {
    pub label: String,
    /// Indexed `[step][robot]`.
    pub steps: Vec<Vec<RobotAggregate>>,
    /// Delivery log of the first run folded in.
    pub deliveries: Vec<DeliveryRecord>,
}

/// Monte-Carlo sums over runs, folded in seed order.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub dt: f64,
    pub robots: Vec<u32>,
    pub group_labels: Vec<Vec<String>>,
    pub estimators: Vec<EstimatorAggregate>,
}

impl Aggregate {
    pub fn from_run(run: &RunOutput) -> Result<Self> {
        let estimators = run
            .estimators
            .iter()
            .map(|e| EstimatorAggregate {
                label: e.label.clone(),
                steps: e.steps.iter().map(|row| row.iter().map(RobotAggregate::new).collect()).collect(),
                deliveries: e.deliveries.clone(),
            })
            .collect();
        let mut agg = Aggregate {
            runs: 0,
            seeds: Vec::new(),
            dt: run.dt,
            robots: run.robots.clone(),
            group_labels: run.group_labels.clone(),
            estimators,
        };
        agg.add(run)?;
        Ok(agg)
    }

    pub fn add(&mut self, run: &RunOutput) -> Result<()> {
        if run.robots != self.robots || run.estimators.len() != self.estimators.len() {
            return Err(Error::Dimension("runs disagree on robots or estimators".into()));
        }
        for (acc, e) in self.estimators.iter_mut().zip(&run.estimators) {
            if acc.label != e.label || acc.steps.len() != e.steps.len() {
                return Err(Error::Dimension(format!("estimator {} changed shape between runs", e.label)));
            }
            for (acc_row, row) in acc.steps.iter_mut().zip(&e.steps) {
                for (a, s) in acc_row.iter_mut().zip(row) {
                    a.add(s)?;
                }
            }
        }
        self.runs += 1;
        self.seeds.push(run.seed);
        Ok(())
    }

    pub fn estimator(&self, label: &str) -> Option<&EstimatorAggregate> {
        self.estimators.iter().find(|e| e.label == label)
    }

    pub fn num_steps(&self) -> usize {
        self.estimators.first().map_or(0, |e| e.steps.len())
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }
}

impl EstimatorAggregate {
    pub fn nees_mean(&self, step: usize, robot: usize, runs: usize) -> f64 {
        self.steps[step][robot].nees_sum / runs as f64
    }

    pub fn min_eig_mean(&self, step: usize, robot: usize, runs: usize) -> f64 {
        self.steps[step][robot].min_eig_sum / runs as f64
    }

    pub fn lambda_mean(&self, step: usize, robot: usize) -> Option<f64> {
        let a = &self.steps[step][robot];
        (a.lambda_count > 0).then(|| a.lambda_sum / a.lambda_count as f64)
    }

    pub fn mean_sigma(&self, step: usize, robot: usize, runs: usize) -> f64 {
        self.steps[step][robot].mean_sigma_sum / runs as f64
    }

    /// RMSE and RMS standard deviation of a group across runs.
    pub fn group_rmse(&self, step: usize, robot: usize, group: usize, runs: usize) -> (f64, f64) {
        let g = &self.steps[step][robot].groups[group];
        ((g.sq_err / runs as f64).sqrt(), (g.var / runs as f64).sqrt())
    }

    /// Time average of the per-step group RMSE and sigma.
    pub fn time_averaged_rmse(&self, robot: usize, group: usize, runs: usize) -> (f64, f64) {
        let n = self.steps.len() as f64;
        let (mut e, mut s) = (0.0, 0.0);
        for step in 0..self.steps.len() {
            let (a, b) = self.group_rmse(step, robot, group, runs);
            e += a;
            s += b;
        }
        (e / n, s / n)
    }

    /// Mean bytes sent per run by each robot.
    pub fn bytes_per_run(&self, runs: usize) -> Vec<f64> {
        let robots = self.steps.first().map_or(0, |r| r.len());
        (0..robots)
            .map(|r| self.steps.iter().map(|row| row[r].bytes_sum).sum::<u64>() as f64 / runs as f64)
            .collect()
    }
}
