use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::centralized::InformationFilter;
use super::config::{RunConfig, TrackingConfig};
use super::models::{gaussian_noise, measure_landmark, measure_relative, ncv_position_selector, ncv_transition, step_ncv};
use super::{bytes_sent, EstimatorRun, RobotLayout, RobotStep, RunOutput, Variant};
use crate::error::{Error, Result};
use crate::filtering::{LinearDynamics, LinearMeasurement};
use crate::fusion::{FusionAgent, StateSpec};
use crate::gaussian::{CanonicalFactor, VariableKey};
use crate::network::{round, DropoutModel, Topology};

pub(crate) fn target_name(t: u32) -> String {
    format!("x{t}")
}

pub(crate) fn bias_name(i: u32) -> String {
    format!("s{i}")
}

struct RobotMeasurements {
    targets: Vec<(u32, DVector<f64>)>,
    landmark: DVector<f64>,
}

/// Truth, priors and every measurement of one run.
struct Stream {
    truth: Vec<DVector<f64>>,
    measurements: Vec<Vec<RobotMeasurements>>,
    /// Prior mean and covariance per state name.
    priors: BTreeMap<String, (DVector<f64>, DMatrix<f64>)>,
}

/// Global state: all targets, then every robot's bias.
fn global_states(cfg: &TrackingConfig) -> Vec<(String, usize)> {
    let mut out: Vec<(String, usize)> = (1..=cfg.num_targets).map(|t| (target_name(t), 4)).collect();
    out.extend(cfg.robots.iter().map(|r| (bias_name(r.id), 2)));
    out
}

fn generate(cfg: &TrackingConfig, steps: usize, dt: f64, seed: u64) -> Result<Stream> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let central = InformationFilter::new(&global_states(cfg))?;
    let spread = cfg.initial_position_spread;
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let mut truth = DVector::zeros(central.dim());
    let mut priors = BTreeMap::new();
    for t in 1..=cfg.num_targets {
        let r = central.block(&target_name(t))?;
        let x0 = DVector::from_column_slice(&[
            rng.gen_range(-spread..=spread),
            cfg.initial_speed_std * normal(&mut rng),
            rng.gen_range(-spread..=spread),
            cfg.initial_speed_std * normal(&mut rng),
        ]);
        truth.rows_mut(r.start, 4).copy_from(&x0);
    }
    let bias_cov = DMatrix::identity(2, 2) * cfg.bias_prior_var;
    for robot in &cfg.robots {
        let r = central.block(&bias_name(robot.id))?;
        truth.rows_mut(r.start, 2).copy_from(&gaussian_noise(&bias_cov, &mut rng));
        priors.insert(bias_name(robot.id), (DVector::zeros(2), bias_cov.clone()));
    }
    let target_cov = DMatrix::identity(4, 4) * cfg.target_prior_var;
    for t in 1..=cfg.num_targets {
        let r = central.block(&target_name(t))?;
        let mean = truth.rows(r.start, 4) + gaussian_noise(&target_cov, &mut rng);
        priors.insert(target_name(t), (mean, target_cov.clone()));
    }

    let q = DMatrix::identity(4, 4) * cfg.process_noise;
    let mut truths = Vec::with_capacity(steps);
    let mut measurements = Vec::with_capacity(steps);
    for step in 0..steps {
        if step > 0 {
            for t in 1..=cfg.num_targets {
                let r = central.block(&target_name(t))?;
                let next = step_ncv(&truth.rows(r.start, 4).into_owned(), dt, &q, &mut rng);
                truth.rows_mut(r.start, 4).copy_from(&next);
            }
        }
        let mut per_robot = Vec::with_capacity(cfg.robots.len());
        for robot in &cfg.robots {
            let b = central.block(&bias_name(robot.id))?;
            let bias = truth.rows(b.start, 2).into_owned();
            let r_t = robot.r_target_matrix();
            let targets = robot
                .observed_targets()
                .into_iter()
                .map(|t| {
                    let r = central.block(&target_name(t))?;
                    let x = truth.rows(r.start, 4).into_owned();
                    Ok((t, measure_relative(&x, &bias, &r_t, &mut rng)))
                })
                .collect::<Result<Vec<_>>>()?;
            let landmark = measure_landmark(&bias, &robot.r_landmark_matrix(), &mut rng);
            per_robot.push(RobotMeasurements { targets, landmark });
        }
        truths.push(truth.clone());
        measurements.push(per_robot);
    }
    Ok(Stream {
        truth: truths,
        measurements,
        priors,
    })
}

fn target_measurement(r: &DMatrix<f64>, y: &DVector<f64>) -> LinearMeasurement {
    let mut h = DMatrix::zeros(2, 6);
    h.view_mut((0, 0), (2, 4)).copy_from(&ncv_position_selector());
    h.view_mut((0, 4), (2, 2)).fill_with_identity();
    LinearMeasurement::new(h, r.clone(), y.clone())
}

fn landmark_measurement(r: &DMatrix<f64>, y: &DVector<f64>) -> LinearMeasurement {
    LinearMeasurement::new(DMatrix::identity(2, 2), r.clone(), y.clone())
}

fn prior_factor(name: &str, dim: usize, prior: &(DVector<f64>, DMatrix<f64>)) -> Result<CanonicalFactor> {
    let info = crate::linalg::spd_inverse(&prior.1).ok_or_else(|| Error::NotPositiveDefinite(format!("prior of {name}")))?;
    CanonicalFactor::new(vec![VariableKey::new(name, 0, dim)], &info * &prior.0, info)
}

fn task_names(robot: &super::TrackingRobot) -> BTreeSet<String> {
    robot
        .targets
        .iter()
        .map(|&t| target_name(t))
        .chain(robot.task_biases().into_iter().map(bias_name))
        .collect()
}

fn build_agents(cfg: &TrackingConfig, variant: &Variant, topo: &Topology, stream: &Stream) -> Result<Vec<FusionAgent>> {
    let tasks: BTreeMap<u32, BTreeSet<String>> = cfg.robots.iter().map(|r| (r.id, task_names(r))).collect();
    let mut agents = Vec::with_capacity(cfg.robots.len());
    for robot in &cfg.robots {
        let task = &tasks[&robot.id];
        let states = task
            .iter()
            .map(|n| if n.starts_with('x') { StateSpec::dynamic(n.as_str(), 4) } else { StateSpec::fixed(n.as_str(), 2) })
            .collect();
        let mut agent = FusionAgent::new(robot.id, states, variant.settings)?;
        for n in task {
            let dim = if n.starts_with('x') { 4 } else { 2 };
            agent.add_factor(prior_factor(n, dim, &stream.priors[n])?)?;
        }
        for j in topo.neighbors(robot.id) {
            let common: Vec<String> = task.intersection(&tasks[&j]).cloned().collect();
            agent.add_neighbor(j, &common)?;
        }
        agent.initialize_channels(variant.channel_init)?;
        agents.push(agent);
    }
    Ok(agents)
}

/// Layout of an estimate whose scope is `scope`, with position, velocity and
/// bias groups.
fn layout_for(scope: &[VariableKey], central: &InformationFilter) -> Result<(RobotLayout, Vec<String>)> {
    let mut global_idx = Vec::new();
    let mut groups = Vec::new();
    let mut labels = Vec::new();
    for k in scope {
        let at = global_idx.len();
        global_idx.extend(central.block(k.name())?);
        if k.name().starts_with('x') {
            groups.push(vec![at, at + 2]);
            labels.push(format!("{}.pos", k.name()));
            groups.push(vec![at + 1, at + 3]);
            labels.push(format!("{}.vel", k.name()));
        } else {
            groups.push(vec![at, at + 1]);
            labels.push(k.name().to_string());
        }
    }
    Ok((
        RobotLayout {
            global_idx,
            angle_idx: Vec::new(),
            groups,
        },
        labels,
    ))
}

fn global_dynamics(cfg: &TrackingConfig, central: &InformationFilter, dt: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = central.dim();
    let mut f = DMatrix::identity(n, n);
    let mut q = DMatrix::zeros(n, n);
    for t in 1..=cfg.num_targets {
        let r = central.block(&target_name(t))?;
        f.view_mut((r.start, r.start), (4, 4)).copy_from(&ncv_transition(dt));
        q.view_mut((r.start, r.start), (4, 4)).fill_diagonal(cfg.process_noise);
    }
    Ok((f, q))
}

/// One Monte-Carlo run of the tracking scenario.
///
/// The first estimator in the output is the centralized filter, followed by
/// `variants` in order. Delivery logs are kept when `keep_deliveries` is set.
pub fn run_tracking(
    cfg: &TrackingConfig,
    run: &RunConfig,
    variants: &[Variant],
    seed: u64,
    keep_deliveries: bool,
) -> Result<RunOutput> {
    cfg.validate()?;
    let stream = generate(cfg, run.steps, run.dt, seed)?;
    let topo = cfg.topology()?;
    let robots: Vec<u32> = cfg.robots.iter().map(|r| r.id).collect();

    // Centralized reference.
    let mut central = InformationFilter::new(&global_states(cfg))?;
    for (name, prior) in &stream.priors {
        central.set_prior(name, &prior.0, &prior.1)?;
    }
    let (f_global, q_global) = global_dynamics(cfg, &central, run.dt)?;
    let zero_offset = DVector::zeros(central.dim());
    let mut central_moments = Vec::with_capacity(run.steps);
    for step in 0..run.steps {
        if step > 0 {
            central.predict(&f_global, &zero_offset, &q_global)?;
        }
        for (robot, meas) in cfg.robots.iter().zip(&stream.measurements[step]) {
            let b = bias_name(robot.id);
            for (t, y) in &meas.targets {
                let m = target_measurement(&robot.r_target_matrix(), y);
                central.update(&central.indices(&[&target_name(*t), &b])?, &m.h, &m.r, &m.y)?;
            }
            let m = landmark_measurement(&robot.r_landmark_matrix(), &meas.landmark);
            central.update(&central.indices(&[&b])?, &m.h, &m.r, &m.y)?;
        }
        central_moments.push(central.moments()?);
    }

    let layouts: Vec<(RobotLayout, Vec<String>)> = cfg
        .robots
        .iter()
        .map(|r| {
            let scope: Vec<VariableKey> = task_names(r)
                .iter()
                .map(|n| VariableKey::new(n.as_str(), 0, if n.starts_with('x') { 4 } else { 2 }))
                .collect();
            layout_for(&scope, &central)
        })
        .collect::<Result<_>>()?;

    let mut estimators = Vec::with_capacity(variants.len() + 1);
    let mut central_steps = Vec::with_capacity(run.steps);
    for (step, (mean, cov)) in central_moments.iter().enumerate() {
        let row = layouts
            .iter()
            .map(|(l, _)| {
                let m = DVector::from_iterator(l.global_idx.len(), l.global_idx.iter().map(|&i| mean[i]));
                let c = cov.select_rows(&l.global_idx).select_columns(&l.global_idx);
                l.record(&m, &c, &stream.truth[step], cov, None, 0)
            })
            .collect::<Result<Vec<_>>>()?;
        central_steps.push(row);
    }
    estimators.push(EstimatorRun {
        label: "centralized".into(),
        steps: central_steps,
        deliveries: Vec::new(),
    });

    let dynamics: BTreeMap<String, LinearDynamics> = (1..=cfg.num_targets)
        .map(|t| {
            (
                target_name(t),
                LinearDynamics::autonomous(ncv_transition(run.dt), DMatrix::identity(4, 4) * cfg.process_noise),
            )
        })
        .collect();

    for (vi, variant) in variants.iter().enumerate() {
        let mut agents = build_agents(cfg, variant, &topo, &stream)?;
        let mut dropout = DropoutModel::new(1.0 - variant.dropout, seed, 1 + vi as u64)?;
        let mut steps: Vec<Vec<RobotStep>> = Vec::with_capacity(run.steps);
        let mut deliveries = Vec::new();
        for step in 0..run.steps {
            let mut reports = vec![None; agents.len()];
            if step > 0 {
                for (a, rep) in agents.iter_mut().zip(reports.iter_mut()) {
                    *rep = a.predict(&dynamics).map_err(|e| step_error(step, a.id(), e))?;
                }
            }
            for ((agent, robot), meas) in agents.iter_mut().zip(&cfg.robots).zip(&stream.measurements[step]) {
                let b = bias_name(robot.id);
                for (t, y) in &meas.targets {
                    agent.measure(&[&target_name(*t), &b], &target_measurement(&robot.r_target_matrix(), y))?;
                }
                agent.measure(&[&b], &landmark_measurement(&robot.r_landmark_matrix(), &meas.landmark))?;
            }
            let mut records = Vec::new();
            for _ in 0..variant.rounds_per_step {
                records.extend(round(&mut agents, &topo, &mut dropout).map_err(|e| step_error(step, 0, e))?);
            }
            let (_, central_cov) = &central_moments[step];
            let row = agents
                .iter()
                .zip(&layouts)
                .zip(&reports)
                .map(|((agent, (layout, _)), rep)| {
                    let est = agent.estimate().map_err(|e| step_error(step, agent.id(), e))?;
                    let (own, _) = layout_for(est.scope(), &central)?;
                    debug_assert_eq!(own.global_idx, layout.global_idx);
                    own.record(
                        est.mean(),
                        est.covariance(),
                        &stream.truth[step],
                        central_cov,
                        *rep,
                        bytes_sent(&records, agent.id()),
                    )
                    .map_err(|e| step_error(step, agent.id(), e))
                })
                .collect::<Result<Vec<_>>>()?;
            steps.push(row);
            if keep_deliveries {
                deliveries.extend(records);
            }
        }
        estimators.push(EstimatorRun {
            label: variant.label.clone(),
            steps,
            deliveries,
        });
    }

    Ok(RunOutput {
        seed,
        dt: run.dt,
        robots,
        group_labels: layouts.into_iter().map(|(_, l)| l).collect(),
        estimators,
    })
}

/// Tags a numerical failure with the step and robot where it happened.
pub(crate) fn step_error(step: usize, robot: u32, e: Error) -> Error {
    match e {
        Error::Config(_) | Error::Io(_) | Error::Csv(_) => e,
        other => Error::Numerical {
            step,
            robot,
            source: Box::new(other),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FusionAlgorithm;

    fn short_run() -> RunConfig {
        RunConfig {
            steps: 30,
            ..RunConfig::default()
        }
    }

    #[test]
    fn stream_is_seeded() {
        let cfg = TrackingConfig::four_robots();
        let a = generate(&cfg, 5, 0.1, 3).unwrap();
        let b = generate(&cfg, 5, 0.1, 3).unwrap();
        let c = generate(&cfg, 5, 0.1, 4).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_ne!(a.truth, c.truth);
        assert_eq!(a.truth[0].len(), 32);
    }

    #[test]
    fn robot_three_has_eighteen_states() {
        let cfg = TrackingConfig::four_robots();
        let out = run_tracking(&cfg, &short_run(), &[Variant::new(FusionAlgorithm::HsCf, true)], 1, false).unwrap();
        let dims: Vec<usize> = out.estimators[1].steps[0].iter().map(|s| s.dim).collect();
        assert_eq!(dims, vec![14, 10, 18, 14]);
        assert_eq!(out.estimators[0].label, "centralized");
        assert_eq!(out.group_labels[1], vec!["s2", "x2.pos", "x2.vel", "x3.pos", "x3.vel"]);
    }

    #[test]
    fn conservative_cf_dominates_centralized_after_transient() {
        let cfg = TrackingConfig::four_robots();
        let out = run_tracking(&cfg, &short_run(), &[Variant::new(FusionAlgorithm::HsCf, true)], 2, true).unwrap();
        let last = out.estimators[1].steps.last().unwrap();
        assert!(last.iter().all(|s| s.min_eig > -1e-9), "{last:?}");
        assert!(last.iter().all(|s| s.report.unwrap().lambda <= 1.0));
        assert!(!out.estimators[1].deliveries.is_empty());
        let central = out.estimators[0].steps.last().unwrap();
        assert!(central.iter().all(|s| s.min_eig.abs() < 1e-9));
    }
}
