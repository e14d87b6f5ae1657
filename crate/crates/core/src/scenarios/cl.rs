use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::centralized::InformationFilter;
use super::config::{ClConfig, RunConfig};
use super::models::{bearing_range, bearing_range_jacobian, dubins_jacobian, dubins_step, gaussian_noise, measure_bearing_range, step_dubins};
use super::tracking::step_error;
use super::{bytes_sent, EstimatorRun, RobotLayout, RobotStep, RunOutput, Variant};
use crate::error::{Error, Result};
use crate::filtering::{add_linearized_measurement, LinearDynamics};
use crate::fusion::{optimize_omega, FusionAgent, OmegaCost, StateSpec};
use crate::gaussian::{CanonicalDensity, CanonicalFactor, VariableKey};
use crate::linalg::spd_inverse;
use crate::network::{round, DropoutModel, Topology};

/// Rings of `group_size` robots, consecutive rings joined by one edge and the
/// last ring joined back to the first.
pub fn cl_default_topology(groups: u32, group_size: u32) -> Result<Topology> {
    let mut edges = Vec::new();
    for g in 0..groups {
        let first = g * group_size + 1;
        for m in 0..group_size {
            let a = first + m;
            let b = first + (m + 1) % group_size;
            if a != b {
                edges.push((a, b));
            }
        }
        if groups > 1 {
            let last = first + group_size - 1;
            let next_first = ((g + 1) % groups) * group_size + 1;
            if last != next_first && (groups > 2 || g == 0) {
                edges.push((last, next_first));
            }
        }
    }
    Topology::new(edges)
}

fn pose_name(i: u32) -> String {
    format!("p{i}")
}

/// Fixed geometry of a cooperative localization setup.
#[derive(Clone, Debug)]
pub struct ClLayout {
    pub robots: Vec<u32>,
    pub topology: Topology,
    pub landmarks: Vec<Vector2<f64>>,
    /// Range noise standard deviation per robot.
    pub sigma_range: BTreeMap<u32, f64>,
    pub initial: BTreeMap<u32, DVector<f64>>,
}

impl ClLayout {
    pub fn new(cfg: &ClConfig) -> Result<Self> {
        cfg.validate()?;
        let robots: Vec<u32> = (1..=cfg.num_robots()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.sigma_range_seed);
        let sigma_range = robots
            .iter()
            .map(|&i| (i, *cfg.sigma_range_choices.choose(&mut rng).expect("validated non-empty")))
            .collect();

        let mut landmarks = Vec::new();
        let n = (2.0 * cfg.landmark_extent / cfg.landmark_spacing).floor() as i64;
        for a in 0..=n {
            for b in 0..=n {
                landmarks.push(Vector2::new(
                    -cfg.landmark_extent + a as f64 * cfg.landmark_spacing,
                    -cfg.landmark_extent + b as f64 * cfg.landmark_spacing,
                ));
            }
        }

        let mut initial = BTreeMap::new();
        let center_radius = if cfg.groups > 1 { cfg.group_spacing / 2f64.sqrt() } else { 0.0 };
        for g in 0..cfg.groups {
            let phi = PI / 4.0 + 2.0 * PI * g as f64 / cfg.groups as f64;
            let c = Vector2::new(center_radius * phi.cos(), center_radius * phi.sin());
            for m in 0..cfg.group_size {
                let alpha = 2.0 * PI * m as f64 / cfg.group_size as f64;
                let pose = DVector::from_column_slice(&[
                    c.x + cfg.loop_radius * alpha.cos(),
                    c.y + cfg.loop_radius * alpha.sin(),
                    crate::filtering::wrap_angle(alpha + PI / 2.0),
                ]);
                initial.insert(g * cfg.group_size + m + 1, pose);
            }
        }
        Ok(ClLayout {
            robots,
            topology: cfg.topology()?,
            landmarks,
            sigma_range,
            initial,
        })
    }

    /// Scripted steering: a circle of `loop_radius` plus a slow periodic term.
    pub fn steering(&self, cfg: &ClConfig, robot: u32, t: f64) -> f64 {
        let phase = 2.0 * PI * robot as f64 / self.robots.len() as f64;
        (cfg.wheelbase / cfg.loop_radius).atan() + cfg.steer_amplitude * (2.0 * PI * t / cfg.steer_period + phase).sin()
    }

    fn nearest_landmarks(&self, pos: Vector2<f64>, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.landmarks.len()).collect();
        idx.sort_by(|&a, &b| {
            let da = (self.landmarks[a] - pos).norm_squared();
            let db = (self.landmarks[b] - pos).norm_squared();
            da.total_cmp(&db).then(a.cmp(&b))
        });
        idx.truncate(k);
        idx
    }

    fn noise(&self, cfg: &ClConfig, robot: u32) -> DMatrix<f64> {
        let sb = cfg.sigma_bearing_deg.to_radians();
        let sr = self.sigma_range[&robot];
        DMatrix::from_diagonal(&DVector::from_column_slice(&[sb * sb, sr * sr]))
    }
}

struct RobotMeasurements {
    landmarks: Vec<(usize, DVector<f64>)>,
    relative: Vec<(u32, DVector<f64>)>,
}

struct Stream {
    /// Global truth `[p1; p2; ...]` per step.
    truth: Vec<DVector<f64>>,
    measurements: Vec<Vec<RobotMeasurements>>,
    prior_means: BTreeMap<u32, DVector<f64>>,
}

fn pose_of(x: &DVector<f64>, idx: usize) -> DVector<f64> {
    x.rows(3 * idx, 3).into_owned()
}

fn generate(cfg: &ClConfig, layout: &ClLayout, steps: usize, dt: f64, seed: u64) -> Result<Stream> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = layout.robots.len();
    let prior_cov = DMatrix::from_diagonal(&DVector::from_iterator(3, cfg.prior_std.iter().map(|s| s * s)));
    let q = DMatrix::from_diagonal(&DVector::from_column_slice(&cfg.process_noise));
    let mut x = DVector::zeros(3 * n);
    let mut prior_means = BTreeMap::new();
    for (a, &i) in layout.robots.iter().enumerate() {
        x.rows_mut(3 * a, 3).copy_from(&layout.initial[&i]);
        prior_means.insert(i, &layout.initial[&i] + gaussian_noise(&prior_cov, &mut rng));
    }
    let index: BTreeMap<u32, usize> = layout.robots.iter().enumerate().map(|(a, &i)| (i, a)).collect();
    let sb = cfg.sigma_bearing_deg.to_radians();

    let mut truth = Vec::with_capacity(steps);
    let mut measurements = Vec::with_capacity(steps);
    for step in 0..steps {
        if step > 0 {
            let t = (step - 1) as f64 * dt;
            for (a, &i) in layout.robots.iter().enumerate() {
                let phi = layout.steering(cfg, i, t);
                let next = step_dubins(&pose_of(&x, a), cfg.speed, phi, cfg.wheelbase, dt, &q, &mut rng);
                x.rows_mut(3 * a, 3).copy_from(&next);
            }
        }
        let mut per_robot = Vec::with_capacity(n);
        for (a, &i) in layout.robots.iter().enumerate() {
            let pose = pose_of(&x, a);
            let sr = layout.sigma_range[&i];
            let k = if i % 2 == 1 { cfg.landmarks_odd } else { cfg.landmarks_even };
            let mut landmarks = Vec::new();
            for l in layout.nearest_landmarks(Vector2::new(pose[0], pose[1]), k) {
                if let Some(z) = measure_bearing_range(&pose, &layout.landmarks[l], sb, sr, &mut rng) {
                    landmarks.push((l, DVector::from_column_slice(z.as_slice())));
                }
            }
            let mut relative = Vec::new();
            for j in layout.topology.neighbors(i) {
                let other = pose_of(&x, index[&j]);
                let point = Vector2::new(other[0], other[1]);
                if let Some(z) = measure_bearing_range(&pose, &point, sb, sr, &mut rng) {
                    relative.push((j, DVector::from_column_slice(z.as_slice())));
                }
            }
            per_robot.push(RobotMeasurements { landmarks, relative });
        }
        truth.push(x.clone());
        measurements.push(per_robot);
    }
    Ok(Stream {
        truth,
        measurements,
        prior_means,
    })
}

fn landmark_model(point: Vector2<f64>) -> impl Fn(&DVector<f64>) -> DVector<f64> {
    move |x: &DVector<f64>| {
        let z = bearing_range(x, &point).unwrap_or_else(|| Vector2::new(0.0, 0.0));
        DVector::from_column_slice(z.as_slice())
    }
}

fn relative_model(x: &DVector<f64>) -> DVector<f64> {
    let own = x.rows(0, 3).into_owned();
    let z = bearing_range(&own, &Vector2::new(x[3], x[4])).unwrap_or_else(|| Vector2::new(0.0, 0.0));
    DVector::from_column_slice(z.as_slice())
}

/// `[∂h/∂p_i | ∂h/∂p_j]` for a relative bearing/range measurement.
fn relative_jacobian(x: &DVector<f64>) -> DMatrix<f64> {
    let own = x.rows(0, 3).into_owned();
    let j = bearing_range_jacobian(&own, &Vector2::new(x[3], x[4]));
    let mut out = DMatrix::zeros(2, 6);
    out.view_mut((0, 0), (2, 5)).copy_from(&j);
    out
}

fn landmark_jacobian(pose: &DVector<f64>, point: &Vector2<f64>) -> DMatrix<f64> {
    bearing_range_jacobian(pose, point).columns(0, 3).into_owned()
}

fn dubins_dynamics(cfg: &ClConfig, mean: &DVector<f64>, phi: f64, dt: f64) -> LinearDynamics {
    let f = dubins_jacobian(mean, cfg.speed, dt);
    let next = dubins_step(mean, cfg.speed, phi, cfg.wheelbase, dt);
    let gu = next - &f * mean;
    LinearDynamics::with_offset(f, gu, DMatrix::from_diagonal(&DVector::from_column_slice(&cfg.process_noise)))
}

fn prior_cov(cfg: &ClConfig) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(3, cfg.prior_std.iter().map(|s| s * s)))
}

fn task(layout: &ClLayout, i: u32) -> BTreeSet<u32> {
    let mut t: BTreeSet<u32> = layout.topology.neighbors(i).into_iter().collect();
    t.insert(i);
    t
}

fn build_agents(cfg: &ClConfig, layout: &ClLayout, variant: &Variant, stream: &Stream) -> Result<Vec<FusionAgent>> {
    let p0 = prior_cov(cfg);
    let info = spd_inverse(&p0).ok_or_else(|| Error::NotPositiveDefinite("pose prior".into()))?;
    let mut agents = Vec::with_capacity(layout.robots.len());
    for &i in &layout.robots {
        let mine = task(layout, i);
        let states = mine.iter().map(|&j| StateSpec::dynamic(pose_name(j), 3)).collect();
        let mut agent = FusionAgent::new(i, states, variant.settings)?;
        for &j in &mine {
            let key = VariableKey::new(pose_name(j), 0, 3);
            agent.add_factor(CanonicalFactor::new(vec![key], &info * &stream.prior_means[&j], info.clone())?)?;
        }
        for j in layout.topology.neighbors(i) {
            let common: Vec<String> = mine.intersection(&task(layout, j)).map(|&k| pose_name(k)).collect();
            agent.add_neighbor(j, &common)?;
        }
        agent.initialize_channels(variant.channel_init)?;
        agents.push(agent);
    }
    Ok(agents)
}

/// Estimate layout over the scope `names` (pose names in estimate order),
/// reporting the ego position and heading.
fn robot_layout(names: &[String], ego: u32, index: &BTreeMap<u32, usize>) -> Result<RobotLayout> {
    let mut global_idx = Vec::new();
    let mut angle_idx = Vec::new();
    let mut groups = Vec::new();
    for n in names {
        let id: u32 = n[1..].parse().map_err(|_| Error::Scope(format!("unexpected state {n}")))?;
        let at = global_idx.len();
        let g = *index.get(&id).ok_or_else(|| Error::Scope(format!("unknown robot {id}")))?;
        global_idx.extend(3 * g..3 * g + 3);
        angle_idx.push(at + 2);
        if id == ego {
            groups = vec![vec![at, at + 1], vec![at + 2]];
        }
    }
    if groups.is_empty() {
        return Err(Error::Scope(format!("estimate of robot {ego} lacks its own pose")));
    }
    Ok(RobotLayout {
        global_idx,
        angle_idx,
        groups,
    })
}

fn linearized_update(
    filter: &mut InformationFilter,
    idx: &[usize],
    x_hat: &DVector<f64>,
    predicted: DVector<f64>,
    jac: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<()> {
    let mut residual = y - predicted;
    residual[0] = crate::filtering::wrap_angle(residual[0]);
    let pseudo = residual + jac * x_hat;
    filter.update(idx, jac, r, &pseudo)
}

fn global_states(layout: &ClLayout) -> Vec<(String, usize)> {
    layout.robots.iter().map(|&i| (pose_name(i), 3)).collect()
}

fn run_centralized(cfg: &ClConfig, layout: &ClLayout, stream: &Stream, run: &RunConfig) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
    let mut f = InformationFilter::new(&global_states(layout))?;
    let p0 = prior_cov(cfg);
    for &i in &layout.robots {
        f.set_prior(&pose_name(i), &stream.prior_means[&i], &p0)?;
    }
    let n = f.dim();
    let mut out = Vec::with_capacity(run.steps);
    for step in 0..run.steps {
        if step > 0 {
            let mean = f.mean()?;
            let t = (step - 1) as f64 * run.dt;
            let mut big_f = DMatrix::zeros(n, n);
            let mut offset = DVector::zeros(n);
            let mut q = DMatrix::zeros(n, n);
            for (a, &i) in layout.robots.iter().enumerate() {
                let d = dubins_dynamics(cfg, &pose_of(&mean, a), layout.steering(cfg, i, t), run.dt);
                big_f.view_mut((3 * a, 3 * a), (3, 3)).copy_from(&d.f);
                offset.rows_mut(3 * a, 3).copy_from(&d.offset());
                q.view_mut((3 * a, 3 * a), (3, 3)).copy_from(&d.q);
            }
            f.predict(&big_f, &offset, &q)?;
        }
        let mean = f.mean()?;
        for (a, &i) in layout.robots.iter().enumerate() {
            let r = layout.noise(cfg, i);
            let pose = pose_of(&mean, a);
            let idx = f.indices(&[&pose_name(i)])?;
            for (l, z) in &stream.measurements[step][a].landmarks {
                let point = layout.landmarks[*l];
                let jac = landmark_jacobian(&pose, &point);
                linearized_update(&mut f, &idx, &pose, landmark_model(point)(&pose), &jac, &r, z)?;
            }
            for (j, z) in &stream.measurements[step][a].relative {
                let idx2 = f.indices(&[&pose_name(i), &pose_name(*j)])?;
                let x_hat = DVector::from_iterator(6, idx2.iter().map(|&k| mean[k]));
                linearized_update(&mut f, &idx2, &x_hat, relative_model(&x_hat), &relative_jacobian(&x_hat), &r, z)?;
            }
        }
        out.push(f.moments()?);
    }
    Ok(out)
}

/// Ad-hoc position estimate of a neighbor from the sender's ego estimate and a
/// bearing/range measurement, with first-order covariance.
fn relay_position(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    z: &DVector<f64>,
    r: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let (b, rng) = (z[0], z[1]);
    let ang = mean[2] + b;
    let (s, c) = ang.sin_cos();
    let p = DVector::from_column_slice(&[mean[0] + rng * c, mean[1] + rng * s]);
    let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, -rng * s, 0.0, 1.0, rng * c]);
    let bj = DMatrix::from_row_slice(2, 2, &[-rng * s, c, rng * c, s]);
    let mut cov_p = &a * cov * a.transpose() + &bj * r * bj.transpose();
    crate::linalg::symmetrize(&mut cov_p);
    (p, cov_p)
}

/// Covariance intersection of the position block of `filter` with `(p, cov)`.
fn ci_position_update(filter: &mut InformationFilter, p: &DVector<f64>, cov: &DMatrix<f64>, cost: OmegaCost) -> Result<()> {
    let (mean, full) = filter.moments()?;
    let local_cov = full.view((0, 0), (2, 2)).into_owned();
    let local_info = spd_inverse(&local_cov).ok_or_else(|| Error::NotPositiveDefinite("ego position".into()))?;
    let remote_info = spd_inverse(cov).ok_or_else(|| Error::NotPositiveDefinite("relayed position".into()))?;
    let keys = vec![VariableKey::new("pos", 0, 2)];
    let local_mean = mean.rows(0, 2).into_owned();
    let local = CanonicalDensity::new(CanonicalFactor::new(keys.clone(), &local_info * &local_mean, local_info.clone())?)?;
    let remote = CanonicalDensity::new(CanonicalFactor::new(keys, &remote_info * p, remote_info.clone())?)?;
    let w = optimize_omega(&local, &remote, cost)?;
    let dz = (remote.zeta() - local.zeta()) * (1.0 - w);
    let dl = (remote_info - local_info) * (1.0 - w);
    filter.add_information(&[0, 1], &dz, &dl);
    Ok(())
}

/// Ego-only EKFs that fuse relayed position estimates with covariance
/// intersection. Returns per-step `(mean, cov)` for each robot.
fn run_cicl(
    cfg: &ClConfig,
    layout: &ClLayout,
    stream: &Stream,
    run: &RunConfig,
    dropout: &mut DropoutModel,
) -> Result<Vec<Vec<(DVector<f64>, DMatrix<f64>)>>> {
    let p0 = prior_cov(cfg);
    let ego = vec![("ego".to_string(), 3)];
    let mut filters = layout
        .robots
        .iter()
        .map(|&i| {
            let mut f = InformationFilter::new(&ego)?;
            f.set_prior("ego", &stream.prior_means[&i], &p0)?;
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    let index: BTreeMap<u32, usize> = layout.robots.iter().enumerate().map(|(a, &i)| (i, a)).collect();
    let mut out = Vec::with_capacity(run.steps);
    for step in 0..run.steps {
        for (a, &i) in layout.robots.iter().enumerate() {
            let f = &mut filters[a];
            if step > 0 {
                let t = (step - 1) as f64 * run.dt;
                let d = dubins_dynamics(cfg, &f.mean()?, layout.steering(cfg, i, t), run.dt);
                f.predict(&d.f, &d.offset(), &d.q).map_err(|e| step_error(step, i, e))?;
            }
            let r = layout.noise(cfg, i);
            let pose = f.mean()?;
            for (l, z) in &stream.measurements[step][a].landmarks {
                let point = layout.landmarks[*l];
                let jac = landmark_jacobian(&pose, &point);
                linearized_update(f, &[0, 1, 2], &pose, landmark_model(point)(&pose), &jac, &r, z)?;
            }
        }
        // Relays are formed from the post-update ego estimates, then fused.
        let mut inbox: BTreeMap<(u32, u32), (DVector<f64>, DMatrix<f64>)> = BTreeMap::new();
        for (a, &i) in layout.robots.iter().enumerate() {
            let (mean, cov) = filters[a].moments()?;
            let r = layout.noise(cfg, i);
            for (j, z) in &stream.measurements[step][a].relative {
                let relay = relay_position(&mean, &cov, z, &r);
                if dropout.deliver() {
                    inbox.insert((*j, i), relay);
                }
            }
        }
        for ((j, _), (p, cov)) in &inbox {
            ci_position_update(&mut filters[index[j]], p, cov, run.omega_cost).map_err(|e| step_error(step, *j, e))?;
        }
        out.push(filters.iter().map(|f| f.moments()).collect::<Result<Vec<_>>>()?);
    }
    Ok(out)
}

/// One Monte-Carlo run of the cooperative localization scenario.
///
/// Estimators in order: `centralized`, each FG-DDF variant, then `ci-cl` when
/// `with_baseline` is set. The baseline uses the dropout rate of `run`.
pub fn run_cl(
    cfg: &ClConfig,
    run: &RunConfig,
    variants: &[Variant],
    with_baseline: bool,
    seed: u64,
    keep_deliveries: bool,
) -> Result<RunOutput> {
    let layout = ClLayout::new(cfg)?;
    let stream = generate(cfg, &layout, run.steps, run.dt, seed)?;
    let index: BTreeMap<u32, usize> = layout.robots.iter().enumerate().map(|(a, &i)| (i, a)).collect();
    let task_layouts = layout
        .robots
        .iter()
        .map(|&i| {
            let names: Vec<String> = task(&layout, i).iter().map(|&j| pose_name(j)).collect();
            let mut sorted = names.clone();
            sorted.sort();
            robot_layout(&sorted, i, &index)
        })
        .collect::<Result<Vec<_>>>()?;

    let central = run_centralized(cfg, &layout, &stream, run)?;
    let mut estimators = Vec::new();
    let mut rows = Vec::with_capacity(run.steps);
    for (step, (mean, cov)) in central.iter().enumerate() {
        let row = task_layouts
            .iter()
            .map(|l| {
                let m = DVector::from_iterator(l.global_idx.len(), l.global_idx.iter().map(|&i| mean[i]));
                let c = cov.select_rows(&l.global_idx).select_columns(&l.global_idx);
                l.record(&m, &c, &stream.truth[step], cov, None, 0)
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    estimators.push(EstimatorRun {
        label: "centralized".into(),
        steps: rows,
        deliveries: Vec::new(),
    });

    for (vi, variant) in variants.iter().enumerate() {
        let mut agents = build_agents(cfg, &layout, variant, &stream)?;
        let mut dropout = DropoutModel::new(1.0 - variant.dropout, seed, 1 + vi as u64)?;
        let mut steps: Vec<Vec<RobotStep>> = Vec::with_capacity(run.steps);
        let mut deliveries = Vec::new();
        for step in 0..run.steps {
            let mut reports = vec![None; agents.len()];
            if step > 0 {
                let t = (step - 1) as f64 * run.dt;
                for (agent, rep) in agents.iter_mut().zip(reports.iter_mut()) {
                    let est = agent.estimate().map_err(|e| step_error(step, agent.id(), e))?;
                    let mut dynamics = BTreeMap::new();
                    for k in est.scope() {
                        let id: u32 = k.name()[1..].parse().map_err(|_| Error::Scope(k.name().to_string()))?;
                        let mean = est.select(std::slice::from_ref(k))?.mean().clone();
                        dynamics.insert(k.name().to_string(), dubins_dynamics(cfg, &mean, layout.steering(cfg, id, t), run.dt));
                    }
                    *rep = agent.predict(&dynamics).map_err(|e| step_error(step, agent.id(), e))?;
                }
            }
            for (a, agent) in agents.iter_mut().enumerate() {
                let i = agent.id();
                let est = agent.estimate().map_err(|e| step_error(step, i, e))?;
                let r = layout.noise(cfg, i);
                let own_key = agent.key(&pose_name(i))?;
                let pose = est.select(std::slice::from_ref(&own_key))?.mean().clone();
                for (l, z) in &stream.measurements[step][a].landmarks {
                    let point = layout.landmarks[*l];
                    let jac = landmark_jacobian(&pose, &point);
                    add_linearized_measurement(agent.graph_mut(), &[own_key.clone()], landmark_model(point), &jac, &r, z, &pose, &[0])?;
                }
                for (j, z) in &stream.measurements[step][a].relative {
                    let other_key = agent.key(&pose_name(*j))?;
                    let other = est.select(std::slice::from_ref(&other_key))?.mean().clone();
                    let x_hat = DVector::from_iterator(6, pose.iter().chain(other.iter()).copied());
                    let jac = relative_jacobian(&x_hat);
                    add_linearized_measurement(agent.graph_mut(), &[own_key.clone(), other_key], relative_model, &jac, &r, z, &x_hat, &[0])?;
                }
            }
            let mut records = Vec::new();
            for _ in 0..variant.rounds_per_step {
                records.extend(round(&mut agents, &layout.topology, &mut dropout).map_err(|e| step_error(step, 0, e))?);
            }
            let (_, central_cov) = &central[step];
            let row = agents
                .iter()
                .zip(&task_layouts)
                .zip(&reports)
                .map(|((agent, l), rep)| {
                    let est = agent.estimate().map_err(|e| step_error(step, agent.id(), e))?;
                    l.record(est.mean(), est.covariance(), &stream.truth[step], central_cov, *rep, bytes_sent(&records, agent.id()))
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

    if with_baseline {
        let mut dropout = DropoutModel::new(1.0 - run.dropout, seed, 1 + variants.len() as u64)?;
        let ego_est = run_cicl(cfg, &layout, &stream, run, &mut dropout)?;
        let ego_layouts = layout
            .robots
            .iter()
            .map(|&i| robot_layout(&[pose_name(i)], i, &index))
            .collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::with_capacity(run.steps);
        for (step, per_robot) in ego_est.iter().enumerate() {
            let (_, central_cov) = &central[step];
            let row = per_robot
                .iter()
                .zip(&ego_layouts)
                .map(|((m, c), l)| l.record(m, c, &stream.truth[step], central_cov, None, 0))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        estimators.push(EstimatorRun {
            label: "ci-cl".into(),
            steps: rows,
            deliveries: Vec::new(),
        });
    }

    Ok(RunOutput {
        seed,
        dt: run.dt,
        robots: layout.robots.clone(),
        group_labels: layout.robots.iter().map(|_| vec!["pos".to_string(), "theta".to_string()]).collect(),
        estimators,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FusionAlgorithm;

    #[test]
    fn default_topology_is_twenty_robot_loop() {
        let t = cl_default_topology(4, 5).unwrap();
        assert_eq!(t.nodes().len(), 20);
        assert_eq!(t.num_edges(), 24);
        assert!(t.is_cyclic());
        assert!(t.is_connected(&(1..=20).collect::<Vec<_>>()));
        assert_eq!(t.neighbors(5), vec![1, 4, 6]);
        assert_eq!(t.neighbors(1), vec![2, 5, 20]);
    }

    #[test]
    fn layout_geometry() {
        let cfg = ClConfig::default();
        let l = ClLayout::new(&cfg).unwrap();
        assert_eq!(l.landmarks.len(), 9);
        assert!(l.sigma_range.values().all(|s| [2.0, 4.0, 6.0].contains(s)));
        let p1 = &l.initial[&1];
        assert!((p1[0] - 35.0).abs() < 1e-9 && (p1[1] - 25.0).abs() < 1e-9);
        // Constant steering closes the loop radius.
        let phi = (cfg.wheelbase / cfg.loop_radius).atan();
        assert!((cfg.speed / cfg.wheelbase * phi.tan() - cfg.speed / cfg.loop_radius).abs() < 1e-12);
    }

    #[test]
    fn relay_matches_geometry() {
        let mean = DVector::from_column_slice(&[1.0, 2.0, PI / 2.0]);
        let z = DVector::from_column_slice(&[0.0, 3.0]);
        let (p, c) = relay_position(&mean, &DMatrix::zeros(3, 3), &z, &DMatrix::zeros(2, 2));
        assert!((p[0] - 1.0).abs() < 1e-12 && (p[1] - 5.0).abs() < 1e-12);
        assert!(c.norm() < 1e-12);
    }

    #[test]
    fn ci_update_shrinks_position_uncertainty() {
        let mut f = InformationFilter::new(&[("ego".into(), 3)]).unwrap();
        f.set_prior("ego", &DVector::zeros(3), &DMatrix::identity(3, 3)).unwrap();
        let before = f.moments().unwrap().1;
        ci_position_update(&mut f, &DVector::zeros(2), &(DMatrix::identity(2, 2) * 0.01), OmegaCost::Trace).unwrap();
        let after = f.moments().unwrap().1;
        assert!(after[(0, 0)] < before[(0, 0)]);
    }

    #[test]
    fn short_cl_run() {
        let cfg = ClConfig {
            groups: 2,
            group_size: 3,
            ..ClConfig::default()
        };
        let run = RunConfig {
            steps: 20,
            algo: FusionAlgorithm::HsCi,
            ..RunConfig::default()
        };
        let out = run_cl(&cfg, &run, &[Variant::new(FusionAlgorithm::HsCi, true)], true, 1, false).unwrap();
        let labels: Vec<&str> = out.estimators.iter().map(|e| e.label.as_str()).collect();
        assert_eq!(labels, vec!["centralized", "hsci-cons", "ci-cl"]);
        let last = out.estimators[1].steps.last().unwrap();
        assert!(last.iter().all(|s| s.nees.is_finite() && s.groups.len() == 2));
    }
}
