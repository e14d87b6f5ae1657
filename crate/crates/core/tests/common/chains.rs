//! Filtering and fusion runs checked against a textbook Kalman filter.

use std::collections::BTreeMap;

use fgddf::filtering::{add_measurement, add_prediction, roll_up, LinearDynamics, LinearMeasurement};
use fgddf::fusion::{ChannelInit, FusionAgent, FusionAlgorithm, FusionSettings, StateSpec};
use fgddf::gaussian::{CanonicalFactor, VariableKey};
use fgddf::graph::FactorGraph;
use fgddf::network::{round, DropoutModel, Topology};
use nalgebra::{DMatrix, DVector};

use super::*;

/// Runs graph filtering and a moment-form KF side by side and returns the
/// worst relative disagreement after each prediction and each update.
pub fn chain_disagreement(
    x0: DVector<f64>,
    p0: DMatrix<f64>,
    dynamics: &LinearDynamics,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    truth_seed: u64,
    steps: usize,
) -> f64 {
    let n = x0.len();
    let mut kf = MomentKf {
        x: x0.clone(),
        p: p0.clone(),
    };
    let mut g = FactorGraph::new();
    let mut cur = VariableKey::new("x", 0, n);
    let info = p0.clone().try_inverse().unwrap();
    g.add_factor(CanonicalFactor::new(vec![cur.clone()], &info * &x0, info).unwrap())
        .unwrap();

    let mut rn = rng(truth_seed);
    let mut truth = &x0 + gaussian_draw(&mut rn, &p0);
    let gu = dynamics.offset();
    let mut worst: f64 = 0.0;
    let compare = |g: &FactorGraph, kf: &MomentKf, worst: &mut f64| {
        assert_eq!(g.num_variables(), 1);
        let m = g.joint_density().unwrap().to_moments();
        *worst = worst.max(rel_err(m.covariance(), &kf.p)).max(rel_err_v(m.mean(), &kf.x));
    };
    for _ in 0..steps {
        truth = &dynamics.f * &truth + &gu + gaussian_draw(&mut rn, &dynamics.q);
        let y = h * &truth + gaussian_draw(&mut rn, r);

        let next = add_prediction(&mut g, &cur, dynamics).unwrap();
        roll_up(&mut g, std::slice::from_ref(&cur)).unwrap();
        cur = next;
        kf.predict(&dynamics.f, &gu, &dynamics.q);
        compare(&g, &kf, &mut worst);

        add_measurement(&mut g, std::slice::from_ref(&cur), &LinearMeasurement::new(h.clone(), r.clone(), y.clone()))
            .unwrap();
        kf.update(h, r, &y);
        compare(&g, &kf, &mut worst);
    }
    worst
}

/// 50-step style scalar chain with a control input.
pub fn scalar_chain_disagreement(steps: usize) -> f64 {
    let dynamics = LinearDynamics::new(
        DMatrix::from_element(1, 1, 0.95),
        DMatrix::from_element(1, 1, 0.5),
        DVector::from_element(1, 1.2),
        DMatrix::from_element(1, 1, 0.3),
    );
    chain_disagreement(
        DVector::from_element(1, 2.0),
        DMatrix::from_element(1, 1, 4.0),
        &dynamics,
        &DMatrix::from_element(1, 1, 1.5),
        &DMatrix::from_element(1, 1, 0.7),
        11,
        steps,
    )
}

/// NCV target observed in position.
pub fn ncv_chain_disagreement(steps: usize) -> f64 {
    let dynamics = LinearDynamics::autonomous(ncv(0.1), DMatrix::identity(4, 4) * 0.08);
    chain_disagreement(
        DVector::from_vec(vec![3.0, 1.0, -2.0, 0.5]),
        DMatrix::identity(4, 4) * 10.0,
        &dynamics,
        &ncv_position(),
        &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 5.0]),
        12,
        steps,
    )
}

const DT: f64 = 0.1;

/// Stacked state `(s, x)`: a 2-dim static bias followed by a 4-dim NCV target,
/// matching the agents' canonical variable order.
pub fn stacked_dynamics() -> (DMatrix<f64>, DMatrix<f64>) {
    let mut f = DMatrix::identity(6, 6);
    f.view_mut((2, 2), (4, 4)).copy_from(&ncv(DT));
    let mut q = DMatrix::zeros(6, 6);
    q.view_mut((2, 2), (4, 4)).fill_with_identity();
    (f, q * 0.08)
}

/// `y = P x + s + v`: the bias-coupled position measurement.
pub fn stacked_h() -> DMatrix<f64> {
    let mut h = DMatrix::zeros(2, 6);
    h.view_mut((0, 0), (2, 2)).fill_with_identity();
    h.view_mut((0, 2), (2, 4)).copy_from(&ncv_position());
    h
}

pub fn agent_noise(id: u32) -> DMatrix<f64> {
    let d = [(1.0, 5.0), (3.0, 3.0), (4.0, 4.0), (5.0, 1.0)][(id as usize - 1) % 4];
    DMatrix::from_row_slice(2, 2, &[d.0, 0.0, 0.0, d.1])
}

/// Homogeneous agents on a chain `1 - 2 - … - n`, all starting from the same prior.
pub fn chain_agents(n: u32, algo: FusionAlgorithm, x0: &DVector<f64>, p0: &DMatrix<f64>) -> (Vec<FusionAgent>, Topology) {
    let topo = Topology::new((1..n).map(|i| (i, i + 1))).unwrap();
    let info = p0.clone().try_inverse().unwrap();
    let mut agents = Vec::new();
    for id in 1..=n {
        let mut a = FusionAgent::new(
            id,
            vec![StateSpec::dynamic("x", 4), StateSpec::fixed("s", 2)],
            FusionSettings::new(algo, false),
        )
        .unwrap();
        let scope = vec![a.key("s").unwrap(), a.key("x").unwrap()];
        a.add_factor(CanonicalFactor::new(scope, &info * x0, info.clone()).unwrap()).unwrap();
        for j in topo.neighbors(id) {
            a.add_neighbor(j, &["s".to_string(), "x".to_string()]).unwrap();
        }
        a.initialize_channels(ChannelInit::PriorMarginal).unwrap();
        agents.push(a);
    }
    (agents, topo)
}

/// Runs `steps` steps of measure/fuse and returns the worst relative deviation
/// of any agent's posterior from the centralized Kalman filter.
pub fn homogeneous_cf_deviation(n: u32, rounds: usize, steps: usize) -> f64 {
    let x0 = DVector::from_vec(vec![0.0, 0.0, 5.0, 1.0, -3.0, 0.5]);
    let p0 = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 5.0, 10.0, 10.0, 10.0, 10.0]));
    let (mut agents, topo) = chain_agents(n, FusionAlgorithm::HsCf, &x0, &p0);
    let (f, q) = stacked_dynamics();
    let h = stacked_h();
    let mut kf = MomentKf {
        x: x0.clone(),
        p: p0.clone(),
    };
    let mut rn = rng(77);
    let mut truth = &x0 + gaussian_draw(&mut rn, &p0);
    let dynamics: BTreeMap<String, LinearDynamics> =
        [("x".to_string(), LinearDynamics::autonomous(ncv(DT), DMatrix::identity(4, 4) * 0.08))].into();
    let mut lossless = DropoutModel::lossless();
    let mut worst: f64 = 0.0;
    for step in 0..steps {
        if step > 0 {
            let mut w = DVector::zeros(6);
            w.rows_mut(2, 4).copy_from(&gaussian_draw(&mut rn, &(DMatrix::identity(4, 4) * 0.08)));
            truth = &f * &truth + w;
            kf.predict(&f, &DVector::zeros(6), &q);
            for a in agents.iter_mut() {
                a.predict(&dynamics).unwrap();
            }
        }
        for a in agents.iter_mut() {
            let r = agent_noise(a.id());
            let y = &h * &truth + gaussian_draw(&mut rn, &r);
            a.measure(&["s", "x"], &LinearMeasurement::new(h.clone(), r.clone(), y.clone())).unwrap();
            kf.update(&h, &r, &y);
        }
        for _ in 0..rounds {
            round(&mut agents, &topo, &mut lossless).unwrap();
        }
        for a in &agents {
            let m = a.estimate().unwrap();
            worst = worst.max(rel_err(m.covariance(), &kf.p)).max(rel_err_v(m.mean(), &kf.x));
        }
    }
    worst
}

