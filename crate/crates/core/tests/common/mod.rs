//! Independent reference computations used by the integration tests.

#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use psdl_core::dist::{JointDistribution, JointKind, ScalarDistribution};
use psdl_core::engine::{InitialCondition, InitialJob, JobRecord, ScenarioConfig};
use psdl_core::measure::PointMeasure;

/// Departure times from fixed-step forward-Euler depletion of every residual
/// at rate `1/Z`. Arrivals split a step; a departure inside a step is
/// placed by linear interpolation. Returns `None` for jobs still present
/// after `t_max`.
pub fn naive_departures(jobs: &[JobRecord], dt: f64, t_max: f64) -> Vec<Option<f64>> {
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by(|&a, &b| jobs[a].arrival.total_cmp(&jobs[b].arrival).then(a.cmp(&b)));
    let mut next = 0;
    let mut t = 0.0;
    let mut active: Vec<(usize, f64)> = Vec::new();
    let mut out = vec![None; jobs.len()];
    while t < t_max && (next < order.len() || !active.is_empty()) {
        while next < order.len() && jobs[order[next]].arrival <= t {
            let j = &jobs[order[next]];
            active.push((j.id, j.service_req));
            next += 1;
        }
        let next_arrival = order.get(next).map(|&i| jobs[i].arrival).unwrap_or(f64::INFINITY);
        if active.is_empty() {
            t = next_arrival;
            continue;
        }
        let end = (t + dt).min(next_arrival);
        let h = end - t;
        let rate = 1.0 / active.len() as f64;
        for (id, res) in active.iter_mut() {
            let before = *res;
            *res -= rate * h;
            if *res <= 0.0 {
                out[*id] = Some(t + before / rate);
            }
        }
        active.retain(|(_, res)| *res > 0.0);
        t = end;
    }
    out
}

/// Scenario whose interarrival times are drawn from `interarrival` with
/// mean `1/rate`, started from the given initial jobs.
pub fn scenario(
    rate: f64,
    interarrival: ScalarDistribution,
    joint: JointDistribution,
    initial: &[(f64, f64)],
    horizon: f64,
    snapshot_times: Vec<f64>,
    seed: u64,
) -> ScenarioConfig {
    ScenarioConfig {
        r: 1.0,
        arrival_rate: rate,
        interarrival,
        first_interarrival: None,
        joint,
        lead_scale: 1.0,
        initial_condition: if initial.is_empty() {
            InitialCondition::Empty
        } else {
            InitialCondition::Jobs(
                initial
                    .iter()
                    .map(|&(service, lead)| InitialJob { service, lead })
                    .collect(),
            )
        },
        horizon,
        snapshot_times,
        seed,
    }
}

/// The two hand-traced systems: residuals 2 and 3 with no arrivals, and a
/// residual-1 job joined at `t = 0.5` by a job of size 1.
pub fn hand_traces() -> Vec<(ScenarioConfig, Vec<f64>)> {
    let never = ScalarDistribution::deterministic(1.0);
    let joint = JointDistribution::product(ScalarDistribution::deterministic(1.0), ScalarDistribution::PointmassZero);
    let mut a = scenario(1e-9, never.clone(), joint.clone(), &[(2.0, 0.0), (3.0, 0.0)], 10.0, vec![0.0, 1.0, 2.0], 1);
    a.first_interarrival = Some(ScalarDistribution::deterministic(1e12));
    let mut b = scenario(1e-6, never, joint, &[(1.0, 0.0)], 10.0, vec![0.0, 1.0, 2.0], 1);
    b.first_interarrival = Some(ScalarDistribution::deterministic(0.5));
    vec![(a, vec![4.0, 5.0]), (b, vec![1.5, 2.0])]
}

/// Draw from the service law biased by its size, `v ν(dv) / mean`.
pub fn size_biased<R: Rng>(nu: &ScalarDistribution, rng: &mut R) -> f64 {
    match nu {
        ScalarDistribution::Exponential { rate } => {
            let e1: f64 = -(1.0 - rng.random::<f64>()).ln();
            let e2: f64 = -(1.0 - rng.random::<f64>()).ln();
            (e1 + e2) / rate
        }
        ScalarDistribution::Deterministic { value } => *value,
        ScalarDistribution::Uniform { lo, hi } => {
            let u: f64 = rng.random();
            (lo * lo + u * (hi * hi - lo * lo)).sqrt()
        }
        other => panic!("no size-biased sampler for {other:?}"),
    }
}

/// `n` points with total mass `z` drawn from the lifted measure: a
/// size-biased service `V`, `U` uniform on `[0, zV]`, point `(V − U/z, L − U)`.
pub fn lifted_cloud(joint: &JointDistribution, z: f64, n: usize, seed: u64) -> PointMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = PointMeasure::new();
    for _ in 0..n {
        let (nu, lead) = match &joint.kind {
            JointKind::Product { service, lead } => (service, Some(lead)),
            JointKind::Linear { service, .. } => (service, None),
            JointKind::Empirical { .. } => panic!("cloud needs a parametric law"),
        };
        let v = size_biased(nu, &mut rng);
        let l = match (lead, &joint.kind) {
            (Some(lead), _) => lead.sample(&mut rng),
            (None, JointKind::Linear { c, .. }) => c * v,
            _ => unreachable!(),
        };
        let u = rng.random::<f64>() * z * v;
        m.push(v - u / z, l - u, z / n as f64);
    }
    m
}

/// Random product law with mean-one service from a small family.
pub fn random_joint<R: Rng>(rng: &mut R) -> JointDistribution {
    let service = match rng.random_range(0..4) {
        0 => ScalarDistribution::exponential(1.0),
        1 => ScalarDistribution::deterministic(1.0),
        2 => ScalarDistribution::uniform(0.0, 2.0),
        _ => ScalarDistribution::Hyperexponential {
            weights: vec![0.5, 0.5],
            rates: vec![2.0, 2.0 / 3.0],
        },
    };
    match rng.random_range(0..4) {
        0 => JointDistribution::product(service, ScalarDistribution::PointmassZero),
        1 => JointDistribution::product(service, ScalarDistribution::exponential(0.5)),
        2 => JointDistribution::product(service, ScalarDistribution::uniform(-1.0, 3.0)),
        _ => JointDistribution::linear(service, 2.0),
    }
}
