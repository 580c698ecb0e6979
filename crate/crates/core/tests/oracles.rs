mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use psdl_core::dist::{JointDistribution, ScalarDistribution};
use psdl_core::engine;
use psdl_core::harness::collapse_error;
use psdl_core::manifold::{lift, lift_integral, lift_quadrature, sojourn_limit_cdf, LiftMethod};
use psdl_core::measure::{quadrant_distance, PointMeasure, QuadrantGrid};
use psdl_core::quadrature::TailOptions;
use psdl_core::rbm::{self, RbmSpec};

use common::{lifted_cloud, naive_departures, scenario};

fn hyperexp() -> ScalarDistribution {
    ScalarDistribution::Hyperexponential {
        weights: vec![0.5, 0.5],
        rates: vec![2.0, 2.0 / 3.0],
    }
}

#[test]
fn engine_agrees_with_time_stepping_per_service_family() {
    let families = [
        ScalarDistribution::exponential(1.0),
        ScalarDistribution::deterministic(1.0),
        ScalarDistribution::uniform(0.2, 1.8),
        hyperexp(),
    ];
    for (k, nu) in families.into_iter().enumerate() {
        let joint = JointDistribution::product(nu, ScalarDistribution::PointmassZero);
        let cfg = scenario(0.7, ScalarDistribution::exponential(1.0), joint, &[(0.4, 0.0), (1.3, 0.0)], 12.0, vec![], 70 + k as u64);
        let out = engine::run(&cfg).unwrap();
        assert!(out.jobs.len() <= 30);
        let naive = naive_departures(&out.jobs, 2e-5, 1e6);
        for d in &out.departures {
            let n = naive[d.id].expect("naive run finishes the job");
            assert!((n - (d.arrival + d.sojourn)).abs() < 2e-4, "job {}: {n} vs {}", d.id, d.arrival + d.sojourn);
        }
    }
}

#[test]
fn saturated_deterministic_queue_sojourns_equal_queue_length() {
    // ten unit jobs and no arrivals leave together at t = 10
    let joint = JointDistribution::product(ScalarDistribution::deterministic(1.0), ScalarDistribution::PointmassZero);
    let mut cfg = scenario(1e-9, ScalarDistribution::deterministic(1.0), joint, &[(1.0, 0.0); 10], 20.0, vec![], 3);
    cfg.first_interarrival = Some(ScalarDistribution::deterministic(1e12));
    let out = engine::run(&cfg).unwrap();
    assert_eq!(out.departures.len(), 10);
    for d in &out.departures {
        assert!((d.sojourn - 10.0).abs() < 1e-9);
    }
    let nu = ScalarDistribution::deterministic(1.0);
    let z = 2.5;
    assert_eq!(sojourn_limit_cdf(&nu, z, z).unwrap(), 0.0);
    assert_eq!(sojourn_limit_cdf(&nu, z, z * (1.0 + 1e-12)).unwrap(), 1.0);
    assert_eq!(sojourn_limit_cdf(&nu, z, 0.5 * z).unwrap(), 0.0);
}

#[test]
fn closed_form_lift_matches_quadrature_off_axis() {
    let nu = ScalarDistribution::exponential(1.3);
    for lead in [
        ScalarDistribution::PointmassZero,
        ScalarDistribution::exponential(0.8),
        ScalarDistribution::deterministic(0.7),
        ScalarDistribution::uniform(-1.0, 2.0),
    ] {
        let joint = JointDistribution::product(nu.clone(), lead);
        for z in [0.3, 1.0, 3.0] {
            let a = lift(&joint, 1.3, z).unwrap();
            assert_eq!(a.method, LiftMethod::ClosedFormProduct);
            let b = lift_quadrature(&joint, 1.3, z).unwrap();
            for x in [0.0, 0.25, 1.0, 2.5] {
                for k in 0..12 {
                    let y = -4.0 + 0.7 * k as f64;
                    let (ca, cb) = (a.eval(x, y), b.eval(x, y));
                    assert!((ca - cb).abs() < 1e-6, "{joint:?} z={z} ({x},{y}): {ca} vs {cb}");
                }
            }
        }
    }
}

#[test]
fn quadrature_refinement_ladder() {
    let joints = [
        JointDistribution::product(ScalarDistribution::uniform(0.0, 2.0), ScalarDistribution::exponential(1.0)),
        JointDistribution::product(hyperexp(), ScalarDistribution::deterministic(1.0)),
        JointDistribution::linear(ScalarDistribution::exponential(1.0), 1.5),
    ];
    let coarse = TailOptions {
        abs_tol: 1e-7,
        initial_step: 1.0,
        ..TailOptions::default()
    };
    let fine = TailOptions {
        abs_tol: 1e-9,
        tail_cutoff: 1e-13,
        ..coarse
    };
    for joint in &joints {
        for z in [0.5, 2.0] {
            for (x, y) in [(0.0, f64::NEG_INFINITY), (0.0, -1.0), (0.5, 0.0), (1.5, 1.0), (3.0, -2.0)] {
                let a = lift_integral(joint, 1.0, z, x, y, coarse);
                let b = lift_integral(joint, 1.0, z, x, y, fine);
                assert!(a.converged && b.converged);
                assert!((a.value - b.value).abs() <= 2e-7, "{joint:?} z={z} ({x},{y}): {} vs {}", a.value, b.value);
            }
        }
    }
}

#[test]
fn lifted_measure_matches_its_own_point_cloud() {
    let grid = QuadrantGrid::default();
    let n = 10_000;
    let cases = [
        JointDistribution::product(ScalarDistribution::exponential(1.0), ScalarDistribution::exponential(1.0)),
        JointDistribution::product(ScalarDistribution::uniform(0.0, 2.0), ScalarDistribution::uniform(-1.0, 1.0)),
        JointDistribution::linear(ScalarDistribution::exponential(1.0), 1.0),
    ];
    for (k, joint) in cases.iter().enumerate() {
        for z in [0.5, 1.5] {
            let cloud = lifted_cloud(joint, z, n, 900 + k as u64);
            let r = n as f64 / z;
            let unscaled = PointMeasure::from_pairs(cloud.points.iter().map(|p| (p.residual, p.lead * r)));
            let err = collapse_error(&unscaled, r, joint, 1.0, &grid).unwrap();
            let tol = 2.0 * z / (n as f64).sqrt();
            assert!(err <= tol, "{joint:?} z={z}: {err} > {tol}");
            let direct = quadrant_distance(&cloud, &lift(joint, 1.0, z).unwrap(), &grid).unwrap();
            assert!((direct - err).abs() < 1e-9);
        }
    }
}

/// `(1/m) ∫_x^∞ ν((u, ∞)) du` by a fine midpoint rule.
fn excess_by_midpoints(nu: &ScalarDistribution, x: f64) -> f64 {
    let (upper, h) = (x + 60.0, 1e-4);
    let steps = ((upper - x) / h) as usize;
    let s: f64 = (0..steps).map(|i| nu.survival_open(x + (i as f64 + 0.5) * h)).sum();
    s * h / nu.mean()
}

#[test]
fn excess_lifetime_matches_direct_integration() {
    for nu in [
        ScalarDistribution::exponential(0.7),
        ScalarDistribution::uniform(0.5, 2.5),
        ScalarDistribution::deterministic(1.5),
        hyperexp(),
    ] {
        for x in [0.0, 0.3, 1.0, 2.0, 4.0] {
            let a = nu.excess_lifetime_survival(x).unwrap();
            let b = excess_by_midpoints(&nu, x);
            assert!((a - b).abs() < 1e-6, "{nu:?} at {x}: {a} vs {b}");
        }
    }
}

#[test]
fn lead_marginal_scales_with_the_queue_length() {
    // with λ = δ₀ the mass at lead below −y is α ∫_y^∞ ν((u/z, ∞)) du
    for nu in [ScalarDistribution::exponential(1.0), ScalarDistribution::uniform(0.0, 2.0)] {
        let joint = JointDistribution::product(nu.clone(), ScalarDistribution::PointmassZero);
        for z in [0.5, 2.0] {
            let m = lift_quadrature(&joint, 1.0, z).unwrap();
            for y in [0.1, 0.5, 1.0, 2.5] {
                let direct = z * excess_by_midpoints(&nu, y / z) * nu.mean();
                let via = m.total_mass() - m.eval(0.0, -y);
                assert!((direct - via).abs() < 1e-5, "{nu:?} z={z} y={y}: {direct} vs {via}");
            }
        }
    }
}

#[test]
fn euler_scheme_is_stable_under_step_halving() {
    let spec = RbmSpec {
        drift: -1.0,
        variance: 2.0,
        x0: 0.0,
    };
    let mean_at = |dt: f64| {
        let mut acc = 0.0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
            acc += rbm::simulate_with(&spec, 1e4, dt, &mut rng, |_, _| {}).unwrap().time_average;
        }
        acc / 20.0
    };
    let (a, b) = (mean_at(1e-3), mean_at(5e-4));
    assert!(((a - b) / b).abs() < 0.02, "{a} vs {b}");
}

#[test]
fn rbm_occupation_matches_stationary_cdf() {
    let spec = RbmSpec {
        drift: -0.5,
        variance: 1.0,
        x0: 0.0,
    };
    let levels = [0.25, 0.5, 1.0, 2.0, 3.0];
    let mut below = [0u64; 5];
    let mut steps = 0u64;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    rbm::simulate_with(&spec, 1e4, 2.5e-4, &mut rng, |_, x| {
        steps += 1;
        for (c, l) in below.iter_mut().zip(levels) {
            *c += (x <= l) as u64;
        }
    })
    .unwrap();
    for (c, l) in below.iter().zip(levels) {
        let emp = *c as f64 / steps as f64;
        let f = rbm::stationary_cdf(&spec, l).unwrap();
        assert!((emp - f).abs() < 0.02, "level {l}: {emp} vs {f}");
    }
}

#[test]
fn stationary_median_matches_long_run_median() {
    let spec = RbmSpec {
        drift: -1.0,
        variance: 2.0,
        x0: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut xs: Vec<f64> = rbm::simulate(&spec, 2e4, 1e-3, 50, &mut rng).unwrap().into_iter().map(|p| p.1).collect();
    xs.sort_by(f64::total_cmp);
    let med = xs[xs.len() / 2];
    let q = rbm::stationary_quantile(&spec, 0.5).unwrap();
    assert!((med - q).abs() < 0.05, "{med} vs {q}");
}
