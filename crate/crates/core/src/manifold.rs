//! The invariant manifold `{ϑ_e^z : z ≥ 0}`, the lifting map and the
//! limiting profiles derived from it.
//!
//! `ϑ_e^z([x, ∞) × [y, ∞)) = α ∫₀^∞ ϑ([x + u/z, ∞) × [y + u, ∞)) du`.

use serde::{Deserialize, Serialize};

use crate::dist::{JointDistribution, JointKind, ScalarDistribution};
use crate::error::{domain, Error, Result};
use crate::measure::{QuadrantFunction, QuadrantGrid, QuadrantMeasure};
use crate::quadrature::{integrate_tail, Integral, TailOptions};

/// Absolute tolerance for lifted masses.
pub const LIFT_ABS_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftMethod {
    Quadrature,
    Exact,
    ClosedFormProduct,
}

/// `ϑ_e^z` for one value of `z`.
#[derive(Debug, Clone)]
pub struct InvariantMeasure {
    pub z: f64,
    pub alpha: f64,
    pub source: JointDistribution,
    pub method: LiftMethod,
    pub repr: QuadrantFunction,
}

impl InvariantMeasure {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.repr.eval(x, y)
    }

    /// Quadrant mass with the quadrature diagnostics surfaced.
    pub fn try_eval(&self, x: f64, y: f64) -> Result<f64> {
        if x.is_nan() || x < 0.0 || y.is_nan() {
            return Err(domain(format!("invalid quadrant corner ({x}, {y})")));
        }
        if self.z == 0.0 {
            return Ok(0.0);
        }
        match self.method {
            LiftMethod::Quadrature => {
                let r = lift_integral(&self.source, self.alpha, self.z, x, y, default_tail(&self.source, self.z));
                if r.converged {
                    Ok(r.value)
                } else {
                    Err(Error::Quadrature {
                        achieved: r.error,
                        requested: LIFT_ABS_TOL,
                    })
                }
            }
            _ => Ok(self.eval(x, y)),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.repr.total()
    }

    /// `ϑ_e^z(ℝ₊ × (−∞, y])`. The lead marginal of a lifted measure has no
    /// atoms, so this is the complement of the `[y, ∞)` half-space.
    pub fn lower_lead_mass(&self, y: f64) -> f64 {
        (self.total_mass() - self.eval(0.0, y)).max(0.0)
    }

    /// Precomputes the grid values used by repeated distance queries.
    pub fn cached_on(mut self, grid: &QuadrantGrid) -> Self {
        self.repr = self.repr.with_cached_grid(grid);
        self
    }
}

impl QuadrantMeasure for InvariantMeasure {
    fn quadrant(&self, x: f64, y: f64) -> f64 {
        self.eval(x, y)
    }

    fn total(&self) -> f64 {
        self.total_mass()
    }

    fn grid_values(&self, grid: &QuadrantGrid) -> Vec<f64> {
        self.repr.grid_values(grid)
    }
}

fn default_tail(joint: &JointDistribution, z: f64) -> TailOptions {
    let scale = (z * joint.mean_service()).max(1e-3);
    TailOptions {
        initial_step: scale,
        ..TailOptions::default()
    }
}

/// `α ∫₀^∞ ϑ([x + u/z, ∞) × [y + u, ∞)) du` by adaptive quadrature, for `z > 0`.
pub fn lift_integral(joint: &JointDistribution, alpha: f64, z: f64, x: f64, y: f64, opts: TailOptions) -> Integral {
    let f = |u: f64| joint.quadrant(x + u / z, y + u);
    let bps = joint.lift_breakpoints(x, y, z);
    let opts = TailOptions {
        abs_tol: opts.abs_tol.min(LIFT_ABS_TOL) / alpha,
        ..opts
    };
    let r = integrate_tail(&f, &bps, opts);
    Integral {
        value: alpha * r.value,
        error: alpha * r.error,
        converged: r.converged,
    }
}

/// Exact lift of a finitely supported joint law: each atom `(v, l)` lifts to
/// the segment `{(v − u/z, l − u) : 0 ≤ u ≤ zv}` of length `zv` in `u`.
fn empirical_lift(points: &[[f64; 2]], weights: &[f64], alpha: f64, z: f64, x: f64, y: f64) -> f64 {
    let total: f64 = if weights.is_empty() {
        points.len() as f64
    } else {
        weights.iter().sum()
    };
    let mut acc = 0.0;
    for (i, p) in points.iter().enumerate() {
        let w = if weights.is_empty() { 1.0 } else { weights[i] };
        let du = (z * (p[0] - x)).min(p[1] - y);
        if du > 0.0 {
            acc += w * du;
        }
    }
    alpha * acc / total
}

/// The lifting map `z ↦ ϑ_e^z`.
///
/// Exponential service with a lead law covered by
/// [`exponential_lead_profile`] is evaluated in closed form; finitely
/// supported laws are lifted exactly; everything else goes through
/// [`lift_quadrature`].
pub fn lift(joint: &JointDistribution, alpha: f64, z: f64) -> Result<InvariantMeasure> {
    check_lift_input(joint, alpha, z)?;
    if z == 0.0 {
        return Ok(zero_lift(joint, alpha));
    }
    if let JointKind::Product { service, lead } = &joint.kind {
        if let ScalarDistribution::Exponential { rate: mu } = *service {
            if exponential_lead_profile(service, lead, alpha, z, 0.0).is_some() {
                // ϑ_e^z([x,∞)×[y,∞)) = e^{−μx} · (αz/μ − lower lead mass at y)
                let (nu, lambda) = (service.clone(), lead.clone());
                let total = alpha * z / mu;
                let f = move |x: f64, y: f64| {
                    if y == f64::NEG_INFINITY {
                        return (-mu * x).exp() * total;
                    }
                    let lower = exponential_lead_profile(&nu, &lambda, alpha, z, y).unwrap_or(0.0);
                    (-mu * x).exp() * (total - lower).max(0.0)
                };
                return Ok(InvariantMeasure {
                    z,
                    alpha,
                    source: joint.clone(),
                    method: LiftMethod::ClosedFormProduct,
                    repr: QuadrantFunction::new(total, f),
                });
            }
        }
    }
    if let JointKind::Empirical { points, weights } = &joint.kind {
        let (p, w) = (points.clone(), weights.clone());
        let total = empirical_lift(&p, &w, alpha, z, 0.0, f64::NEG_INFINITY);
        return Ok(InvariantMeasure {
            z,
            alpha,
            source: joint.clone(),
            method: LiftMethod::Exact,
            repr: QuadrantFunction::new(total, move |x, y| empirical_lift(&p, &w, alpha, z, x, y)),
        });
    }
    lift_quadrature(joint, alpha, z)
}

/// The lifting map evaluated by adaptive quadrature of the defining
/// integral, whatever the joint law.
pub fn lift_quadrature(joint: &JointDistribution, alpha: f64, z: f64) -> Result<InvariantMeasure> {
    check_lift_input(joint, alpha, z)?;
    if z == 0.0 {
        return Ok(zero_lift(joint, alpha));
    }
    let opts = default_tail(joint, z);
    let mass = lift_integral(joint, alpha, z, 0.0, f64::NEG_INFINITY, opts);
    if !mass.converged {
        return Err(Error::Quadrature {
            achieved: mass.error,
            requested: LIFT_ABS_TOL,
        });
    }
    let j = joint.clone();
    Ok(InvariantMeasure {
        z,
        alpha,
        source: joint.clone(),
        method: LiftMethod::Quadrature,
        repr: QuadrantFunction::new(mass.value, move |x, y| lift_integral(&j, alpha, z, x, y, opts).value),
    })
}

fn check_lift_input(joint: &JointDistribution, alpha: f64, z: f64) -> Result<()> {
    if !(z.is_finite() && z >= 0.0) {
        return Err(domain(format!("lift needs finite z ≥ 0, got {z}")));
    }
    let report = joint.check_assumptions(alpha);
    if !report.passed() {
        return Err(domain(format!(
            "joint law fails the heavy-traffic assumptions: {}",
            report.failures().join(", ")
        )));
    }
    Ok(())
}

fn zero_lift(joint: &JointDistribution, alpha: f64) -> InvariantMeasure {
    InvariantMeasure {
        z: 0.0,
        alpha,
        source: joint.clone(),
        method: LiftMethod::Exact,
        repr: QuadrantFunction::zero(),
    }
}

/// `ϑ_e^z(ℝ₊ × (−∞, y])` for a product law `ν ⊗ λ`: the lead marginal is
/// `λ ⋆ ν̄_e^z`, with `ν̄_e^z` of density `α ν((−u/z, ∞))` on `u ≤ 0`.
///
/// Closed form when `ν` is exponential and `λ` is exponential,
/// deterministic, uniform or a point mass at zero; convolution quadrature
/// otherwise.
pub fn lead_profile_product(
    nu: &ScalarDistribution,
    lambda: &ScalarDistribution,
    alpha: f64,
    z: f64,
    y: f64,
) -> Result<f64> {
    if !(z.is_finite() && z >= 0.0) || y.is_nan() {
        return Err(domain(format!("lead profile needs finite z ≥ 0 and y, got z = {z}, y = {y}")));
    }
    if z == 0.0 || y == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let total = alpha * z * nu.mean();
    if y == f64::INFINITY {
        return Ok(total);
    }
    if let Some(v) = exponential_lead_profile(nu, lambda, alpha, z, y) {
        return Ok(v);
    }
    lead_profile_convolution(nu, lambda, alpha, z, y)
}

/// The convolution integral, written as total mass minus the mass above `y`
/// so the integrand `λ((y + s, ∞)) ν((s/z, ∞))` is monotone in `s`.
pub fn lead_profile_convolution(
    nu: &ScalarDistribution,
    lambda: &ScalarDistribution,
    alpha: f64,
    z: f64,
    y: f64,
) -> Result<f64> {
    if z == 0.0 {
        return Ok(0.0);
    }
    let total = alpha * z * nu.mean();
    let f = |s: f64| lambda.survival_open(y + s) * nu.survival_open(s / z);
    let mut bps: Vec<f64> = lambda.breakpoints().into_iter().map(|k| k - y).collect();
    bps.extend(nu.breakpoints().into_iter().map(|k| z * k));
    bps.retain(|s| s.is_finite() && *s > 0.0);
    let opts = TailOptions {
        initial_step: (z * nu.mean()).max(1e-3),
        abs_tol: LIFT_ABS_TOL / alpha,
        ..TailOptions::default()
    };
    let r = integrate_tail(&f, &bps, opts);
    if !r.converged {
        return Err(Error::Quadrature {
            achieved: alpha * r.error,
            requested: LIFT_ABS_TOL,
        });
    }
    Ok((total - alpha * r.value).max(0.0))
}

/// Exponential service: with `ν` exponential of rate `μ`, the lead
/// marginal is `λ` convolved with a reflected exponential of rate `μ/z` and
/// mass `αz/μ`, so the profile is `(αz/μ) E[λ((−∞, y + E])]`, `E ~ exp(μ/z)`.
pub fn exponential_lead_profile(
    nu: &ScalarDistribution,
    lambda: &ScalarDistribution,
    alpha: f64,
    z: f64,
    y: f64,
) -> Option<f64> {
    let ScalarDistribution::Exponential { rate: mu } = nu else {
        return None;
    };
    let theta = mu / z;
    let mass = alpha * z / mu;
    let expected_cdf = match lambda {
        ScalarDistribution::Exponential { rate: m } => {
            let s0 = (-y).max(0.0);
            (-theta * s0).exp() - theta / (theta + m) * (-m * y - (theta + m) * s0).exp()
        }
        ScalarDistribution::Deterministic { value } => (-theta * (value - y).max(0.0)).exp(),
        ScalarDistribution::PointmassZero => (-theta * (-y).max(0.0)).exp(),
        ScalarDistribution::Uniform { lo, hi } => {
            // E[(y + E − k)⁺] for E ~ exp(θ)
            let ramp = |k: f64| {
                let d = k - y;
                if d <= 0.0 {
                    1.0 / theta - d
                } else {
                    (-theta * d).exp() / theta
                }
            };
            (ramp(*lo) - ramp(*hi)) / (hi - lo)
        }
        ScalarDistribution::Hyperexponential { .. } => return None,
    };
    Some(mass * expected_cdf.clamp(0.0, 1.0))
}

/// `τ*([y, ∞)) = z ν_e([y/z, ∞))`, the limiting profile of times in queue.
pub fn time_in_queue_profile(nu: &ScalarDistribution, z: f64, y: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(domain(format!("time in queue needs y ≥ 0, got {y}")));
    }
    if !(z.is_finite() && z >= 0.0) {
        return Err(domain(format!("time in queue needs finite z ≥ 0, got {z}")));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    Ok(z * nu.excess_lifetime_survival(y / z)?)
}

/// Limiting sojourn-time law `ν([0, y/z))` when the scaled queue length is `z`.
pub fn sojourn_limit_cdf(nu: &ScalarDistribution, z: f64, y: f64) -> Result<f64> {
    if !(z.is_finite() && z > 0.0) {
        return Err(domain(format!("sojourn limit needs a nonempty queue, got z = {z}")));
    }
    if !(y >= 0.0) {
        return Err(domain(format!("sojourn limit needs y ≥ 0, got {y}")));
    }
    if y == f64::INFINITY {
        return Ok(1.0);
    }
    Ok(nu.cdf_open(y / z))
}

/// `ϑ_e^z(ℝ₊ × [y, ∞))` when initial lead times are `c v`, with `α` the
/// inverse mean of `ν`.
///
/// For `0 < z ≤ c` no lifted mass sits at negative lead. For `z > c` and
/// `y ≤ 0` the argument `y/(c − z)` is nonnegative.
pub fn linear_deadline_profile(nu: &ScalarDistribution, c: f64, z: f64, y: f64) -> Result<f64> {
    if !(c.is_finite() && c > 0.0) {
        return Err(domain(format!("linear deadlines need c > 0, got {c}")));
    }
    if !(z.is_finite() && z >= 0.0) || y.is_nan() {
        return Err(domain(format!("linear profile needs finite z ≥ 0 and y, got z = {z}, y = {y}")));
    }
    nu.excess_lifetime_survival(0.0)?;
    let ne = |w: f64| nu.excess_survival_unchecked(w);
    if z == 0.0 {
        return Ok(0.0);
    }
    let v = if z <= c {
        if y <= 0.0 {
            z
        } else if z == c {
            c * ne(y / c)
        } else {
            c * ne(y / c) - (c - z) * ne(y / (c - z))
        }
    } else if y <= 0.0 {
        z + (c - z) * ne(y / (c - z))
    } else {
        c * ne(y / c)
    };
    Ok(v.max(0.0))
}

/// Drift and variance constants of the heavy-traffic limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeavyTrafficParams {
    pub alpha: f64,
    /// Standard deviation of the interarrival time.
    pub a: f64,
    /// Standard deviation of the service time.
    pub b: f64,
    pub gamma: f64,
    pub c_theta: f64,
    pub w_drift: f64,
    pub w_var: f64,
    pub z_drift: f64,
    pub z_var: f64,
}

pub fn ht_params(alpha: f64, a: f64, b: f64, gamma: f64) -> Result<HeavyTrafficParams> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(domain(format!("arrival rate must be > 0, got {alpha}")));
    }
    if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite() && gamma.is_finite()) {
        return Err(domain("standard deviations must be finite and ≥ 0"));
    }
    let k = 1.0 + alpha * alpha * b * b;
    let s2 = a * a + b * b;
    Ok(HeavyTrafficParams {
        alpha,
        a,
        b,
        gamma,
        c_theta: 2.0 * alpha / k,
        w_drift: -gamma,
        w_var: alpha * s2,
        z_drift: -2.0 * gamma * alpha / k,
        z_var: 4.0 * alpha.powi(3) * s2 / (k * k),
    })
}

/// Inputs shared by every profile solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileQuery {
    pub joint: JointDistribution,
    pub alpha: f64,
    pub z: f64,
}

/// A named way of evaluating a one-dimensional limiting profile at `y`.
pub trait ProfileSolver: Send + Sync {
    fn name(&self) -> &'static str;
    /// Column header for the value written next to `y`.
    fn quantity(&self) -> &'static str;
    fn evaluate(&self, q: &ProfileQuery, y: f64) -> Result<f64>;
}

fn product_parts(q: &ProfileQuery) -> Result<(&ScalarDistribution, &ScalarDistribution)> {
    match &q.joint.kind {
        JointKind::Product { service, lead } => Ok((service, lead)),
        _ => Err(domain("this profile needs a product joint law")),
    }
}

fn service_of(q: &ProfileQuery) -> Result<&ScalarDistribution> {
    q.joint
        .service_marginal()
        .ok_or_else(|| domain("this profile needs a parametric service law"))
}

struct LeadProduct;
struct LeadQuadrature;
struct TimeInQueue;
struct Sojourn;
struct LinearDeadline;

impl ProfileSolver for LeadProduct {
    fn name(&self) -> &'static str {
        "lead_product"
    }
    fn quantity(&self) -> &'static str {
        "mass_lead_at_most_y"
    }
    fn evaluate(&self, q: &ProfileQuery, y: f64) -> Result<f64> {
        let (nu, lambda) = product_parts(q)?;
        lead_profile_product(nu, lambda, q.alpha, q.z, y)
    }
}

impl ProfileSolver for LeadQuadrature {
    fn name(&self) -> &'static str {
        "lead_quadrature"
    }
    fn quantity(&self) -> &'static str {
        "mass_lead_at_most_y"
    }
    fn evaluate(&self, q: &ProfileQuery, y: f64) -> Result<f64> {
        let m = lift_quadrature(&q.joint, q.alpha, q.z)?;
        if y == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        Ok((m.total_mass() - m.try_eval(0.0, y)?).max(0.0))
    }
}

impl ProfileSolver for TimeInQueue {
    fn name(&self) -> &'static str {
        "time_in_queue"
    }
    fn quantity(&self) -> &'static str {
        "mass_time_in_queue_at_least_y"
    }
    fn evaluate(&self, q: &ProfileQuery, y: f64) -> Result<f64> {
        time_in_queue_profile(service_of(q)?, q.z, y)
    }
}

impl ProfileSolver for Sojourn {
    fn name(&self) -> &'static str {
        "sojourn"
    }
    fn quantity(&self) -> &'static str {
        "sojourn_cdf"
    }
    fn evaluate(&self, q: &ProfileQuery, y: f64) -> Result<f64> {
        sojourn_limit_cdf(service_of(q)?, q.z, y)
    }
}

impl ProfileSolver for LinearDeadline {
    fn name(&self) -> &'static str {
        "linear_deadline"
    }
    fn quantity(&self) -> &'static str {
        "mass_lead_at_least_y"
    }
    fn evaluate(&self, q: &ProfileQuery, y: f64) -> Result<f64> {
        match &q.joint.kind {
            JointKind::Linear { service, c } => linear_deadline_profile(service, *c, q.z, y),
            _ => Err(domain("linear_deadline needs a linear joint law")),
        }
    }
}

/// Every registered profile solver.
pub fn profile_solvers() -> Vec<Box<dyn ProfileSolver>> {
    vec![
        Box::new(LeadProduct),
        Box::new(LeadQuadrature),
        Box::new(TimeInQueue),
        Box::new(Sojourn),
        Box::new(LinearDeadline),
    ]
}

pub fn profile_solver(name: &str) -> Result<Box<dyn ProfileSolver>> {
    profile_solvers()
        .into_iter()
        .find(|s| s.name() == name)
        .ok_or_else(|| {
            let known: Vec<&str> = profile_solvers().iter().map(|s| s.name()).collect();
            Error::Config(format!("unknown profile '{name}', expected one of {}", known.join(", ")))
        })
}
