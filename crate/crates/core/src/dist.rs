//! Service-time, lead-time and interarrival laws.
//!
//! [`ScalarDistribution`] covers the one-dimensional laws (service times,
//! initial lead times, interarrival times). [`JointDistribution`] is the joint
//! law of a job's (service time, initial lead time) pair on the right
//! half-plane, evaluated through its upper-quadrant mass.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};

/// Relative tolerance used when matching the mean service time to `1/α`.
pub const MEAN_MATCH_RTOL: f64 = 1e-9;

/// A one-dimensional law, tagged by `kind` in config files.
///
/// `{"kind": "exponential", "rate": 1.0}`, `{"kind": "deterministic", "value": 2.0}`,
/// `{"kind": "uniform", "lo": 0.0, "hi": 2.0}`,
/// `{"kind": "hyperexponential", "weights": [0.5, 0.5], "rates": [0.5, 2.0]}`,
/// `{"kind": "pointmass_zero"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarDistribution {
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Hyperexponential { weights: Vec<f64>, rates: Vec<f64> },
    PointmassZero,
}

impl ScalarDistribution {
    pub fn exponential(rate: f64) -> Self {
        ScalarDistribution::Exponential { rate }
    }

    pub fn deterministic(value: f64) -> Self {
        ScalarDistribution::Deterministic { value }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        ScalarDistribution::Uniform { lo, hi }
    }

    /// Checks that the parameters describe a proper probability law.
    pub fn validate(&self) -> Result<()> {
        match self {
            ScalarDistribution::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(config(format!("exponential rate must be finite and > 0, got {rate}")));
                }
            }
            ScalarDistribution::Deterministic { value } => {
                if !value.is_finite() {
                    return Err(config(format!("deterministic value must be finite, got {value}")));
                }
            }
            ScalarDistribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(config(format!("uniform requires finite lo < hi, got [{lo}, {hi}]")));
                }
            }
            ScalarDistribution::Hyperexponential { weights, rates } => {
                if weights.is_empty() || weights.len() != rates.len() {
                    return Err(config("hyperexponential needs matching, nonempty weights and rates"));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(config("hyperexponential weights must be finite and > 0"));
                }
                if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                    return Err(config("hyperexponential rates must be finite and > 0"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(config(format!("hyperexponential weights must sum to 1, got {total}")));
                }
            }
            ScalarDistribution::PointmassZero => {}
        }
        Ok(())
    }

    /// Whether the support lies in `[0, ∞)`.
    pub fn is_nonnegative(&self) -> bool {
        match self {
            ScalarDistribution::Deterministic { value } => *value >= 0.0,
            ScalarDistribution::Uniform { lo, .. } => *lo >= 0.0,
            _ => true,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ScalarDistribution::Exponential { rate } => 1.0 / rate,
            ScalarDistribution::Deterministic { value } => *value,
            ScalarDistribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            ScalarDistribution::Hyperexponential { weights, rates } => {
                weights.iter().zip(rates).map(|(w, r)| w / r).sum()
            }
            ScalarDistribution::PointmassZero => 0.0,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            ScalarDistribution::Exponential { rate } => 1.0 / (rate * rate),
            ScalarDistribution::Deterministic { .. } | ScalarDistribution::PointmassZero => 0.0,
            ScalarDistribution::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            ScalarDistribution::Hyperexponential { weights, rates } => {
                let second: f64 = weights.iter().zip(rates).map(|(w, r)| 2.0 * w / (r * r)).sum();
                let m = self.mean();
                second - m * m
            }
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().max(0.0).sqrt()
    }

    /// `E[|X|^k]` for `k > 0`.
    pub fn abs_moment(&self, k: f64) -> f64 {
        match self {
            ScalarDistribution::Exponential { rate } => libm::tgamma(k + 1.0) / rate.powf(k),
            ScalarDistribution::Deterministic { value } => value.abs().powf(k),
            ScalarDistribution::PointmassZero => 0.0,
            ScalarDistribution::Uniform { lo, hi } => {
                // ∫ |x|^k dx / (hi - lo), split at zero when the support straddles it
                let prim = |x: f64| x.signum() * x.abs().powf(k + 1.0) / (k + 1.0);
                (prim(*hi) - prim(*lo)) / (hi - lo)
            }
            ScalarDistribution::Hyperexponential { weights, rates } => {
                let g = libm::tgamma(k + 1.0);
                weights.iter().zip(rates).map(|(w, r)| w * g / r.powf(k)).sum()
            }
        }
    }

    /// Mass of the atom at `0`.
    pub fn atom_at_zero(&self) -> f64 {
        match self {
            ScalarDistribution::Deterministic { value } if *value == 0.0 => 1.0,
            ScalarDistribution::PointmassZero => 1.0,
            _ => 0.0,
        }
    }

    /// `P(X ≥ x)`.
    pub fn survival(&self, x: f64) -> f64 {
        match self {
            ScalarDistribution::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            ScalarDistribution::Deterministic { value } => {
                if x <= *value {
                    1.0
                } else {
                    0.0
                }
            }
            ScalarDistribution::Uniform { lo, hi } => {
                if x <= *lo {
                    1.0
                } else if x >= *hi {
                    0.0
                } else {
                    (hi - x) / (hi - lo)
                }
            }
            ScalarDistribution::Hyperexponential { weights, rates } => {
                if x <= 0.0 {
                    1.0
                } else {
                    weights.iter().zip(rates).map(|(w, r)| w * (-r * x).exp()).sum()
                }
            }
            ScalarDistribution::PointmassZero => {
                if x <= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `P(X > x)`.
    pub fn survival_open(&self, x: f64) -> f64 {
        match self {
            ScalarDistribution::Deterministic { value } => {
                if x < *value {
                    1.0
                } else {
                    0.0
                }
            }
            ScalarDistribution::PointmassZero => {
                if x < 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            _ => self.survival(x),
        }
    }

    /// `P(X ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.survival_open(x)
    }

    /// `P(X < x)`.
    pub fn cdf_open(&self, x: f64) -> f64 {
        1.0 - self.survival(x)
    }

    /// Smallest `x` with `P(X ≤ x) ≥ q`, for `q ∈ [0, 1]`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(domain(format!("quantile level must lie in [0, 1], got {q}")));
        }
        Ok(match self {
            ScalarDistribution::Exponential { rate } => -(1.0 - q).ln() / rate,
            ScalarDistribution::Deterministic { value } => *value,
            ScalarDistribution::Uniform { lo, hi } => lo + q * (hi - lo),
            ScalarDistribution::PointmassZero => 0.0,
            ScalarDistribution::Hyperexponential { rates, .. } => {
                if q == 1.0 {
                    return Ok(f64::INFINITY);
                }
                let slowest = rates.iter().copied().fold(f64::INFINITY, f64::min);
                let mut lo = 0.0;
                let mut hi = -(1.0 - q).ln() / slowest + 1.0;
                while self.cdf(hi) < q {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf(mid) < q {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * hi.max(1.0) {
                        break;
                    }
                }
                hi
            }
        })
    }

    /// Points where the survival function has a jump or a kink.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            ScalarDistribution::Exponential { .. }
            | ScalarDistribution::Hyperexponential { .. }
            | ScalarDistribution::PointmassZero => vec![0.0],
            ScalarDistribution::Deterministic { value } => vec![*value],
            ScalarDistribution::Uniform { lo, hi } => vec![*lo, *hi],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ScalarDistribution::Exponential { rate } => Exp::new(*rate).map(|e| e.sample(rng)).unwrap_or(f64::NAN),
            ScalarDistribution::Deterministic { value } => *value,
            ScalarDistribution::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            ScalarDistribution::Hyperexponential { weights, rates } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = rates.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                Exp::new(rates[pick]).map(|e| e.sample(rng)).unwrap_or(f64::NAN)
            }
            ScalarDistribution::PointmassZero => 0.0,
        }
    }

    /// Survival function of the excess lifetime (equilibrium) law,
    /// `(1/m) ∫_x^∞ P(X > u) du` with `m` the mean. Equal to `1` for `x ≤ 0`.
    pub fn excess_lifetime_survival(&self, x: f64) -> Result<f64> {
        excess_lifetime_survival(self, x)
    }

    /// The same quantity without the support and mean checks; callers have
    /// already validated the law.
    pub(crate) fn excess_survival_unchecked(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        match self {
            ScalarDistribution::Exponential { rate } => (-rate * x).exp(),
            ScalarDistribution::Deterministic { value } => {
                if x >= *value {
                    0.0
                } else {
                    (value - x) / value
                }
            }
            ScalarDistribution::Uniform { lo, hi } => {
                let mean = 0.5 * (lo + hi);
                let tail = if x <= *lo {
                    (lo - x) + 0.5 * (hi - lo)
                } else if x < *hi {
                    (hi - x) * (hi - x) / (2.0 * (hi - lo))
                } else {
                    0.0
                };
                tail / mean
            }
            ScalarDistribution::Hyperexponential { weights, rates } => {
                let mean = self.mean();
                weights
                    .iter()
                    .zip(rates)
                    .map(|(w, r)| w / r * (-r * x).exp())
                    .sum::<f64>()
                    / mean
            }
            ScalarDistribution::PointmassZero => 0.0,
        }
    }
}

/// `ν_e([x, ∞))` for a law `ν` on `[0, ∞)` with finite positive mean.
pub fn excess_lifetime_survival(s: &ScalarDistribution, x: f64) -> Result<f64> {
    if !s.is_nonnegative() {
        return Err(domain("excess lifetime law needs a distribution on [0, ∞)"));
    }
    let m = s.mean();
    if !(m.is_finite() && m > 0.0) {
        return Err(domain(format!("excess lifetime law needs a finite positive mean, got {m}")));
    }
    if x.is_nan() {
        return Err(domain("excess lifetime survival evaluated at NaN"));
    }
    Ok(s.excess_survival_unchecked(x))
}

fn default_moment_exponent() -> f64 {
    1.0
}

/// Shape of a joint (service time, initial lead time) law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JointKind {
    /// Service and lead independent.
    Product {
        service: ScalarDistribution,
        lead: ScalarDistribution,
    },
    /// Lead equals `c` times the service time.
    Linear { service: ScalarDistribution, c: f64 },
    /// Finitely many weighted (service, lead) atoms. Empty weights mean uniform.
    Empirical {
        points: Vec<[f64; 2]>,
        #[serde(default)]
        weights: Vec<f64>,
    },
}

/// Joint law of a job's (service time, initial lead time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    #[serde(flatten)]
    pub kind: JointKind,
    #[serde(default = "default_moment_exponent")]
    pub moment_exponent: f64,
}

impl JointDistribution {
    pub fn new(kind: JointKind) -> Self {
        JointDistribution {
            kind,
            moment_exponent: default_moment_exponent(),
        }
    }

    pub fn product(service: ScalarDistribution, lead: ScalarDistribution) -> Self {
        Self::new(JointKind::Product { service, lead })
    }

    pub fn linear(service: ScalarDistribution, c: f64) -> Self {
        Self::new(JointKind::Linear { service, c })
    }

    pub fn empirical(points: Vec<[f64; 2]>, weights: Vec<f64>) -> Self {
        Self::new(JointKind::Empirical { points, weights })
    }

    /// Parameter sanity. Does not check the heavy-traffic assumptions; see
    /// [`JointDistribution::check_assumptions`].
    pub fn validate(&self) -> Result<()> {
        if !(self.moment_exponent.is_finite() && self.moment_exponent > 0.0) {
            return Err(config("moment_exponent must be finite and > 0"));
        }
        match &self.kind {
            JointKind::Product { service, lead } => {
                service.validate()?;
                lead.validate()?;
                if !service.is_nonnegative() {
                    return Err(config("service-time law must live on [0, ∞)"));
                }
            }
            JointKind::Linear { service, c } => {
                service.validate()?;
                if !service.is_nonnegative() {
                    return Err(config("service-time law must live on [0, ∞)"));
                }
                if !(c.is_finite() && *c > 0.0) {
                    return Err(config(format!("linear deadline factor c must be > 0, got {c}")));
                }
            }
            JointKind::Empirical { points, weights } => {
                if points.is_empty() {
                    return Err(config("empirical law needs at least one point"));
                }
                if !weights.is_empty() && weights.len() != points.len() {
                    return Err(config("empirical weights must match points"));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(config("empirical weights must be finite and > 0"));
                }
                if points.iter().any(|p| !(p[0].is_finite() && p[1].is_finite() && p[0] >= 0.0)) {
                    return Err(config("empirical points need finite service ≥ 0 and finite lead"));
                }
            }
        }
        Ok(())
    }

    /// The service-time marginal, when it is a parametric law.
    pub fn service_marginal(&self) -> Option<&ScalarDistribution> {
        match &self.kind {
            JointKind::Product { service, .. } | JointKind::Linear { service, .. } => Some(service),
            JointKind::Empirical { .. } => None,
        }
    }

    fn empirical_weight(weights: &[f64], i: usize) -> f64 {
        if weights.is_empty() {
            1.0
        } else {
            weights[i]
        }
    }

    fn empirical_total(points: &[[f64; 2]], weights: &[f64]) -> f64 {
        if weights.is_empty() {
            points.len() as f64
        } else {
            weights.iter().sum()
        }
    }

    /// `⟨χ, ϑ⟩`, the mean service time.
    pub fn mean_service(&self) -> f64 {
        match &self.kind {
            JointKind::Product { service, .. } | JointKind::Linear { service, .. } => service.mean(),
            JointKind::Empirical { points, weights } => {
                let total = Self::empirical_total(points, weights);
                points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| Self::empirical_weight(weights, i) * p[0])
                    .sum::<f64>()
                    / total
            }
        }
    }

    /// Standard deviation of the service time.
    pub fn service_std(&self) -> f64 {
        match &self.kind {
            JointKind::Product { service, .. } | JointKind::Linear { service, .. } => service.std_dev(),
            JointKind::Empirical { points, weights } => {
                let total = Self::empirical_total(points, weights);
                let m = self.mean_service();
                let var = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| Self::empirical_weight(weights, i) * (p[0] - m) * (p[0] - m))
                    .sum::<f64>()
                    / total;
                var.max(0.0).sqrt()
            }
        }
    }

    /// `ϑ([x, ∞) × [y, ∞))`; `y` may be `-∞`.
    pub fn quadrant_survival(&self, x: f64, y: f64) -> Result<f64> {
        if x.is_nan() || x < 0.0 {
            return Err(domain(format!("quadrant corner needs x ≥ 0, got {x}")));
        }
        if y.is_nan() {
            return Err(domain("quadrant corner y is NaN"));
        }
        Ok(self.quadrant(x, y))
    }

    /// Unchecked [`JointDistribution::quadrant_survival`]; `x` may be any real
    /// (service laws put no mass below 0).
    pub(crate) fn quadrant(&self, x: f64, y: f64) -> f64 {
        match &self.kind {
            JointKind::Product { service, lead } => {
                let s = service.survival(x);
                if s == 0.0 {
                    0.0
                } else {
                    s * lead.survival(y)
                }
            }
            JointKind::Linear { service, c } => service.survival(x.max(y / c)),
            JointKind::Empirical { points, weights } => {
                let total = Self::empirical_total(points, weights);
                points
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p[0] >= x && p[1] >= y)
                    .map(|(i, _)| Self::empirical_weight(weights, i))
                    .sum::<f64>()
                    / total
            }
        }
    }

    /// Draws one (service, lead) pair.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match &self.kind {
            JointKind::Product { service, lead } => {
                let v = service.sample(rng);
                let l = lead.sample(rng);
                (v, l)
            }
            JointKind::Linear { service, c } => {
                let v = service.sample(rng);
                (v, c * v)
            }
            JointKind::Empirical { points, weights } => {
                let total = Self::empirical_total(points, weights);
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                for (i, p) in points.iter().enumerate() {
                    acc += Self::empirical_weight(weights, i);
                    if u < acc {
                        return (p[0], p[1]);
                    }
                }
                let last = points[points.len() - 1];
                (last[0], last[1])
            }
        }
    }

    /// Evaluates the heavy-traffic assumptions on the limiting joint law:
    /// no service mass at zero, finite `4 + p` service moment, and mean
    /// service equal to `1/α`.
    pub fn check_assumptions(&self, alpha: f64) -> AssumptionReport {
        let mut report = AssumptionReport::default();
        if let Err(e) = self.validate() {
            report.push("well_formed", false, e.to_string());
            return report;
        }
        report.push("well_formed", true, "parameters valid");

        let zero_mass = match &self.kind {
            JointKind::Product { service, .. } | JointKind::Linear { service, .. } => service.atom_at_zero(),
            JointKind::Empirical { points, weights } => {
                let total = Self::empirical_total(points, weights);
                points
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p[0] == 0.0)
                    .map(|(i, _)| Self::empirical_weight(weights, i))
                    .sum::<f64>()
                    / total
            }
        };
        report.push(
            "no_service_mass_at_zero",
            zero_mass == 0.0,
            format!("service mass at 0 is {zero_mass}"),
        );

        let k = 4.0 + self.moment_exponent;
        match self.service_marginal() {
            Some(service) => {
                let m = service.abs_moment(k);
                report.push("finite_service_moment", m.is_finite(), format!("E[v^{k}] = {m}"));
            }
            None => {
                report.push("finite_service_moment", true, "finitely supported law");
                report
                    .warnings
                    .push("empirical law: uniformity of moments along the heavy-traffic sequence cannot be verified".into());
            }
        }

        let mean = self.mean_service();
        let target = 1.0 / alpha;
        let ok = alpha.is_finite() && alpha > 0.0 && (mean - target).abs() <= MEAN_MATCH_RTOL * target.abs().max(1.0);
        report.push(
            "mean_service_is_inverse_rate",
            ok,
            format!("mean service {mean}, 1/alpha = {target}"),
        );
        report
    }

    /// Places where the lift integrand `u ↦ ϑ([x + u/z, ∞) × [y + u, ∞))` has
    /// a jump or a kink.
    pub(crate) fn lift_breakpoints(&self, x: f64, y: f64, z: f64) -> Vec<f64> {
        let mut out = Vec::new();
        match &self.kind {
            JointKind::Product { service, lead } => {
                out.extend(service.breakpoints().into_iter().map(|k| z * (k - x)));
                out.extend(lead.breakpoints().into_iter().map(|k| k - y));
            }
            JointKind::Linear { service, c } => {
                // argument is max(x + u/z, (y + u)/c)
                let slope_gap = 1.0 / z - 1.0 / c;
                if slope_gap != 0.0 && y.is_finite() {
                    out.push((y / c - x) / slope_gap);
                }
                for k in service.breakpoints() {
                    out.push(z * (k - x));
                    if y.is_finite() {
                        out.push(c * k - y);
                    }
                }
            }
            JointKind::Empirical { points, .. } => {
                for p in points {
                    out.push(z * (p[0] - x));
                    if y.is_finite() {
                        out.push(p[1] - y);
                    }
                }
            }
        }
        out.retain(|u| u.is_finite() && *u > 0.0);
        out
    }
}

/// One line of an [`AssumptionReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of [`JointDistribution::check_assumptions`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
    pub warnings: Vec<String>,
}

impl AssumptionReport {
    fn push(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(AssumptionCheck {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Names of the failed checks.
    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}
