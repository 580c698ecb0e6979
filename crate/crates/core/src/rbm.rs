//! One-dimensional reflected Brownian motion on `[0, ∞)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::manifold::HeavyTrafficParams;

pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbmSpec {
    pub drift: f64,
    /// Diffusion coefficient; the increment over `dt` has variance `variance·dt`.
    pub variance: f64,
    #[serde(default)]
    pub x0: f64,
}

impl RbmSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(domain(format!("variance must be > 0, got {}", self.variance)));
        }
        if !(self.x0.is_finite() && self.x0 >= 0.0) {
            return Err(domain(format!("x0 must be ≥ 0, got {}", self.x0)));
        }
        if !self.drift.is_finite() {
            return Err(domain("drift must be finite"));
        }
        Ok(())
    }

    /// Rate `2|drift|/variance` of the exponential stationary law.
    pub fn stationary_rate(&self) -> Result<f64> {
        if !(self.drift < 0.0) {
            return Err(domain(format!("no stationary law for drift {} ≥ 0", self.drift)));
        }
        Ok(2.0 * self.drift.abs() / self.variance)
    }
}

/// Summary of a streamed path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub steps: u64,
    /// Time average of the path, `(1/T) Σ X_k dt`.
    pub time_average: f64,
    pub min: f64,
    pub max: f64,
    pub last: f64,
}

/// Runs `X_{k+1} = max(X_k + drift·dt + √(variance·dt)·N_k, 0)` up to
/// `horizon`, calling `visit(t, x)` at `t = 0` and after every step.
pub fn simulate_with<R: Rng + ?Sized>(
    spec: &RbmSpec,
    horizon: f64,
    dt: f64,
    rng: &mut R,
    mut visit: impl FnMut(f64, f64),
) -> Result<PathSummary> {
    spec.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(domain(format!("dt must be > 0, got {dt}")));
    }
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(domain(format!("horizon must be ≥ 0, got {horizon}")));
    }
    let steps = (horizon / dt).round() as u64;
    let mean_step = spec.drift * dt;
    let sd = (spec.variance * dt).sqrt();
    let mut x = spec.x0;
    let (mut min, mut max, mut sum) = (x, x, 0.0);
    visit(0.0, x);
    for k in 1..=steps {
        let n: f64 = rng.sample(StandardNormal);
        x = (x + mean_step + sd * n).max(0.0);
        sum += x;
        min = min.min(x);
        max = max.max(x);
        visit(k as f64 * dt, x);
    }
    Ok(PathSummary {
        steps,
        time_average: if steps > 0 { sum / steps as f64 } else { x },
        min,
        max,
        last: x,
    })
}

/// Full path, keeping every `thin`-th step (and the start).
pub fn simulate<R: Rng + ?Sized>(
    spec: &RbmSpec,
    horizon: f64,
    dt: f64,
    thin: usize,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    let thin = thin.max(1) as u64;
    let mut out = Vec::new();
    let mut k = 0u64;
    simulate_with(spec, horizon, dt, rng, |t, x| {
        if k.is_multiple_of(thin) {
            out.push((t, x));
        }
        k += 1;
    })?;
    Ok(out)
}

/// `1 − exp(−θx)`, `θ = 2|drift|/variance`.
pub fn stationary_cdf(spec: &RbmSpec, x: f64) -> Result<f64> {
    let theta = spec.stationary_rate()?;
    if x.is_nan() {
        return Err(domain("x is NaN"));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    Ok(-(-theta * x).exp_m1())
}

pub fn stationary_quantile(spec: &RbmSpec, q: f64) -> Result<f64> {
    let theta = spec.stationary_rate()?;
    if !(q > 0.0 && q < 1.0) {
        return Err(domain(format!("quantile level must lie in (0, 1), got {q}")));
    }
    Ok(-(-q).ln_1p() / theta)
}

/// Level-`q` quantile of the stationary law of the limiting queue length,
/// the deadline factor `c` for lead times `c·v`.
pub fn deadline_quantile(params: &HeavyTrafficParams, q: f64) -> Result<f64> {
    if !(params.gamma > 0.0) {
        return Err(domain(format!("deadline quantile needs γ > 0, got {}", params.gamma)));
    }
    let spec = RbmSpec {
        drift: params.z_drift,
        variance: params.z_var,
        x0: 0.0,
    };
    stationary_quantile(&spec, q)
}
