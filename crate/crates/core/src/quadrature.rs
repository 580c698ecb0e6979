//! Adaptive composite Simpson quadrature on survival-type integrands.
//!
//! Integrands handled here are piecewise smooth with known breakpoints (atoms
//! and kinks of the underlying distributions) and decay to zero at infinity.

/// Result of a quadrature: the value, an error estimate, and whether every
/// panel met its tolerance before hitting the depth limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

impl Integral {
    const ZERO: Integral = Integral {
        value: 0.0,
        error: 0.0,
        converged: true,
    };

    fn add(self, other: Integral) -> Integral {
        Integral {
            value: self.value + other.value,
            error: self.error + other.error,
            converged: self.converged && other.converged,
        }
    }
}

/// Tuning for [`integrate_tail`].
#[derive(Debug, Clone, Copy)]
pub struct TailOptions {
    /// Scale of the integrand in the integration variable; sets the first
    /// probe for the truncation point.
    pub initial_step: f64,
    /// The integral is truncated where the integrand first falls below this.
    pub tail_cutoff: f64,
    /// Absolute tolerance for the whole integral.
    pub abs_tol: f64,
    /// Maximum recursion depth per panel.
    pub max_depth: u32,
}

impl Default for TailOptions {
    fn default() -> Self {
        TailOptions {
            initial_step: 0.02,
            tail_cutoff: 1e-10,
            abs_tol: 1e-6,
            max_depth: 48,
        }
    }
}

const PANELS_PER_SEGMENT: usize = 4;

/// Adaptive Simpson on `[a, b]` with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: u32) -> Integral {
    if b <= a {
        return Integral::ZERO;
    }
    let fa = f(a);
    let fb = f(b);
    simpson_from(f, a, b, fa, fb, tol, max_depth)
}

/// Like [`adaptive_simpson`] but samples the endpoints just inside `(a, b)`,
/// so a jump exactly at an endpoint does not leak into the panel.
fn adaptive_simpson_open<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: u32) -> Integral {
    if b <= a {
        return Integral::ZERO;
    }
    let nudge = (b - a) * 1e-13;
    let fa = f(a + nudge);
    let fb = f(b - nudge);
    simpson_from(f, a, b, fa, fb, tol, max_depth)
}

fn simpson_from<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fb: f64, tol: f64, max_depth: u32) -> Integral {
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Integral {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Integral {
            value: left + right + delta / 15.0,
            error: delta.abs() / 15.0,
            converged: true,
        };
    }
    if depth == 0 || m <= a || m >= b {
        return Integral {
            value: left + right + delta / 15.0,
            error: delta.abs() / 15.0,
            converged: false,
        };
    }
    let l = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1);
    let r = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
    l.add(r)
}

/// Integrates `f` over the finite interval `[a, b]`, splitting at `breakpoints`.
pub fn integrate_segments<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    abs_tol: f64,
    max_depth: u32,
) -> Integral {
    if b <= a {
        return Integral::ZERO;
    }
    let mut cuts: Vec<f64> = Vec::with_capacity(breakpoints.len() + 2);
    cuts.push(a);
    cuts.extend(breakpoints.iter().copied().filter(|&p| p > a && p < b && p.is_finite()));
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let total = b - a;
    let mut acc = Integral::ZERO;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let len = hi - lo;
        let panel = len / PANELS_PER_SEGMENT as f64;
        let seg_tol = abs_tol * len / total;
        for k in 0..PANELS_PER_SEGMENT {
            let p0 = lo + panel * k as f64;
            let p1 = if k + 1 == PANELS_PER_SEGMENT { hi } else { p0 + panel };
            acc = acc.add(adaptive_simpson_open(
                f,
                p0,
                p1,
                seg_tol / PANELS_PER_SEGMENT as f64,
                max_depth,
            ));
        }
    }
    acc
}

/// Integrates `f` over `[0, ∞)`.
///
/// Beyond the largest breakpoint `f` must decay to zero; the upper limit is
/// found by doubling an offset from that breakpoint until `f` drops below
/// `opts.tail_cutoff`.
pub fn integrate_tail<F: Fn(f64) -> f64>(f: &F, breakpoints: &[f64], opts: TailOptions) -> Integral {
    let last = breakpoints
        .iter()
        .copied()
        .filter(|p| p.is_finite() && *p > 0.0)
        .fold(0.0_f64, f64::max);
    let step = if opts.initial_step > 0.0 { opts.initial_step } else { 1.0 };
    let mut offset = step;
    let mut upper = last + offset;
    let mut probes = 0;
    while f(upper).abs() >= opts.tail_cutoff && probes < 200 {
        offset *= 2.0;
        upper = last + offset;
        probes += 1;
    }
    let mut out = integrate_segments(f, 0.0, upper, breakpoints, opts.abs_tol, opts.max_depth);
    if probes >= 200 {
        out.converged = false;
    }
    out
}
