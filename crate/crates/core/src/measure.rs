//! Finite measures on the right half-plane `[0, ∞) × ℝ`.
//!
//! Measures are compared through their upper-quadrant masses
//! `m([x, ∞) × [y, ∞))`, with `y = -∞` standing for the right half-space
//! `[x, ∞) × ℝ`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// One atom of a [`PointMeasure`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurePoint {
    pub residual: f64,
    pub lead: f64,
    pub weight: f64,
}

/// A finite weighted point set; the state descriptor of the queue.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointMeasure {
    pub points: Vec<MeasurePoint>,
}

impl PointMeasure {
    pub fn new() -> Self {
        Self::default()
    }

    /// Unit-weight measure from (residual, lead) pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        PointMeasure {
            points: pairs
                .into_iter()
                .map(|(residual, lead)| MeasurePoint {
                    residual,
                    lead,
                    weight: 1.0,
                })
                .collect(),
        }
    }

    pub fn push(&mut self, residual: f64, lead: f64, weight: f64) {
        self.points.push(MeasurePoint { residual, lead, weight });
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `⟨1, m⟩`.
    pub fn total_mass(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }

    /// `⟨χ, m⟩ = Σ wᵢ vᵢ`; the workload for an unscaled snapshot.
    pub fn mass_moment_chi(&self) -> f64 {
        self.points.iter().map(|p| p.weight * p.residual).sum()
    }

    /// Mass of `[x, ∞) × [y, ∞)`.
    pub fn quadrant_mass(&self, x: f64, y: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| p.residual >= x && p.lead >= y)
            .map(|p| p.weight)
            .sum()
    }

    /// Mass of `[0, ∞) × (-∞, y]`.
    pub fn lower_lead_mass(&self, y: f64) -> f64 {
        self.points.iter().filter(|p| p.lead <= y).map(|p| p.weight).sum()
    }

    /// Diffusion scaling: `(v, l, w) ↦ (v, l/r, w/r)`.
    ///
    /// Applied to a snapshot taken at unscaled time `r²t`.
    pub fn scale_diffusion(&self, r: f64) -> Result<PointMeasure> {
        self.scale_mass_and_lead(r)
    }

    /// Fluid scaling. Same transformation as [`PointMeasure::scale_diffusion`];
    /// the caller supplies a snapshot taken at unscaled time `rt`.
    pub fn scale_fluid(&self, r: f64) -> Result<PointMeasure> {
        self.scale_mass_and_lead(r)
    }

    fn scale_mass_and_lead(&self, r: f64) -> Result<PointMeasure> {
        if !(r.is_finite() && r > 0.0) {
            return Err(domain(format!("scale factor must be finite and > 0, got {r}")));
        }
        Ok(PointMeasure {
            points: self
                .points
                .iter()
                .map(|p| MeasurePoint {
                    residual: p.residual,
                    lead: p.lead / r,
                    weight: p.weight / r,
                })
                .collect(),
        })
    }

    /// Projection onto the lead coordinate.
    pub fn project_lead(&self) -> LeadProfile {
        let mut atoms: Vec<(f64, f64)> = self.points.iter().map(|p| (p.lead, p.weight)).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        // suffix[i] = mass of atoms i.. (leads ≥ atoms[i].0)
        let mut suffix = vec![0.0; atoms.len() + 1];
        for i in (0..atoms.len()).rev() {
            suffix[i] = suffix[i + 1] + atoms[i].1;
        }
        LeadProfile {
            leads: atoms.iter().map(|a| a.0).collect(),
            suffix,
        }
    }
}

/// A one-dimensional measure on ℝ held through its survival function
/// `S(y) = mass of [y, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadProfile {
    leads: Vec<f64>,
    suffix: Vec<f64>,
}

impl LeadProfile {
    pub fn total_mass(&self) -> f64 {
        self.suffix[0]
    }

    /// Mass at lead `≥ y`.
    pub fn survival(&self, y: f64) -> f64 {
        let i = self.leads.partition_point(|&l| l < y);
        self.suffix[i]
    }

    /// Mass at lead `≤ y`.
    pub fn lower(&self, y: f64) -> f64 {
        let i = self.leads.partition_point(|&l| l <= y);
        self.suffix[0] - self.suffix[i]
    }
}

/// Anything that can report upper-quadrant masses.
pub trait QuadrantMeasure {
    /// Mass of `[x, ∞) × [y, ∞)`; `y = -∞` gives the half-space mass.
    fn quadrant(&self, x: f64, y: f64) -> f64;

    fn total(&self) -> f64 {
        self.quadrant(0.0, f64::NEG_INFINITY)
    }

    /// Masses on every grid quadrant, row-major in `x`.
    fn grid_values(&self, grid: &QuadrantGrid) -> Vec<f64> {
        let mut out = Vec::with_capacity(grid.len());
        for &x in &grid.x_values {
            for &y in &grid.y_values {
                out.push(self.quadrant(x, y));
            }
        }
        out
    }
}

impl QuadrantMeasure for PointMeasure {
    fn quadrant(&self, x: f64, y: f64) -> f64 {
        self.quadrant_mass(x, y)
    }

    fn total(&self) -> f64 {
        self.total_mass()
    }

    /// Bins every point once, then takes a two-dimensional suffix sum.
    fn grid_values(&self, grid: &QuadrantGrid) -> Vec<f64> {
        let nx = grid.x_values.len();
        let ny = grid.y_values.len();
        let mut cells = vec![0.0; nx * ny];
        for p in &self.points {
            // grid indices i with x_i ≤ residual, j with y_j ≤ lead
            let ix = grid.x_values.partition_point(|&x| x <= p.residual);
            let iy = grid.y_values.partition_point(|&y| y <= p.lead);
            if ix > 0 && iy > 0 {
                cells[(ix - 1) * ny + (iy - 1)] += p.weight;
            }
        }
        for i in (0..nx).rev() {
            for j in (0..ny).rev() {
                let mut v = cells[i * ny + j];
                if i + 1 < nx {
                    v += cells[(i + 1) * ny + j];
                }
                if j + 1 < ny {
                    v += cells[i * ny + j + 1];
                }
                if i + 1 < nx && j + 1 < ny {
                    v -= cells[(i + 1) * ny + j + 1];
                }
                cells[i * ny + j] = v;
            }
        }
        cells
    }
}

type QuadrantFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// A measure given by its upper-quadrant mass function.
#[derive(Clone)]
pub struct QuadrantFunction {
    eval: Arc<QuadrantFn>,
    total: f64,
    cache: Option<Arc<GridCache>>,
}

struct GridCache {
    grid: QuadrantGrid,
    values: Vec<f64>,
}

impl std::fmt::Debug for QuadrantFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QuadrantFunction")
            .field("total", &self.total)
            .field("cached", &self.cache.is_some())
            .finish()
    }
}

impl QuadrantFunction {
    pub fn new(total: f64, eval: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        QuadrantFunction {
            eval: Arc::new(eval),
            total,
            cache: None,
        }
    }

    pub fn zero() -> Self {
        QuadrantFunction::new(0.0, |_, _| 0.0)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (self.eval)(x, y)
    }

    /// Evaluates once on `grid` and keeps the values for later grid queries.
    pub fn with_cached_grid(mut self, grid: &QuadrantGrid) -> Self {
        let values = QuadrantMeasure::grid_values(&self, grid);
        self.cache = Some(Arc::new(GridCache {
            grid: grid.clone(),
            values,
        }));
        self
    }
}

impl QuadrantMeasure for QuadrantFunction {
    fn quadrant(&self, x: f64, y: f64) -> f64 {
        self.eval(x, y)
    }

    fn total(&self) -> f64 {
        self.total
    }

    fn grid_values(&self, grid: &QuadrantGrid) -> Vec<f64> {
        if let Some(cache) = &self.cache {
            if &cache.grid == grid {
                return cache.values.clone();
            }
        }
        let mut out = Vec::with_capacity(grid.len());
        for &x in &grid.x_values {
            for &y in &grid.y_values {
                out.push(self.eval(x, y));
            }
        }
        out
    }
}

/// Finite family of quadrant corners `(x, y)` with `y = -∞` permitted as
/// the leading y value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct QuadrantGrid {
    x_values: Vec<f64>,
    y_values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawGrid {
    x_values: Vec<f64>,
    /// `null` encodes the `-∞` sentinel in JSON.
    y_values: Vec<Option<f64>>,
}

impl TryFrom<RawGrid> for QuadrantGrid {
    type Error = crate::Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        QuadrantGrid::new(
            raw.x_values,
            raw.y_values.into_iter().map(|y| y.unwrap_or(f64::NEG_INFINITY)).collect(),
        )
    }
}

impl From<QuadrantGrid> for RawGrid {
    fn from(g: QuadrantGrid) -> Self {
        RawGrid {
            x_values: g.x_values,
            y_values: g.y_values.into_iter().map(|y| y.is_finite().then_some(y)).collect(),
        }
    }
}

impl QuadrantGrid {
    pub fn new(x_values: Vec<f64>, y_values: Vec<f64>) -> Result<Self> {
        if x_values.is_empty() || y_values.is_empty() {
            return Err(domain("quadrant grid needs at least one x and one y value"));
        }
        if x_values.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(domain("grid x values must be finite and ≥ 0"));
        }
        if y_values.iter().skip(1).any(|y| !y.is_finite()) || y_values[0].is_nan() || y_values[0] == f64::INFINITY {
            return Err(domain("grid y values must be finite, except a leading -inf sentinel"));
        }
        let sorted = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if !sorted(&x_values) || !sorted(&y_values) {
            return Err(domain("grid values must be strictly increasing"));
        }
        Ok(QuadrantGrid { x_values, y_values })
    }

    /// Evenly spaced grid: `x ∈ {0, dx, …, x_max}`, `y ∈ {-∞, y_min, …, y_max}`.
    pub fn uniform(x_max: f64, dx: f64, y_min: f64, y_max: f64, dy: f64) -> Result<Self> {
        if !(dx > 0.0 && dy > 0.0 && x_max >= 0.0 && y_max >= y_min) {
            return Err(domain("uniform grid needs positive steps and ordered bounds"));
        }
        let nx = (x_max / dx).round() as usize;
        let ny = ((y_max - y_min) / dy).round() as usize;
        let xs = (0..=nx).map(|i| i as f64 * dx).collect();
        let mut ys = vec![f64::NEG_INFINITY];
        ys.extend((0..=ny).map(|j| y_min + j as f64 * dy));
        QuadrantGrid::new(xs, ys)
    }

    pub fn x_values(&self) -> &[f64] {
        &self.x_values
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y_values
    }

    pub fn len(&self) -> usize {
        self.x_values.len() * self.y_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains_x_zero(&self) -> bool {
        self.x_values.first() == Some(&0.0)
    }

    /// Iterates `(x, y)` corners in the same order as `grid_values`.
    pub fn corners(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x_values
            .iter()
            .flat_map(move |&x| self.y_values.iter().map(move |&y| (x, y)))
    }
}

impl Default for QuadrantGrid {
    /// `x ∈ {0, 0.1, …, 5}`, `y ∈ {-∞, -5, -4.9, …, 5}`.
    fn default() -> Self {
        QuadrantGrid::uniform(5.0, 0.1, -5.0, 5.0, 0.1).expect("default grid is valid")
    }
}

/// `max_A |a(A) − b(A)|` over the grid quadrants.
pub fn quadrant_distance(a: &dyn QuadrantMeasure, b: &dyn QuadrantMeasure, grid: &QuadrantGrid) -> Result<f64> {
    if grid.is_empty() {
        return Err(domain("quadrant distance over an empty grid"));
    }
    let va = a.grid_values(grid);
    let vb = b.grid_values(grid);
    Ok(va.iter().zip(&vb).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
}
