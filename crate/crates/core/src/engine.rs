//! Event-driven simulation of the processor-sharing queue with soft deadlines.
//!
//! Residual service times are never decremented job by job. The engine
//! advances one scalar, the cumulative service per job `S(t)`, and each job
//! stores its absolute service target `S(U_i) + v_i`; the job in service
//! with the smallest target is always the next to depart.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{JointDistribution, ScalarDistribution};
use crate::error::{config, domain, Error, Result};
use crate::measure::{PointMeasure, QuadrantGrid};

/// A job present at time zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialJob {
    pub service: f64,
    pub lead: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    #[default]
    Empty,
    Jobs(Vec<InitialJob>),
}

fn default_interarrival() -> ScalarDistribution {
    ScalarDistribution::exponential(1.0)
}

fn one() -> f64 {
    1.0
}

/// Everything needed to simulate one system.
///
/// The interarrival law gives the shape of the interarrival times; samples
/// are rescaled so their mean is `1 / arrival_rate`. The first interarrival
/// time, when given its own law, is drawn from it as is. Sampled initial
/// lead times are multiplied by `lead_scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "one")]
    pub r: f64,
    pub arrival_rate: f64,
    #[serde(default = "default_interarrival")]
    pub interarrival: ScalarDistribution,
    /// Law of the first arrival epoch, in absolute time units.
    #[serde(default)]
    pub first_interarrival: Option<ScalarDistribution>,
    pub joint: JointDistribution,
    #[serde(default = "one")]
    pub lead_scale: f64,
    #[serde(default)]
    pub initial_condition: InitialCondition,
    pub horizon: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(config(format!("horizon must be finite and > 0, got {}", self.horizon)));
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate > 0.0) {
            return Err(config(format!("arrival_rate must be finite and > 0, got {}", self.arrival_rate)));
        }
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(config("r must be finite and > 0"));
        }
        if !(self.lead_scale.is_finite() && self.lead_scale > 0.0) {
            return Err(config("lead_scale must be finite and > 0"));
        }
        for d in std::iter::once(&self.interarrival).chain(self.first_interarrival.as_ref()) {
            d.validate()?;
            let m = d.mean();
            if !d.is_nonnegative() || !(m.is_finite() && m > 0.0) {
                return Err(config("interarrival laws must live on [0, ∞) with positive mean"));
            }
        }
        self.joint.validate()?;
        if let InitialCondition::Jobs(jobs) = &self.initial_condition {
            if jobs.iter().any(|j| !(j.service.is_finite() && j.service > 0.0 && j.lead.is_finite())) {
                return Err(config("initial jobs need finite service > 0 and finite lead"));
            }
        }
        if self.snapshot_times.iter().any(|t| !(t.is_finite() && *t >= 0.0 && *t <= self.horizon)) {
            return Err(config("snapshot times must lie in [0, horizon]"));
        }
        if self.snapshot_times.windows(2).any(|w| w[0] > w[1]) {
            return Err(config("snapshot times must be sorted"));
        }
        Ok(())
    }
}

/// One job's primitives plus the engine's bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: usize,
    /// `0` for initial jobs.
    pub arrival: f64,
    pub service_req: f64,
    pub initial_lead: f64,
    /// Cumulative service per job at arrival.
    pub service_offset: f64,
    pub departure: Option<f64>,
    pub initial: bool,
}

impl JobRecord {
    /// Absolute service target `S(U_i) + v_i`.
    pub fn target(&self) -> f64 {
        self.service_offset + self.service_req
    }

    /// Residual service given the cumulative service per job at that instant.
    pub fn residual_at(&self, cumulative_service: f64) -> f64 {
        (self.target() - cumulative_service).max(0.0)
    }

    pub fn lead_at(&self, t: f64) -> f64 {
        self.arrival + self.initial_lead - t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Departure {
    pub id: usize,
    pub arrival: f64,
    pub sojourn: f64,
    pub service_req: f64,
    pub lateness: f64,
}

/// Queue length, workload and cumulative service per job at one instant.
///
/// Two rows with the same `t` bracket a jump: the first is the left limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub t: f64,
    pub queue: usize,
    pub workload: f64,
    pub cumulative_service: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub cumulative_service: f64,
    pub measure: PointMeasure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub horizon: f64,
    pub snapshots: Vec<Snapshot>,
    pub departures: Vec<Departure>,
    pub path: Vec<PathPoint>,
    pub jobs: Vec<JobRecord>,
}

impl SimOutput {
    /// `(t, S(t))` samples.
    pub fn s_path(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.path.iter().map(|p| (p.t, p.cumulative_service))
    }

    /// Snapshot taken at (numerically) time `t`.
    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.snapshots.iter().find(|s| (s.time - t).abs() <= tol)
    }

    /// Last path row at time `t` (the post-jump value when `t` is an event).
    pub fn path_at(&self, t: f64) -> Option<&PathPoint> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.path.iter().rev().find(|p| (p.t - t).abs() <= tol)
    }
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    target: f64,
    id: usize,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.target.total_cmp(&other.target).then(self.id.cmp(&other.id))
    }
}

struct Engine<'a> {
    cfg: &'a ScenarioConfig,
    rng: ChaCha8Rng,
    interarrival_scale: f64,
    clock: f64,
    s: f64,
    jobs: Vec<JobRecord>,
    active: BinaryHeap<Reverse<Pending>>,
    next_arrival: f64,
    out_snapshots: Vec<Snapshot>,
    out_departures: Vec<Departure>,
    out_path: Vec<PathPoint>,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let interarrival_scale = 1.0 / (cfg.arrival_rate * cfg.interarrival.mean());
        let u1 = match &cfg.first_interarrival {
            Some(first) => first.sample(&mut rng),
            None => cfg.interarrival.sample(&mut rng) * interarrival_scale,
        };
        if !(u1.is_finite() && u1 >= 0.0) {
            return Err(Error::Sample(format!("first interarrival time {u1}")));
        }
        let mut engine = Engine {
            cfg,
            rng,
            interarrival_scale,
            clock: 0.0,
            s: 0.0,
            jobs: Vec::new(),
            active: BinaryHeap::new(),
            next_arrival: u1,
            out_snapshots: Vec::with_capacity(cfg.snapshot_times.len()),
            out_departures: Vec::new(),
            out_path: Vec::new(),
        };
        if let InitialCondition::Jobs(initial) = &cfg.initial_condition {
            for j in initial {
                engine.admit(0.0, j.service, j.lead, true);
            }
        }
        Ok(engine)
    }

    fn admit(&mut self, arrival: f64, service: f64, lead: f64, initial: bool) {
        let id = self.jobs.len();
        let job = JobRecord {
            id,
            arrival,
            service_req: service,
            initial_lead: lead,
            service_offset: self.s,
            departure: None,
            initial,
        };
        self.active.push(Reverse(Pending {
            target: job.target(),
            id,
        }));
        self.jobs.push(job);
    }

    fn workload(&self) -> f64 {
        self.active.iter().map(|Reverse(p)| (p.target - self.s).max(0.0)).sum()
    }

    fn record(&mut self) {
        self.out_path.push(PathPoint {
            t: self.clock,
            queue: self.active.len(),
            workload: self.workload(),
            cumulative_service: self.s,
        });
    }

    /// Moves the clock forward to `t` with no event in between.
    fn advance_to(&mut self, t: f64) -> Result<()> {
        if t < self.clock {
            return Err(Error::Invariant(format!("clock would move back from {} to {t}", self.clock)));
        }
        let z = self.active.len();
        if z > 0 {
            let next_target = self.active.peek().map(|Reverse(p)| p.target).unwrap_or(f64::INFINITY);
            self.s = (self.s + (t - self.clock) / z as f64).min(next_target);
        }
        self.clock = t;
        Ok(())
    }

    fn next_departure_time(&self) -> Result<f64> {
        let Some(Reverse(head)) = self.active.peek() else {
            return Ok(f64::INFINITY);
        };
        let mut gap = head.target - self.s;
        if gap < 0.0 {
            if gap < -1e-9 * self.s.abs().max(1.0) {
                return Err(Error::Invariant(format!(
                    "job {} passed its service target by {}",
                    head.id, -gap
                )));
            }
            gap = 0.0;
        }
        Ok(self.clock + self.active.len() as f64 * gap)
    }

    fn depart(&mut self, t: f64) -> Result<()> {
        if t < self.clock {
            return Err(Error::Invariant(format!("departure at {t} before clock {}", self.clock)));
        }
        self.record_left_limit(t);
        let Reverse(head) = self.active.pop().expect("departure with empty buffer");
        self.clock = t;
        self.s = head.target;
        let job = &mut self.jobs[head.id];
        job.departure = Some(t);
        let deadline = job.arrival + job.initial_lead;
        self.out_departures.push(Departure {
            id: job.id,
            arrival: job.arrival,
            sojourn: t - job.arrival,
            service_req: job.service_req,
            lateness: (t - deadline).max(0.0),
        });
        self.record();
        Ok(())
    }

    /// Path row just before a jump at `t`.
    fn record_left_limit(&mut self, t: f64) {
        let z = self.active.len();
        let s = match self.active.peek() {
            Some(Reverse(head)) => (self.s + (t - self.clock) / z as f64).min(head.target),
            None => self.s,
        };
        let workload = (self.workload() - (t - self.clock)).max(0.0);
        let workload = if z > 0 { workload } else { 0.0 };
        self.out_path.push(PathPoint {
            t,
            queue: z,
            workload,
            cumulative_service: s,
        });
    }

    fn arrive(&mut self, t: f64) -> Result<()> {
        self.record_left_limit(t);
        self.advance_to(t)?;
        let (v, l) = self.cfg.joint.sample(&mut self.rng);
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Sample(format!("service time {v} at t = {t}")));
        }
        if !l.is_finite() {
            return Err(Error::Sample(format!("initial lead time {l} at t = {t}")));
        }
        self.admit(t, v, l * self.cfg.lead_scale, false);
        let gap = self.cfg.interarrival.sample(&mut self.rng) * self.interarrival_scale;
        if !(gap.is_finite() && gap >= 0.0) {
            return Err(Error::Sample(format!("interarrival time {gap} at t = {t}")));
        }
        self.next_arrival = t + gap;
        self.record();
        Ok(())
    }

    fn snapshot(&mut self, t: f64) -> Result<()> {
        self.advance_to(t)?;
        let mut measure = PointMeasure::new();
        let mut ids: Vec<usize> = self.active.iter().map(|Reverse(p)| p.id).collect();
        ids.sort_unstable();
        for id in ids {
            let job = &self.jobs[id];
            let residual = job.target() - self.s;
            if residual > 0.0 {
                measure.push(residual, job.lead_at(t), 1.0);
            }
        }
        self.out_snapshots.push(Snapshot {
            time: t,
            cumulative_service: self.s,
            measure,
        });
        self.record();
        Ok(())
    }

    fn run(mut self) -> Result<SimOutput> {
        let horizon = self.cfg.horizon;
        let mut snap_idx = 0;
        self.record();
        loop {
            let t_dep = self.next_departure_time()?;
            let t_arr = self.next_arrival;
            let t_snap = self.cfg.snapshot_times.get(snap_idx).copied().unwrap_or(f64::INFINITY);
            // ties: departures, then arrivals, then snapshots
            if t_dep <= t_arr && t_dep <= t_snap && t_dep <= horizon {
                self.depart(t_dep)?;
            } else if t_arr <= t_snap && t_arr <= horizon {
                self.arrive(t_arr)?;
            } else if t_snap <= horizon {
                self.snapshot(t_snap)?;
                snap_idx += 1;
            } else {
                self.advance_to(horizon)?;
                if self.out_path.last().map(|p| p.t) != Some(horizon) {
                    self.record();
                }
                break;
            }
        }
        Ok(SimOutput {
            horizon,
            snapshots: self.out_snapshots,
            departures: self.out_departures,
            path: self.out_path,
            jobs: self.jobs,
        })
    }
}

/// Simulates one scenario to its horizon.
pub fn run(config: &ScenarioConfig) -> Result<SimOutput> {
    config.validate()?;
    Engine::new(config)?.run()
}

/// Largest violation of the dynamic equation between the snapshots at `t`
/// and `t + h`, over the quadrants of `grid`.
///
/// Survivors of the snapshot at `t` are translated by `(−S_{t,t+h}, −h)`;
/// jobs arriving in `(t, t + h]` are added at their state at `t + h`. The
/// `x = 0` quadrant is read as `(0, ∞) × [y, ∞)`, since departed jobs carry
/// zero residual.
pub fn verify_dynamic_equation(out: &SimOutput, t: f64, h: f64, grid: &QuadrantGrid) -> Result<f64> {
    if !(h >= 0.0) {
        return Err(domain("step h must be ≥ 0"));
    }
    let before = out
        .snapshot_at(t)
        .ok_or_else(|| domain(format!("no snapshot (and no S sample) at t = {t}")))?;
    let after = out
        .snapshot_at(t + h)
        .ok_or_else(|| domain(format!("no snapshot (and no S sample) at t + h = {}", t + h)))?;
    let (t0, t1) = (before.time, after.time);
    let ds = after.cumulative_service - before.cumulative_service;

    let arrivals: Vec<(f64, f64)> = out
        .jobs
        .iter()
        .filter(|j| !j.initial && j.arrival > t0 && j.arrival <= t1)
        .map(|j| (j.residual_at(after.cumulative_service), j.lead_at(t1)))
        .filter(|(v, _)| *v > 0.0)
        .collect();
    let survivors: Vec<(f64, f64)> = before
        .measure
        .points
        .iter()
        .map(|p| (p.residual - ds, p.lead - (t1 - t0)))
        // a job that departed exactly at a snapshot can leave a rounding residue
        .filter(|(v, _)| *v > 1e-12 * after.cumulative_service.abs().max(1.0))
        .collect();

    let mut worst: f64 = 0.0;
    for (x, y) in grid.corners() {
        let lhs = after.measure.quadrant_mass(x, y);
        let count = |pts: &[(f64, f64)]| pts.iter().filter(|(v, l)| *v >= x && *l >= y).count() as f64;
        let rhs = count(&survivors) + count(&arrivals);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// `max |ΔW + Δt|` over path intervals on which the buffer is nonempty.
pub fn busy_rate_check(out: &SimOutput) -> f64 {
    out.path
        .windows(2)
        .filter(|w| w[1].t > w[0].t && w[0].queue >= 1)
        .map(|w| (w[1].workload - w[0].workload + (w[1].t - w[0].t)).abs())
        .fold(0.0, f64::max)
}
