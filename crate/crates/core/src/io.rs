//! Config files, result files and the command runners behind the CLI.
//!
//! Config files are JSON with a `schema_version`, an optional `output_dir`
//! and exactly one request. Every CSV has a header row; floats are written
//! with 17 significant digits.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::JointDistribution;
use crate::engine::{self, ScenarioConfig, SimOutput};
use crate::error::{config, Error, Result};
use crate::harness::{run_sweep, CollapseReport, SweepConfig};
use crate::manifold::{lift, profile_solver, ProfileQuery};
use crate::measure::{QuadrantGrid, QuadrantMeasure};
use crate::rbm::{self, RbmSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftRequest {
    pub joint: JointDistribution,
    /// Defaults to the inverse mean service time.
    #[serde(default)]
    pub alpha: Option<f64>,
    pub z: f64,
    #[serde(default)]
    pub grid: QuadrantGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileRequest {
    /// Solver name, e.g. `lead_product` or `time_in_queue`.
    pub profile: String,
    pub joint: JointDistribution,
    #[serde(default)]
    pub alpha: Option<f64>,
    pub z: f64,
    /// Defaults to `0, 0.1, …, 5` for time-in-queue and sojourn profiles
    /// and `-5, -4.9, …, 5` otherwise.
    #[serde(default)]
    pub y_values: Option<Vec<f64>>,
}

fn default_dt() -> f64 {
    rbm::DEFAULT_DT
}

fn default_thin() -> usize {
    1000
}

fn median_only() -> Vec<f64> {
    vec![0.5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbmRequest {
    pub drift: f64,
    pub variance: f64,
    #[serde(default)]
    pub x0: f64,
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub seed: u64,
    /// Keep every `thin`-th step in the written path.
    #[serde(default = "default_thin")]
    pub thin: usize,
    /// Stationary quantile levels to report.
    #[serde(default = "median_only")]
    pub quantiles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub lift_request: Option<LiftRequest>,
    #[serde(default)]
    pub profile_request: Option<ProfileRequest>,
    #[serde(default)]
    pub rbm_request: Option<RbmRequest>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Lift,
    Profiles,
    Rbm,
    Sweep,
}

impl Command {
    pub fn request_key(self) -> &'static str {
        match self {
            Command::Simulate => "scenario",
            Command::Lift => "lift_request",
            Command::Profiles => "profile_request",
            Command::Rbm => "rbm_request",
            Command::Sweep => "sweep",
        }
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<ConfigFile> {
        let cfg: ConfigFile = serde_json::from_str(text).map_err(|e| config(format!("malformed config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(config(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                cfg.schema_version
            )));
        }
        let present = cfg.present();
        if present.len() != 1 {
            return Err(config(format!(
                "exactly one request is required, found {}",
                if present.is_empty() { "none".to_string() } else { present.join(", ") }
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = fs::read_to_string(path).map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
        ConfigFile::parse(&text)
    }

    fn present(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.scenario.is_some() {
            v.push("scenario");
        }
        if self.sweep.is_some() {
            v.push("sweep");
        }
        if self.lift_request.is_some() {
            v.push("lift_request");
        }
        if self.profile_request.is_some() {
            v.push("profile_request");
        }
        if self.rbm_request.is_some() {
            v.push("rbm_request");
        }
        v
    }

    pub fn apply_seed_override(&mut self, seed: u64) {
        if let Some(s) = &mut self.scenario {
            s.seed = seed;
        }
        if let Some(s) = &mut self.sweep {
            s.seed_base = seed;
        }
        if let Some(s) = &mut self.rbm_request {
            s.seed = seed;
        }
    }
}

/// `{:.16e}`; infinities as `inf` / `-inf`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(csv_err)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_departures(path: &Path, out: &SimOutput) -> Result<()> {
    write_rows(
        path,
        &["id", "arrival", "sojourn", "service_req", "lateness"],
        out.departures.iter().map(|d| {
            vec![
                d.id.to_string(),
                fmt_float(d.arrival),
                fmt_float(d.sojourn),
                fmt_float(d.service_req),
                fmt_float(d.lateness),
            ]
        }),
    )
}

pub fn write_path(path: &Path, out: &SimOutput) -> Result<()> {
    write_rows(
        path,
        &["t", "Z", "W", "S"],
        out.path.iter().map(|p| {
            vec![
                fmt_float(p.t),
                p.queue.to_string(),
                fmt_float(p.workload),
                fmt_float(p.cumulative_service),
            ]
        }),
    )
}

pub fn write_snapshots(path: &Path, out: &SimOutput) -> Result<()> {
    write_rows(
        path,
        &["time_index", "time", "residual", "lead", "weight"],
        out.snapshots.iter().enumerate().flat_map(|(k, s)| {
            s.measure.points.iter().map(move |p| {
                vec![
                    k.to_string(),
                    fmt_float(s.time),
                    fmt_float(p.residual),
                    fmt_float(p.lead),
                    fmt_float(p.weight),
                ]
            })
        }),
    )
}

/// Dense `(x, y, mass)` table of a quadrant function.
pub fn write_quadrant_grid(path: &Path, m: &dyn QuadrantMeasure, grid: &QuadrantGrid) -> Result<()> {
    let values = m.grid_values(grid);
    write_rows(
        path,
        &["x", "y", "mass"],
        grid.corners()
            .zip(values)
            .map(|((x, y), v)| vec![fmt_float(x), fmt_float(y), fmt_float(v)]),
    )
}

pub fn write_report(dir: &Path, report: &CollapseReport) -> Result<Vec<PathBuf>> {
    let json = dir.join("report.json");
    fs::write(&json, report.to_json()?)?;
    let rows = dir.join("rows.csv");
    write_rows(
        &rows,
        &[
            "r",
            "replication",
            "t",
            "z_hat",
            "w_hat",
            "path_z_hat",
            "path_w_hat",
            "collapse_error",
            "lead_profile_error",
            "lateness_fraction",
        ],
        report.rows.iter().map(|row| {
            vec![
                fmt_float(row.r),
                row.replication.to_string(),
                fmt_float(row.t),
                fmt_float(row.z_hat),
                fmt_float(row.w_hat),
                fmt_float(row.path_z_hat),
                fmt_float(row.path_w_hat),
                fmt_opt(row.collapse_error),
                fmt_opt(row.lead_profile_error),
                fmt_opt(row.lateness_fraction),
            ]
        }),
    )?;
    let ladder = dir.join("collapse_vs_r.csv");
    write_rows(
        &ladder,
        &[
            "r",
            "nonempty",
            "collapse_median",
            "collapse_q10",
            "collapse_q90",
            "lead_error_median",
            "z_on_w_slope",
            "sojourn_ks_median",
        ],
        report.aggregates.iter().map(|a| {
            vec![
                fmt_float(a.r),
                a.nonempty.to_string(),
                fmt_opt(a.collapse_error.map(|s| s.median)),
                fmt_opt(a.collapse_error.map(|s| s.q10)),
                fmt_opt(a.collapse_error.map(|s| s.q90)),
                fmt_opt(a.lead_profile_error.map(|s| s.median)),
                fmt_opt(a.z_on_w_slope),
                fmt_opt(a.sojourn_ks.map(|s| s.median)),
            ]
        }),
    )?;
    let overlay = dir.join("profile_overlay.csv");
    write_rows(
        &overlay,
        &["r", "t", "y", "empirical", "limit"],
        report.overlay.iter().map(|p| {
            vec![
                fmt_float(p.r),
                fmt_float(p.t),
                fmt_float(p.y),
                fmt_float(p.empirical),
                fmt_float(p.limit),
            ]
        }),
    )?;
    Ok(vec![json, rows, ladder, overlay])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RbmQuantile {
    pub q: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RbmSummary {
    pub spec: RbmSpec,
    pub horizon: f64,
    pub dt: f64,
    pub steps: u64,
    pub time_average: f64,
    pub min: f64,
    pub max: f64,
    /// `variance / (2|drift|)` when the drift is negative.
    pub stationary_mean: Option<f64>,
    pub stationary_quantiles: Vec<RbmQuantile>,
}

/// Run options shared by all commands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the config's `output_dir`.
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps; `0` lets rayon decide.
    pub threads: usize,
    pub seed_override: Option<u64>,
}

/// Runs `cmd` on `cfg` and returns the files written.
pub fn execute(cmd: Command, mut cfg: ConfigFile, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    if !cfg.present().contains(&cmd.request_key()) {
        return Err(config(format!(
            "this command needs a '{}' request, config has {}",
            cmd.request_key(),
            cfg.present().join(", ")
        )));
    }
    if let Some(seed) = opts.seed_override {
        cfg.apply_seed_override(seed);
    }
    let dir = opts
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    // validate before touching the filesystem
    match cmd {
        Command::Simulate => cfg.scenario.as_ref().map(|s| s.validate()).transpose()?,
        Command::Sweep => cfg.sweep.as_ref().map(|s| s.validate()).transpose()?,
        _ => None,
    };
    fs::create_dir_all(&dir)?;
    match cmd {
        Command::Simulate => {
            let scenario = cfg.scenario.as_ref().expect("checked above");
            let out = engine::run(scenario)?;
            let files = [
                dir.join("departures.csv"),
                dir.join("path.csv"),
                dir.join("snapshots.csv"),
            ];
            write_departures(&files[0], &out)?;
            write_path(&files[1], &out)?;
            write_snapshots(&files[2], &out)?;
            Ok(files.to_vec())
        }
        Command::Lift => {
            let req = cfg.lift_request.as_ref().expect("checked above");
            req.joint.validate()?;
            let alpha = req.alpha.unwrap_or(1.0 / req.joint.mean_service());
            let m = lift(&req.joint, alpha, req.z).map_err(as_config)?;
            let path = dir.join("lift.csv");
            write_quadrant_grid(&path, &m, &req.grid)?;
            Ok(vec![path])
        }
        Command::Profiles => {
            let req = cfg.profile_request.as_ref().expect("checked above");
            req.joint.validate()?;
            let solver = profile_solver(&req.profile)?;
            let alpha = req.alpha.unwrap_or(1.0 / req.joint.mean_service());
            let ys = req.y_values.clone().unwrap_or_else(|| {
                let lo = if matches!(solver.name(), "time_in_queue" | "sojourn") { 0 } else { -50 };
                (lo..=50).map(|k| k as f64 / 10.0).collect()
            });
            let q = ProfileQuery {
                joint: req.joint.clone(),
                alpha,
                z: req.z,
            };
            let mut rows = Vec::with_capacity(ys.len());
            for y in ys {
                let v = solver.evaluate(&q, y).map_err(as_config)?;
                rows.push(vec![fmt_float(y), fmt_float(v)]);
            }
            let path = dir.join("profile.csv");
            write_rows(&path, &["y", solver.quantity()], rows)?;
            Ok(vec![path])
        }
        Command::Rbm => {
            let req = cfg.rbm_request.as_ref().expect("checked above");
            let spec = RbmSpec {
                drift: req.drift,
                variance: req.variance,
                x0: req.x0,
            };
            spec.validate().map_err(as_config)?;
            let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
            let thin = req.thin.max(1) as u64;
            let mut k = 0u64;
            let mut kept = Vec::new();
            let summary = rbm::simulate_with(&spec, req.horizon, req.dt, &mut rng, |t, x| {
                if k.is_multiple_of(thin) {
                    kept.push(vec![fmt_float(t), fmt_float(x)]);
                }
                k += 1;
            })
            .map_err(as_config)?;
            let stationary = spec.drift < 0.0;
            let mut quantiles = Vec::new();
            if stationary {
                for &q in &req.quantiles {
                    quantiles.push(RbmQuantile {
                        q,
                        value: rbm::stationary_quantile(&spec, q).map_err(as_config)?,
                    });
                }
            }
            let path_csv = dir.join("rbm_path.csv");
            write_rows(&path_csv, &["t", "value"], kept)?;
            let s = RbmSummary {
                spec,
                horizon: req.horizon,
                dt: req.dt,
                steps: summary.steps,
                time_average: summary.time_average,
                min: summary.min,
                max: summary.max,
                stationary_mean: stationary.then(|| spec.variance / (2.0 * spec.drift.abs())),
                stationary_quantiles: quantiles,
            };
            let json = dir.join("rbm_summary.json");
            fs::write(&json, serde_json::to_string_pretty(&s)?)?;
            Ok(vec![path_csv, json])
        }
        Command::Sweep => {
            let sweep = cfg.sweep.as_ref().expect("checked above");
            let report = run_sweep(sweep, opts.threads)?;
            write_report(&dir, &report)
        }
    }
}

/// Argument problems in a request are configuration errors.
fn as_config(e: Error) -> Error {
    match e {
        Error::Domain(msg) => Error::Config(msg),
        other => other,
    }
}

/// Process exit code for an error: `2` for configuration problems, `3` for
/// failures at run time.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Json(_) | Error::Domain(_) => 2,
        Error::Io(_) => 2,
        Error::Quadrature { .. } | Error::Sample(_) | Error::Invariant(_) => 3,
    }
}
