//! Config-driven experiment runners writing CSV tables and a JSON metadata
//! record per run.
//!
//! A configuration starts from the defaults of its experiment kind, is
//! deep-merged with an optional JSON document and then with `key=value`
//! overrides on dotted paths (`params.steps=300`, `walk.eps_a=0.5`).
//! Every walk experiment runs a small exact-identity preflight first and
//! refuses to produce physics output if it fails.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::current::ContinuityMonitor;
use crate::error::{Error, Result};
use crate::gauge::PotentialSpec;
use crate::invariants::{self, InvariantSettings, SuiteResult};
use crate::lattice::Grid;
use crate::observables::{bloch_period, density, drift_velocity, DensitySlice, TrajectoryStats};
use crate::oracle::{convergence_study, ConvergenceSpec};
use crate::walk::{evolve, SpinorField, StepObserver, WalkParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "convergence")]
    Convergence,
    #[serde(rename = "bloch")]
    Bloch,
    #[serde(rename = "drift_density")]
    DriftDensity,
    #[serde(rename = "drift_speed")]
    DriftSpeed,
    #[serde(rename = "spread_vs_E")]
    SpreadVsE,
    #[serde(rename = "localization")]
    Localization,
    #[serde(rename = "invariants")]
    Invariants,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        Self::Convergence,
        Self::Bloch,
        Self::DriftDensity,
        Self::DriftSpeed,
        Self::SpreadVsE,
        Self::Localization,
        Self::Invariants,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Convergence => "convergence",
            Self::Bloch => "bloch",
            Self::DriftDensity => "drift_density",
            Self::DriftSpeed => "drift_speed",
            Self::SpreadVsE => "spread_vs_E",
            Self::Localization => "localization",
            Self::Invariants => "invariants",
        }
    }

    fn is_sweep(self) -> bool {
        !matches!(self, Self::Convergence | Self::Invariants)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s) || k.name().replace('_', "-").eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(vec![format!("unknown experiment '{s}'")]))
    }
}

/// Parameters of a walk sweep over `(εA·E, εA·B)` cells. Each cell starts
/// from `ψ⁻ = 1` at the grid center in crossed uniform fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    /// Products `εA·E`.
    pub e_values: Vec<f64>,
    /// Products `εA·B`.
    pub b_values: Vec<f64>,
    pub steps: usize,
    /// Grid extent per axis; `None` uses the light-cone bound `2·steps + 3`.
    pub extent: Option<usize>,
    /// Time indices of recorded snapshots (density maps or spread samples).
    pub snapshots: Vec<usize>,
    /// Half-width in sites of the density window written for snapshots.
    pub crop: usize,
    /// Attach the continuity monitor to every step (roughly doubles the cost).
    pub monitor_continuity: bool,
}

impl SweepParams {
    pub fn extent(&self) -> usize {
        self.extent.unwrap_or(2 * self.steps + 3)
    }

    fn defaults(kind: ExperimentKind) -> Self {
        use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4};
        let base = Self {
            e_values: vec![0.0],
            b_values: vec![0.0],
            steps: 500,
            extent: None,
            snapshots: Vec::new(),
            crop: 200,
            monitor_continuity: true,
        };
        match kind {
            ExperimentKind::Bloch => Self {
                e_values: vec![0.0, 0.02, 0.04, 0.08, 0.16, 0.64],
                steps: bloch_steps(0.02),
                ..base
            },
            ExperimentKind::DriftDensity => {
                Self { e_values: vec![0.0, 0.01, 0.02, 0.03, 0.04], b_values: vec![0.16], snapshots: vec![500], ..base }
            }
            ExperimentKind::DriftSpeed => {
                Self { e_values: vec![0.0, 0.01, 0.02, 0.03, 0.04, 0.05], b_values: vec![0.16], ..base }
            }
            ExperimentKind::SpreadVsE => {
                let mut e: Vec<f64> = (0..=10).map(|i| i as f64 / 100.0).collect();
                e.extend([0.2, 0.4, 0.8, 1.2, FRAC_PI_2]);
                Self { e_values: e, b_values: vec![0.16, 1.0, FRAC_PI_3], snapshots: vec![100, 500], ..base }
            }
            ExperimentKind::Localization => Self {
                e_values: vec![FRAC_PI_2],
                b_values: vec![0.16, FRAC_PI_4, FRAC_PI_4 + 0.04, FRAC_PI_3, FRAC_PI_3 + 0.04, FRAC_PI_2, FRAC_PI_2 + 0.04],
                steps: 1000,
                ..base
            },
            _ => base,
        }
    }
}

/// Steps covering two Bloch periods `2π/(εA·E)` plus a small margin for the
/// extremum detection at both ends.
pub fn bloch_steps(min_e: f64) -> usize {
    (2.0 * std::f64::consts::TAU / min_e).ceil() as usize + 8
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ExperimentParams {
    Sweep(SweepParams),
    Convergence(ConvergenceSpec),
    Invariants(InvariantSettings),
}

impl ExperimentParams {
    pub fn defaults(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::Convergence => Self::Convergence(ConvergenceSpec::default()),
            ExperimentKind::Invariants => Self::Invariants(InvariantSettings::default()),
            k => Self::Sweep(SweepParams::defaults(k)),
        }
    }

    fn from_value(kind: ExperimentKind, v: Value) -> Result<Self> {
        Ok(match kind {
            ExperimentKind::Convergence => Self::Convergence(serde_json::from_value(v)?),
            ExperimentKind::Invariants => Self::Invariants(serde_json::from_value(v)?),
            _ => Self::Sweep(serde_json::from_value(v)?),
        })
    }
}

/// Small exact-identity suite run before every walk experiment.
pub fn preflight_settings() -> InvariantSettings {
    InvariantSettings { grid: 16, steps: 8, instances: 4, maxwell_instances: 20, ..InvariantSettings::default() }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub out_dir: PathBuf,
    pub walk: WalkParams,
    pub preflight: InvariantSettings,
    pub params: ExperimentParams,
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        Self {
            experiment: kind,
            out_dir: PathBuf::from("out").join(kind.name()),
            walk: WalkParams::default(),
            preflight: preflight_settings(),
            params: ExperimentParams::defaults(kind),
        }
    }

    /// Defaults of `kind`, deep-merged with `doc` (a JSON object, possibly
    /// partial) and then with `key=value` overrides.
    pub fn build(kind: ExperimentKind, doc: Option<&Value>, overrides: &[String]) -> Result<Self> {
        let mut tree = serde_json::to_value(Self::defaults(kind))?;
        if let Some(doc) = doc {
            if let Some(named) = doc.get("experiment").and_then(Value::as_str) {
                let named: ExperimentKind = named.parse()?;
                if named != kind {
                    return Err(Error::InvalidConfig(vec![format!(
                        "config file is for experiment '{named}' but '{kind}' was requested"
                    )]));
                }
            }
            merge(&mut tree, doc);
        }
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        Self::from_tree(kind, tree)
    }

    pub fn from_json_str(kind: ExperimentKind, text: &str) -> Result<Self> {
        Self::build(kind, Some(&serde_json::from_str(text)?), &[])
    }

    fn from_tree(kind: ExperimentKind, mut tree: Value) -> Result<Self> {
        let obj = tree.as_object_mut().ok_or_else(|| Error::InvalidConfig(vec!["config must be a JSON object".into()]))?;
        let known = ["experiment", "out_dir", "walk", "preflight", "params"];
        let unknown: Vec<String> =
            obj.keys().filter(|k| !known.contains(&k.as_str())).map(|k| format!("unknown config key '{k}'")).collect();
        if !unknown.is_empty() {
            return Err(Error::InvalidConfig(unknown));
        }
        let mut take = |k: &str| obj.remove(k).unwrap_or(Value::Null);
        let ctx = |k: &'static str| move |e: serde_json::Error| Error::InvalidConfig(vec![format!("{k}: {e}")]);
        Ok(Self {
            experiment: kind,
            out_dir: serde_json::from_value(take("out_dir")).map_err(ctx("out_dir"))?,
            walk: serde_json::from_value(take("walk")).map_err(ctx("walk"))?,
            preflight: serde_json::from_value(take("preflight")).map_err(ctx("preflight"))?,
            params: ExperimentParams::from_value(kind, take("params")).map_err(|e| match e {
                Error::Json(e) => Error::InvalidConfig(vec![format!("params: {e}")]),
                e => e,
            })?,
        })
    }

    pub fn sweep(&self) -> Option<&SweepParams> {
        match &self.params {
            ExperimentParams::Sweep(s) => Some(s),
            _ => None,
        }
    }
}

/// Recursive object merge; non-object values in `patch` replace `base`.
fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Applies `a.b.c=value`; the value is parsed as JSON, falling back to a string.
pub fn apply_override(tree: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(vec![format!("override '{spec}' is not of the form key=value")]))?;
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut node = tree;
    let parts: Vec<&str> = key.trim().split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::InvalidConfig(vec![format!("override '{key}': '{}' is not an object", parts[..i].join("."))]))?;
        if !obj.contains_key(*part) {
            return Err(Error::InvalidConfig(vec![format!("override '{key}': unknown key '{part}'")]));
        }
        node = obj.get_mut(*part).expect("checked above");
    }
    *node = value;
    Ok(())
}

fn positive(name: &str, v: f64, out: &mut Vec<String>) {
    if !(v.is_finite() && v > 0.0) {
        out.push(format!("{name} must be positive and finite (got {v})"));
    }
}

fn check_invariant_settings(prefix: &str, s: &InvariantSettings, out: &mut Vec<String>) {
    if s.grid < 4 {
        out.push(format!("{prefix}.grid must be at least 4 (got {})", s.grid));
    }
    if s.steps == 0 || s.instances == 0 || s.maxwell_instances == 0 {
        out.push(format!("{prefix}: steps, instances and maxwell_instances must be positive"));
    }
    positive(&format!("{prefix}.potential_scale"), s.potential_scale, out);
    positive(&format!("{prefix}.walk.eps_a"), s.walk.eps_a, out);
}

/// Diagnostics that would prevent `cfg` from running; empty iff runnable.
pub fn validate_config(cfg: &ExperimentConfig) -> Vec<String> {
    let mut out = Vec::new();
    let w = &cfg.walk;
    positive("walk.eps_a", w.eps_a, &mut out);
    positive("walk.eps_l", w.eps_l, &mut out);
    positive("walk.eps_m", w.eps_m, &mut out);
    if !(w.m.is_finite() && w.charge_scale.is_finite()) {
        out.push("walk.m and walk.charge_scale must be finite".into());
    }
    if let Some(g) = w.boundary_guard {
        if !(g >= 0.0) {
            out.push(format!("walk.boundary_guard must be non-negative (got {g})"));
        }
    }
    if cfg.experiment.is_sweep() {
        check_invariant_settings("preflight", &cfg.preflight, &mut out);
    }
    match &cfg.params {
        ExperimentParams::Convergence(spec) => out.extend(spec.validate()),
        ExperimentParams::Invariants(s) => check_invariant_settings("params", s, &mut out),
        ExperimentParams::Sweep(s) => {
            if s.e_values.is_empty() || s.b_values.is_empty() {
                out.push("params.e_values and params.b_values must not be empty".into());
            }
            if let Some(v) = s.e_values.iter().chain(&s.b_values).find(|v| !v.is_finite()) {
                out.push(format!("field values must be finite (got {v})"));
            }
            if s.steps == 0 {
                out.push("params.steps must be positive".into());
            }
            let need = 2 * s.steps + 3;
            if s.extent() < need {
                out.push(format!(
                    "grid extent {} is below the light-cone bound 2J+3 = {need} for J = {}",
                    s.extent(),
                    s.steps
                ));
            }
            if let Some(j) = s.snapshots.iter().find(|&&j| j > s.steps) {
                out.push(format!("snapshot j = {j} lies beyond steps = {}", s.steps));
            }
            match cfg.experiment {
                ExperimentKind::DriftDensity | ExperimentKind::SpreadVsE if s.snapshots.is_empty() => {
                    out.push("params.snapshots must name at least one time index".into())
                }
                ExperimentKind::DriftSpeed => {
                    if s.b_values.contains(&0.0) {
                        out.push("drift_speed needs non-zero εA·B (the reference speed is E/B)".into());
                    }
                    if s.steps < crate::observables::DRIFT_TRANSIENT + 100 {
                        out.push(format!(
                            "drift_speed needs at least {} steps for the front fit",
                            crate::observables::DRIFT_TRANSIENT + 100
                        ));
                    }
                }
                _ => {}
            }
            if s.crop == 0 {
                out.push("params.crop must be positive".into());
            }
        }
    }
    if let Err(e) = check_writable(&cfg.out_dir) {
        out.push(e);
    }
    out
}

fn check_writable(dir: &Path) -> std::result::Result<(), String> {
    let existing = dir.ancestors().find(|a| a.as_os_str().is_empty() || a.exists());
    match existing {
        Some(a) if a.as_os_str().is_empty() => Ok(()),
        Some(a) if !a.is_dir() => Err(format!("output path {} is blocked by non-directory {}", dir.display(), a.display())),
        Some(a) => match fs::metadata(a) {
            Ok(m) if m.permissions().readonly() => Err(format!("output directory {} is not writable", a.display())),
            Ok(_) => Ok(()),
            Err(e) => Err(format!("cannot inspect {}: {e}", a.display())),
        },
        None => Err(format!("output path {} has no existing ancestor", dir.display())),
    }
}

/// One trajectory of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct CellRequest {
    pub epsa_e: f64,
    pub epsa_b: f64,
    pub steps: usize,
    pub extent: usize,
    pub walk: WalkParams,
    pub record_fronts: bool,
    pub monitor_continuity: bool,
    pub snapshots: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub epsa_e: f64,
    pub epsa_b: f64,
    pub stats: TrajectoryStats,
    pub snapshots: Vec<DensitySlice>,
    /// Largest continuity residual over all steps, when monitored.
    pub max_continuity_residual: Option<f64>,
    /// `max_j |Σ P_j − 1|`.
    pub norm_drift: f64,
}

struct Snapshots<'a> {
    at: &'a [usize],
    taken: Vec<DensitySlice>,
}

impl StepObserver for Snapshots<'_> {
    fn observe(&mut self, j: usize, psi: &SpinorField, _: Option<&SpinorField>) -> Result<()> {
        if self.at.contains(&j) {
            self.taken.push(density(psi, j));
        }
        Ok(())
    }
}

/// Evolves `ψ⁻ = 1` at the grid center under crossed uniform fields.
pub fn run_cell(req: &CellRequest) -> Result<CellResult> {
    let grid = Grid::square(req.extent)?;
    let w = &req.walk;
    let spec = PotentialSpec::uniform_eb(req.epsa_e / w.eps_a, req.epsa_b / w.eps_a, w.eps_l);
    let mut stats = TrajectoryStats::new(w.eps_l, req.record_fronts);
    let mut snaps = Snapshots { at: &req.snapshots, taken: Vec::new() };
    let mut monitor = req.monitor_continuity.then(|| ContinuityMonitor::new(w.eps_a));
    {
        let mut hooks: Vec<&mut dyn StepObserver> = vec![&mut stats, &mut snaps];
        if let Some(m) = monitor.as_mut() {
            hooks.push(m);
        }
        evolve(SpinorField::delta_minus(grid), &spec, req.steps, w, &mut hooks)?;
    }
    let norm_drift = stats.norm.value.iter().fold(0.0f64, |m, n| m.max((n - 1.0).abs()));
    Ok(CellResult {
        epsa_e: req.epsa_e,
        epsa_b: req.epsa_b,
        stats,
        snapshots: snaps.taken,
        max_continuity_residual: monitor.map(|m| m.max_residual()),
        norm_drift,
    })
}

/// Runs every `(E, B)` cell in parallel; results come back in `(B, E)`
/// row-major order regardless of scheduling.
pub fn run_sweep(walk: &WalkParams, s: &SweepParams, record_fronts: bool) -> Result<Vec<CellResult>> {
    let cells: Vec<CellRequest> = s
        .b_values
        .iter()
        .flat_map(|&b| s.e_values.iter().map(move |&e| (e, b)))
        .map(|(e, b)| CellRequest {
            epsa_e: e,
            epsa_b: b,
            steps: s.steps,
            extent: s.extent(),
            walk: *walk,
            record_fronts,
            monitor_continuity: s.monitor_continuity,
            snapshots: s.snapshots.clone(),
        })
        .collect();
    cells.par_iter().map(run_cell).collect()
}

/// Paths written by a run and the metadata record stored as `metadata.json`.
#[derive(Clone, Debug)]
pub struct RunArtifact {
    pub csv_paths: Vec<PathBuf>,
    pub metadata: Value,
}

struct Outputs {
    dir: PathBuf,
    paths: Vec<PathBuf>,
}

impl Outputs {
    fn csv<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.paths.push(path);
        Ok(())
    }
}

/// Columns of `bloch.csv`.
#[derive(Serialize)]
struct BlochRow {
    #[serde(rename = "epsA_E")]
    e: f64,
    j: usize,
    p_mean: f64,
}

#[derive(Serialize)]
struct BlochPeriodRow {
    #[serde(rename = "epsA_E")]
    e: f64,
    period: Option<f64>,
    expected: Option<f64>,
    gap_deviation: Option<f64>,
}

#[derive(Serialize)]
struct DensityRow {
    #[serde(rename = "epsA_E")]
    e: f64,
    #[serde(rename = "epsA_B")]
    b: f64,
    j: usize,
    p: i64,
    q: i64,
    density: f64,
}

#[derive(Serialize)]
struct PmaxRow {
    #[serde(rename = "epsA_E")]
    e: f64,
    #[serde(rename = "epsA_B")]
    b: f64,
    j: usize,
    p_max: f64,
}

#[derive(Serialize)]
struct FrontRow {
    #[serde(rename = "epsA_E")]
    e: f64,
    #[serde(rename = "epsA_B")]
    b: f64,
    j: usize,
    q_front: f64,
    fitted_speed: Option<f64>,
}

#[derive(Serialize)]
struct SpeedRow {
    #[serde(rename = "epsA_E")]
    e: f64,
    #[serde(rename = "epsA_B")]
    b: f64,
    fitted_speed: Option<f64>,
    expected_speed: f64,
    relative_error: Option<f64>,
}

#[derive(Serialize)]
struct SpreadRow {
    #[serde(rename = "epsA_B")]
    b: f64,
    #[serde(rename = "epsA_E")]
    e: f64,
    j: usize,
    q_spread: f64,
}

#[derive(Serialize)]
struct LocalizationRow {
    #[serde(rename = "epsA_E")]
    e: f64,
    #[serde(rename = "epsA_B")]
    b: f64,
    j: usize,
    q_spread: f64,
    p_spread: f64,
}

#[derive(Serialize)]
struct CurveRow {
    level: String,
    beta: f64,
    energy: f64,
    slope: f64,
    refinement_drift: f64,
}

fn cell_summaries(cells: &[CellResult]) -> Value {
    Value::Array(
        cells
            .iter()
            .map(|c| {
                json!({
                    "epsA_E": c.epsa_e,
                    "epsA_B": c.epsa_b,
                    "norm_drift": c.norm_drift,
                    "max_continuity_residual": c.max_continuity_residual,
                })
            })
            .collect(),
    )
}

/// `(fitted_speed, expected, relative_error)` of a cell's bottom front.
pub fn front_speed(c: &CellResult) -> (Option<f64>, f64, Option<f64>) {
    let expected = (c.epsa_e / c.epsa_b).abs();
    let fitted = drift_velocity(&c.stats.bottom_front).ok().map(f64::abs);
    let rel = fitted.filter(|_| expected > 0.0).map(|v| (v - expected) / expected);
    (fitted, expected, rel)
}

fn run_kind(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Value> {
    match &cfg.params {
        ExperimentParams::Convergence(spec) => {
            let report = convergence_study(spec)?;
            out.csv("convergence.csv", &report.rows)?;
            out.csv(
                "convergence_curves.csv",
                report.curves.iter().map(|c| CurveRow {
                    level: c.level.to_string(),
                    beta: c.beta,
                    energy: c.energy,
                    slope: c.slope,
                    refinement_drift: c.refinement_drift,
                }),
            )?;
            Ok(json!({ "curves": report.curves }))
        }
        ExperimentParams::Invariants(s) => {
            let results = invariants::run_all(s)?;
            out.csv("invariants.csv", &results)?;
            Ok(json!({ "suites": results }))
        }
        ExperimentParams::Sweep(s) => {
            let fronts = cfg.experiment == ExperimentKind::DriftSpeed;
            let cells = run_sweep(&cfg.walk, s, fronts)?;
            let mut summary = json!({ "cells": cell_summaries(&cells) });
            match cfg.experiment {
                ExperimentKind::Bloch => {
                    out.csv(
                        "bloch.csv",
                        cells.iter().flat_map(|c| {
                            c.stats.p_mean.j.iter().zip(&c.stats.p_mean.value).map(|(&j, &v)| BlochRow { e: c.epsa_e, j, p_mean: v })
                        }),
                    )?;
                    let periods: Vec<BlochPeriodRow> = cells
                        .iter()
                        .map(|c| {
                            let fit = bloch_period(&c.stats.p_mean).ok();
                            BlochPeriodRow {
                                e: c.epsa_e,
                                period: fit.map(|f| f.0),
                                expected: (c.epsa_e != 0.0).then(|| std::f64::consts::TAU / c.epsa_e.abs()),
                                gap_deviation: fit.map(|f| f.1),
                            }
                        })
                        .collect();
                    summary["periods"] = serde_json::to_value(
                        periods.iter().map(|r| json!({"epsA_E": r.e, "period": r.period, "expected": r.expected})).collect::<Vec<_>>(),
                    )?;
                    out.csv("bloch_periods.csv", periods)?;
                }
                ExperimentKind::DriftDensity => {
                    let r = s.crop as i64;
                    out.csv(
                        "drift_density.csv",
                        cells.iter().flat_map(|c| {
                            c.snapshots.iter().flat_map(move |d| {
                                (-r..=r).flat_map(move |p| {
                                    (-r..=r).map(move |q| DensityRow { e: c.epsa_e, b: c.epsa_b, j: d.j, p, q, density: d.p.at(p, q) })
                                })
                            })
                        }),
                    )?;
                    let pmax: Vec<PmaxRow> = cells
                        .iter()
                        .flat_map(|c| c.snapshots.iter().map(|d| PmaxRow { e: c.epsa_e, b: c.epsa_b, j: d.j, p_max: d.max() }))
                        .collect();
                    summary["p_max"] = serde_json::to_value(
                        pmax.iter().map(|r| json!({"epsA_E": r.e, "epsA_B": r.b, "j": r.j, "p_max": r.p_max})).collect::<Vec<_>>(),
                    )?;
                    out.csv("drift_pmax.csv", pmax)?;
                }
                ExperimentKind::DriftSpeed => {
                    let speeds: Vec<_> = cells.iter().map(front_speed).collect();
                    out.csv(
                        "drift_speed.csv",
                        cells.iter().zip(&speeds).flat_map(|(c, &(fitted, _, _))| {
                            let f = &c.stats.bottom_front;
                            f.j.iter().zip(&f.value).map(move |(&j, &q)| FrontRow {
                                e: c.epsa_e,
                                b: c.epsa_b,
                                j,
                                q_front: q,
                                fitted_speed: fitted,
                            })
                        }),
                    )?;
                    let rows: Vec<SpeedRow> = cells
                        .iter()
                        .zip(&speeds)
                        .map(|(c, &(fitted, expected, rel))| SpeedRow {
                            e: c.epsa_e,
                            b: c.epsa_b,
                            fitted_speed: fitted,
                            expected_speed: expected,
                            relative_error: rel,
                        })
                        .collect();
                    summary["speeds"] = serde_json::to_value(
                        rows.iter()
                            .map(|r| json!({"epsA_E": r.e, "epsA_B": r.b, "fitted_speed": r.fitted_speed, "expected_speed": r.expected_speed, "relative_error": r.relative_error}))
                            .collect::<Vec<_>>(),
                    )?;
                    out.csv("drift_speed_summary.csv", rows)?;
                }
                ExperimentKind::SpreadVsE => {
                    let cells = &cells;
                    out.csv(
                        "spread_vs_E.csv",
                        s.b_values.iter().flat_map(|&b| {
                            s.snapshots.iter().flat_map(move |&j| {
                                cells.iter().filter(move |c| c.epsa_b == b).map(move |c| SpreadRow {
                                    b,
                                    e: c.epsa_e,
                                    j,
                                    q_spread: c.stats.q_spread.value[j],
                                })
                            })
                        }),
                    )?;
                }
                ExperimentKind::Localization => {
                    out.csv(
                        "localization.csv",
                        cells.iter().flat_map(|c| {
                            (0..c.stats.q_spread.len()).map(move |i| LocalizationRow {
                                e: c.epsa_e,
                                b: c.epsa_b,
                                j: c.stats.q_spread.j[i],
                                q_spread: c.stats.q_spread.value[i],
                                p_spread: c.stats.p_spread.value[i],
                            })
                        }),
                    )?;
                    summary["final_q_spread"] = serde_json::to_value(
                        cells.iter().map(|c| json!({"epsA_E": c.epsa_e, "epsA_B": c.epsa_b, "q_spread": c.stats.q_spread.value.last()})).collect::<Vec<_>>(),
                    )?;
                }
                ExperimentKind::Convergence | ExperimentKind::Invariants => unreachable!("not a sweep"),
            }
            Ok(summary)
        }
    }
}

/// Validates `cfg`, runs the preflight identity suite (walk experiments),
/// runs the experiment and writes its CSV files and `metadata.json` into
/// `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifact> {
    let diags = validate_config(cfg);
    if !diags.is_empty() {
        return Err(Error::InvalidConfig(diags));
    }
    let start = Instant::now();
    fs::create_dir_all(&cfg.out_dir)?;
    let preflight: Vec<SuiteResult> = if cfg.experiment.is_sweep() { invariants::run_all(&cfg.preflight)? } else { Vec::new() };
    if let Some(bad) = preflight.iter().find(|r| !r.passed) {
        return Err(Error::InvariantViolation(format!(
            "{}: max deviation {:.3e} exceeds {:.1e}",
            bad.check, bad.max_deviation, bad.tolerance
        )));
    }
    let mut out = Outputs { dir: cfg.out_dir.clone(), paths: Vec::new() };
    let summary = run_kind(cfg, &mut out)?;
    let metadata = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": cfg.experiment,
        "config": cfg,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
        "invariant_checks": preflight,
        "csv_files": out.paths.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy()).collect::<Vec<_>>(),
        "summary": summary,
    });
    fs::write(cfg.out_dir.join("metadata.json"), serde_json::to_string_pretty(&metadata)? + "\n")?;
    Ok(RunArtifact { csv_paths: out.paths, metadata })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kind: ExperimentKind, dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::defaults(kind);
        cfg.out_dir = dir.to_path_buf();
        if let ExperimentParams::Sweep(s) = &mut cfg.params {
            s.steps = if kind == ExperimentKind::DriftSpeed { 150 } else { 20 };
            s.snapshots.clear();
            if matches!(kind, ExperimentKind::DriftDensity | ExperimentKind::SpreadVsE) {
                s.snapshots = vec![10, 20];
            }
            s.e_values.truncate(2);
            s.b_values.truncate(2);
            s.crop = 5;
        }
        cfg
    }

    #[test]
    fn light_cone_bound_is_checked() {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::DriftSpeed);
        cfg.out_dir = std::env::temp_dir();
        if let ExperimentParams::Sweep(s) = &mut cfg.params {
            s.steps = 500;
            s.extent = Some(1024);
        }
        assert!(validate_config(&cfg).is_empty(), "{:?}", validate_config(&cfg));
        if let ExperimentParams::Sweep(s) = &mut cfg.params {
            s.steps = 600;
        }
        let d = validate_config(&cfg);
        assert_eq!(d.len(), 1);
        assert!(d[0].contains("1203"), "{d:?}");
    }

    #[test]
    fn negative_eps_a_is_diagnosed() {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::Bloch);
        cfg.out_dir = std::env::temp_dir();
        cfg.walk.eps_a = -0.5;
        let d = validate_config(&cfg);
        assert!(d.iter().any(|m| m.contains("walk.eps_a")), "{d:?}");
    }

    #[test]
    fn unwritable_output_is_diagnosed() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain_file");
        fs::write(&file, "x").unwrap();
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::Invariants);
        cfg.out_dir = file.join("sub");
        assert!(validate_config(&cfg).iter().any(|m| m.contains("non-directory")));
    }

    #[test]
    fn defaults_follow_the_reference_setups() {
        let bloch = ExperimentConfig::defaults(ExperimentKind::Bloch);
        let s = bloch.sweep().unwrap();
        assert_eq!(s.e_values, vec![0.0, 0.02, 0.04, 0.08, 0.16, 0.64]);
        assert!(s.steps as f64 >= 2.0 * std::f64::consts::TAU / 0.02);
        assert_eq!(s.extent(), 2 * s.steps + 3);
        let loc = ExperimentConfig::defaults(ExperimentKind::Localization);
        assert_eq!(loc.sweep().unwrap().steps, 1000);
        assert_eq!(loc.sweep().unwrap().b_values.len(), 7);
        assert_eq!(bloch.walk.eps_m * bloch.walk.m, 1.0);
        assert_eq!(bloch.walk.eps_l, 1.0);
        for k in ExperimentKind::ALL {
            let mut cfg = ExperimentConfig::defaults(k);
            cfg.out_dir = std::env::temp_dir();
            assert!(validate_config(&cfg).is_empty(), "{k}: {:?}", validate_config(&cfg));
        }
    }

    #[test]
    fn config_merges_file_and_overrides() {
        let doc = json!({ "experiment": "drift_speed", "params": { "steps": 300 }, "walk": { "eps_a": 0.5 } });
        let cfg = ExperimentConfig::build(
            ExperimentKind::DriftSpeed,
            Some(&doc),
            &["params.e_values=[0.01, 0.02]".into(), "out_dir=/tmp/x".into()],
        )
        .unwrap();
        let s = cfg.sweep().unwrap();
        assert_eq!(s.steps, 300);
        assert_eq!(s.e_values, vec![0.01, 0.02]);
        assert_eq!(s.b_values, vec![0.16]);
        assert_eq!(cfg.walk.eps_a, 0.5);
        assert_eq!(cfg.walk.eps_l, 1.0);
        assert_eq!(cfg.out_dir, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn config_rejects_typos_and_mismatched_kinds() {
        assert!(ExperimentConfig::build(ExperimentKind::Bloch, None, &["params.stpes=3".into()]).is_err());
        assert!(ExperimentConfig::build(ExperimentKind::Bloch, None, &["params.steps".into()]).is_err());
        let doc = json!({ "params": { "stpes": 3 } });
        assert!(matches!(ExperimentConfig::build(ExperimentKind::Bloch, Some(&doc), &[]), Err(Error::InvalidConfig(_))));
        let doc = json!({ "experiment": "bloch" });
        assert!(ExperimentConfig::build(ExperimentKind::Localization, Some(&doc), &[]).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        for k in ExperimentKind::ALL {
            let cfg = ExperimentConfig::defaults(k);
            let text = serde_json::to_string(&cfg).unwrap();
            assert_eq!(ExperimentConfig::from_json_str(k, &text).unwrap(), cfg);
        }
    }

    #[test]
    fn kind_names_parse() {
        assert_eq!("spread_vs_E".parse::<ExperimentKind>().unwrap(), ExperimentKind::SpreadVsE);
        assert_eq!("drift-speed".parse::<ExperimentKind>().unwrap(), ExperimentKind::DriftSpeed);
        assert!("nope".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn every_sweep_writes_its_tables_deterministically() {
        for kind in ExperimentKind::ALL.into_iter().filter(|k| k.is_sweep()) {
            let a = tempfile::tempdir().unwrap();
            let b = tempfile::tempdir().unwrap();
            let ra = run_experiment(&tiny(kind, a.path())).unwrap();
            let rb = run_experiment(&tiny(kind, b.path())).unwrap();
            assert!(!ra.csv_paths.is_empty());
            for (pa, pb) in ra.csv_paths.iter().zip(&rb.csv_paths) {
                assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap(), "{kind}: {}", pa.display());
            }
            let meta: Value = serde_json::from_str(&fs::read_to_string(a.path().join("metadata.json")).unwrap()).unwrap();
            assert_eq!(meta["config"]["experiment"], json!(kind.name()));
            assert!(meta["invariant_checks"].as_array().unwrap().iter().all(|r| r["passed"] == json!(true)));
            for cell in meta["summary"]["cells"].as_array().unwrap() {
                assert!(cell["norm_drift"].as_f64().unwrap() < 1e-13);
                assert!(cell["max_continuity_residual"].as_f64().unwrap() < 1e-13);
            }
        }
    }

    #[test]
    fn csv_headers_match_the_documented_columns() {
        let dir = tempfile::tempdir().unwrap();
        let expect = [
            (ExperimentKind::Bloch, "bloch.csv", "epsA_E,j,p_mean"),
            (ExperimentKind::DriftSpeed, "drift_speed.csv", "epsA_E,epsA_B,j,q_front,fitted_speed"),
            (ExperimentKind::SpreadVsE, "spread_vs_E.csv", "epsA_B,epsA_E,j,q_spread"),
            (ExperimentKind::Localization, "localization.csv", "epsA_E,epsA_B,j,q_spread,p_spread"),
            (ExperimentKind::DriftDensity, "drift_density.csv", "epsA_E,epsA_B,j,p,q,density"),
        ];
        for (kind, file, header) in expect {
            let sub = dir.path().join(kind.name());
            let mut cfg = tiny(kind, &sub);
            if let ExperimentParams::Sweep(s) = &mut cfg.params {
                s.b_values = vec![0.16];
                s.e_values = vec![0.01];
                s.monitor_continuity = false;
            }
            run_experiment(&cfg).unwrap();
            let text = fs::read_to_string(sub.join(file)).unwrap();
            assert_eq!(text.lines().next().unwrap(), header);
        }
    }

    #[test]
    fn invariants_experiment_reports_all_suites() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::build(
            ExperimentKind::Invariants,
            None,
            &[
                format!("out_dir={}", dir.path().display()),
                "params.grid=16".into(),
                "params.steps=8".into(),
                "params.instances=3".into(),
                "params.maxwell_instances=10".into(),
            ],
        )
        .unwrap();
        let art = run_experiment(&cfg).unwrap();
        let text = fs::read_to_string(&art.csv_paths[0]).unwrap();
        assert_eq!(text.lines().count(), 5);
        for s in art.metadata["summary"]["suites"].as_array().unwrap() {
            assert!(s["max_deviation"].as_f64().unwrap() <= 1e-12);
        }
    }

    #[test]
    fn invalid_config_is_refused_before_running() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(ExperimentKind::Bloch, dir.path());
        cfg.walk.eps_l = 0.0;
        assert!(matches!(run_experiment(&cfg), Err(Error::InvalidConfig(_))));
        assert!(!dir.path().join("metadata.json").exists());
    }
}
