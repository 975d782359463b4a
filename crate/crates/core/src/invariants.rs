//! Randomized suites for the identities the walk satisfies exactly: gauge
//! covariance of trajectories, current conservation, the Maxwell identity and
//! gauge invariance of the field tensor.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::current::ContinuityMonitor;
use crate::error::Result;
use crate::gauge::{field_tensor, maxwell_identity_check, FieldTensor, IndexPosition, PotentialSpec};
use crate::lattice::{FieldHistory, Grid, ScalarField};
use crate::walk::{evolve, gauge_transform, SpinorField, WalkParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantSettings {
    pub grid: usize,
    pub steps: usize,
    pub instances: usize,
    pub maxwell_instances: usize,
    pub seed: u64,
    /// Amplitude of random potentials; gauge functions are drawn in `[−π, π)`.
    pub potential_scale: f64,
    pub walk: WalkParams,
}

impl Default for InvariantSettings {
    fn default() -> Self {
        Self {
            grid: 32,
            steps: 10,
            instances: 20,
            maxwell_instances: 100,
            seed: 2016,
            potential_scale: 2.0,
            walk: WalkParams { eps_a: 0.7, ..WalkParams::default() }.without_guard(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub check: String,
    pub instances: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl SuiteResult {
    fn new(check: &str, instances: usize, max_deviation: f64, tolerance: f64) -> Self {
        Self { check: check.into(), instances, max_deviation, tolerance, passed: max_deviation <= tolerance }
    }
}

pub const GAUGE_TOLERANCE: f64 = 1e-12;
pub const CONTINUITY_TOLERANCE: f64 = 1e-13;
pub const MAXWELL_TOLERANCE: f64 = 1e-13;
pub const TENSOR_TOLERANCE: f64 = 1e-12;

fn rng_for(seed: u64, suite: u64, instance: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (suite << 32) ^ instance as u64)
}

/// Normalized state with independent uniform real and imaginary parts.
pub fn random_state(grid: Grid, rng: &mut impl Rng) -> SpinorField {
    let mut z = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    SpinorField::from_fn(grid, |_, _| (z(), z())).normalized()
}

pub fn random_history(grid: Grid, len: usize, scale: f64, rng: &mut impl Rng) -> FieldHistory {
    FieldHistory::from_fn(grid, len, |_, _, _| rng.gen_range(-scale..scale))
}

fn random_potential(grid: Grid, len: usize, scale: f64, rng: &mut impl Rng) -> [FieldHistory; 3] {
    std::array::from_fn(|_| random_history(grid, len, scale, rng))
}

fn trajectory(psi0: SpinorField, a_lower: [FieldHistory; 3], s: &InvariantSettings) -> Result<Vec<SpinorField>> {
    let mut out = Vec::with_capacity(s.steps + 1);
    let mut rec = |_: usize, psi: &SpinorField, _: Option<&SpinorField>| {
        out.push(psi.clone());
        Ok(())
    };
    let spec = PotentialSpec::sampled(a_lower, IndexPosition::Lower, s.walk.eps_l);
    evolve(psi0, &spec, s.steps, &s.walk, &mut [&mut rec])?;
    Ok(out)
}

/// `max_j |Ψ'_j − e^{−iφ_j}Ψ_j|` for walks under `A` and under the
/// gauge-transformed pair `(e^{−iφ₀}Ψ₀, A − dφ)`.
pub fn gauge_covariance_suite(s: &InvariantSettings) -> Result<SuiteResult> {
    let grid = Grid::square(s.grid)?;
    let worst = (0..s.instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(s.seed, 1, i);
            let psi0 = random_state(grid, &mut rng);
            let a = random_potential(grid, s.steps, s.potential_scale, &mut rng);
            let phi = random_history(grid, s.steps + 1, PI, &mut rng);
            let (psi0p, ap) = gauge_transform(&psi0, &a, &phi, &s.walk)?;
            let orig = trajectory(psi0, a, s)?;
            let prime = trajectory(psi0p, ap, s)?;
            let mut worst = 0.0f64;
            for (j, (o, p)) in orig.iter().zip(&prime).enumerate() {
                worst = worst.max(p.max_abs_diff(&o.phase_rotated(phi.slice(j)?)?)?);
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(SuiteResult::new("gauge_covariance", s.instances, worst, GAUGE_TOLERANCE))
}

/// Largest continuity residual over every step of random walks.
pub fn continuity_suite(s: &InvariantSettings) -> Result<SuiteResult> {
    let grid = Grid::square(s.grid)?;
    let worst = (0..s.instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(s.seed, 2, i);
            let psi0 = random_state(grid, &mut rng);
            let a = random_potential(grid, s.steps, s.potential_scale, &mut rng);
            let mut monitor = ContinuityMonitor::new(s.walk.eps_a);
            let spec = PotentialSpec::sampled(a, IndexPosition::Lower, s.walk.eps_l);
            evolve(psi0, &spec, s.steps, &s.walk, &mut [&mut monitor])?;
            Ok(monitor.max_residual())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(SuiteResult::new("continuity", s.instances, worst, CONTINUITY_TOLERANCE))
}

/// `|D_ν D_μ F^{μν}|` for random antisymmetric tensor histories.
pub fn maxwell_identity_suite(s: &InvariantSettings) -> Result<SuiteResult> {
    let grid = Grid::square(s.grid)?;
    let worst = (0..s.maxwell_instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(s.seed, 3, i);
            let mut field = || ScalarField::from_fn(grid, |_, _| rng.gen_range(-s.potential_scale..s.potential_scale));
            let history: Vec<FieldTensor> =
                (0..2).map(|_| FieldTensor { f01: field(), f02: field(), f12: field() }).collect();
            maxwell_identity_check(&history, 0, s.walk.eps_a)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(SuiteResult::new("maxwell_identity", s.maxwell_instances, worst, MAXWELL_TOLERANCE))
}

/// `max |F(A − dφ) − F(A)|` over random potentials and gauge functions.
pub fn tensor_gauge_suite(s: &InvariantSettings) -> Result<SuiteResult> {
    let grid = Grid::square(s.grid)?;
    let len = 3;
    let worst = (0..s.instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(s.seed, 4, i);
            let a = random_potential(grid, len, s.potential_scale, &mut rng);
            let phi = random_history(grid, len + 1, PI, &mut rng);
            let (_, ap) = gauge_transform(&SpinorField::zeros(grid), &a, &phi, &s.walk)?;
            let mut worst = 0.0f64;
            for j in 0..len - 1 {
                worst = worst.max(field_tensor(&a, j, s.walk.eps_a)?.max_abs_diff(&field_tensor(&ap, j, s.walk.eps_a)?)?);
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(SuiteResult::new("tensor_gauge_invariance", s.instances, worst, TENSOR_TOLERANCE))
}

pub fn run_all(s: &InvariantSettings) -> Result<Vec<SuiteResult>> {
    Ok(vec![gauge_covariance_suite(s)?, continuity_suite(s)?, maxwell_identity_suite(s)?, tensor_gauge_suite(s)?])
}
