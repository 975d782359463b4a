//! Continuum Dirac reference for convergence studies.
//!
//! In the gauge `A_0 = −E·X¹, A_1 = 0, A_2 = −B·X¹` a plane wave
//! `Φ(X¹)·e^{iKX²}` obeys `i∂_t Φ = H Φ` with, in the walker basis `(ψ⁻, ψ⁺)`,
//!
//! `H = E·X + iσ₃ ∂_X + σ₂ (K + B·X) + m σ₁`.
//!
//! This is the operator the walk step approximates to first order in `ε`
//! (`W ≈ e^{−iHε}` with `εm = εA = εl = ε`). Its spectrum at `E = 0` is the
//! relativistic Landau ladder `±√(m² + 2nB)` plus one unpaired level at `−m`.
//! The operator is discretized with central differences on `(−Lx, Lx)` with
//! zero boundary values and diagonalized by shift-invert inverse iteration.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge::PotentialSpec;
use crate::lattice::Grid;
use crate::observables::loglog_slope;
use crate::walk::{step_k_reduced, LineSpinor, WalkParams};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Largest β increment used when following a level from `β = 0`.
pub const BETA_STEP: f64 = 0.05;
/// Fraction of the half-width, measured from each wall, that must be empty.
pub const EDGE_FRACTION: f64 = 0.05;
pub const EDGE_MASS_LIMIT: f64 = 1e-10;
const RESIDUAL_TOL: f64 = 1e-11;
const MAX_ITERATIONS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiracParams {
    pub m: f64,
    pub e: f64,
    pub b: f64,
    pub k: f64,
}

impl DiracParams {
    pub fn new(m: f64, e: f64, b: f64, k: f64) -> Self {
        Self { m, e, b, k }
    }

    /// Crossed fields with `E = β·B`.
    pub fn boosted(m: f64, b: f64, beta: f64, k: f64) -> Self {
        Self { m, e: beta * b, b, k }
    }

    pub fn beta(&self) -> f64 {
        self.e / self.b
    }

    fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.b > 0.0) {
            errs.push(format!("B must be positive (got {})", self.b));
        }
        if self.b > 0.0 && !(self.beta().abs() < 1.0) {
            errs.push(format!("|E/B| must be below 1 (got {})", self.beta()));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }
}

/// Spectral label: the unpaired level `0` or the `n`-th level above (`+`) or
/// below (`−`) it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Level {
    Zero,
    Plus(u32),
    Minus(u32),
}

impl Level {
    /// Energy of the level at `E = 0` (for `B > 0` the unpaired level,
    /// `Φ ∝ e^{−BX²/2}·(1, −1)`, sits at `−m`).
    pub fn landau_energy(self, m: f64, b: f64) -> f64 {
        match self {
            Level::Zero => -m,
            Level::Plus(n) => (m * m + 2.0 * n as f64 * b).sqrt(),
            Level::Minus(n) => -(m * m + 2.0 * n as f64 * b).sqrt(),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Zero => write!(f, "0"),
            Level::Plus(n) => write!(f, "(+,{n})"),
            Level::Minus(n) => write!(f, "(-,{n})"),
        }
    }
}

impl FromStr for Level {
    type Err = Error;

    /// Accepts `0`, `(+,n)`, `(-,n)`, `+n` and `-n`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(vec![format!("unrecognized level label `{s}`")]);
        let t: String = s.chars().filter(|c| !c.is_whitespace() && !"(),".contains(*c)).collect();
        if t == "0" {
            return Ok(Level::Zero);
        }
        let (sign, rest) = t.split_at(t.char_indices().nth(1).map_or(t.len(), |(i, _)| i));
        let n: u32 = rest.parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        match sign {
            "+" => Ok(Level::Plus(n)),
            "-" | "−" => Ok(Level::Minus(n)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Level {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Level> for String {
    fn from(l: Level) -> Self {
        l.to_string()
    }
}

/// Hermitian band matrix with half-bandwidth 4 in the interleaved layout
/// `2i + c` (`c = 0` for `ψ⁻`, `1` for `ψ⁺`).
#[derive(Clone, Debug)]
pub struct ReducedHamiltonian {
    pub params: DiracParams,
    pub half_width: f64,
    pub h: f64,
    pub order: u8,
    /// Grid points `x_i = (i − center)·h` strictly inside the walls.
    points: usize,
    rows: Vec<[C64; 2 * BW + 1]>,
}

const BW: usize = 4;

impl ReducedHamiltonian {
    pub fn dim(&self) -> usize {
        2 * self.points
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn center(&self) -> usize {
        self.points / 2
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - self.center() as f64) * self.h
    }

    /// Matrix element `H[r][c]` (zero outside the band).
    pub fn entry(&self, r: usize, c: usize) -> C64 {
        let d = c as i64 - r as i64;
        if d.unsigned_abs() as usize > BW || r >= self.dim() || c >= self.dim() {
            C64::default()
        } else {
            self.rows[r][(d + BW as i64) as usize]
        }
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let n = self.dim();
        (0..n)
            .map(|r| {
                let lo = r.saturating_sub(BW);
                let hi = (r + BW).min(n - 1);
                (lo..=hi).map(|c| self.rows[r][c + BW - r] * v[c]).sum()
            })
            .collect()
    }

    /// `max |H − H†|` over the band.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in r..(r + BW + 1).min(n) {
                worst = worst.max((self.entry(r, c) - self.entry(c, r).conj()).norm());
            }
        }
        worst
    }
}

/// Builds the reduced Hamiltonian on `(−Lx, Lx)` with fine step `h` and
/// central differences of the given order (2 or 4).
pub fn reduced_hamiltonian(dp: DiracParams, half_width: f64, h: f64, order: u8) -> Result<ReducedHamiltonian> {
    if order != 2 && order != 4 {
        return Err(Error::InvalidConfig(vec![format!("difference order must be 2 or 4 (got {order})")]));
    }
    let cells = half_width / h;
    if !(h > 0.0) || (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) || cells.round() < 8.0 {
        return Err(Error::DomainTooSmall(format!("half-width {half_width} must be at least 8 steps of h = {h} and a multiple of it")));
    }
    let nh = cells.round() as usize;
    let points = 2 * nh - 1;
    let mut rows = vec![[C64::default(); 2 * BW + 1]; 2 * points];
    let stencil: &[(usize, f64)] = if order == 2 { &[(1, 0.5)] } else { &[(1, 8.0 / 12.0), (2, -1.0 / 12.0)] };
    let center = points / 2;
    for i in 0..points {
        let x = (i as f64 - center as f64) * h;
        let transverse = dp.k + dp.b * x;
        for c in 0..2 {
            let r = 2 * i + c;
            let row = &mut rows[r];
            row[BW] = C64::new(dp.e * x, 0.0);
            // m·σ₁ + σ₂·(K + B·x): off-diagonal partner at r ± 1.
            if c == 0 {
                row[BW + 1] = C64::new(dp.m, 0.0) - I * transverse;
            } else {
                row[BW - 1] = C64::new(dp.m, 0.0) + I * transverse;
            }
            // i·σ₃·∂ with σ₃ = diag(1, −1).
            let s = if c == 0 { 1.0 } else { -1.0 };
            for &(d, w) in stencil {
                let coef = I * (s * w / h);
                if i + d < points {
                    row[BW + 2 * d] = coef;
                }
                if i >= d {
                    row[BW - 2 * d] = -coef;
                }
            }
        }
    }
    let h_op = ReducedHamiltonian { params: dp, half_width, h, order, points, rows };
    let herm = h_op.hermiticity_error();
    if herm > 1e-12 {
        return Err(Error::NotConverged(format!("assembled operator is not Hermitian ({herm:.2e})")));
    }
    Ok(h_op)
}

/// LU factorization with partial pivoting of a band matrix (`kl = ku = 4`),
/// stored column-wise with room for pivoting fill-in.
struct BandLu {
    n: usize,
    ab: Vec<C64>,
    ipiv: Vec<usize>,
}

const KL: usize = BW;
const KU: usize = BW;
const LDAB: usize = 2 * KL + KU + 1;

impl BandLu {
    #[inline]
    fn idx(i: usize, j: usize) -> usize {
        j * LDAB + (KL + KU + i - j)
    }

    fn factor(h: &ReducedHamiltonian, shift: f64) -> Result<Self> {
        let n = h.dim();
        let mut ab = vec![C64::default(); n * LDAB];
        for r in 0..n {
            for c in r.saturating_sub(BW)..=(r + BW).min(n - 1) {
                let mut v = h.rows[r][c + BW - r];
                if r == c {
                    v -= shift;
                }
                ab[Self::idx(r, c)] = v;
            }
        }
        let mut ipiv = vec![0; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = KL.min(n - 1 - j);
            let mut p = 0;
            let mut best = ab[Self::idx(j, j)].norm();
            for r in 1..=km {
                let v = ab[Self::idx(j + r, j)].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return Err(Error::NotConverged(format!("shift {shift} is an exact eigenvalue")));
            }
            ipiv[j] = j + p;
            ju = ju.max((j + KU + p).min(n - 1));
            if p != 0 {
                for c in j..=ju {
                    ab.swap(Self::idx(j, c), Self::idx(j + p, c));
                }
            }
            let inv = ab[Self::idx(j, j)].inv();
            for r in 1..=km {
                ab[Self::idx(j + r, j)] *= inv;
            }
            for c in j + 1..=ju {
                let a = ab[Self::idx(j, c)];
                if a == C64::default() {
                    continue;
                }
                for r in 1..=km {
                    let l = ab[Self::idx(j + r, j)];
                    ab[Self::idx(j + r, c)] -= l * a;
                }
            }
        }
        Ok(Self { n, ab, ipiv })
    }

    fn solve(&self, b: &mut [C64]) {
        let n = self.n;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            for r in 1..=KL.min(n - 1 - j) {
                b[j + r] -= self.ab[Self::idx(j + r, j)] * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[Self::idx(j, j)];
            let bj = b[j];
            for i in j.saturating_sub(KL + KU)..j {
                b[i] -= self.ab[Self::idx(i, j)] * bj;
            }
        }
    }
}

fn vnorm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(v: &mut [C64]) {
    let s = vnorm(v);
    v.iter_mut().for_each(|z| *z /= s);
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `(λ, ‖Hv − λv‖)` for a unit vector `v`.
fn rayleigh(h: &ReducedHamiltonian, v: &[C64]) -> (f64, f64) {
    let hv = h.apply(v);
    let lambda = dot(v, &hv).re;
    let res = hv.iter().zip(v).map(|(a, b)| (a - b * lambda).norm_sqr()).sum::<f64>().sqrt();
    (lambda, res)
}

/// Shift-invert inverse iteration from `start`, refactoring once at the
/// Rayleigh quotient when the shift is poor.
fn inverse_iteration(h: &ReducedHamiltonian, shift: f64, start: &[C64]) -> Result<(f64, Vec<C64>)> {
    let mut v = start.to_vec();
    normalize(&mut v);
    let mut sigma = shift;
    let mut lu = BandLu::factor(h, sigma)?;
    let mut refactored = false;
    for it in 0..MAX_ITERATIONS {
        lu.solve(&mut v);
        normalize(&mut v);
        let (lambda, res) = rayleigh(h, &v);
        if res < RESIDUAL_TOL * (1.0 + lambda.abs()) {
            return Ok((lambda, v));
        }
        if !refactored && (res < 1e-6 || it == 8) {
            sigma = lambda + 1e-10 * (1.0 + lambda.abs());
            lu = BandLu::factor(h, sigma)?;
            refactored = true;
        }
    }
    let (lambda, res) = rayleigh(h, &v);
    Err(Error::NotConverged(format!("inverse iteration near {shift} stalled at λ = {lambda}, residual {res:.2e}")))
}

/// Mean squared nearest-neighbour jump per component relative to the norm:
/// `≈ (kh)²` for resolved states and `≈ 4` for lattice doublers.
fn roughness(v: &[C64]) -> f64 {
    let n = v.len() / 2;
    let mut jump = 0.0;
    for c in 0..2 {
        for i in 0..n - 1 {
            jump += (v[2 * (i + 1) + c] - v[2 * i + c]).norm_sqr();
        }
    }
    jump / v.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

/// Smooth generic start vector localized on the magnetic length.
fn start_vector(h: &ReducedHamiltonian) -> Vec<C64> {
    let b = h.params.b;
    let coeffs = [
        [C64::new(0.9, 0.1), C64::new(0.3, -0.7)],
        [C64::new(-0.4, 0.6), C64::new(0.8, 0.2)],
        [C64::new(0.5, -0.3), C64::new(-0.2, 0.9)],
        [C64::new(0.2, 0.7), C64::new(0.6, -0.4)],
        [C64::new(-0.6, -0.2), C64::new(0.1, 0.5)],
        [C64::new(0.3, 0.4), C64::new(-0.5, -0.3)],
        [C64::new(0.1, -0.5), C64::new(0.4, 0.1)],
        [C64::new(-0.2, 0.2), C64::new(0.2, -0.2)],
    ];
    let mut v = vec![C64::default(); h.dim()];
    for i in 0..h.points() {
        let y = h.x(i) * b.sqrt();
        let g = (-y * y / 2.0).exp();
        for c in 0..2 {
            let mut acc = C64::default();
            let mut pw = 1.0;
            for row in &coeffs {
                acc += row[c] * pw;
                pw *= y / 2.0;
            }
            v[2 * i + c] = acc * g;
        }
    }
    v
}

/// Fine-grid profile `Φ(x_i)`, `x_i = (i − center)·h`, normalized so that
/// `Σ (|φ⁻|² + |φ⁺|²)·h = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct FineProfile {
    pub h: f64,
    pub center: usize,
    pub minus: Vec<C64>,
    pub plus: Vec<C64>,
}

impl FineProfile {
    fn from_vector(v: &[C64], h: f64, center: usize) -> Self {
        // Fix the global phase: largest amplitude real and positive.
        let big = v.iter().copied().max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr())).unwrap_or(C64::new(1.0, 0.0));
        let phase = big.conj() / big.norm();
        let scale = phase / h.sqrt();
        Self {
            h,
            center,
            minus: v.iter().step_by(2).map(|z| z * scale).collect(),
            plus: v.iter().skip(1).step_by(2).map(|z| z * scale).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.minus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minus.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.minus.iter().zip(&self.plus).map(|(a, b)| a.norm_sqr() + b.norm_sqr()).sum::<f64>() * self.h
    }

    /// `∫ conj(self)·other` on the fine grid.
    pub fn inner(&self, other: &Self) -> C64 {
        (dot(&self.minus, &other.minus) + dot(&self.plus, &other.plus)) * self.h
    }

    /// Probability within `fraction·Lx` of either wall.
    pub fn edge_mass(&self, fraction: f64) -> f64 {
        let n = self.len();
        let band = ((fraction * (n + 1) as f64 / 2.0).ceil() as usize).max(1).min(n);
        let w = |i: usize| (self.minus[i].norm_sqr() + self.plus[i].norm_sqr()) * self.h;
        (0..band).map(w).sum::<f64>() + (n - band..n).map(w).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenSolution {
    pub level: Level,
    pub params: DiracParams,
    pub energy: f64,
    pub profile: FineProfile,
}

fn solve_level(h: &ReducedHamiltonian, shift: f64, start: &[C64]) -> Result<(f64, Vec<C64>)> {
    let (lambda, v) = inverse_iteration(h, shift, start)?;
    let r = roughness(&v);
    if r > 0.5 {
        return Err(Error::NotConverged(format!("level near {shift} converged to a lattice doubler (roughness {r:.2})")));
    }
    Ok((lambda, v))
}

/// Eigenpairs for the requested levels of the operator `h`.
///
/// Levels are identified at `E = 0` by their Landau energies and followed
/// adiabatically in `β = E/B` (steps of at most [`BETA_STEP`]) up to the
/// operator's β, each step seeded by the previous eigenpair.
pub fn eigenstates(h: &ReducedHamiltonian, which: &[Level]) -> Result<Vec<EigenSolution>> {
    let dp = h.params;
    dp.validate()?;
    let beta = dp.beta();
    let nsteps = (beta.abs() / BETA_STEP).ceil() as usize;
    let ops: Vec<ReducedHamiltonian> = (0..nsteps)
        .map(|s| {
            let b = beta * s as f64 / nsteps as f64;
            reduced_hamiltonian(DiracParams::boosted(dp.m, dp.b, b, dp.k), h.half_width, h.h, h.order)
        })
        .collect::<Result<_>>()?;
    let path: Vec<&ReducedHamiltonian> = ops.iter().chain(std::iter::once(h)).collect();
    let start = start_vector(path[0]);

    which
        .par_iter()
        .map(|&level| {
            let mut prev: Option<(f64, f64, Vec<C64>)> = None; // (λ_{s−1}, λ_s, v_s)
            let mut history = Vec::with_capacity(path.len());
            for op in &path {
                let (shift, seed) = match &prev {
                    None => (level.landau_energy(dp.m, dp.b) + 1e-9, start.clone()),
                    Some((before, last, v)) => (2.0 * last - before, v.clone()),
                };
                let (lambda, v) = solve_level(op, shift, &seed)?;
                let before = prev.as_ref().map_or(lambda, |p| p.1);
                history.push(lambda);
                prev = Some((before, lambda, v));
            }
            let (_, energy, v) = prev.expect("path is never empty");
            let profile = FineProfile::from_vector(&v, h.h, h.center());
            let edge = profile.edge_mass(EDGE_FRACTION);
            if edge > EDGE_MASS_LIMIT {
                return Err(Error::DomainTooSmall(format!(
                    "level {level} holds {edge:.2e} of its mass within {EDGE_FRACTION} of the walls at Lx = {}",
                    h.half_width
                )));
            }
            Ok(EigenSolution { level, params: dp, energy, profile })
        })
        .collect()
}

/// Samples the fine profile at `X = p·ε` for `|p| ≤ p_max`; index `p + p_max`.
pub fn sample_to_walk_lattice(sol: &EigenSolution, eps: f64, p_max: usize) -> Result<LineSpinor> {
    let prof = &sol.profile;
    let ratio = eps / prof.h;
    let r = ratio.round();
    if r < 1.0 || (ratio - r).abs() > 1e-9 * ratio {
        return Err(Error::IncommensurateStep { eps, h: prof.h });
    }
    let r = r as usize;
    let half_width = (prof.center + 1) as f64 * prof.h;
    if p_max as f64 * eps >= 0.9 * half_width {
        return Err(Error::DomainTooSmall(format!(
            "walk window p_max·ε = {} reaches 90% of the half-width {half_width}",
            p_max as f64 * eps
        )));
    }
    let mut out = LineSpinor::zeros(2 * p_max + 1);
    for (k, p) in (-(p_max as i64)..=p_max as i64).enumerate() {
        let i = (prof.center as i64 + p * r as i64) as usize;
        out.minus[k] = prof.minus[i];
        out.plus[k] = prof.plus[i];
    }
    Ok(out)
}

/// Discrete norm `[Σ_{|p| ≤ p_max} (|ψ⁻|² + |ψ⁺|²)·ε]^{1/2}` of a profile
/// stored with index `p + p_max`.
pub fn l2_norm(profile: &LineSpinor, eps: f64, p_max: usize) -> f64 {
    let n = profile.len();
    let c = n / 2;
    let lo = c.saturating_sub(p_max);
    let hi = (c + p_max).min(n - 1);
    let sum: f64 = (lo..=hi).map(|i| profile.minus[i].norm_sqr() + profile.plus[i].norm_sqr()).sum();
    (sum * eps).sqrt()
}

/// Default window constant `C` in `p_max = ⌊C/ε⌋`, in magnetic lengths.
pub fn default_window(b: f64) -> f64 {
    6.0 / b.sqrt()
}

/// Relative one-step distance between the walk and the exact phase rotation,
/// `‖W − e^{−iℰε}Φ‖ / ‖e^{−iℰε}Φ‖`, with `p_max = ⌊window/ε⌋`.
pub fn delta_l(sol: &EigenSolution, eps: f64, window: f64) -> Result<f64> {
    let p_max = (window / eps).floor() as usize;
    let dp = sol.params;
    // One extra site on each side feeds the shifts at ±p_max.
    let phi = sample_to_walk_lattice(sol, eps, p_max + 1)?;
    let n = phi.len();
    let grid = Grid::new(n, 3)?;
    let rows = PotentialSpec::uniform_eb(dp.e, dp.b, eps)
        .row_profiles_upper(grid, 0)
        .expect("uniform fields are q-independent");
    let params = WalkParams::continuum(dp.m, eps).without_guard();
    let w = step_k_reduced(&phi, dp.k, &rows, &params)?;
    let rot = C64::from_polar(1.0, -sol.energy * eps);
    let mut diff = LineSpinor::zeros(n);
    let mut exact = LineSpinor::zeros(n);
    for i in 0..n {
        exact.minus[i] = phi.minus[i] * rot;
        exact.plus[i] = phi.plus[i] * rot;
        diff.minus[i] = w.minus[i] - exact.minus[i];
        diff.plus[i] = w.plus[i] - exact.plus[i];
    }
    Ok(l2_norm(&diff, eps, p_max) / l2_norm(&exact, eps, p_max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub m: f64,
    pub b: f64,
    pub k: f64,
    pub levels: Vec<Level>,
    pub betas: Vec<f64>,
    /// Walk steps `ε = 2^{−k}` for each exponent.
    pub exponents: Vec<u32>,
    /// Exponents excluded from the slope fit (pre-asymptotic steps).
    pub fit_skip: usize,
    pub half_width: f64,
    /// Fine step is `ε_min / refinement`.
    pub refinement: u32,
    pub order: u8,
    /// `C` in `p_max = ⌊C/ε⌋`; `None` uses [`default_window`].
    pub window: Option<f64>,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self {
            m: 1.0,
            b: 1.0,
            k: 0.0,
            levels: vec![Level::Plus(1), Level::Plus(2), Level::Plus(3)],
            betas: vec![0.0, 0.2, 0.5],
            exponents: (4..=9).collect(),
            fit_skip: 0,
            half_width: 12.0,
            refinement: 8,
            order: 4,
            window: None,
        }
    }
}

impl ConvergenceSpec {
    /// The `(level, β)` curves of the study: every level at `β = 0` plus the
    /// first level at every β.
    pub fn curves(&self) -> Vec<(Level, f64)> {
        let mut out: Vec<(Level, f64)> = Vec::new();
        for &l in &self.levels {
            for &b in &self.betas {
                if (b == 0.0 || Some(&l) == self.levels.first()) && !out.contains(&(l, b)) {
                    out.push((l, b));
                }
            }
        }
        out
    }

    pub fn eps_grid(&self) -> Vec<f64> {
        self.exponents.iter().map(|&k| 2f64.powi(-(k as i32))).collect()
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.b > 0.0) {
            errs.push(format!("convergence.b must be positive (got {})", self.b));
        }
        if let Some(b) = self.betas.iter().find(|b| !(0.0..1.0).contains(*b)) {
            errs.push(format!("convergence.betas must lie in [0, 1) (got {b})"));
        }
        if self.exponents.windows(2).any(|w| w[1] <= w[0]) || self.exponents.is_empty() {
            errs.push("convergence.exponents must be non-empty and strictly increasing".into());
        }
        if self.exponents.len() < self.fit_skip + 3 {
            errs.push(format!("convergence needs at least 3 fitted steps (have {} after skipping {})", self.exponents.len().saturating_sub(self.fit_skip), self.fit_skip));
        }
        if self.levels.is_empty() {
            errs.push("convergence.levels must not be empty".into());
        }
        if self.order != 2 && self.order != 4 {
            errs.push(format!("convergence.order must be 2 or 4 (got {})", self.order));
        }
        if self.refinement == 0 {
            errs.push("convergence.refinement must be positive".into());
        }
        errs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub level: Level,
    pub beta: f64,
    pub eps: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveSummary {
    pub level: Level,
    pub beta: f64,
    pub energy: f64,
    /// Relative eigenvalue change when the fine step is halved.
    pub refinement_drift: f64,
    pub slope: f64,
    pub fit_eps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub curves: Vec<CurveSummary>,
}

/// Refinement drift above which an oracle eigenpair is not trusted.
pub const MAX_REFINEMENT_DRIFT: f64 = 1e-5;

/// Runs the `δ_l(ε)` study for every curve of `spec` and fits log-log slopes
/// over the steps after `fit_skip`.
pub fn convergence_study(spec: &ConvergenceSpec) -> Result<ConvergenceReport> {
    let errs = spec.validate();
    if !errs.is_empty() {
        return Err(Error::InvalidConfig(errs));
    }
    let eps_grid = spec.eps_grid();
    let eps_min = eps_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let h = eps_min / spec.refinement as f64;
    let window = spec.window.unwrap_or_else(|| default_window(spec.b));
    let curves = spec.curves();
    let mut betas: Vec<f64> = curves.iter().map(|c| c.1).collect();
    betas.dedup();
    betas.sort_by(f64::total_cmp);
    betas.dedup();

    // One eigen-solve per β (all of its levels), at h and h/2.
    let solved: Vec<(f64, Vec<EigenSolution>, Vec<EigenSolution>)> = betas
        .iter()
        .map(|&beta| {
            let levels: Vec<Level> = curves.iter().filter(|c| c.1 == beta).map(|c| c.0).collect();
            let dp = DiracParams::boosted(spec.m, spec.b, beta, spec.k);
            let fine = eigenstates(&reduced_hamiltonian(dp, spec.half_width, h, spec.order)?, &levels)?;
            let finer = eigenstates(&reduced_hamiltonian(dp, spec.half_width, h / 2.0, spec.order)?, &levels)?;
            Ok((beta, fine, finer))
        })
        .collect::<Result<_>>()?;

    let mut report = ConvergenceReport { rows: Vec::new(), curves: Vec::new() };
    for &(level, beta) in &curves {
        let (_, fine, finer) = solved.iter().find(|s| s.0 == beta).expect("β solved above");
        let idx = fine.iter().position(|s| s.level == level).expect("level solved above");
        let (sol, check) = (&fine[idx], &finer[idx]);
        let drift = (sol.energy - check.energy).abs() / sol.energy.abs().max(1e-300);
        if drift > MAX_REFINEMENT_DRIFT {
            return Err(Error::NotConverged(format!("level {level} at β = {beta}: eigenvalue drifts {drift:.2e} under h → h/2")));
        }
        let deltas: Vec<f64> = eps_grid.par_iter().map(|&eps| delta_l(sol, eps, window)).collect::<Result<_>>()?;
        let fit: Vec<(f64, f64)> = eps_grid.iter().copied().zip(deltas.iter().copied()).skip(spec.fit_skip).collect();
        let slope = loglog_slope(&fit)?;
        for (&eps, &delta) in eps_grid.iter().zip(&deltas) {
            report.rows.push(ConvergenceRow { level, beta, eps, delta });
        }
        report.curves.push(CurveSummary {
            level,
            beta,
            energy: sol.energy,
            refinement_drift: drift,
            slope,
            fit_eps: fit.iter().map(|f| f.0).collect(),
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn landau(n: u32) -> f64 {
        (1.0 + 2.0 * n as f64).sqrt()
    }

    #[test]
    fn level_labels_round_trip() {
        for l in [Level::Zero, Level::Plus(3), Level::Minus(1)] {
            assert_eq!(l.to_string().parse::<Level>().unwrap(), l);
        }
        assert_eq!("+2".parse::<Level>().unwrap(), Level::Plus(2));
        assert_eq!("(-, 4)".parse::<Level>().unwrap(), Level::Minus(4));
        assert!("(+,0)".parse::<Level>().is_err());
        assert!("x".parse::<Level>().is_err());
        let json = serde_json::to_string(&vec![Level::Plus(1)]).unwrap();
        assert_eq!(json, r#"["(+,1)"]"#);
    }

    #[test]
    fn operator_is_hermitian() {
        for order in [2, 4] {
            let h = reduced_hamiltonian(DiracParams::new(0.7, 0.3, 1.1, 0.4), 4.0, 1.0 / 64.0, order).unwrap();
            assert!(h.hermiticity_error() <= 1e-12);
            assert_eq!(h.dim(), 2 * (2 * 256 - 1));
            assert_eq!(h.x(h.center()), 0.0);
        }
        assert!(reduced_hamiltonian(DiracParams::new(1.0, 0.0, 1.0, 0.0), 4.0, 0.3, 4).is_err());
        assert!(reduced_hamiltonian(DiracParams::new(1.0, 0.0, 1.0, 0.0), 4.0, 1.0 / 64.0, 3).is_err());
    }

    #[test]
    fn band_lu_solves_against_matvec() {
        let h = reduced_hamiltonian(DiracParams::new(1.0, 0.4, 1.0, 0.2), 3.0, 1.0 / 32.0, 4).unwrap();
        let x: Vec<C64> = (0..h.dim()).map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let shift = 0.3;
        let mut b: Vec<C64> = h.apply(&x).iter().zip(&x).map(|(a, v)| a - v * shift).collect();
        BandLu::factor(&h, shift).unwrap().solve(&mut b);
        let err = b.iter().zip(&x).map(|(a, v)| (a - v).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn landau_spectrum_at_zero_field() {
        let dp = DiracParams::new(1.0, 0.0, 1.0, 0.0);
        let h = reduced_hamiltonian(dp, 10.0, 1.0 / 128.0, 4).unwrap();
        let levels = [Level::Zero, Level::Plus(1), Level::Plus(2), Level::Plus(3), Level::Minus(1)];
        let sols = eigenstates(&h, &levels).unwrap();
        // |ℰ| of the four lowest levels: {1, √3, √5, √7}.
        for (s, w) in sols.iter().zip([1.0, 3f64.sqrt(), 5f64.sqrt(), 7f64.sqrt()]) {
            assert!((s.energy.abs() - w).abs() < 1e-4);
        }
        let want = [-1.0, landau(1), landau(2), landau(3), -landau(1)];
        for (s, w) in sols.iter().zip(want) {
            assert!((s.energy - w).abs() < 1e-4, "{} {} vs {w}", s.level, s.energy);
        }
        // Orthonormal on the fine grid.
        for a in &sols {
            for b in &sols {
                let g = a.profile.inner(&b.profile);
                let want = if a.level == b.level { 1.0 } else { 0.0 };
                assert!((g - want).norm() < 1e-10, "{} {} {g}", a.level, b.level);
            }
            assert!(a.profile.edge_mass(EDGE_FRACTION) < EDGE_MASS_LIMIT);
        }
    }

    #[test]
    fn refinement_error_scales_with_order() {
        let dp = DiracParams::new(1.0, 0.0, 1.0, 0.0);
        for (order, want) in [(2u8, 4.0), (4u8, 16.0)] {
            let e: Vec<f64> = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]
                .iter()
                .map(|&h| eigenstates(&reduced_hamiltonian(dp, 8.0, h, order).unwrap(), &[Level::Plus(1)]).unwrap()[0].energy)
                .collect();
            let ratio = (e[0] - e[1]) / (e[1] - e[2]);
            assert!((ratio / want - 1.0).abs() < 0.15, "order {order}: ratio {ratio}");
        }
    }

    #[test]
    fn boosted_levels_stay_real_and_ordered() {
        let dp = DiracParams::boosted(1.0, 1.0, 0.5, 0.0);
        let h = reduced_hamiltonian(dp, 10.0, 1.0 / 64.0, 4).unwrap();
        let sols = eigenstates(&h, &[Level::Plus(1), Level::Plus(2), Level::Plus(3)]).unwrap();
        assert!(sols.windows(2).all(|w| w[0].energy < w[1].energy));
        for s in &sols {
            assert!((s.profile.norm_sqr() - 1.0).abs() < 1e-12);
        }
        // Non-positive B and |β| ≥ 1 are rejected.
        let bad = reduced_hamiltonian(DiracParams::new(1.0, 1.0, 1.0, 0.0), 4.0, 1.0 / 16.0, 4).unwrap();
        assert!(matches!(eigenstates(&bad, &[Level::Plus(1)]), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn narrow_domain_is_rejected() {
        let h = reduced_hamiltonian(DiracParams::new(1.0, 0.0, 1.0, 0.0), 3.5, 1.0 / 64.0, 4).unwrap();
        let r = eigenstates(&h, &[Level::Plus(3)]);
        assert!(matches!(r, Err(Error::DomainTooSmall(_))), "{r:?}");
    }

    fn plus_one(h: f64) -> EigenSolution {
        let op = reduced_hamiltonian(DiracParams::new(1.0, 0.0, 1.0, 0.0), 9.0, h, 4).unwrap();
        eigenstates(&op, &[Level::Plus(1)]).unwrap().remove(0)
    }

    #[test]
    fn sampling_and_norms() {
        let sol = plus_one(1.0 / 64.0);
        let eps = 8.0 / 64.0;
        let line = sample_to_walk_lattice(&sol, eps, 40).unwrap();
        assert_eq!(line.len(), 81);
        assert_eq!(line.minus[40], sol.profile.minus[sol.profile.center]);
        assert!((l2_norm(&line, eps, 40) - 1.0).abs() < 1e-6);
        assert!(matches!(sample_to_walk_lattice(&sol, 0.1, 10), Err(Error::IncommensurateStep { .. })));
        assert!(matches!(sample_to_walk_lattice(&sol, eps, 70), Err(Error::DomainTooSmall(_))));

        let mut one = LineSpinor::zeros(5);
        one.plus[2] = C64::new(1.0, 0.0);
        assert!((l2_norm(&one, 0.25, 2) - 0.5).abs() < 1e-15);
        assert!((l2_norm(&one, 0.5, 2) / l2_norm(&one, 0.25, 2) - 2f64.sqrt()).abs() < 1e-15);
        let scaled = LineSpinor { minus: one.minus.clone(), plus: one.plus.iter().map(|z| z * C64::new(0.0, -3.0)).collect() };
        assert!((l2_norm(&scaled, 0.25, 2) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn delta_scales_quadratically() {
        let sol = plus_one(1.0 / 256.0);
        let d: Vec<f64> = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0].iter().map(|&e| delta_l(&sol, e, 6.0).unwrap()).collect();
        assert!(d.iter().all(|&x| x > 0.0));
        let r1 = d[0] / d[1];
        let r2 = d[1] / d[2];
        assert!((r2 - 4.0).abs() < 0.4, "ratios {r1} {r2}");
    }

    #[test]
    fn convergence_table_shape() {
        let spec = ConvergenceSpec {
            levels: vec![Level::Plus(1), Level::Plus(2)],
            betas: vec![0.0, 0.3],
            exponents: vec![3, 4, 5, 6],
            fit_skip: 1,
            half_width: 10.0,
            ..Default::default()
        };
        assert_eq!(spec.curves(), vec![(Level::Plus(1), 0.0), (Level::Plus(1), 0.3), (Level::Plus(2), 0.0)]);
        let report = convergence_study(&spec).unwrap();
        assert_eq!(report.rows.len(), 3 * 4);
        for c in &report.curves {
            assert!(c.refinement_drift < MAX_REFINEMENT_DRIFT);
            assert!((c.slope - 2.0).abs() < 0.3, "{} β={} slope {}", c.level, c.beta, c.slope);
        }
        let bad = ConvergenceSpec { betas: vec![1.2], ..Default::default() };
        assert!(matches!(convergence_study(&bad), Err(Error::InvalidConfig(_))));
    }
}
