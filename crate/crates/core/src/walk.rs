//! Walker state, coin and shift operators, and the one-step update
//!
//! ```text
//! Ψ_{j+1} = U(θ⁻, εA·A², εA·A⁰) T2 U(θ⁺, εA·A¹, 0) T1 Ψ_j
//! ```
//!
//! with `θ± = ±π/4 − εm·m/2`. Coins are applied pointwise at the output site
//! of the preceding shift, using the upper-index potential sampled there.

use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gauge::{IndexPosition, PotentialSpec, PotentialTriple};
use crate::lattice::{d_mu, FieldHistory, Grid, ScalarField};

const I: C64 = C64::new(0.0, 1.0);

/// Seam band width (in sites) watched by the boundary guard.
pub const GUARD_BAND: usize = 2;
pub const DEFAULT_GUARD_THRESHOLD: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkParams {
    pub m: f64,
    pub eps_m: f64,
    pub eps_a: f64,
    pub eps_l: f64,
    /// Multiplies every potential sample before it enters a coin; a walker of
    /// charge `g` uses `charge_scale = -g`.
    pub charge_scale: f64,
    /// Maximum probability allowed within [`GUARD_BAND`] sites of the wrap
    /// seam before a step; `None` disables the check.
    pub boundary_guard: Option<f64>,
}

impl Default for WalkParams {
    /// `εm·m = 1`, `εA = εl = 1`, unit charge scale, guard on.
    fn default() -> Self {
        Self {
            m: 1.0,
            eps_m: 1.0,
            eps_a: 1.0,
            eps_l: 1.0,
            charge_scale: 1.0,
            boundary_guard: Some(DEFAULT_GUARD_THRESHOLD),
        }
    }
}

impl WalkParams {
    /// Continuum scaling `εm = εA = εl = ε`.
    pub fn continuum(m: f64, eps: f64) -> Self {
        Self { m, eps_m: eps, eps_a: eps, eps_l: eps, ..Self::default() }
    }

    pub fn without_guard(mut self) -> Self {
        self.boundary_guard = None;
        self
    }

    pub fn mass_angles(&self) -> (f64, f64) {
        mass_angles(self)
    }
}

/// `(θ⁺, θ⁻) = (π/4 − εm·m/2, −π/4 − εm·m/2)`.
pub fn mass_angles(params: &WalkParams) -> (f64, f64) {
    let half = params.eps_m * params.m / 2.0;
    (FRAC_PI_4 - half, -FRAC_PI_4 - half)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoinParams {
    pub theta: f64,
    pub xi: f64,
    pub alpha: f64,
}

pub type Mat2 = [[C64; 2]; 2];

/// `e^{iα} · C(θ) · S(ξ)` with `C(θ) = [[cos θ, i sin θ], [i sin θ, cos θ]]`
/// and `S(ξ) = diag(e^{iξ}, e^{-iξ})`.
pub fn coin_matrix(c: CoinParams) -> Mat2 {
    let (s, co) = c.theta.sin_cos();
    let z = C64::from_polar(1.0, c.xi);
    let a = C64::from_polar(1.0, c.alpha);
    [[a * co * z, a * I * s * z.conj()], [a * I * s * z, a * co * z.conj()]]
}

pub fn mat2_apply(m: &Mat2, v: [C64; 2]) -> [C64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// Coin action with precomputed phases `z = e^{iξ}`, `a = e^{iα}`.
#[inline(always)]
fn coin_apply(cos: f64, isin: C64, z: C64, a: C64, lo: C64, hi: C64) -> (C64, C64) {
    let zl = z * lo;
    let zh = z.conj() * hi;
    (a * (zl * cos + isin * zh), a * (isin * zl + zh * cos))
}

/// Two complex amplitudes `(ψ⁻, ψ⁺)` per lattice site.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    grid: Grid,
    minus: Vec<C64>,
    plus: Vec<C64>,
}

impl SpinorField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, minus: vec![C64::default(); grid.len()], plus: vec![C64::default(); grid.len()] }
    }

    /// `ψ⁻ = 1` at the origin, zero elsewhere.
    pub fn delta_minus(grid: Grid) -> Self {
        let mut s = Self::zeros(grid);
        s.minus[grid.site(0, 0)] = C64::new(1.0, 0.0);
        s
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(i64, i64) -> (C64, C64)) -> Self {
        let mut s = Self::zeros(grid);
        for ip in 0..grid.extent_p() {
            for iq in 0..grid.extent_q() {
                let (lo, hi) = f(grid.offset_p(ip), grid.offset_q(iq));
                let i = ip * grid.extent_q() + iq;
                s.minus[i] = lo;
                s.plus[i] = hi;
            }
        }
        s
    }

    pub fn from_components(grid: Grid, minus: Vec<C64>, plus: Vec<C64>) -> Result<Self> {
        if minus.len() != grid.len() || plus.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, minus, plus })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn minus(&self) -> &[C64] {
        &self.minus
    }

    pub fn plus(&self) -> &[C64] {
        &self.plus
    }

    pub fn at(&self, p: i64, q: i64) -> (C64, C64) {
        let i = self.grid.site(p, q);
        (self.minus[i], self.plus[i])
    }

    pub fn set(&mut self, p: i64, q: i64, v: (C64, C64)) {
        let i = self.grid.site(p, q);
        self.minus[i] = v.0;
        self.plus[i] = v.1;
    }

    /// Total probability, summed in storage order.
    pub fn norm_sqr(&self) -> f64 {
        self.minus.iter().zip(&self.plus).map(|(a, b)| a.norm_sqr() + b.norm_sqr()).sum()
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm_sqr().sqrt();
        self.minus.iter_mut().chain(self.plus.iter_mut()).for_each(|v| *v /= n);
        self
    }

    /// Site-wise `|ψ⁻|² + |ψ⁺|²`.
    pub fn density_field(&self) -> ScalarField {
        let v = self.minus.iter().zip(&self.plus).map(|(a, b)| a.norm_sqr() + b.norm_sqr()).collect();
        ScalarField::from_values(self.grid, v).expect("same grid")
    }

    /// Site-wise `|ψ⁺|² − |ψ⁻|²`.
    pub fn polarization_field(&self) -> ScalarField {
        let v = self.minus.iter().zip(&self.plus).map(|(a, b)| b.norm_sqr() - a.norm_sqr()).collect();
        ScalarField::from_values(self.grid, v).expect("same grid")
    }

    /// Local phase rotation `e^{-iφ}Ψ`.
    pub fn phase_rotated(&self, phi: &ScalarField) -> Result<Self> {
        if phi.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let rot = |v: &[C64]| -> Vec<C64> {
            v.iter().zip(phi.values()).map(|(a, &f)| a * C64::from_polar(1.0, -f)).collect()
        };
        Ok(Self { grid: self.grid, minus: rot(&self.minus), plus: rot(&self.plus) })
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if other.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        let m = self
            .minus
            .iter()
            .zip(&other.minus)
            .chain(self.plus.iter().zip(&other.plus))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
        Ok(m)
    }

    /// Probability within [`GUARD_BAND`] sites of either wrap seam.
    pub fn seam_mass(&self) -> f64 {
        let g = self.grid;
        let nq = g.extent_q();
        let site = |i: usize| self.minus[i].norm_sqr() + self.plus[i].norm_sqr();
        let mut mass = 0.0;
        for ip in 0..g.extent_p() {
            let row = ip * nq;
            if g.seam_distance_p(ip) < GUARD_BAND {
                mass += (0..nq).map(|iq| site(row + iq)).sum::<f64>();
            } else {
                let band = GUARD_BAND.min(nq / 2);
                mass += (0..band).chain(nq - band..nq).map(|iq| site(row + iq)).sum::<f64>();
            }
        }
        mass
    }

    fn check_guard(&self, params: &WalkParams, j: usize) -> Result<()> {
        if let Some(limit) = params.boundary_guard {
            let mass = self.seam_mass();
            if mass > limit {
                return Err(Error::BoundaryGuard { j, mass });
            }
        }
        Ok(())
    }
}

/// Shift `T1` (axis 1) or `T2` (axis 2):
/// `ψ⁻ ← ψ⁻(· + 1)`, `ψ⁺ ← ψ⁺(· − 1)` along the chosen axis.
pub fn shift(axis: usize, psi: &SpinorField) -> Result<SpinorField> {
    let g = psi.grid;
    let (np, nq) = (g.extent_p(), g.extent_q());
    let mut out = SpinorField::zeros(g);
    for ip in 0..np {
        for iq in 0..nq {
            let i = ip * nq + iq;
            let (from_lo, from_hi) = match axis {
                1 => (g.up(ip, np) * nq + iq, g.down(ip, np) * nq + iq),
                2 => (ip * nq + g.up(iq, nq), ip * nq + g.down(iq, nq)),
                _ => return Err(Error::InvalidIndex(axis)),
            };
            out.minus[i] = psi.minus[from_lo];
            out.plus[i] = psi.plus[from_hi];
        }
    }
    Ok(out)
}

/// Per-site coin phases `e^{iξ₁}`, `e^{iξ₂}`, `e^{iα}` for one time step.
#[derive(Clone, Debug)]
pub struct CoinTable {
    layout: Layout,
    cos_plus: f64,
    isin_plus: C64,
    cos_minus: f64,
    isin_minus: C64,
    xi1: Vec<C64>,
    xi2: Vec<C64>,
    alpha: Vec<C64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Layout {
    /// One entry per row `p` (potential independent of `q`).
    Rows,
    Sites,
}

impl CoinTable {
    /// From upper-index potential fields at one time step.
    pub fn from_fields(a_upper: &PotentialTriple, params: &WalkParams) -> Result<Self> {
        let g = a_upper[0].grid();
        if a_upper.iter().any(|f| f.grid() != g) {
            return Err(Error::GridMismatch);
        }
        let k = params.eps_a * params.charge_scale;
        let phases = |f: &ScalarField| f.values().iter().map(|&v| C64::from_polar(1.0, k * v)).collect();
        Ok(Self::with_phases(Layout::Sites, params, phases(&a_upper[1]), phases(&a_upper[2]), phases(&a_upper[0])))
    }

    /// From per-row upper-index potential profiles (`q`-independent potentials).
    pub fn from_rows(rows: &RowProfiles, params: &WalkParams) -> Self {
        let k = params.eps_a * params.charge_scale;
        let phases = |v: &[f64]| v.iter().map(|&v| C64::from_polar(1.0, k * v)).collect();
        Self::with_phases(Layout::Rows, params, phases(&rows.a1), phases(&rows.a2), phases(&rows.a0))
    }

    fn with_phases(layout: Layout, params: &WalkParams, xi1: Vec<C64>, xi2: Vec<C64>, alpha: Vec<C64>) -> Self {
        let (tp, tm) = mass_angles(params);
        Self {
            layout,
            cos_plus: tp.cos(),
            isin_plus: I * tp.sin(),
            cos_minus: tm.cos(),
            isin_minus: I * tm.sin(),
            xi1,
            xi2,
            alpha,
        }
    }

    fn len_ok(&self, g: Grid) -> bool {
        match self.layout {
            Layout::Rows => self.xi1.len() == g.extent_p(),
            Layout::Sites => self.xi1.len() == g.len(),
        }
    }
}

/// Upper-index potential profiles along `p`, one value per row.
#[derive(Clone, Debug, PartialEq)]
pub struct RowProfiles {
    pub a0: Vec<f64>,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
}

impl RowProfiles {
    /// Extracts row profiles from full fields, failing if any row varies along `q`.
    pub fn from_fields(a_upper: &PotentialTriple) -> Result<Self> {
        let g = a_upper[0].grid();
        let mut out = [Vec::new(), Vec::new(), Vec::new()];
        for (f, dst) in a_upper.iter().zip(out.iter_mut()) {
            if f.grid() != g {
                return Err(Error::GridMismatch);
            }
            for ip in 0..g.extent_p() {
                let row = f.row(ip);
                if row.iter().any(|&v| v != row[0]) {
                    return Err(Error::PotentialNotQIndependent);
                }
                dst.push(row[0]);
            }
        }
        let [a0, a1, a2] = out;
        Ok(Self { a0, a1, a2 })
    }

    pub fn len(&self) -> usize {
        self.a0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a0.is_empty()
    }
}

/// Rectangular region outside of which every amplitude is exactly zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Support {
    rows: (usize, usize),
    cols: (usize, usize),
}

impl Support {
    #[cfg(test)]
    fn full(g: Grid) -> Self {
        Self { rows: (0, g.extent_p() - 1), cols: (0, g.extent_q() - 1) }
    }

    fn of(psi: &SpinorField) -> Option<Self> {
        let g = psi.grid;
        let nq = g.extent_q();
        let zero = C64::default();
        let mut bbox: Option<Self> = None;
        for (i, (a, b)) in psi.minus.iter().zip(&psi.plus).enumerate() {
            if *a != zero || *b != zero {
                let (ip, iq) = (i / nq, i % nq);
                bbox = Some(match bbox {
                    None => Self { rows: (ip, ip), cols: (iq, iq) },
                    Some(s) => Self {
                        rows: (s.rows.0.min(ip), s.rows.1.max(ip)),
                        cols: (s.cols.0.min(iq), s.cols.1.max(iq)),
                    },
                });
            }
        }
        bbox
    }

    /// Region reachable after one step; falls back to the full axis once the
    /// support touches a seam.
    fn grown(self, g: Grid) -> Self {
        let grow = |(lo, hi): (usize, usize), n: usize| {
            if lo == 0 || hi + 1 >= n {
                (0, n - 1)
            } else {
                (lo - 1, hi + 1)
            }
        };
        Self { rows: grow(self.rows, g.extent_p()), cols: grow(self.cols, g.extent_q()) }
    }
}

/// Reusable stepping engine: double buffers plus a tracked support box so
/// that only the causally reachable region is updated.
#[derive(Clone, Debug)]
pub struct Stepper {
    params: WalkParams,
    state: SpinorField,
    next: SpinorField,
    support: Option<Support>,
    j: usize,
}

impl Stepper {
    pub fn new(psi0: SpinorField, params: WalkParams) -> Self {
        let next = SpinorField::zeros(psi0.grid);
        let support = Support::of(&psi0);
        Self { params, state: psi0, next, support, j: 0 }
    }

    pub fn state(&self) -> &SpinorField {
        &self.state
    }

    pub fn into_state(self) -> SpinorField {
        self.state
    }

    /// The state before the most recent [`Stepper::advance`].
    pub fn previous(&self) -> &SpinorField {
        &self.next
    }

    pub fn time(&self) -> usize {
        self.j
    }

    pub fn params(&self) -> &WalkParams {
        &self.params
    }

    /// Advances one step with the given coin table. When `tilde` is given it
    /// receives the half-step state (after `T1` and the first coin).
    pub fn advance(&mut self, table: &CoinTable, tilde: Option<&mut SpinorField>) -> Result<()> {
        let g = self.state.grid;
        if !table.len_ok(g) {
            return Err(Error::GridMismatch);
        }
        if let Some(t) = tilde.as_ref() {
            if t.grid != g {
                return Err(Error::GridMismatch);
            }
        }
        self.state.check_guard(&self.params, self.j)?;
        let region = match self.support {
            Some(s) => s.grown(g),
            None => {
                // all-zero state stays zero
                if let Some(t) = tilde {
                    *t = SpinorField::zeros(g);
                }
                self.j += 1;
                return Ok(());
            }
        };
        if let Some(t) = tilde {
            // Clear the half-step buffer outside the written region.
            t.minus.iter_mut().chain(t.plus.iter_mut()).for_each(|v| *v = C64::default());
            step_kernel(&self.state, table, region, &mut self.next, Some(t));
        } else {
            step_kernel(&self.state, table, region, &mut self.next, None);
        }
        std::mem::swap(&mut self.state, &mut self.next);
        self.support = Some(region);
        self.j += 1;
        Ok(())
    }
}

fn step_kernel(
    psi: &SpinorField,
    table: &CoinTable,
    region: Support,
    out: &mut SpinorField,
    tilde: Option<&mut SpinorField>,
) {
    let g = psi.grid;
    let (np, nq) = (g.extent_p(), g.extent_q());
    let (r0, r1) = region.rows;
    let (c0, c1) = region.cols;
    let full_cols = c0 == 0 && c1 == nq - 1;
    let src_lo = &psi.minus;
    let src_hi = &psi.plus;

    let row_job = |ip: usize, out_lo: &mut [C64], out_hi: &mut [C64], t_lo: &mut [C64], t_hi: &mut [C64]| {
        let up = g.up(ip, np) * nq;
        let dn = g.down(ip, np) * nq;
        // Half step: T1 then coin U(θ⁺, ξ₁, 0), on the columns feeding this
        // row's output (one extra column either side).
        let (t0, t1) = if full_cols { (0, nq - 1) } else { (c0 - 1, c1 + 1) };
        match table.layout {
            Layout::Rows => {
                let z = table.xi1[ip];
                for iq in t0..=t1 {
                    let (a, b) = coin_apply(
                        table.cos_plus,
                        table.isin_plus,
                        z,
                        C64::new(1.0, 0.0),
                        src_lo[up + iq],
                        src_hi[dn + iq],
                    );
                    t_lo[iq] = a;
                    t_hi[iq] = b;
                }
            }
            Layout::Sites => {
                for iq in t0..=t1 {
                    let z = table.xi1[ip * nq + iq];
                    let (a, b) = coin_apply(
                        table.cos_plus,
                        table.isin_plus,
                        z,
                        C64::new(1.0, 0.0),
                        src_lo[up + iq],
                        src_hi[dn + iq],
                    );
                    t_lo[iq] = a;
                    t_hi[iq] = b;
                }
            }
        }
        // Second half: T2 then coin U(θ⁻, ξ₂, α).
        let (row_z, row_a) = match table.layout {
            Layout::Rows => (Some(table.xi2[ip]), Some(table.alpha[ip])),
            Layout::Sites => (None, None),
        };
        for iq in c0..=c1 {
            let (z, a) = match (row_z, row_a) {
                (Some(z), Some(a)) => (z, a),
                _ => (table.xi2[ip * nq + iq], table.alpha[ip * nq + iq]),
            };
            let lo = t_lo[g.up(iq, nq)];
            let hi = t_hi[g.down(iq, nq)];
            let (a, b) = coin_apply(table.cos_minus, table.isin_minus, z, a, lo, hi);
            out_lo[iq] = a;
            out_hi[iq] = b;
        }
    };

    let rows = r0 * nq..(r1 + 1) * nq;
    let (out_lo, out_hi) = (&mut out.minus[rows.clone()], &mut out.plus[rows.clone()]);
    match tilde {
        Some(t) => {
            let (tl, th) = (&mut t.minus[rows.clone()], &mut t.plus[rows]);
            out_lo
                .par_chunks_mut(nq)
                .zip(out_hi.par_chunks_mut(nq))
                .zip(tl.par_chunks_mut(nq).zip(th.par_chunks_mut(nq)))
                .enumerate()
                .for_each(|(k, ((ol, oh), (tl, th)))| row_job(r0 + k, ol, oh, tl, th));
        }
        None => {
            out_lo
                .par_chunks_mut(nq)
                .zip(out_hi.par_chunks_mut(nq))
                .enumerate()
                .for_each_init(
                    || (vec![C64::default(); nq], vec![C64::default(); nq]),
                    |(tl, th), (k, (ol, oh))| row_job(r0 + k, ol, oh, tl, th),
                );
        }
    }
}

/// One walk step from upper-index potentials sampled at time `j`.
///
/// Returns the new state and, when `want_intermediate` is set, the half-step
/// state `Ψ̃ = U(θ⁺, εA·A¹, 0) T1 Ψ`.
pub fn step(
    psi: &SpinorField,
    a_upper: &PotentialTriple,
    params: &WalkParams,
    want_intermediate: bool,
) -> Result<(SpinorField, Option<SpinorField>)> {
    if a_upper.iter().any(|f| f.grid() != psi.grid) {
        return Err(Error::GridMismatch);
    }
    let table = CoinTable::from_fields(a_upper, params)?;
    let mut stepper = Stepper::new(psi.clone(), *params);
    let mut tilde = want_intermediate.then(|| SpinorField::zeros(psi.grid));
    stepper.advance(&table, tilde.as_mut())?;
    Ok((stepper.into_state(), tilde))
}

/// Two-component profile along `p` (one row of the lattice).
#[derive(Clone, Debug, PartialEq)]
pub struct LineSpinor {
    pub minus: Vec<C64>,
    pub plus: Vec<C64>,
}

impl LineSpinor {
    pub fn zeros(n: usize) -> Self {
        Self { minus: vec![C64::default(); n], plus: vec![C64::default(); n] }
    }

    pub fn len(&self) -> usize {
        self.minus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minus.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.minus.iter().zip(&self.plus).map(|(a, b)| a.norm_sqr() + b.norm_sqr()).sum()
    }
}

/// One step restricted to states `Ψ(p, q) = Φ(p)·e^{iKqεl}` with potentials
/// independent of `q`. The `T2` shift reduces to the phases `e^{±iKεl}`.
/// The profile is periodic along `p`, with index `i` at offset `i − n/2`.
pub fn step_k_reduced(phi: &LineSpinor, k: f64, a_upper: &RowProfiles, params: &WalkParams) -> Result<LineSpinor> {
    let n = phi.len();
    if n < 3 || phi.plus.len() != n || a_upper.len() != n || a_upper.a1.len() != n || a_upper.a2.len() != n {
        return Err(Error::GridMismatch);
    }
    let (tp, tm) = mass_angles(params);
    let (cp, sp) = (tp.cos(), I * tp.sin());
    let (cm, sm) = (tm.cos(), I * tm.sin());
    let kscale = params.eps_a * params.charge_scale;
    let t2_lo = C64::from_polar(1.0, k * params.eps_l);
    let t2_hi = t2_lo.conj();
    let mut out = LineSpinor::zeros(n);
    for i in 0..n {
        let up = if i + 1 == n { 0 } else { i + 1 };
        let dn = if i == 0 { n - 1 } else { i - 1 };
        let z1 = C64::from_polar(1.0, kscale * a_upper.a1[i]);
        let (tl, th) = coin_apply(cp, sp, z1, C64::new(1.0, 0.0), phi.minus[up], phi.plus[dn]);
        let z2 = C64::from_polar(1.0, kscale * a_upper.a2[i]);
        let a = C64::from_polar(1.0, kscale * a_upper.a0[i]);
        let (lo, hi) = coin_apply(cm, sm, z2, a, tl * t2_lo, th * t2_hi);
        out.minus[i] = lo;
        out.plus[i] = hi;
    }
    Ok(out)
}

/// Discrete gauge transformation of an initial state and a lower-index
/// potential history: `Ψ' = e^{-iφ₀}Ψ`, `A'_μ = A_μ − d_μφ`.
///
/// `phi` must hold one more slice than the potential history.
pub fn gauge_transform(
    psi0: &SpinorField,
    a_lower: &[FieldHistory; 3],
    phi: &FieldHistory,
    params: &WalkParams,
) -> Result<(SpinorField, [FieldHistory; 3])> {
    let psi0_prime = psi0.phase_rotated(phi.slice(0)?)?;
    let len = a_lower[0].len();
    let mut out: [Vec<ScalarField>; 3] = Default::default();
    for j in 0..len {
        for mu in 0..3 {
            let d = d_mu(mu, phi, j, params.eps_a)?;
            out[mu].push(a_lower[mu].slice(j)?.sub(&d)?);
        }
    }
    let [a0, a1, a2] = out;
    Ok((psi0_prime, [FieldHistory::new(a0)?, FieldHistory::new(a1)?, FieldHistory::new(a2)?]))
}

/// Receives each state of a trajectory.
///
/// `observe` is called for `j = 0..J` with `Ψ_j` and, when
/// [`StepObserver::wants_intermediate`] is true, the half-step state `Ψ̃_j`;
/// a final call at `j = J` carries `Ψ_J` and no half-step state.
pub trait StepObserver {
    fn wants_intermediate(&self) -> bool {
        false
    }

    fn observe(&mut self, j: usize, psi: &SpinorField, psi_tilde: Option<&SpinorField>) -> Result<()>;
}

impl<F> StepObserver for F
where
    F: FnMut(usize, &SpinorField, Option<&SpinorField>) -> Result<()>,
{
    fn observe(&mut self, j: usize, psi: &SpinorField, psi_tilde: Option<&SpinorField>) -> Result<()> {
        self(j, psi, psi_tilde)
    }
}

/// Runs `steps` walk steps from `psi0` under `potential`.
pub fn evolve(
    psi0: SpinorField,
    potential: &PotentialSpec,
    steps: usize,
    params: &WalkParams,
    hooks: &mut [&mut dyn StepObserver],
) -> Result<SpinorField> {
    let g = psi0.grid;
    let want_tilde = hooks.iter().any(|h| h.wants_intermediate());
    let mut stepper = Stepper::new(psi0, *params);
    let mut tilde = want_tilde.then(|| SpinorField::zeros(g));
    let static_table = match potential.row_profiles_upper(g, 0) {
        Some(rows) if potential.is_static() => Some(CoinTable::from_rows(&rows, params)),
        _ => None,
    };
    for j in 0..steps {
        let table = match &static_table {
            Some(t) => std::borrow::Cow::Borrowed(t),
            None => {
                let a = potential.sample(g, j, IndexPosition::Upper)?;
                std::borrow::Cow::Owned(CoinTable::from_fields(&a, params)?)
            }
        };
        stepper.advance(&table, tilde.as_mut())?;
        for h in hooks.iter_mut() {
            let t = if h.wants_intermediate() { tilde.as_ref() } else { None };
            h.observe(j, stepper.previous(), t)?;
        }
    }
    for h in hooks.iter_mut() {
        h.observe(steps, stepper.state(), None)?;
    }
    Ok(stepper.into_state())
}
