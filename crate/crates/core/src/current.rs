//! Half-step state, lattice probability current and the exact discrete
//! continuity equation `D_μ J^μ = 0`.

use crate::error::{Error, Result};
use num_complex::Complex64 as C64;

use crate::lattice::{big_d_spatial, d0_pair, Grid, ScalarField};
use crate::walk::{coin_matrix, mass_angles, mat2_apply, shift, CoinParams, SpinorField, StepObserver, WalkParams};

/// `J^0 = ρ`, `J^1 = |ψ⁺|² − |ψ⁻|²`, `J^2 = |ψ̃⁺|² − |ψ̃⁻|²` at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct CurrentSlice {
    pub j0: ScalarField,
    pub j1: ScalarField,
    pub j2: ScalarField,
}

impl CurrentSlice {
    pub fn components(&self) -> [&ScalarField; 3] {
        [&self.j0, &self.j1, &self.j2]
    }

    pub fn into_components(self) -> [ScalarField; 3] {
        [self.j0, self.j1, self.j2]
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self
            .j0
            .max_abs_diff(&other.j0)?
            .max(self.j1.max_abs_diff(&other.j1)?)
            .max(self.j2.max_abs_diff(&other.j2)?))
    }
}

/// `Ψ̃ = U(θ⁺, εA·A¹, 0) T1 Ψ`, built from the explicit shift and coin
/// matrices.
pub fn half_step_state(psi: &SpinorField, a1_upper: &ScalarField, params: &WalkParams) -> Result<SpinorField> {
    let g = psi.grid();
    if a1_upper.grid() != g {
        return Err(Error::GridMismatch);
    }
    let shifted = shift(1, psi)?;
    let (theta, _) = mass_angles(params);
    let k = params.eps_a * params.charge_scale;
    let mut lo = Vec::with_capacity(g.len());
    let mut hi = Vec::with_capacity(g.len());
    for ((a, b), &xi) in shifted.minus().iter().zip(shifted.plus()).zip(a1_upper.values()) {
        let u = coin_matrix(CoinParams { theta, xi: k * xi, alpha: 0.0 });
        let [x, y] = mat2_apply(&u, [*a, *b]);
        lo.push(x);
        hi.push(y);
    }
    SpinorField::from_components(g, lo, hi)
}

pub fn current_components(psi: &SpinorField, psi_tilde: &SpinorField) -> Result<CurrentSlice> {
    if psi.grid() != psi_tilde.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(CurrentSlice { j0: psi.density_field(), j1: psi.polarization_field(), j2: psi_tilde.polarization_field() })
}

/// `D0 J^0 + D1 J^1 + D2 J^2`, with `rho_next` the density one step later.
pub fn continuity_residual(slice: &CurrentSlice, rho_next: &ScalarField, eps_a: f64) -> Result<ScalarField> {
    if slice.j0.grid() != rho_next.grid() || slice.j1.grid() != rho_next.grid() || slice.j2.grid() != rho_next.grid() {
        return Err(Error::GridMismatch);
    }
    d0_pair(&slice.j0, rho_next, eps_a)?
        .add(&big_d_spatial(1, &slice.j1, eps_a)?)?
        .add(&big_d_spatial(2, &slice.j2, eps_a)?)
}

/// Inclusive index box `rows × cols` outside of which a field vanishes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct SiteBox {
    rows: (usize, usize),
    cols: (usize, usize),
}

impl SiteBox {
    #[cfg(test)]
    fn full(g: Grid) -> Self {
        Self { rows: (0, g.extent_p() - 1), cols: (0, g.extent_q() - 1) }
    }

    /// Smallest box holding every nonzero amplitude of `psi`.
    fn of(psi: &SpinorField) -> Option<Self> {
        let nq = psi.grid().extent_q();
        let zero = C64::default();
        let mut out: Option<Self> = None;
        for (ip, (lo, hi)) in psi.minus().chunks(nq).zip(psi.plus().chunks(nq)).enumerate() {
            let nz = |iq: &usize| lo[*iq] != zero || hi[*iq] != zero;
            let Some(first) = (0..nq).find(nz) else { continue };
            let last = (0..nq).rev().find(nz).expect("row has a nonzero entry");
            out = Some(match out {
                None => Self { rows: (ip, ip), cols: (first, last) },
                Some(b) => Self { rows: (b.rows.0, ip), cols: (b.cols.0.min(first), b.cols.1.max(last)) },
            });
        }
        out
    }

    fn union(a: Option<Self>, b: Option<Self>) -> Option<Self> {
        match (a, b) {
            (Some(a), Some(b)) => Some(Self {
                rows: (a.rows.0.min(b.rows.0), a.rows.1.max(b.rows.1)),
                cols: (a.cols.0.min(b.cols.0), a.cols.1.max(b.cols.1)),
            }),
            (a, b) => a.or(b),
        }
    }

    /// Grown by one site; an axis that would wrap becomes the full axis.
    fn padded(self, g: Grid) -> Self {
        let grow = |(lo, hi): (usize, usize), n: usize| if lo == 0 || hi + 1 >= n { (0, n - 1) } else { (lo - 1, hi + 1) };
        Self { rows: grow(self.rows, g.extent_p()), cols: grow(self.cols, g.extent_q()) }
    }
}

/// `f(ψ⁻, ψ⁺)` inside `b`, exactly zero elsewhere.
fn boxed_field(psi: &SpinorField, b: Option<SiteBox>, f: impl Fn(C64, C64) -> f64) -> ScalarField {
    let g = psi.grid();
    let nq = g.extent_q();
    let mut v = vec![0.0; g.len()];
    if let Some(b) = b {
        for ip in b.rows.0..=b.rows.1 {
            for i in ip * nq + b.cols.0..=ip * nq + b.cols.1 {
                v[i] = f(psi.minus()[i], psi.plus()[i]);
            }
        }
    }
    ScalarField::from_values(g, v).expect("same grid")
}

/// Same value as [`continuity_residual`] evaluated site by site in one pass
/// over `region` (every site outside it must have a vanishing residual
/// stencil). Returns the largest `|residual|`.
fn continuity_residual_max(slice: &CurrentSlice, rho_next: &ScalarField, eps_a: f64, region: SiteBox) -> f64 {
    let g = rho_next.grid();
    let (np, nq) = (g.extent_p(), g.extent_q());
    let (r, j1, j2, rn) = (slice.j0.values(), slice.j1.values(), slice.j2.values(), rho_next.values());
    let mut worst: f64 = 0.0;
    for ip in region.rows.0..=region.rows.1 {
        let (up, dn) = (g.up(ip, np), g.down(ip, np));
        let (ru, rd, rc) = (up * nq, dn * nq, ip * nq);
        for iq in region.cols.0..=region.cols.1 {
            let (qu, qd) = (g.up(iq, nq), g.down(iq, nq));
            // Σ2Σ1 ρ
            let s1 = |q: usize| (r[ru + q] + r[rd + q]) / 2.0;
            let avg = (s1(qu) + s1(qd)) / 2.0;
            // Δ1Σ2 J¹ (Σ2 first)
            let s2 = |row: usize| (j1[row + qu] + j1[row + qd]) / 2.0;
            let dj1 = (s2(ru) - s2(rd)) / 2.0;
            let dj2 = (j2[rc + qu] - j2[rc + qd]) / 2.0;
            let res = (rn[rc + iq] - avg) / eps_a + dj1 / eps_a + dj2 / eps_a;
            worst = worst.max(res.abs());
        }
    }
    worst
}

/// Observer recording the largest continuity residual of every step.
///
/// Fields are only built inside a box holding every nonzero amplitude, so the
/// cost follows the light cone rather than the grid. The box is found by a
/// scan once and then grown by one site per axis and step, the most a walk
/// step can move amplitude.
#[derive(Debug, Default)]
pub struct ContinuityMonitor {
    eps_a: f64,
    pending: Option<(CurrentSlice, Option<SiteBox>)>,
    cone: Option<SiteBox>,
    pub max_residual_per_step: Vec<f64>,
}

impl ContinuityMonitor {
    pub fn new(eps_a: f64) -> Self {
        Self { eps_a, pending: None, cone: None, max_residual_per_step: Vec::new() }
    }

    pub fn max_residual(&self) -> f64 {
        self.max_residual_per_step.iter().fold(0.0, |m, &v| m.max(v))
    }
}

impl StepObserver for ContinuityMonitor {
    fn wants_intermediate(&self) -> bool {
        true
    }

    fn observe(&mut self, _j: usize, psi: &SpinorField, psi_tilde: Option<&SpinorField>) -> Result<()> {
        let g = psi.grid();
        let bpsi = self.cone.or_else(|| SiteBox::of(psi));
        let rho = boxed_field(psi, bpsi, |a, b| a.norm_sqr() + b.norm_sqr());
        if let Some((prev, bprev)) = self.pending.take() {
            let worst = match SiteBox::union(bprev, bpsi) {
                Some(b) => continuity_residual_max(&prev, &rho, self.eps_a, b.padded(g)),
                None => 0.0,
            };
            self.max_residual_per_step.push(worst);
        }
        let grown = bpsi.map(|b| b.padded(g));
        if let Some(t) = psi_tilde {
            let j1 = boxed_field(psi, bpsi, |a, b| b.norm_sqr() - a.norm_sqr());
            let j2 = boxed_field(t, grown, |a, b| b.norm_sqr() - a.norm_sqr());
            self.pending = Some((CurrentSlice { j0: rho, j1, j2 }, grown));
        }
        self.cone = grown;
        Ok(())
    }
}

/// Observer recording the current of every step (small grids only).
#[derive(Debug, Default)]
pub struct CurrentRecorder {
    pub slices: Vec<CurrentSlice>,
}

impl StepObserver for CurrentRecorder {
    fn wants_intermediate(&self) -> bool {
        true
    }

    fn observe(&mut self, _j: usize, psi: &SpinorField, psi_tilde: Option<&SpinorField>) -> Result<()> {
        if let Some(t) = psi_tilde {
            self.slices.push(current_components(psi, t)?);
        }
        Ok(())
    }
}
