//! Potentials, metric index conversion, the discrete field tensor and the
//! discrete Maxwell operator.
//!
//! Lower-index potentials are canonical. With `η = diag(1, −1, −1)`,
//! `A^0 = A_0`, `A^1 = −A_1`, `A^2 = −A_2`.

use crate::error::{Error, Result};
use crate::lattice::{big_d_spatial, d0_pair, d_mu, FieldHistory, Grid, ScalarField};
use crate::walk::RowProfiles;

/// `(A0, A1, A2)` (or `(A⁰, A¹, A²)`) on one time slice.
pub type PotentialTriple = [ScalarField; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum IndexPosition {
    Lower,
    Upper,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialKind {
    /// Crossed uniform fields: `A_0 = −E·p·εl`, `A_1 = 0`, `A_2 = −B·p·εl`,
    /// with `p` the signed row offset from the grid center.
    UniformEB { e: f64, b: f64 },
    Sampled { history: [FieldHistory; 3], position: IndexPosition },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub eps_l: f64,
}

impl PotentialSpec {
    pub fn uniform_eb(e: f64, b: f64, eps_l: f64) -> Self {
        Self { kind: PotentialKind::UniformEB { e, b }, eps_l }
    }

    pub fn sampled(history: [FieldHistory; 3], position: IndexPosition, eps_l: f64) -> Self {
        Self { kind: PotentialKind::Sampled { history, position }, eps_l }
    }

    /// True when the potential does not depend on the time index.
    pub fn is_static(&self) -> bool {
        matches!(self.kind, PotentialKind::UniformEB { .. })
    }

    /// The three components at time `j` in the requested index position.
    pub fn sample(&self, grid: Grid, j: usize, position: IndexPosition) -> Result<PotentialTriple> {
        sample_potential(self, grid, j, position)
    }

    /// Upper-index profiles along `p` when the potential is `q`-independent
    /// by construction.
    pub fn row_profiles_upper(&self, grid: Grid, _j: usize) -> Option<RowProfiles> {
        match self.kind {
            PotentialKind::UniformEB { e, b } => {
                let ps = (0..grid.extent_p()).map(|ip| grid.offset_p(ip) as f64 * self.eps_l);
                Some(RowProfiles {
                    a0: ps.clone().map(|x| -e * x).collect(),
                    a1: vec![0.0; grid.extent_p()],
                    a2: ps.map(|x| b * x).collect(),
                })
            }
            PotentialKind::Sampled { .. } => None,
        }
    }
}

/// Flips the sign of the spatial components (metric `diag(1, −1, −1)`); the
/// same map converts lower to upper and upper to lower.
pub fn flip_index(a: PotentialTriple) -> PotentialTriple {
    let [a0, a1, a2] = a;
    [a0, a1.scale(-1.0), a2.scale(-1.0)]
}

pub fn sample_potential(spec: &PotentialSpec, grid: Grid, j: usize, position: IndexPosition) -> Result<PotentialTriple> {
    let (lower_or_upper, native) = match &spec.kind {
        PotentialKind::UniformEB { e, b } => {
            let (e, b, el) = (*e, *b, spec.eps_l);
            let a0 = ScalarField::from_fn(grid, |p, _| -e * p as f64 * el);
            let a2 = ScalarField::from_fn(grid, |p, _| -b * p as f64 * el);
            ([a0, ScalarField::zeros(grid), a2], IndexPosition::Lower)
        }
        PotentialKind::Sampled { history, position } => {
            let mut out: Vec<ScalarField> = Vec::with_capacity(3);
            for h in history {
                let s = h.slice(j)?;
                if s.grid() != grid {
                    return Err(Error::GridMismatch);
                }
                out.push(s.clone());
            }
            let [a0, a1, a2]: [ScalarField; 3] = out.try_into().expect("three components");
            ([a0, a1, a2], *position)
        }
    };
    Ok(if native == position { lower_or_upper } else { flip_index(lower_or_upper) })
}

/// Lower-index components `F_01`, `F_02`, `F_12`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldTensor {
    pub f01: ScalarField,
    pub f02: ScalarField,
    pub f12: ScalarField,
}

/// Upper-index components `F^{01}`, `F^{02}`, `F^{12}`.
#[derive(Clone, Debug, PartialEq)]
pub struct UpperFieldTensor {
    pub f01: ScalarField,
    pub f02: ScalarField,
    pub f12: ScalarField,
}

impl FieldTensor {
    pub fn zeros(grid: Grid) -> Self {
        Self { f01: ScalarField::zeros(grid), f02: ScalarField::zeros(grid), f12: ScalarField::zeros(grid) }
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self
            .f01
            .max_abs_diff(&other.f01)?
            .max(self.f02.max_abs_diff(&other.f02)?)
            .max(self.f12.max_abs_diff(&other.f12)?))
    }

    fn grid(&self) -> Grid {
        self.f01.grid()
    }
}

/// `F_μν = d_μ A_ν − d_ν A_μ` at time `j` (needs slices `j` and `j + 1`).
pub fn field_tensor(a_lower: &[FieldHistory; 3], j: usize, eps_a: f64) -> Result<FieldTensor> {
    let d = |mu: usize, nu: usize| d_mu(mu, &a_lower[nu], j, eps_a);
    Ok(FieldTensor {
        f01: d(0, 1)?.sub(&d(1, 0)?)?,
        f02: d(0, 2)?.sub(&d(2, 0)?)?,
        f12: d(1, 2)?.sub(&d(2, 1)?)?,
    })
}

/// `F^{0k} = −F_0k`, `F^{12} = F_12`.
pub fn raise_tensor(f: &FieldTensor) -> UpperFieldTensor {
    UpperFieldTensor { f01: f.f01.scale(-1.0), f02: f.f02.scale(-1.0), f12: f.f12.clone() }
}

/// `D_μ F^{μν}` for `ν = 0, 1, 2` from the upper tensor at `j` and `j + 1`.
pub fn maxwell_divergence(cur: &UpperFieldTensor, next: &UpperFieldTensor, eps_a: f64) -> Result<[ScalarField; 3]> {
    let d1 = |f: &ScalarField| big_d_spatial(1, f, eps_a);
    let d2 = |f: &ScalarField| big_d_spatial(2, f, eps_a);
    // ν = 0: D1 F^{10} + D2 F^{20}
    let div0 = d1(&cur.f01)?.add(&d2(&cur.f02)?)?.scale(-1.0);
    // ν = 1: D0 F^{01} + D2 F^{21}
    let div1 = d0_pair(&cur.f01, &next.f01, eps_a)?.sub(&d2(&cur.f12)?)?;
    // ν = 2: D0 F^{02} + D1 F^{12}
    let div2 = d0_pair(&cur.f02, &next.f02, eps_a)?.add(&d1(&cur.f12)?)?;
    Ok([div0, div1, div2])
}

/// `R^ν = D_μ F^{μν} − J^ν` from lower-index tensors at `j` and `j + 1`.
pub fn maxwell_residual(
    f_history: &[FieldTensor],
    j: usize,
    current: &[ScalarField; 3],
    eps_a: f64,
) -> Result<[ScalarField; 3]> {
    let cur = f_history.get(j).ok_or(Error::MissingSlice { j })?;
    let next = f_history.get(j + 1).ok_or(Error::MissingSlice { j: j + 1 })?;
    if current.iter().any(|c| c.grid() != cur.grid()) {
        return Err(Error::GridMismatch);
    }
    let div = maxwell_divergence(&raise_tensor(cur), &raise_tensor(next), eps_a)?;
    let [d0, d1, d2] = div;
    Ok([d0.sub(&current[0])?, d1.sub(&current[1])?, d2.sub(&current[2])?])
}

/// Largest site value of `|D_ν D_μ F^{μν}|` at time `j`; identically zero up
/// to rounding for any antisymmetric tensor history.
pub fn maxwell_identity_check(f_history: &[FieldTensor], j: usize, eps_a: f64) -> Result<f64> {
    let cur = f_history.get(j).ok_or(Error::MissingSlice { j })?;
    let next = f_history.get(j + 1).ok_or(Error::MissingSlice { j: j + 1 })?;
    let (cu, nu) = (raise_tensor(cur), raise_tensor(next));
    let div_cur = maxwell_divergence(&cu, &nu, eps_a)?;
    // D0 of the ν = 0 row only needs the spatial part at j + 1.
    let div0_next = big_d_spatial(1, &nu.f01, eps_a)?.add(&big_d_spatial(2, &nu.f02, eps_a)?)?.scale(-1.0);
    let total = d0_pair(&div_cur[0], &div0_next, eps_a)?
        .add(&big_d_spatial(1, &div_cur[1], eps_a)?)?
        .add(&big_d_spatial(2, &div_cur[2], eps_a)?)?;
    Ok(total.max_abs())
}

/// Field tensor history for slices `0..len-1` of a lower-index potential history.
pub fn field_tensor_history(a_lower: &[FieldHistory; 3], eps_a: f64) -> Result<Vec<FieldTensor>> {
    let n = a_lower[0].len().saturating_sub(1);
    (0..n).map(|j| field_tensor(a_lower, j, eps_a)).collect()
}

impl UpperFieldTensor {
    pub fn grid(&self) -> Grid {
        self.f01.grid()
    }
}

impl FieldTensor {
    /// Spatially uniform tensor.
    pub fn constant(grid: Grid, f01: f64, f02: f64, f12: f64) -> Self {
        Self {
            f01: ScalarField::constant(grid, f01),
            f02: ScalarField::constant(grid, f02),
            f12: ScalarField::constant(grid, f12),
        }
    }
}
