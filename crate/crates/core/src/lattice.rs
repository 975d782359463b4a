//! Periodic 2D lattice, real scalar fields on it, and the finite-difference
//! operators built from the five elementary shifts/averages.
//!
//! Sites are stored row-major with `p` as the slow axis and `q` as the fast
//! one. Public coordinates are signed offsets from the grid center
//! (`extent / 2`), so the origin `(0, 0)` is a regular interior site.
//!
//! Elementary operators (all periodic):
//!
//! ```text
//! (L  Q)_{j,p,q} = Q_{j+1,p,q}
//! (Σ1 Q)_{j,p,q} = (Q_{j,p+1,q} + Q_{j,p-1,q}) / 2
//! (Σ2 Q)_{j,p,q} = (Q_{j,p,q+1} + Q_{j,p,q-1}) / 2
//! (Δ1 Q)_{j,p,q} = (Q_{j,p+1,q} - Q_{j,p-1,q}) / 2
//! (Δ2 Q)_{j,p,q} = (Q_{j,p,q+1} - Q_{j,p,q-1}) / 2
//! ```
//!
//! Gauge derivatives: `d0 = (L - Σ2Σ1)/εA`, `d1 = Δ1/εA`, `d2 = Δ2Σ1/εA`.
//! Current derivatives: `D0 = d0`, `D1 = d1Σ2`, `D2 = Δ2/εA`.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Boundary {
    #[default]
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid {
    extent_p: usize,
    extent_q: usize,
    boundary: Boundary,
}

impl Grid {
    pub fn new(extent_p: usize, extent_q: usize) -> Result<Self> {
        if extent_p < 3 || extent_q < 3 {
            return Err(Error::InvalidGrid { extent_p, extent_q });
        }
        Ok(Self { extent_p, extent_q, boundary: Boundary::Periodic })
    }

    pub fn square(extent: usize) -> Result<Self> {
        Self::new(extent, extent)
    }

    pub fn extent_p(&self) -> usize {
        self.extent_p
    }

    pub fn extent_q(&self) -> usize {
        self.extent_q
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn len(&self) -> usize {
        self.extent_p * self.extent_q
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center_p(&self) -> usize {
        self.extent_p / 2
    }

    pub fn center_q(&self) -> usize {
        self.extent_q / 2
    }

    /// Signed offset of row `ip` from the grid center.
    pub fn offset_p(&self, ip: usize) -> i64 {
        ip as i64 - self.center_p() as i64
    }

    pub fn offset_q(&self, iq: usize) -> i64 {
        iq as i64 - self.center_q() as i64
    }

    /// Storage index of the site at signed offset `(p, q)`, wrapping periodically.
    pub fn site(&self, p: i64, q: i64) -> usize {
        let ip = (self.center_p() as i64 + p).rem_euclid(self.extent_p as i64) as usize;
        let iq = (self.center_q() as i64 + q).rem_euclid(self.extent_q as i64) as usize;
        ip * self.extent_q + iq
    }

    #[inline]
    pub(crate) fn up(&self, i: usize, n: usize) -> usize {
        if i + 1 == n {
            0
        } else {
            i + 1
        }
    }

    #[inline]
    pub(crate) fn down(&self, i: usize, n: usize) -> usize {
        if i == 0 {
            n - 1
        } else {
            i - 1
        }
    }

    /// Distance (in sites) of row `ip` to the nearest wrap seam along `p`.
    pub fn seam_distance_p(&self, ip: usize) -> usize {
        ip.min(self.extent_p - 1 - ip)
    }

    pub fn seam_distance_q(&self, iq: usize) -> usize {
        iq.min(self.extent_q - 1 - iq)
    }
}

/// One real value per lattice site.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    /// Builds a field from a function of the signed site offsets `(p, q)`.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(i64, i64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for ip in 0..grid.extent_p() {
            let p = grid.offset_p(ip);
            for iq in 0..grid.extent_q() {
                values.push(f(p, grid.offset_q(iq)));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, p: i64, q: i64) -> f64 {
        self.values[self.grid.site(p, q)]
    }

    pub fn set(&mut self, p: i64, q: i64, v: f64) {
        let i = self.grid.site(p, q);
        self.values[i] = v;
    }

    pub fn row(&self, ip: usize) -> &[f64] {
        let nq = self.grid.extent_q();
        &self.values[ip * nq..(ip + 1) * nq]
    }

    /// Sum over all sites in storage order.
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.check_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Largest `|self - other|` over sites at least `margin` rows/columns away
    /// from both wrap seams.
    pub fn max_abs_diff_interior(&self, other: &Self, margin: usize) -> Result<f64> {
        self.check_grid(other)?;
        let g = self.grid;
        let mut m: f64 = 0.0;
        for ip in 0..g.extent_p() {
            if g.seam_distance_p(ip) < margin {
                continue;
            }
            for iq in 0..g.extent_q() {
                if g.seam_distance_q(iq) < margin {
                    continue;
                }
                let i = ip * g.extent_q() + iq;
                m = m.max((self.values[i] - other.values[i]).abs());
            }
        }
        Ok(m)
    }

    pub(crate) fn check_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stencil {
    Sigma1,
    Sigma2,
    Delta1,
    Delta2,
}

impl Stencil {
    pub const ALL: [Stencil; 4] = [Stencil::Sigma1, Stencil::Sigma2, Stencil::Delta1, Stencil::Delta2];
}

/// Applies one of the four spatial averaging/differencing operators.
pub fn apply_stencil(kind: Stencil, f: &ScalarField) -> ScalarField {
    let g = f.grid;
    let (np, nq) = (g.extent_p(), g.extent_q());
    let src = &f.values;
    let mut out = vec![0.0; g.len()];
    out.par_chunks_mut(nq).enumerate().for_each(|(ip, row)| match kind {
        Stencil::Sigma1 | Stencil::Delta1 => {
            let up = &src[g.up(ip, np) * nq..][..nq];
            let dn = &src[g.down(ip, np) * nq..][..nq];
            let sign = if kind == Stencil::Sigma1 { 1.0 } else { -1.0 };
            for ((o, a), b) in row.iter_mut().zip(up).zip(dn) {
                *o = (a + sign * b) / 2.0;
            }
        }
        Stencil::Sigma2 | Stencil::Delta2 => {
            let cur = &src[ip * nq..][..nq];
            let sign = if kind == Stencil::Sigma2 { 1.0 } else { -1.0 };
            for (iq, o) in row.iter_mut().enumerate() {
                *o = (cur[g.up(iq, nq)] + sign * cur[g.down(iq, nq)]) / 2.0;
            }
        }
    });
    ScalarField { grid: g, values: out }
}

/// Applies a sequence of stencils right-to-left (`ops[0]` is applied last).
pub fn apply_chain(ops: &[Stencil], f: &ScalarField) -> ScalarField {
    ops.iter().rev().fold(f.clone(), |acc, &k| apply_stencil(k, &acc))
}

/// Time-indexed sequence of scalar fields sharing one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldHistory {
    slices: Vec<ScalarField>,
}

impl FieldHistory {
    pub fn new(slices: Vec<ScalarField>) -> Result<Self> {
        if let Some(first) = slices.first() {
            if slices.iter().any(|s| s.grid != first.grid) {
                return Err(Error::GridMismatch);
            }
        }
        Ok(Self { slices })
    }

    /// History whose every slice is produced by `f(j, p, q)`.
    pub fn from_fn(grid: Grid, len: usize, mut f: impl FnMut(usize, i64, i64) -> f64) -> Self {
        let slices = (0..len).map(|j| ScalarField::from_fn(grid, |p, q| f(j, p, q))).collect();
        Self { slices }
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn grid(&self) -> Option<Grid> {
        self.slices.first().map(|s| s.grid)
    }

    pub fn slice(&self, j: usize) -> Result<&ScalarField> {
        self.slices.get(j).ok_or(Error::MissingSlice { j })
    }

    pub fn slices(&self) -> &[ScalarField] {
        &self.slices
    }

    pub fn push(&mut self, f: ScalarField) -> Result<()> {
        if let Some(g) = self.grid() {
            if g != f.grid {
                return Err(Error::GridMismatch);
            }
        }
        self.slices.push(f);
        Ok(())
    }

    /// Site-wise map over every slice.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { slices: self.slices.iter().map(|s| s.map(&f)).collect() }
    }
}

/// `(L Q)_j`: the next time slice.
pub fn apply_l(h: &FieldHistory, j: usize) -> Result<ScalarField> {
    h.slice(j)?;
    h.slice(j + 1).cloned()
}

/// `d0` from two adjacent slices: `(next - Σ2Σ1 cur)/εA`.
pub fn d0_pair(cur: &ScalarField, next: &ScalarField, eps_a: f64) -> Result<ScalarField> {
    let avg = apply_chain(&[Stencil::Sigma2, Stencil::Sigma1], cur);
    next.lin_comb(1.0 / eps_a, &avg, -1.0 / eps_a)
}

/// Spatial gauge derivative `d1 = Δ1/εA` or `d2 = Δ2Σ1/εA` of a single slice.
pub fn d_spatial(mu: usize, f: &ScalarField, eps_a: f64) -> Result<ScalarField> {
    let out = match mu {
        1 => apply_stencil(Stencil::Delta1, f),
        2 => apply_chain(&[Stencil::Delta2, Stencil::Sigma1], f),
        _ => return Err(Error::InvalidIndex(mu)),
    };
    Ok(out.scale(1.0 / eps_a))
}

/// Spatial current derivative `D1 = Δ1Σ2/εA` or `D2 = Δ2/εA` of a single slice.
pub fn big_d_spatial(mu: usize, f: &ScalarField, eps_a: f64) -> Result<ScalarField> {
    let out = match mu {
        1 => apply_chain(&[Stencil::Delta1, Stencil::Sigma2], f),
        2 => apply_stencil(Stencil::Delta2, f),
        _ => return Err(Error::InvalidIndex(mu)),
    };
    Ok(out.scale(1.0 / eps_a))
}

/// Gauge derivative `d_mu` of a history at time `j`.
pub fn d_mu(mu: usize, h: &FieldHistory, j: usize, eps_a: f64) -> Result<ScalarField> {
    match mu {
        0 => d0_pair(h.slice(j)?, h.slice(j + 1)?, eps_a),
        1 | 2 => d_spatial(mu, h.slice(j)?, eps_a),
        _ => Err(Error::InvalidIndex(mu)),
    }
}

/// Current derivative `D_mu` of a history at time `j`.
#[allow(non_snake_case)]
pub fn D_mu(mu: usize, h: &FieldHistory, j: usize, eps_a: f64) -> Result<ScalarField> {
    match mu {
        0 => d0_pair(h.slice(j)?, h.slice(j + 1)?, eps_a),
        1 | 2 => big_d_spatial(mu, h.slice(j)?, eps_a),
        _ => Err(Error::InvalidIndex(mu)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Grid {
        Grid::new(9, 11).unwrap()
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(matches!(Grid::new(2, 5), Err(Error::InvalidGrid { .. })));
        assert!(Grid::new(3, 3).is_ok());
    }

    #[test]
    fn site_wraps_periodically() {
        let g = grid();
        assert_eq!(g.site(0, 0), g.center_p() * 11 + g.center_q());
        assert_eq!(g.site(9, 0), g.site(0, 0));
        assert_eq!(g.site(-1, -11), g.site(-1, 0));
    }

    #[test]
    fn sigma1_keeps_constants() {
        let f = ScalarField::constant(grid(), 2.5);
        assert_eq!(apply_stencil(Stencil::Sigma1, &f), f);
    }

    #[test]
    fn delta1_of_linear_is_slope() {
        let a = 0.7;
        let f = ScalarField::from_fn(grid(), |p, _| a * p as f64);
        let out = apply_stencil(Stencil::Delta1, &f);
        let want = ScalarField::constant(grid(), a);
        assert!(out.max_abs_diff_interior(&want, 1).unwrap() < 1e-15);
    }

    #[test]
    fn delta2_of_delta_field() {
        let mut f = ScalarField::zeros(grid());
        f.set(0, 0, 1.0);
        let out = apply_stencil(Stencil::Delta2, &f);
        assert_eq!(out.at(0, -1), 0.5);
        assert_eq!(out.at(0, 1), -0.5);
        let nonzero = out.values().iter().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn l_returns_next_slice() {
        let g = grid();
        let f0 = ScalarField::from_fn(g, |p, q| (p * q) as f64);
        let f1 = ScalarField::from_fn(g, |p, q| (p + q) as f64);
        let h = FieldHistory::new(vec![f0.clone(), f1.clone()]).unwrap();
        assert_eq!(apply_l(&h, 0).unwrap(), f1);

        let stationary = FieldHistory::new(vec![f0.clone(), f0.clone()]).unwrap();
        assert_eq!(apply_l(&stationary, 0).unwrap(), f0);

        let single = FieldHistory::new(vec![f0]).unwrap();
        assert!(matches!(apply_l(&single, 0), Err(Error::MissingSlice { j: 1 })));
    }

    #[test]
    fn d_mu_examples() {
        let g = grid();
        let eps = 0.5;
        let konst = FieldHistory::from_fn(g, 2, |_, _, _| 3.0);
        for mu in 0..3 {
            assert_eq!(d_mu(mu, &konst, 0, eps).unwrap().max_abs(), 0.0);
            assert_eq!(D_mu(mu, &konst, 0, eps).unwrap().max_abs(), 0.0);
        }

        let c = 0.3;
        let ramp_t = FieldHistory::from_fn(g, 2, |j, _, _| c * j as f64);
        let d0 = d_mu(0, &ramp_t, 0, eps).unwrap();
        assert!(d0.values().iter().all(|v| (v - c / eps).abs() < 1e-15));

        let a = 0.4;
        let ramp_p = FieldHistory::from_fn(g, 1, |_, p, _| a * p as f64);
        let d1 = d_mu(1, &ramp_p, 0, eps).unwrap();
        let d2 = d_mu(2, &ramp_p, 0, eps).unwrap();
        let big1 = D_mu(1, &ramp_p, 0, eps).unwrap();
        let want = ScalarField::constant(g, a / eps);
        assert!(d1.max_abs_diff_interior(&want, 2).unwrap() < 1e-14);
        assert!(big1.max_abs_diff_interior(&want, 2).unwrap() < 1e-14);
        assert!(d2.max_abs() < 1e-15);

        let ramp_q = FieldHistory::from_fn(g, 1, |_, _, q| a * q as f64);
        let big2 = D_mu(2, &ramp_q, 0, eps).unwrap();
        assert!(big2.max_abs_diff_interior(&want, 2).unwrap() < 1e-14);

        assert!(matches!(d_mu(0, &ramp_p, 0, eps), Err(Error::MissingSlice { j: 1 })));
        assert!(matches!(d_mu(3, &ramp_p, 0, eps), Err(Error::InvalidIndex(3))));
    }

    fn field_strategy() -> impl Strategy<Value = ScalarField> {
        prop::collection::vec(-1.0f64..1.0, 9 * 11)
            .prop_map(|v| ScalarField::from_values(Grid::new(9, 11).unwrap(), v).unwrap())
    }

    proptest! {
        #[test]
        fn stencils_commute(f in field_strategy()) {
            for &a in &Stencil::ALL {
                for &b in &Stencil::ALL {
                    let ab = apply_chain(&[a, b], &f);
                    let ba = apply_chain(&[b, a], &f);
                    prop_assert!(ab.max_abs_diff(&ba).unwrap() <= 1e-13);
                }
            }
        }

        #[test]
        fn stencils_are_linear(f in field_strategy(), g in field_strategy(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let comb = f.lin_comb(a, &g, b).unwrap();
            for &k in &Stencil::ALL {
                let lhs = apply_stencil(k, &comb);
                let rhs = apply_stencil(k, &f).lin_comb(a, &apply_stencil(k, &g), b).unwrap();
                prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-13);
            }
        }

        #[test]
        fn stencils_preserve_site_sums(f in field_strategy()) {
            let total = f.sum();
            let scale = f.values().iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            for k in [Stencil::Sigma1, Stencil::Sigma2] {
                prop_assert!((apply_stencil(k, &f).sum() - total).abs() <= 1e-12 * scale);
            }
            for k in [Stencil::Delta1, Stencil::Delta2] {
                prop_assert!(apply_stencil(k, &f).sum().abs() <= 1e-12 * scale);
            }
        }
    }
}
