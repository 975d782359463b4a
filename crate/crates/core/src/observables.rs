//! Scalar diagnostics over walker trajectories.

use crate::error::{Error, Result};
use crate::lattice::ScalarField;
use crate::walk::{SpinorField, StepObserver};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Axis {
    P,
    Q,
}

/// Probability of presence `P = |ψ⁻|² + |ψ⁺|²` at time `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensitySlice {
    pub p: ScalarField,
    pub j: usize,
}

impl DensitySlice {
    pub fn total(&self) -> f64 {
        self.p.sum()
    }

    pub fn max(&self) -> f64 {
        self.p.values().iter().fold(0.0, |m, &v| m.max(v))
    }

    /// `M(l) = Σ_{other axis} P`, indexed by storage row/column.
    pub fn marginal(&self, axis: Axis) -> Marginal {
        let g = self.p.grid();
        let (np, nq) = (g.extent_p(), g.extent_q());
        let v = self.p.values();
        let (offsets, mass) = match axis {
            Axis::P => ((0..np).map(|i| g.offset_p(i)).collect(), (0..np).map(|ip| self.p.row(ip).iter().sum()).collect()),
            Axis::Q => {
                let mut m = vec![0.0; nq];
                for ip in 0..np {
                    for (acc, x) in m.iter_mut().zip(&v[ip * nq..(ip + 1) * nq]) {
                        *acc += x;
                    }
                }
                ((0..nq).map(|i| g.offset_q(i)).collect(), m)
            }
        };
        Marginal { offsets, mass }
    }
}

/// One-dimensional marginal of the density along an axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginal {
    pub offsets: Vec<i64>,
    pub mass: Vec<f64>,
}

impl Marginal {
    fn moment(&self, k: i32) -> f64 {
        self.offsets.iter().zip(&self.mass).map(|(&l, &m)| (l as f64).powi(k) * m).sum()
    }
}

pub fn density(psi: &SpinorField, j: usize) -> DensitySlice {
    DensitySlice { p: psi.density_field(), j }
}

/// `ε_l · Σ l·P` with `l` the signed offset along `axis`.
pub fn axis_mean(p: &DensitySlice, axis: Axis, eps_l: f64) -> f64 {
    p.marginal(axis).moment(1) * eps_l
}

/// Uncentered spread `ε_l · sqrt(Σ l²·P)`.
pub fn axis_spread(p: &DensitySlice, axis: Axis, eps_l: f64) -> f64 {
    p.marginal(axis).moment(2).sqrt() * eps_l
}

/// Centered standard deviation along `axis`, in `X` units.
pub fn axis_std(p: &DensitySlice, axis: Axis, eps_l: f64) -> f64 {
    let m = p.marginal(axis);
    let mean = m.moment(1);
    (m.moment(2) - mean * mean).max(0.0).sqrt() * eps_l
}

#[derive(Clone, Debug, Default, PartialEq, serde::Serialize)]
pub struct TimeSeries {
    pub j: Vec<usize>,
    pub value: Vec<f64>,
}

impl TimeSeries {
    pub fn new(j: Vec<usize>, value: Vec<f64>) -> Result<Self> {
        if j.len() != value.len() {
            return Err(Error::DegenerateFit("time and value lengths differ".into()));
        }
        if j.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::DegenerateFit("time indices must be strictly increasing".into()));
        }
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateFit("non-finite sample".into()));
        }
        Ok(Self { j, value })
    }

    pub fn push(&mut self, j: usize, v: f64) {
        debug_assert!(self.j.last().map_or(true, |&l| j > l));
        self.j.push(j);
        self.value.push(v);
    }

    pub fn len(&self) -> usize {
        self.j.len()
    }

    pub fn is_empty(&self) -> bool {
        self.j.is_empty()
    }
}

/// Vertex offset in `[-1/2, 1/2]` of the parabola through three equally
/// spaced samples centered on the middle one.
fn parabolic_offset(a: f64, b: f64, c: f64) -> f64 {
    let den = a - 2.0 * b + c;
    if den == 0.0 {
        0.0
    } else {
        (0.5 * (a - c) / den).clamp(-0.5, 0.5)
    }
}

/// Topographic prominence of the local maximum at `i`.
fn prominence(v: &[f64], i: usize) -> f64 {
    let peak = v[i];
    let mut left_min = peak;
    for k in (0..i).rev() {
        if v[k] > peak {
            break;
        }
        left_min = left_min.min(v[k]);
    }
    let mut right_min = peak;
    for &x in &v[i + 1..] {
        if x > peak {
            break;
        }
        right_min = right_min.min(x);
    }
    peak - left_min.max(right_min)
}

/// Interior local maxima (plateaus count once, at their first sample).
fn local_maxima(v: &[f64]) -> Vec<usize> {
    (1..v.len().saturating_sub(1)).filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1]).collect()
}

/// Fraction of the series range a Bloch extremum must stand out by.
pub const BLOCH_PROMINENCE: f64 = 0.1;

/// Largest relative deviation of a single gap from the mean gap for a view of
/// the series to count as a clean oscillation.
pub const BLOCH_REGULARITY: f64 = 0.2;

/// Gaps between successive prominent maxima of `v` sampled at times `t`, each
/// maximum refined by a three-point parabola. `None` without an oscillation.
fn maxima_gaps(t: &[f64], v: &[f64]) -> Option<Vec<f64>> {
    let range = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(range > 0.0) {
        return None;
    }
    let neg: Vec<f64> = v.iter().map(|x| -x).collect();
    let keep = |vals: &[f64]| -> Vec<usize> {
        local_maxima(vals).into_iter().filter(|&i| prominence(vals, i) >= BLOCH_PROMINENCE * range).collect()
    };
    let maxima = keep(v);
    if maxima.len() + keep(&neg).len() < 3 || maxima.len() < 2 {
        return None;
    }
    let times: Vec<f64> = maxima
        .iter()
        .map(|&i| t[i] + (t[i + 1] - t[i - 1]) / 2.0 * parabolic_offset(v[i - 1], v[i], v[i + 1]))
        .collect();
    Some(times.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Period of an oscillating series from the gaps between successive maxima.
///
/// The walk superposes a period-2 lattice oscillation on the slow motion of
/// its mean, so the raw series is two interleaved smooth curves. The gaps are
/// measured on three views: the even-time and odd-time subsequences, and the
/// average of consecutive samples (which removes the period-2 component
/// exactly but blurs oscillations only a few steps long). A view counts when
/// no gap deviates from its mean by more than [`BLOCH_REGULARITY`]; the period
/// is the mean over counting views. The uncertainty is the largest deviation
/// of any single gap, or of any view's mean, from that period.
pub fn bloch_period(series: &TimeSeries) -> Result<(f64, f64)> {
    let t: Vec<f64> = series.j.iter().map(|&j| j as f64).collect();
    let v = &series.value;
    let parity = |r: usize| -> (Vec<f64>, Vec<f64>) {
        (t.iter().skip(r).step_by(2).copied().collect(), v.iter().skip(r).step_by(2).copied().collect())
    };
    let views = [
        (t.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect(), v.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()),
        parity(0),
        parity(1),
    ];
    let mut found = 0;
    let accepted: Vec<Vec<f64>> = views
        .iter()
        .filter_map(|(tv, vv): &(Vec<f64>, Vec<f64>)| maxima_gaps(tv, vv))
        .inspect(|_| found += 1)
        .filter(|g| {
            let mean = g.iter().sum::<f64>() / g.len() as f64;
            g.iter().all(|x| (x - mean).abs() <= BLOCH_REGULARITY * mean)
        })
        .collect();
    if accepted.is_empty() {
        return Err(Error::NoOscillation { extrema: found });
    }
    let means: Vec<f64> = accepted.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
    let period = means.iter().sum::<f64>() / means.len() as f64;
    let spread = accepted.iter().flatten().chain(&means).fold(0.0f64, |m, g| m.max((g - period).abs()));
    Ok((period, spread))
}

/// Default prominence threshold for density fronts (fraction of the marginal maximum).
pub const FRONT_PROMINENCE: f64 = 0.05;

/// Indices into `m` of local maxima standing out by at least `prom` times the maximum.
fn qualifying_peaks(m: &Marginal, prom: f64) -> Vec<usize> {
    let top = m.mass.iter().cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return Vec::new();
    }
    local_maxima(&m.mass).into_iter().filter(|&i| prominence(&m.mass, i) >= prom * top).collect()
}

fn refined_offset(m: &Marginal, i: usize) -> f64 {
    let spacing = (m.offsets[i + 1] - m.offsets[i]) as f64;
    m.offsets[i] as f64 + spacing * parabolic_offset(m.mass[i - 1], m.mass[i], m.mass[i + 1])
}

/// `q` (site units, sub-site refined) of the lowest-`q` local maximum of the
/// `q`-marginal whose prominence is at least `prom` times the marginal maximum.
///
/// The walk populates one parity class of `q` per time step, so the raw
/// marginal alternates with exact zeros and every populated site is a local
/// maximum; the rule then picks the lowest site holding at least `prom` of the
/// peak marginal, i.e. the leading edge of the bottom front.
pub fn bottom_front_q(p: &DensitySlice, prom: f64) -> Result<f64> {
    let m = p.marginal(Axis::Q);
    let peaks = qualifying_peaks(&m, prom);
    peaks.first().map(|&i| refined_offset(&m, i)).ok_or(Error::NoFront)
}

/// Highest-`q` qualifying maximum (the counterpart of [`bottom_front_q`]).
pub fn top_front_q(p: &DensitySlice, prom: f64) -> Result<f64> {
    let m = p.marginal(Axis::Q);
    let peaks = qualifying_peaks(&m, prom);
    peaks.last().map(|&i| refined_offset(&m, i)).ok_or(Error::NoFront)
}

/// Least-squares `(slope, intercept)` of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::DegenerateFit(format!("need at least 2 paired points, got {}", x.len().min(y.len()))));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all abscissae are equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Samples before this time index are excluded from drift fits.
pub const DRIFT_TRANSIENT: usize = 50;

/// Signed least-squares velocity of a front trajectory `q_front(j)` after the
/// transient, in `X` units per unit time (`εl` cancels).
pub fn drift_velocity(front: &TimeSeries) -> Result<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = front
        .j
        .iter()
        .zip(&front.value)
        .filter(|(j, _)| **j >= DRIFT_TRANSIENT)
        .map(|(&j, &v)| (j as f64, v))
        .unzip();
    if x.len() < 100 {
        return Err(Error::DegenerateFit(format!("drift fit needs 100 post-transient samples, got {}", x.len())));
    }
    Ok(linear_fit(&x, &y)?.0)
}

pub fn drift_speed(front: &TimeSeries) -> Result<f64> {
    drift_velocity(front).map(f64::abs)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!("need at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::DegenerateFit("log-log fit needs positive data".into()));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    Ok(linear_fit(&lx, &ly)?.0)
}

/// Per-step scalar summaries of a trajectory.
#[derive(Clone, Debug, Default)]
pub struct TrajectoryStats {
    pub eps_l: f64,
    pub record_fronts: bool,
    pub norm: TimeSeries,
    pub p_mean: TimeSeries,
    pub q_mean: TimeSeries,
    pub p_spread: TimeSeries,
    pub q_spread: TimeSeries,
    pub p_max: TimeSeries,
    pub bottom_front: TimeSeries,
    pub top_front: TimeSeries,
}

impl TrajectoryStats {
    pub fn new(eps_l: f64, record_fronts: bool) -> Self {
        Self { eps_l, record_fronts, ..Default::default() }
    }

    pub fn final_density_max(&self) -> Option<f64> {
        self.p_max.value.last().copied()
    }
}

impl StepObserver for TrajectoryStats {
    fn observe(&mut self, j: usize, psi: &SpinorField, _: Option<&SpinorField>) -> Result<()> {
        let d = density(psi, j);
        let mp = d.marginal(Axis::P);
        let mq = d.marginal(Axis::Q);
        let el = self.eps_l;
        self.norm.push(j, mp.mass.iter().sum());
        self.p_mean.push(j, mp.moment(1) * el);
        self.q_mean.push(j, mq.moment(1) * el);
        self.p_spread.push(j, mp.moment(2).sqrt() * el);
        self.q_spread.push(j, mq.moment(2).sqrt() * el);
        self.p_max.push(j, d.max());
        if self.record_fronts {
            let peaks = qualifying_peaks(&mq, FRONT_PROMINENCE);
            if let (Some(&lo), Some(&hi)) = (peaks.first(), peaks.last()) {
                self.bottom_front.push(j, refined_offset(&mq, lo) * el);
                self.top_front.push(j, refined_offset(&mq, hi) * el);
            }
        }
        Ok(())
    }
}
