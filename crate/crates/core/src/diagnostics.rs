//! Single-orbit estimators: rotation number from closest returns, its
//! continued-fraction digits, and the mean return time.
//!
//! A return series records, for the n-th return of an orbit to a section,
//! the curve coordinate `φ_n ∈ [0, 1)` measured from the starting point and
//! the time `T_n` since the previous return.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::geometry::{frac, Point3};
use crate::ode::Tolerances;
use crate::tracer::{returns, CrossingEvent, SectionSpec};

/// Two labels closer than this on the circle signal a periodic orbit.
pub const RATIONAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub phis: Vec<f64>,
    pub ts: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(phis: Vec<f64>, ts: Vec<f64>) -> Result<Self> {
        if phis.len() != ts.len() {
            return Err(Error::InvalidParameter(
                "phis and ts differ in length".into(),
            ));
        }
        if phis.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(Error::InvalidParameter(
                "return coordinates must lie in [0, 1)".into(),
            ));
        }
        if ts.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidParameter(
                "return times must be positive".into(),
            ));
        }
        Ok(Self { phis, ts })
    }

    /// A rigid rotation by `iota` with unit return times.
    pub fn rigid_rotation(iota: f64, n: usize) -> Self {
        Self {
            phis: (1..=n).map(|k| frac(k as f64 * iota)).collect(),
            ts: vec![1.0; n],
        }
    }

    pub fn n_count(&self) -> usize {
        self.phis.len()
    }

    /// The first `n` returns.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.n_count());
        Self {
            phis: self.phis[..n].to_vec(),
            ts: self.ts[..n].to_vec(),
        }
    }

    /// Builds the series from the returns (positive transverse crossings) of an
    /// orbit that started at `start` at time zero. `coord` maps a point of the
    /// section to its curve coordinate in turns.
    pub fn from_crossings<C: Fn(&Point3) -> f64>(
        start: &Point3,
        crossings: &[CrossingEvent],
        coord: C,
    ) -> Result<Self> {
        let c0 = coord(start);
        let mut t_prev = 0.0;
        let mut phis = Vec::new();
        let mut ts = Vec::new();
        for c in crossings.iter().filter(|c| c.is_return()) {
            phis.push(frac(coord(&c.point) - c0));
            ts.push(c.t - t_prev);
            t_prev = c.t;
        }
        Self::new(phis, ts)
    }
}

/// Traces `n` returns of the field line through `start` to `section`.
pub fn collect_returns<C: Fn(&Point3) -> f64>(
    field: &dyn FieldModel,
    start: Point3,
    section: &SectionSpec,
    n: usize,
    coord: C,
    t_max: f64,
    tol: &Tolerances,
) -> Result<ReturnSeries> {
    let ev = returns(field, start, section, n, t_max, tol)?;
    ReturnSeries::from_crossings(&start, &ev, coord)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IotaEstimate {
    pub iota: f64,
    /// Indices `n_k` of the successively closest returns, the convergent
    /// denominators of `ι`.
    pub closest_return_indices: Vec<usize>,
    /// Revolution counts `m_k` paired with `closest_return_indices`.
    pub revolution_counts: Vec<i64>,
    /// Continued-fraction digits `a_1, a_2, …` of `ι mod 1`.
    pub cf_digits: Vec<u64>,
    /// Estimates from successive pairs of closest returns, shallowest first.
    pub estimates: Vec<f64>,
    pub error_estimate: f64,
}

/// Smallest index gap between two labels (0 included as the start) that
/// coincide on the circle, if any.
pub fn detect_period(phis: &[f64]) -> Option<usize> {
    let mut labelled: Vec<(f64, usize)> = std::iter::once((0.0, 0))
        .chain(phis.iter().copied().zip(1..))
        .collect();
    labelled.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut best: Option<usize> = None;
    let mut consider = |i: usize, j: usize| {
        let gap = i.abs_diff(j);
        best = Some(best.map_or(gap, |b| b.min(gap)));
    };
    for w in labelled.windows(2) {
        if w[1].0 - w[0].0 < RATIONAL_TOL {
            consider(w[0].1, w[1].1);
        }
    }
    let (first, last) = (labelled[0], labelled[labelled.len() - 1]);
    if labelled.len() > 1 && first.0 + 1.0 - last.0 < RATIONAL_TOL {
        consider(first.1, last.1);
    }
    best
}

/// Rotation number from the successively closest returns to the starting
/// point.
pub fn estimate_iota_closest_returns(series: &ReturnSeries) -> Result<IotaEstimate> {
    let phis = &series.phis;
    if phis.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} returns, need at least 3",
            phis.len()
        )));
    }
    if let Some(period) = detect_period(phis) {
        return Err(Error::RationalWinding { period });
    }

    // One-sided records: returns landing closer to the start than any earlier
    // return on the same side. They come in alternating runs whose lengths
    // are the continued-fraction digits, each run ending at a convergent
    // denominator. Only the cyclic order of the returns is used, so a smooth
    // change of the section coordinate leaves the levels unchanged.
    let mut runs: Vec<(bool, Vec<usize>)> = vec![(true, vec![1])];
    let (mut lo, mut hi) = (phis[0], phis[0]);
    for (i, &p) in phis.iter().enumerate().skip(1) {
        let left = if p < lo {
            lo = p;
            false
        } else if p > hi {
            hi = p;
            true
        } else {
            continue;
        };
        match runs.last_mut() {
            Some((side, run)) if *side == left => run.push(i + 1),
            _ => runs.push((left, vec![i + 1])),
        }
    }
    // the last run may still be growing
    let complete = runs.len() - 1;
    let cf_digits: Vec<u64> = runs[..complete]
        .iter()
        .map(|(_, r)| r.len() as u64)
        .collect();

    // levels (n, m, δ) with δ = n ι − m: q_0 = 1 taken unreduced, then the
    // convergents p_k/q_k from p_{−1} = 1, p_0 = 0, p_k = a_k p_{k−1} + p_{k−2}
    let offset = |n: usize, left: bool| if left { phis[n - 1] - 1.0 } else { phis[n - 1] };
    let mut q: Vec<usize> = vec![1];
    let mut p: Vec<i64> = vec![0];
    let mut delta: Vec<f64> = vec![phis[0]];
    for (k, (left, run)) in runs[..complete].iter().enumerate() {
        let (qm2, pm2) = if k == 0 { (0, 1) } else { (q[k - 1], p[k - 1]) };
        let a = run.len();
        q.push(a * q[k] + qm2);
        p.push(a as i64 * p[k] + pm2);
        delta.push(offset(*run.last().unwrap(), *left));
    }
    // q_0 is a closest return of its own unless a_1 = 1 makes it q_1
    let first = if q.len() > 1 && q[1] == 1 { 1 } else { 0 };
    let closest_return_indices: Vec<usize> = q[first..].to_vec();
    let revolution_counts = p[first..].to_vec();
    // the best return of the unfinished run, an intermediate fraction
    let (left, run) = &runs[complete];
    if complete > 0 {
        let k = q.len() - 1;
        let j = run.len();
        q.push(q[k - 1] + j * q[k]);
        p.push(p[k - 1] + j as i64 * p[k]);
        delta.push(offset(*run.last().unwrap(), *left));
    }
    debug_assert!(q[1..]
        .iter()
        .zip(&runs)
        .all(|(n, (_, r))| r.last() == Some(n)));

    let mut estimates = Vec::new();
    for k in 1..q.len() {
        let (n1, m1, d1) = (q[k] as f64, p[k] as f64, delta[k]);
        let (n0, m0, d0) = (q[k - 1] as f64, p[k - 1] as f64, delta[k - 1]);
        let den = n1 * d0 - n0 * d1;
        if den != 0.0 {
            estimates.push((m1 * d0 - m0 * d1) / den);
        }
    }
    if estimates.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} closest-return levels within {} returns",
            q.len(),
            phis.len()
        )));
    }

    let last = estimates[estimates.len() - 1];
    let prev = estimates[estimates.len() - 2];
    Ok(IotaEstimate {
        iota: last,
        closest_return_indices,
        revolution_counts,
        cf_digits,
        estimates,
        error_estimate: (last - prev).abs(),
    })
}

/// Continued-fraction digits `a_1, a_2, …` of `x ∈ (0, 1)`.
pub fn continued_fraction_digits(x: f64, count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut y = frac(x);
    for _ in 0..count {
        if y == 0.0 {
            break;
        }
        let inv = 1.0 / y;
        let a = inv.floor();
        out.push(a as u64);
        y = inv - a;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanReturnTime {
    pub mean: f64,
    /// `|T̄_N − T̄_{N/2}|`.
    pub error_estimate: f64,
}

/// `∫₀¹ τ` by the trapezoid rule on the reordered returns, labelling the n-th
/// return with `frac((n − 1) ι)`.
pub fn mean_return_time_trapezoid(series: &ReturnSeries, iota: f64) -> Result<MeanReturnTime> {
    let n = series.n_count();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "{n} returns, need at least 3"
        )));
    }
    let full = trapezoid_on_labels(&series.ts, iota, 0.0)?;
    let half = trapezoid_on_labels(&series.ts[..n / 2], iota, 0.0)?;
    Ok(MeanReturnTime {
        mean: full,
        error_estimate: (full - half).abs(),
    })
}

/// [`mean_return_time_trapezoid`] with the estimated rotation number. The
/// error estimate also covers the spread of `T̄` when `ι` moves by its own
/// error estimate, which grows with the number of returns relabelled.
pub fn mean_return_time(series: &ReturnSeries, iota: &IotaEstimate) -> Result<MeanReturnTime> {
    let mut m = mean_return_time_trapezoid(series, iota.iota)?;
    let e = iota.error_estimate;
    if e > 0.0 {
        let hi = trapezoid_on_labels(&series.ts, iota.iota + e, 0.0)?;
        let lo = trapezoid_on_labels(&series.ts, iota.iota - e, 0.0)?;
        m.error_estimate += 0.5 * (hi - lo).abs();
    }
    Ok(m)
}

/// Periodic trapezoid over labels `frac((n − 1) ι + shift)`.
pub fn trapezoid_on_labels(ts: &[f64], iota: f64, shift: f64) -> Result<f64> {
    if ts.len() < 2 {
        return Err(Error::InsufficientData("need two or more samples".into()));
    }
    let mut pts: Vec<(f64, f64, usize)> = ts
        .iter()
        .enumerate()
        .map(|(i, &t)| (frac(i as f64 * iota + shift), t, i))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut sum = 0.0;
    for i in 0..pts.len() {
        let (th0, t0, _) = pts[i];
        let (th1, t1, idx) = if i + 1 < pts.len() {
            pts[i + 1]
        } else {
            let (a, b, c) = pts[0];
            (a + 1.0, b, c)
        };
        let h = th1 - th0;
        if h < RATIONAL_TOL {
            return Err(Error::DegenerateSpacing { index: idx + 1 });
        }
        sum += 0.5 * (t0 + t1) * h;
    }
    Ok(sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BirkhoffWindow {
    Flat,
    /// `w(s) = exp(−(s(1 − s))^{−p})`.
    Bump {
        exponent: f64,
    },
}

/// Weighted average of `values` with weights `w(n/(N + 1))`, `n = 1…N`.
pub fn weighted_birkhoff_average(values: &[f64], window: BirkhoffWindow) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("no values to average"));
    }
    let n = values.len();
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, v) in values.iter().enumerate() {
        let w = match window {
            BirkhoffWindow::Flat => 1.0,
            BirkhoffWindow::Bump { exponent } => {
                let s = (i + 1) as f64 / (n + 1) as f64;
                (-(s * (1.0 - s)).powf(-exponent)).exp()
            }
        };
        num += w * v;
        den += w;
    }
    if den == 0.0 {
        return Err(Error::Empty("all weights vanish"));
    }
    Ok(num / den)
}
