//! β-variation sums over uniform partitions and the statistics built on them.

use serde::{Deserialize, Serialize};

use crate::constants::{c_h, FracOrder, HurstParam};
use crate::error::{Error, Result};
use crate::kernels::power_lag_weights;
use crate::kernels::CellRule;
use crate::par::{map_indices, Execution};
use crate::simulate::{DyadicMeasure, Ensemble, Grid, Path};

/// Uniform partition `t_i = a + (i/n)(b − a)`, `i = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl PartitionSpec {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a >= 0.0 && a < b) || !b.is_finite() {
            return Err(Error::domain(format!("partition needs 0 <= a < b, got [{a}, {b}]")));
        }
        if n < 1 {
            return Err(Error::domain("partition needs at least one cell"));
        }
        Ok(PartitionSpec { a, b, n })
    }

    pub fn point(&self, i: usize) -> f64 {
        self.a + (i as f64 / self.n as f64) * (self.b - self.a)
    }

    /// Grid indices of `a` and the stride between partition points.
    pub fn on_grid(&self, grid: &Grid) -> Result<(usize, usize)> {
        let ia = grid.index_of(self.a);
        let ib = grid.index_of(self.b);
        match (ia, ib) {
            (Some(ia), Some(ib)) if ib > ia && (ib - ia) % self.n == 0 => Ok((ia, (ib - ia) / self.n)),
            (Some(ia), Some(ib)) if ib > ia => Err(Error::resolution(format!(
                "partition of [{}, {}] into {} cells does not fall on a grid of {} steps per unit (only {} steps available)",
                self.a,
                self.b,
                self.n,
                1.0 / grid.dt,
                ib - ia
            ))),
            _ => Err(Error::resolution(format!(
                "interval [{}, {}] is not on the grid [{}, {}] with step {}",
                self.a,
                self.b,
                grid.t0,
                grid.end(),
                grid.dt
            ))),
        }
    }
}

#[inline]
fn abs_pow(x: f64, beta: f64) -> f64 {
    if beta == 2.0 {
        x * x
    } else if beta == 1.0 {
        x.abs()
    } else {
        x.abs().powf(beta)
    }
}

fn sum_on(values: &[f64], start: usize, stride: usize, n: usize, beta: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        let k = start + i * stride;
        acc += abs_pow(values[k + stride] - values[k], beta);
    }
    acc
}

fn check_beta(beta: f64) -> Result<()> {
    if beta >= 1.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("variation order must be >= 1, got {beta}")))
    }
}

/// `S_{β,n}^{[a,b]}(x) = Σ_i |x(t_i) − x(t_{i−1})|^β`.
pub fn variation_sum(x: &Path, beta: f64, part: PartitionSpec) -> Result<f64> {
    check_beta(beta)?;
    let (start, stride) = part.on_grid(&x.grid())?;
    Ok(sum_on(&x.values, start, stride, part.n, beta))
}

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(x: &[f64]) -> Summary {
        let n = x.len();
        let mean = x.iter().sum::<f64>() / n as f64;
        let std_err = if n > 1 {
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Summary { mean, std_err, count: n }
    }

    /// `|mean − reference| ≤ max(rel_tol·|reference|, sigmas·std_err)`.
    pub fn within(&self, reference: f64, rel_tol: f64, sigmas: f64) -> bool {
        (self.mean - reference).abs() <= (rel_tol * reference.abs()).max(sigmas * self.std_err)
    }
}

/// Per-path sums over an ensemble.
pub fn ensemble_variation_sums(e: &Ensemble, beta: f64, part: PartitionSpec, exec: Execution) -> Result<Vec<f64>> {
    check_beta(beta)?;
    let (start, stride) = part.on_grid(&e.grid)?;
    Ok(map_indices(exec, e.len(), |k| sum_on(&e.paths[k], start, stride, part.n, beta)))
}

pub fn ensemble_variation(e: &Ensemble, beta: f64, part: PartitionSpec, exec: Execution) -> Result<Summary> {
    Ok(Summary::of(&ensemble_variation_sums(e, beta, part, exec)?))
}

/// A single path or an ensemble (L¹ mode).
#[derive(Debug, Clone, Copy)]
pub enum Sample<'a> {
    Single(&'a Path),
    Mean(&'a Ensemble),
}

impl Sample<'_> {
    fn grid(&self) -> Grid {
        match self {
            Sample::Single(p) => p.grid(),
            Sample::Mean(e) => e.grid,
        }
    }

    fn paths(&self) -> Vec<&[f64]> {
        match self {
            Sample::Single(p) => vec![&p.values[..]],
            Sample::Mean(e) => e.paths.iter().map(|p| &p[..]).collect(),
        }
    }

    pub fn summary(&self, beta: f64, part: PartitionSpec, exec: Execution) -> Result<Summary> {
        check_beta(beta)?;
        let (start, stride) = part.on_grid(&self.grid())?;
        let paths = self.paths();
        let sums = map_indices(exec, paths.len(), |k| sum_on(paths[k], start, stride, part.n, beta));
        Ok(Summary::of(&sums))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Converged,
    Diverging,
    Inconclusive,
}

/// Decision rule turning a finite schedule into a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictRule {
    /// Largest pairwise relative spread of the last three values for `converged`.
    pub spread_tol: f64,
    /// Smallest ratio between consecutive values, over the last three steps,
    /// for `diverging`.
    pub growth: f64,
}

impl Default for VerdictRule {
    fn default() -> Self {
        VerdictRule { spread_tol: 0.05, growth: 1.5 }
    }
}

impl VerdictRule {
    /// Verdict and final value for a sequence ordered by increasing `n`.
    ///
    /// Besides the spread and growth rules, a sequence that shrinks by at
    /// least the growth factor at each of its last three steps is taken to
    /// converge to 0.
    pub fn decide(&self, seq: &[f64]) -> (Verdict, Option<f64>) {
        let len = seq.len();
        if len >= 3 {
            let last = &seq[len - 3..];
            let mut spread = 0.0_f64;
            for i in 0..3 {
                for j in (i + 1)..3 {
                    let scale = last[i].abs().max(last[j].abs());
                    let rel = if scale == 0.0 { 0.0 } else { (last[i] - last[j]).abs() / scale };
                    spread = spread.max(rel);
                }
            }
            if spread < self.spread_tol {
                return (Verdict::Converged, Some(seq[len - 1]));
            }
        }
        if len >= 4 {
            let steps = &seq[len - 4..];
            let ratios: Vec<f64> = steps.windows(2).map(|w| w[1] / w[0]).collect();
            if steps.iter().all(|v| *v > 0.0) {
                if ratios.iter().all(|r| *r >= self.growth) {
                    return (Verdict::Diverging, None);
                }
                if ratios.iter().all(|r| *r <= 1.0 / self.growth) {
                    return (Verdict::Converged, Some(0.0));
                }
            }
        }
        (Verdict::Inconclusive, None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulePoint {
    pub n: usize,
    pub value: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationEstimate {
    pub beta: f64,
    pub a: f64,
    pub b: f64,
    pub values: Vec<SchedulePoint>,
    pub verdict: Verdict,
    #[serde(rename = "final")]
    pub final_value: Option<f64>,
}

/// The last `levels` dyadic partition counts available on `steps` grid steps.
pub fn dyadic_schedule(steps: usize, levels: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut n = 1;
    while n <= steps {
        if steps.is_multiple_of(n) {
            out.push(n);
        }
        n *= 2;
    }
    let skip = out.len().saturating_sub(levels);
    out.split_off(skip)
}

/// `S_{β,n}` across a schedule, with a verdict.
pub fn beta_variation_estimate(
    x: Sample<'_>,
    beta: f64,
    interval: (f64, f64),
    schedule: &[usize],
    rule: VerdictRule,
    exec: Execution,
) -> Result<VariationEstimate> {
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("schedule must be non-empty and strictly increasing"));
    }
    let mut values = Vec::with_capacity(schedule.len());
    for &n in schedule {
        let s = x.summary(beta, PartitionSpec::new(interval.0, interval.1, n)?, exec)?;
        values.push(SchedulePoint { n, value: s.mean, std_err: s.std_err });
    }
    let seq: Vec<f64> = values.iter().map(|p| p.value).collect();
    let (verdict, final_value) = rule.decide(&seq);
    Ok(VariationEstimate { beta, a: interval.0, b: interval.1, values, verdict, final_value })
}

/// `|S^{[a,c]} − S^{[a,b]} − S^{[b,c]}|` for a partition of `[a, c]` into `n`
/// cells on which `b` is a partition point.
pub fn additivity_check(x: &Path, beta: f64, a: f64, b: f64, c: f64, n: usize) -> Result<f64> {
    if !(a < b && b < c) {
        return Err(Error::domain(format!("need a < b < c, got {a}, {b}, {c}")));
    }
    let whole = PartitionSpec::new(a, c, n)?;
    let grid = x.grid();
    let (start, stride) = whole.on_grid(&grid)?;
    let ib = grid.index_of(b).ok_or_else(|| Error::resolution(format!("{b} is not a grid point")))?;
    if ib < start || (ib - start) % stride != 0 {
        return Err(Error::resolution(format!("{b} is not a partition point")));
    }
    let n_ab = (ib - start) / stride;
    let s_ac = variation_sum(x, beta, whole)?;
    let s_ab = variation_sum(x, beta, PartitionSpec::new(a, b, n_ab)?)?;
    let s_bc = variation_sum(x, beta, PartitionSpec::new(b, c, n - n_ab)?)?;
    Ok((s_ac - s_ab - s_bc).abs())
}

/// Result of [`hurst_estimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstEstimate {
    pub hurst: f64,
    /// Bracket after bisection.
    pub bracket: (f64, f64),
    /// Partition count the statistic was evaluated at.
    pub n: usize,
    /// `1 − log2(S_{1,n} / S_{1,n/2})`: the regularity implied by the scaling
    /// of the 1-variation between the two finest levels.
    pub implied_regularity: f64,
    /// `(1 − slope)/2` from regressing log mean `S_{2,n}` on log `n` over the
    /// dyadic levels, as a cross-check.
    pub regression: Option<f64>,
}

pub const HURST_BRACKET: (f64, f64) = (0.01, 0.99);

/// Solves `mean S_{1/Ĥ,n} = c_H(Ĥ)(b − a)` for `Ĥ` by bisection at the finest
/// partition of `interval`.
///
/// Smooth inputs have 1-variation that does not grow under refinement; the
/// moment equation still has a root for them, so inputs whose implied
/// regularity is at least the upper end of the bracket are rejected.
pub fn hurst_estimate(x: Sample<'_>, interval: (f64, f64), regression: bool, exec: Execution) -> Result<HurstEstimate> {
    let (a, b) = interval;
    let grid = x.grid();
    let span = PartitionSpec::new(a, b, 1)?;
    let (start, full) = span.on_grid(&grid)?;
    if full < 2 || full % 2 != 0 {
        return Err(Error::resolution("need at least two dyadic levels on the interval"));
    }
    let paths = x.paths();
    let mean_sum = |beta: f64, n: usize| -> f64 {
        let stride = full / n;
        let sums = map_indices(exec, paths.len(), |k| sum_on(paths[k], start, stride, n, beta));
        sums.iter().sum::<f64>() / sums.len() as f64
    };

    let s1_fine = mean_sum(1.0, full);
    let s1_coarse = mean_sum(1.0, full / 2);
    if !(s1_fine > 0.0) {
        return Err(Error::Estimation(format!("path is constant on [{a}, {b}]")));
    }
    let implied = 1.0 - (s1_fine / s1_coarse).log2();
    if implied >= HURST_BRACKET.1 {
        return Err(Error::Estimation(format!(
            "no roughness to estimate: 1-variation scales like a path of regularity {implied:.4} (>= {}) between n = {} and n = {}",
            HURST_BRACKET.1,
            full / 2,
            full
        )));
    }

    let f = |h: f64| mean_sum(1.0 / h, full) - c_h(HurstParam::new(h).expect("bracket inside (0, 1)")) * (b - a);
    let (mut lo, mut hi) = HURST_BRACKET;
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return Err(Error::Estimation(format!("no sign change on [{lo}, {hi}]: f({lo}) = {flo:e}, f({hi}) = {fhi:e}")));
    }
    let lo_sign = flo.signum();
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }

    let regression = if regression {
        let levels = dyadic_schedule(full, 6);
        let pts: Vec<(f64, f64)> = levels.iter().map(|&n| ((n as f64).ln(), mean_sum(2.0, n).ln())).collect();
        let slope = ols_slope(&pts);
        Some((1.0 - slope) / 2.0)
    } else {
        None
    };
    Ok(HurstEstimate { hurst: 0.5 * (lo + hi), bracket: (lo, hi), n: full, implied_regularity: implied, regression })
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Most grid points used by [`holder_norm`]; finer paths are subsampled.
pub const HOLDER_CAP: usize = 4096;

/// `max |f(t) − f(s)| / |t − s|^β` over grid pairs in `[a, b]`.
pub fn holder_norm(f: &Path, beta: f64, a: f64, b: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::domain(format!("Hölder order must lie in (0, 1], got {beta}")));
    }
    let (start, steps) = PartitionSpec::new(a, b, 1)?.on_grid(&f.grid())?;
    let stride = steps.div_ceil(HOLDER_CAP).max(1);
    let pts: Vec<f64> = f.values[start..=start + steps].iter().step_by(stride).copied().collect();
    let h = f.dt * stride as f64;
    Ok(holder_norm_values(&pts, h, beta))
}

/// [`holder_norm`] over equally spaced samples `v` with spacing `h`.
pub fn holder_norm_values(v: &[f64], h: f64, beta: f64) -> f64 {
    let m = v.len();
    let inv: Vec<f64> = (0..m).map(|l| if l == 0 { 0.0 } else { (l as f64 * h).powf(-beta) }).collect();
    let mut best = 0.0_f64;
    for i in 0..m {
        let vi = v[i];
        for (l, w) in inv.iter().enumerate().take(m - i).skip(1) {
            best = best.max((v[i + l] - vi).abs() * w);
        }
    }
    best
}

/// `A_n = Σ_i (∫ ((t_i − s)_+^α − (t_{i−1} − s)_+^α)² dν_s)^{β/2}` over the
/// partition of `[a, b]`, with `ν` uniform inside its dyadic cells and the
/// kernel averaged over each cell.
pub fn singular_measure_sum(nu: &DyadicMeasure, alpha: FracOrder, part: PartitionSpec) -> Result<f64> {
    let cells = nu.cells();
    let grid = Grid::new(0.0, 1.0 / cells as f64, cells)?;
    if part.b > 1.0 {
        return Err(Error::domain("the measure lives on [0, 1]"));
    }
    let (start, stride) = part.on_grid(&grid).map_err(|_| {
        Error::resolution(format!("partition into {} cells is finer than, or not aligned with, 2^{} cascade cells", part.n, nu.depth))
    })?;
    let a = alpha.value();
    let beta = 2.0 / (1.0 + 2.0 * a);
    let w = power_lag_weights(a, cells, grid.dt, CellRule::CellAveraged);
    let terms = map_indices(Execution::default(), part.n, |i| {
        let k = start + (i + 1) * stride;
        let kp = start + i * stride;
        let mut acc = 0.0;
        for j in 0..k {
            let mut d = w[k - 1 - j];
            if j < kp {
                d -= w[kp - 1 - j];
            }
            acc += d * d * nu.masses[j];
        }
        acc.powf(beta / 2.0)
    });
    Ok(terms.iter().sum())
}

/// `n^{2H−1} Σ_k (B_{tk/n} − B_{t(k−1)/n})²` over `schedule`; for an ensemble
/// the mean and its standard error.
pub fn renormalized_qv(b: Sample<'_>, h: HurstParam, t: f64, schedule: &[usize], exec: Execution) -> Result<Vec<SchedulePoint>> {
    let e = 2.0 * h.value() - 1.0;
    schedule
        .iter()
        .map(|&n| {
            let s = b.summary(2.0, PartitionSpec::new(0.0, t, n)?, exec)?;
            let scale = (n as f64).powf(e);
            Ok(SchedulePoint { n, value: scale * s.mean, std_err: scale * s.std_err })
        })
        .collect()
}
