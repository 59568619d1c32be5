//! Characterization battery for fractional Brownian motion.
//!
//! An ensemble labelled with a Hurst parameter `H` is checked for Hölder
//! regularity of order `H − ε`, for the martingale property and quadratic
//! variation shape of its fundamental martingale, and for `1/H`-variation
//! equal to `c_H t`. Each check produces a [`CriterionRecord`]; a
//! [`TestReport`] passes iff all of its records pass.

use serde::{Deserialize, Serialize};

use crate::constants::{c_h, d_h, kappa, HurstParam};
use crate::error::{Error, Result};
use crate::fractrans::{counterexample_operator, FundamentalMartingale, PathOperator};
use crate::par::{map_indices, Execution};
use crate::simulate::{Ensemble, Grid, Process, SingularFunction};
use crate::variation::{
    beta_variation_estimate, dyadic_schedule, holder_norm_values, ols_slope, PartitionSpec, Sample, Summary, Verdict, VerdictRule,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
    Error,
}

impl Outcome {
    pub(crate) fn from_bool(ok: bool) -> Self {
        if ok {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

/// One named criterion with its statistic, reference and tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionRecord {
    pub name: String,
    pub statistic: f64,
    pub reference: Option<f64>,
    pub tolerance: f64,
    pub verdict: Outcome,
    /// Raw statistic sequence behind the verdict.
    pub sequence: Vec<f64>,
    pub detail: String,
}

impl CriterionRecord {
    pub fn passed(&self) -> bool {
        self.verdict == Outcome::Pass
    }

    pub(crate) fn errored(name: &str, err: &Error) -> Self {
        CriterionRecord {
            name: name.into(),
            statistic: 0.0,
            reference: None,
            tolerance: 0.0,
            verdict: Outcome::Error,
            sequence: Vec::new(),
            detail: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub generator: String,
    pub paths: usize,
    pub grid_steps: usize,
    pub dt: f64,
    pub t0: f64,
    /// Partition sizes behind the statistics, when there is one schedule.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<usize>,
}

impl Provenance {
    pub fn of(e: &Ensemble) -> Self {
        Provenance {
            master_seed: e.master_seed,
            generator: e.generator.clone(),
            paths: e.len(),
            grid_steps: e.grid.n,
            dt: e.grid.dt,
            t0: e.grid.t0,
            schedule: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub schema_version: u32,
    pub title: String,
    pub hurst: Option<f64>,
    pub criteria: Vec<CriterionRecord>,
    pub overall: Outcome,
    pub provenance: Provenance,
    pub notes: Vec<String>,
}

impl TestReport {
    pub fn new(
        title: impl Into<String>,
        hurst: Option<f64>,
        criteria: Vec<CriterionRecord>,
        provenance: Provenance,
        notes: Vec<String>,
    ) -> Self {
        let overall = Outcome::from_bool(!criteria.is_empty() && criteria.iter().all(CriterionRecord::passed));
        TestReport { schema_version: SCHEMA_VERSION, title: title.into(), hurst, criteria, overall, provenance, notes }
    }

    pub fn passed(&self) -> bool {
        self.overall == Outcome::Pass
    }

    pub fn criterion(&self, name: &str) -> Option<&CriterionRecord> {
        self.criteria.iter().find(|c| c.name == name)
    }
}

/// Tolerances and sizes for the battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LevyConfig {
    /// Hölder order is `H − eps`.
    pub eps: f64,
    /// Paths used by the Hölder check.
    pub holder_paths: usize,
    /// Finest grid the Hölder check reads; the coarse one is a quarter of it.
    pub holder_points: usize,
    /// Largest allowed ratio of the fine to coarse 99th-percentile norm.
    pub holder_growth: f64,
    /// Increment blocks for the martingale check.
    pub blocks: usize,
    /// Largest lag between blocks in the cross-moment test.
    pub lags: usize,
    /// Width of CLT bands in standard errors.
    pub sigmas: f64,
    /// Relative tolerance for limit values.
    pub rel_tol: f64,
    /// Fractions of the horizon at which the QV shape is compared.
    pub qv_times: Vec<f64>,
    /// Allowed error of the fitted QV exponent.
    pub exponent_tol: f64,
    /// Fractions of the horizon at which the `1/H`-variation is compared.
    pub variation_times: Vec<f64>,
    /// Dyadic levels in the variation schedule.
    pub variation_levels: usize,
    pub verdict: VerdictRule,
    /// Also compare sample covariances with the fBm covariance.
    pub covariance: bool,
    /// Fractions of the horizon for the covariance comparison.
    pub covariance_times: Vec<f64>,
}

impl Default for LevyConfig {
    fn default() -> Self {
        LevyConfig {
            eps: 0.1,
            holder_paths: 256,
            holder_points: 2048,
            holder_growth: 2.0,
            blocks: 16,
            lags: 3,
            sigmas: 4.0,
            rel_tol: 0.1,
            qv_times: vec![0.25, 0.5, 1.0],
            exponent_tol: 0.1,
            variation_times: vec![0.5, 1.0],
            variation_levels: 4,
            verdict: VerdictRule::default(),
            covariance: false,
            covariance_times: vec![0.2, 0.4, 0.6, 0.8, 1.0],
        }
    }
}

fn horizon(e: &Ensemble) -> f64 {
    e.grid.end() - e.grid.t0
}

fn percentile(mut v: Vec<f64>, q: f64) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let idx = ((v.len() - 1) as f64 * q).round() as usize;
    v[idx]
}

/// Hölder norm of order `H − eps` on the fine grid versus a quarter of it;
/// passes if the 99th percentile over paths is finite and grows less than
/// `holder_growth`.
pub fn check_holder(b: &Ensemble, h: HurstParam, eps: f64, cfg: &LevyConfig, exec: Execution) -> Result<CriterionRecord> {
    if !(eps > 0.0 && eps < h.value()) {
        return Err(Error::domain(format!("eps must lie in (0, H), got {eps}")));
    }
    let order = h.value() - eps;
    let n = b.grid.n;
    let mut fine = n;
    while fine > cfg.holder_points && fine.is_multiple_of(2) {
        fine /= 2;
    }
    if !fine.is_multiple_of(4) || fine < 8 {
        return Err(Error::resolution(format!("grid of {n} steps is too coarse for the Hölder check")));
    }
    let paths = cfg.holder_paths.min(b.len());
    let norms = |points: usize| -> Vec<f64> {
        let stride = n / points;
        let step = b.grid.dt * stride as f64;
        map_indices(exec, paths, |k| {
            let v: Vec<f64> = b.paths[k].iter().step_by(stride).copied().collect();
            holder_norm_values(&v, step, order)
        })
    };
    let coarse = percentile(norms(fine / 4), 0.99);
    let finer = percentile(norms(fine), 0.99);
    let ratio = if coarse > 0.0 { finer / coarse } else { 1.0 };
    let ok = finer.is_finite() && ratio < cfg.holder_growth;
    Ok(CriterionRecord {
        name: "holder".into(),
        statistic: ratio,
        reference: None,
        tolerance: cfg.holder_growth,
        verdict: Outcome::from_bool(ok),
        sequence: vec![coarse, finer],
        detail: format!(
            "99th percentile of the order-{order:.3} Hölder norm over {paths} paths: {coarse:.4} at n = {}, {finer:.4} at n = {fine}",
            fine / 4
        ),
    })
}

/// Block increments `M(t_{(j+1)B}) − M(t_{jB})`, one row per path.
fn block_increments(m: &Ensemble, blocks: usize) -> Result<Vec<Vec<f64>>> {
    if blocks < 3 || !m.grid.n.is_multiple_of(blocks) {
        return Err(Error::resolution(format!("{} grid steps do not split into {blocks} blocks", m.grid.n)));
    }
    let b = m.grid.n / blocks;
    Ok(m.paths.iter().map(|p| (0..blocks).map(|j| p[(j + 1) * b] - p[j * b]).collect()).collect())
}

/// Orthogonality of increments: cross-moments of block increments at lags
/// `1..=lags`, each against its CLT band, and a pooled lag-one regression of
/// standardized increments.
pub fn check_martingale(m: &Ensemble, lags: usize, cfg: &LevyConfig) -> Result<CriterionRecord> {
    let d = block_increments(m, cfg.blocks)?;
    let blocks = cfg.blocks;
    let paths = d.len() as f64;
    let sd: Vec<f64> = (0..blocks).map(|j| (d.iter().map(|r| r[j] * r[j]).sum::<f64>() / paths).sqrt()).collect();
    if let Some(j) = sd.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::Numeric(format!("block increment {j} has zero variance")));
    }

    let mut zs = Vec::new();
    let mut worst_corr = 0.0_f64;
    for lag in 1..=lags.max(1) {
        for j in 0..blocks.saturating_sub(lag) {
            let prods: Vec<f64> = d.iter().map(|r| r[j] * r[j + lag]).collect();
            let s = Summary::of(&prods);
            let corr = s.mean / (sd[j] * sd[j + lag]);
            if corr.abs() > worst_corr.abs() {
                worst_corr = corr;
            }
            zs.push(if s.std_err > 0.0 {
                s.mean / s.std_err
            } else if s.mean == 0.0 {
                0.0
            } else {
                f64::MAX
            });
        }
    }
    let max_z = zs.iter().fold(0.0_f64, |a, z| a.max(z.abs()));

    // Pooled regression of u_j on u_{j-1} with heteroskedasticity-robust SE.
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for r in &d {
        for j in 1..blocks {
            let (x, y) = (r[j - 1] / sd[j - 1], r[j] / sd[j]);
            sxy += x * y;
            sxx += x * x;
        }
    }
    let slope = sxy / sxx;
    let mut meat = 0.0;
    for r in &d {
        for j in 1..blocks {
            let (x, y) = (r[j - 1] / sd[j - 1], r[j] / sd[j]);
            let e = y - slope * x;
            meat += x * x * e * e;
        }
    }
    let slope_se = meat.sqrt() / sxx;
    let slope_z = slope / slope_se;

    let ok = max_z <= cfg.sigmas && slope_z.abs() <= cfg.sigmas;
    let mut sequence = zs;
    sequence.push(slope_z);
    Ok(CriterionRecord {
        name: "martingale".into(),
        statistic: max_z.max(slope_z.abs()),
        reference: Some(0.0),
        tolerance: cfg.sigmas,
        verdict: Outcome::from_bool(ok),
        sequence,
        detail: format!(
            "{blocks} blocks, lags 1..={lags}: max |z| of cross-moments {max_z:.2} (largest normalized cross-moment {worst_corr:.4}); lag-1 slope {slope:.4} ± {slope_se:.4} (z = {slope_z:.2})"
        ),
    })
}

/// Reference quadratic variation of the fundamental martingale,
/// `(κ_H/d_H)² t^{2−2H}/(2−2H)`.
pub fn fundamental_qv(h: HurstParam, t: f64) -> f64 {
    let c = kappa(h) / d_h(h);
    let e = 2.0 - 2.0 * h.value();
    c * c * t.powf(e) / e
}

/// Mean `S_{2,n}([0, t])` at the finest partition against
/// [`fundamental_qv`], and the exponent fitted across the times.
pub fn check_qv_shape(m: &Ensemble, h: HurstParam, cfg: &LevyConfig, exec: Execution) -> Result<CriterionRecord> {
    let t_end = horizon(m);
    let mut ok = true;
    let mut seq = Vec::new();
    let mut pts = Vec::new();
    let mut worst = 0.0_f64;
    for &frac in &cfg.qv_times {
        let t = frac * t_end;
        let steps = m.grid.index_of(m.grid.t0 + t).ok_or_else(|| Error::resolution(format!("{t} is not a grid time")))?;
        let s = Sample::Mean(m).summary(2.0, PartitionSpec::new(m.grid.t0, m.grid.t0 + t, steps)?, exec)?;
        let reference = fundamental_qv(h, t);
        ok &= s.within(reference, cfg.rel_tol, cfg.sigmas);
        worst = worst.max((s.mean / reference - 1.0).abs());
        seq.push(s.mean);
        pts.push((t.ln(), s.mean.ln()));
    }
    let expected = 2.0 - 2.0 * h.value();
    let fitted = ols_slope(&pts);
    ok &= (fitted - expected).abs() <= cfg.exponent_tol;
    seq.push(fitted);
    Ok(CriterionRecord {
        name: "qv-shape".into(),
        statistic: fitted,
        reference: Some(expected),
        tolerance: cfg.exponent_tol,
        verdict: Outcome::from_bool(ok),
        sequence: seq,
        detail: format!(
            "checked exponent 2 - 2H = {expected:.3} (not 2H = {:.3}); fitted {fitted:.4}; largest relative QV error {worst:.4} (tolerance {} or {} SE)",
            2.0 * h.value(),
            cfg.rel_tol,
            cfg.sigmas
        ),
    })
}

/// `1/H`-variation on `[0, t]` converges to `c_H t`.
pub fn check_variation(b: &Ensemble, h: HurstParam, cfg: &LevyConfig, exec: Execution) -> Result<CriterionRecord> {
    let beta = 1.0 / h.value();
    let t_end = horizon(b);
    let mut ok = true;
    let mut seq = Vec::new();
    let mut details = Vec::new();
    let mut worst = 1.0_f64;
    for &frac in &cfg.variation_times {
        let t = frac * t_end;
        let steps = b.grid.index_of(b.grid.t0 + t).ok_or_else(|| Error::resolution(format!("{t} is not a grid time")))?;
        let schedule = dyadic_schedule(steps, cfg.variation_levels);
        let est = beta_variation_estimate(Sample::Mean(b), beta, (b.grid.t0, b.grid.t0 + t), &schedule, cfg.verdict, exec)?;
        let reference = c_h(h) * t;
        let last = est.values.last().expect("non-empty schedule");
        let close = match est.final_value {
            Some(f) => (f - reference).abs() <= (cfg.rel_tol * reference).max(cfg.sigmas * last.std_err),
            None => false,
        };
        ok &= est.verdict == Verdict::Converged && close;
        let ratio = last.value / reference;
        if (ratio - 1.0).abs() > (worst - 1.0).abs() {
            worst = ratio;
        }
        seq.extend(est.values.iter().map(|p| p.value));
        details.push(format!("t = {t}: {:?}, last/ref = {ratio:.4}", est.verdict));
    }
    Ok(CriterionRecord {
        name: "variation".into(),
        statistic: worst,
        reference: Some(1.0),
        tolerance: cfg.rel_tol,
        verdict: Outcome::from_bool(ok),
        sequence: seq,
        detail: format!("beta = 1/H = {beta:.4}; {}", details.join("; ")),
    })
}

/// fBm covariance `(t^{2H} + s^{2H} − |t − s|^{2H})/2`.
pub fn fbm_covariance(h: HurstParam, s: f64, t: f64) -> f64 {
    let e = 2.0 * h.value();
    0.5 * (t.powf(e) + s.powf(e) - (t - s).abs().powf(e))
}

/// Sample covariances at pairs of `covariance_times` against the fBm
/// covariance; passes iff every standardized deviation is within the band.
pub fn covariance_crosscheck(b: &Ensemble, h: HurstParam, cfg: &LevyConfig) -> Result<CriterionRecord> {
    let t_end = horizon(b);
    let idx: Vec<usize> = cfg.covariance_times.iter().map(|f| ((f * t_end / b.grid.dt).round() as usize).clamp(1, b.grid.n)).collect();
    let mut zs = Vec::new();
    let mut worst = (0.0_f64, 0.0, 0.0);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[..=a] {
            let (t, s) = (i as f64 * b.grid.dt, j as f64 * b.grid.dt);
            let prods: Vec<f64> = b.paths.iter().map(|p| p[i] * p[j]).collect();
            let sum = Summary::of(&prods);
            let z = (sum.mean - fbm_covariance(h, s, t)) / sum.std_err;
            if z.abs() > worst.0.abs() {
                worst = (z, s, t);
            }
            zs.push(z);
        }
    }
    let max_z = worst.0.abs();
    Ok(CriterionRecord {
        name: "covariance".into(),
        statistic: max_z,
        reference: Some(0.0),
        tolerance: cfg.sigmas,
        verdict: Outcome::from_bool(max_z <= cfg.sigmas),
        sequence: zs,
        detail: format!("largest standardized deviation {:.2} at (s, t) = ({:.3}, {:.3})", worst.0, worst.1, worst.2),
    })
}

pub(crate) fn record(name: &str, r: Result<CriterionRecord>) -> CriterionRecord {
    r.unwrap_or_else(|e| CriterionRecord::errored(name, &e))
}

/// Runs the battery. At `H = 1/2` the classical checks are run instead:
/// Hölder regularity, orthogonal increments and linear quadratic variation of
/// the ensemble itself.
pub fn levy_characterization_test(b: &Ensemble, h: HurstParam, cfg: &LevyConfig, exec: Execution) -> TestReport {
    let mut criteria = Vec::new();
    let mut notes = Vec::new();
    criteria.push(record("holder", check_holder(b, h, cfg.eps, cfg, exec)));
    let title;
    if h.is_brownian() {
        title = "classical Lévy characterization (H = 1/2)".to_string();
        criteria.push(record("martingale", check_martingale(b, cfg.lags, cfg)));
        criteria.push(record("qv-shape", check_qv_shape(b, h, cfg, exec)));
    } else {
        title = format!("fBm characterization at H = {}", h.value());
        match fundamental_martingale_ensemble(b, h, exec) {
            Ok(m) => {
                criteria.push(record("martingale", check_martingale(&m, cfg.lags, cfg)));
                criteria.push(record("qv-shape", check_qv_shape(&m, h, cfg, exec)));
            }
            Err(e) => {
                criteria.push(CriterionRecord::errored("martingale", &e));
                criteria.push(CriterionRecord::errored("qv-shape", &e));
            }
        }
        criteria.push(record("variation", check_variation(b, h, cfg, exec)));
        if h.value() > 0.5 {
            notes.push("qv-shape stands in for absolute continuity of the martingale's quadratic variation; it is a surrogate, not an equivalent test".into());
        }
    }
    if cfg.covariance {
        criteria.push(record("covariance", covariance_crosscheck(b, h, cfg)));
    }
    TestReport::new(title, Some(h.value()), criteria, Provenance::of(b), notes)
}

/// Fundamental martingale of every path.
pub fn fundamental_martingale_ensemble(b: &Ensemble, h: HurstParam, exec: Execution) -> Result<Ensemble> {
    FundamentalMartingale::new(h, b.grid.n, b.grid.dt).apply_ensemble(b, 1, exec)
}

/// Seed-stream tag of the time-changed driver in [`build_counterexample`].
pub const COUNTEREXAMPLE_TAG: u8 = 1;

/// `B̃ = B^H + Y` with `B^H` exact fBm and `Y` the reconstruction formula
/// applied to an independent time-changed Brownian motion `N = W∘φ`.
pub fn build_counterexample(
    h: HurstParam,
    cascade: SingularFunction,
    n: usize,
    paths: usize,
    seed: u64,
    exec: Execution,
) -> Result<Ensemble> {
    let op = counterexample_operator(h, n, 1.0 / n as f64)?;
    let grid = Grid::horizon(n, 1.0)?;
    let b = Process::FbmCholesky { hurst: h }.sampler(grid)?.ensemble(paths, seed, exec)?;
    let nsampler = Process::TimeChangedBm { cascade }.sampler(grid)?;
    let y = nsampler.ensemble_tagged(paths, seed, COUNTEREXAMPLE_TAG, exec)?;
    let y = op.apply_ensemble(&y, 1, exec)?;
    let sum = b.paths.iter().zip(&y.paths).map(|(u, v)| u.iter().zip(v).map(|(a, b)| a + b).collect()).collect();
    Ensemble::new(grid, sum, seed, format!("counterexample(H={}, p={}, depth={})", h.value(), cascade.p, cascade.depth))
}
