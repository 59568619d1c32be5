//! Sample paths: Brownian motion, fBm by three methods, time-changed Brownian
//! motion and the binomial-cascade singular function.
//!
//! Every generator is a pure function of its parameters and a seed. Path `k`
//! of an ensemble draws from ChaCha8 stream `k` of the master seed, so an
//! ensemble is reproducible path by path and independent of the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constants::{kappa, FracOrder, HurstParam};
use crate::error::{Error, Result};
use crate::kernels::{inner_kernel_table, power_lag_weights, CausalConvolution, CellRule, LowerTriangular, INNER_KERNEL_CELLS};
use crate::linalg::PackedCholesky;
use crate::par::{map_indices, Execution};

/// Largest grid accepted by the Cholesky sampler (O(n²) memory).
pub const CHOLESKY_CAP: usize = 4096;

/// Default Mandelbrot-Van Ness tail length, in units of the horizon.
pub const DEFAULT_TAIL_LEN: f64 = 50.0;

/// Uniform time grid `t_k = t0 + k dt`, `k = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(t0: f64, dt: f64, n: usize) -> Result<Self> {
        if !(t0 >= 0.0) || !t0.is_finite() {
            return Err(Error::domain(format!("grid start must be finite and >= 0, got {t0}")));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::domain(format!("grid step must be positive, got {dt}")));
        }
        if n < 1 {
            return Err(Error::domain("grid needs at least one step"));
        }
        Ok(Grid { t0, dt, n })
    }

    /// `n` steps covering `[0, horizon]`.
    pub fn horizon(n: usize, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        Grid::new(0.0, horizon / n as f64, n)
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.n)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n).map(|k| self.time(k)).collect()
    }

    /// Index of grid time `t`, if `t` lies on the grid up to rounding.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.t0) / self.dt;
        let k = x.round();
        if k < 0.0 || k > self.n as f64 || (x - k).abs() > 1e-9 * x.abs().max(1.0) {
            None
        } else {
            Some(k as usize)
        }
    }
}

/// Provenance of a path.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PathMeta {
    pub generator: String,
    pub seed: Option<u64>,
}

/// A process sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    pub meta: PathMeta,
}

impl Path {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::domain("a path needs at least two values"));
        }
        Grid::new(t0, dt, values.len() - 1)?;
        Ok(Path { t0, dt, values, meta: PathMeta::default() })
    }

    /// Samples `f` on `n` steps of `[0, horizon]`.
    pub fn from_fn(n: usize, horizon: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let grid = Grid::horizon(n, horizon)?;
        let values = (0..=n).map(|k| f(grid.time(k))).collect();
        Ok(Path { t0: 0.0, dt: grid.dt, values, meta: PathMeta { generator: "deterministic".into(), seed: None } })
    }

    pub fn with_meta(mut self, generator: impl Into<String>, seed: Option<u64>) -> Self {
        self.meta = PathMeta { generator: generator.into(), seed };
        self
    }

    pub fn grid(&self) -> Grid {
        Grid { t0: self.t0, dt: self.dt, n: self.values.len() - 1 }
    }

    pub fn n_steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Same grid, new values.
    pub fn map_values(&self, values: Vec<f64>, generator: &str) -> Path {
        debug_assert_eq!(values.len(), self.values.len());
        Path { t0: self.t0, dt: self.dt, values, meta: PathMeta { generator: generator.into(), seed: self.meta.seed } }
    }
}

/// Independent paths on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub grid: Grid,
    pub paths: Vec<Vec<f64>>,
    pub master_seed: u64,
    pub generator: String,
}

impl Ensemble {
    pub fn new(grid: Grid, paths: Vec<Vec<f64>>, master_seed: u64, generator: impl Into<String>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::domain("an ensemble needs at least one path"));
        }
        if let Some((k, p)) = paths.iter().enumerate().find(|(_, p)| p.len() != grid.n + 1) {
            return Err(Error::domain(format!("path {k} has {} values, grid needs {}", p.len(), grid.n + 1)));
        }
        Ok(Ensemble { grid, paths, master_seed, generator: generator.into() })
    }

    pub fn from_paths(paths: &[Path]) -> Result<Self> {
        let first = paths.first().ok_or_else(|| Error::domain("an ensemble needs at least one path"))?;
        let grid = first.grid();
        for p in paths {
            if p.grid() != grid {
                return Err(Error::domain("paths do not share a grid"));
            }
        }
        let seed = first.meta.seed.unwrap_or(0);
        Ensemble::new(grid, paths.iter().map(|p| p.values.clone()).collect(), seed, first.meta.generator.clone())
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn path(&self, k: usize) -> Path {
        Path {
            t0: self.grid.t0,
            dt: self.grid.dt,
            values: self.paths[k].clone(),
            meta: PathMeta { generator: self.generator.clone(), seed: Some(self.master_seed) },
        }
    }

    /// Applies a path-to-values map to every member; the output grid may differ
    /// only in its step count through `grid`.
    pub fn map_paths<F>(&self, exec: Execution, grid: Grid, generator: &str, f: F) -> Result<Ensemble>
    where
        F: Fn(&Path) -> Result<Vec<f64>> + Sync + Send,
    {
        let out: Result<Vec<Vec<f64>>> = map_indices(exec, self.len(), |k| f(&self.path(k))).into_iter().collect();
        Ensemble::new(grid, out?, self.master_seed, generator)
    }

    /// Values of every path at grid index `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p[k]).collect()
    }
}

/// RNG for stream `stream` of `master_seed`.
pub fn path_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for path `index` of the sub-ensemble labelled `tag`; tag 0 is
/// the plain path index.
pub fn tagged_stream(tag: u8, index: u64) -> u64 {
    ((tag as u64) << 56) | index
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn cumulate(inc: impl IntoIterator<Item = f64>, n: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    v.push(0.0);
    for x in inc {
        acc += x;
        v.push(acc);
    }
    v
}

/// Binomial multiplicative cascade on `[0, 1]`: each dyadic cell passes a
/// fraction `p` of its mass to its left half. The distribution function is
/// linear inside the cells of level `depth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularFunction {
    pub p: f64,
    pub depth: u32,
}

/// Deepest cascade level materialized as a mass vector.
pub const MAX_CASCADE_DEPTH: u32 = 24;

impl SingularFunction {
    pub fn new(p: f64, depth: u32) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("cascade weight must lie in (0, 1), got {p}")));
        }
        if !(1..=MAX_CASCADE_DEPTH).contains(&depth) {
            return Err(Error::domain(format!("cascade depth must lie in 1..={MAX_CASCADE_DEPTH}, got {depth}")));
        }
        Ok(SingularFunction { p, depth })
    }

    /// `min(−log2 p, −log2(1 − p))`.
    pub fn holder_exponent(&self) -> f64 {
        (-self.p.log2()).min(-(1.0 - self.p).log2())
    }

    /// Masses of the `2^level` dyadic cells, `level ≤ depth`.
    pub fn cell_masses(&self, level: u32) -> Vec<f64> {
        let level = level.min(self.depth);
        let mut m = vec![1.0];
        for _ in 0..level {
            m = m.iter().flat_map(|&x| [x * self.p, x * (1.0 - self.p)]).collect();
        }
        m
    }

    pub fn measure(&self) -> DyadicMeasure {
        DyadicMeasure { depth: self.depth, masses: self.cell_masses(self.depth) }
    }

    /// `φ(t)`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::domain(format!("singular function is defined on [0, 1], got {t}")));
        }
        Ok(self.eval_unchecked(t))
    }

    fn eval_unchecked(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        let (mut lo, mut width, mut mass, mut acc) = (0.0, 1.0, 1.0, 0.0);
        for _ in 0..self.depth {
            width *= 0.5;
            if t >= lo + width {
                acc += mass * self.p;
                mass *= 1.0 - self.p;
                lo += width;
            } else {
                mass *= self.p;
            }
        }
        acc + mass * (t - lo) / width
    }
}

/// `φ(t)` for the cascade `phi`.
pub fn singular_fn_eval(phi: &SingularFunction, t: f64) -> Result<f64> {
    phi.eval(t)
}

/// A measure on `[0, 1]` given by its masses on the `2^depth` dyadic cells,
/// spread uniformly inside each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicMeasure {
    pub depth: u32,
    pub masses: Vec<f64>,
}

impl DyadicMeasure {
    pub fn zero(depth: u32) -> Self {
        DyadicMeasure { depth, masses: vec![0.0; 1usize << depth] }
    }

    pub fn lebesgue(depth: u32) -> Self {
        let m = 1usize << depth;
        DyadicMeasure { depth, masses: vec![1.0 / m as f64; m] }
    }

    pub fn cells(&self) -> usize {
        self.masses.len()
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// Which process to sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Process {
    Brownian,
    FbmCholesky { hurst: HurstParam },
    FbmMvn { alpha: FracOrder, tail_len: f64 },
    FbmVolterra { hurst: HurstParam },
    TimeChangedBm { cascade: SingularFunction },
}

impl Process {
    pub fn tag(&self) -> &'static str {
        match self {
            Process::Brownian => "bm",
            Process::FbmCholesky { .. } => "fbm-chol",
            Process::FbmMvn { .. } => "fbm-mvn",
            Process::FbmVolterra { .. } => "fbm-volterra",
            Process::TimeChangedBm { .. } => "tcbm",
        }
    }

    /// Precomputes everything that does not depend on the seed.
    pub fn sampler(&self, grid: Grid) -> Result<Sampler> {
        if grid.t0 != 0.0 {
            return Err(Error::domain("generators start at t0 = 0"));
        }
        let n = grid.n;
        let dt = grid.dt;
        let kind = match *self {
            Process::Brownian => SamplerKind::Brownian,
            Process::FbmCholesky { hurst } => {
                if n > CHOLESKY_CAP {
                    return Err(Error::domain(format!("Cholesky sampler is capped at n = {CHOLESKY_CAP}, got {n}")));
                }
                let h2 = 2.0 * hurst.value();
                let cov = |i: usize, j: usize| {
                    let t = (i + 1) as f64 * dt;
                    let s = (j + 1) as f64 * dt;
                    0.5 * (t.powf(h2) + s.powf(h2) - (t - s).abs().powf(h2))
                };
                SamplerKind::Cholesky(PackedCholesky::factor(n, cov)?)
            }
            Process::FbmMvn { alpha, tail_len } => {
                if !(tail_len > 0.0) || !tail_len.is_finite() {
                    return Err(Error::domain(format!("tail length must be positive, got {tail_len}")));
                }
                if alpha.is_zero() {
                    SamplerKind::Brownian
                } else {
                    SamplerKind::Mvn(MvnTable::new(alpha, n, dt, tail_len))
                }
            }
            Process::FbmVolterra { hurst } => {
                if hurst.is_brownian() {
                    SamplerKind::Brownian
                } else {
                    SamplerKind::Volterra(volterra_table(hurst, n, dt))
                }
            }
            Process::TimeChangedBm { cascade } => {
                if (grid.end() - 1.0).abs() > 1e-12 {
                    return Err(Error::domain("time-changed Brownian motion lives on [0, 1]"));
                }
                let phi: Vec<f64> = (0..=n).map(|k| cascade.eval_unchecked(k as f64 / n as f64)).collect();
                SamplerKind::TimeChanged(phi.windows(2).map(|w| (w[1] - w[0]).max(0.0).sqrt()).collect())
            }
        };
        Ok(Sampler { grid, kind, tag: self.tag() })
    }
}

/// A process prepared for one grid.
#[derive(Debug, Clone)]
pub struct Sampler {
    grid: Grid,
    kind: SamplerKind,
    tag: &'static str,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Brownian,
    Cholesky(PackedCholesky),
    Mvn(MvnTable),
    Volterra(LowerTriangular),
    TimeChanged(Vec<f64>),
}

impl Sampler {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn tag(&self) -> &'static str {
        self.tag
    }

    /// One path from `rng`. The Brownian-driven samplers first draw the `n`
    /// driving increments, so the same stream yields the same driver.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.grid.n;
        let sd = self.grid.dt.sqrt();
        match &self.kind {
            SamplerKind::Brownian => cumulate(normals(rng, n).into_iter().map(|z| sd * z), n),
            SamplerKind::Cholesky(c) => {
                let z = normals(rng, n);
                let mut v = c.mul_vec(&z);
                v.insert(0, 0.0);
                v
            }
            SamplerKind::Mvn(table) => table.sample(rng),
            SamplerKind::Volterra(table) => {
                let dw: Vec<f64> = normals(rng, n).into_iter().map(|z| sd * z).collect();
                table.apply(&dw)
            }
            SamplerKind::TimeChanged(sds) => {
                let z = normals(rng, n);
                cumulate(z.iter().zip(sds).map(|(z, s)| z * s), n)
            }
        }
    }

    pub fn path(&self, seed: u64) -> Path {
        let values = self.sample(&mut path_rng(seed, 0));
        Path { t0: self.grid.t0, dt: self.grid.dt, values, meta: PathMeta { generator: self.tag.into(), seed: Some(seed) } }
    }

    /// Paths `0..paths`, path `k` drawn from stream `tagged_stream(tag, k)`.
    pub fn ensemble_tagged(&self, paths: usize, master_seed: u64, tag: u8, exec: Execution) -> Result<Ensemble> {
        let data = map_indices(exec, paths, |k| self.sample(&mut path_rng(master_seed, tagged_stream(tag, k as u64))));
        Ensemble::new(self.grid, data, master_seed, self.tag)
    }

    pub fn ensemble(&self, paths: usize, master_seed: u64, exec: Execution) -> Result<Ensemble> {
        self.ensemble_tagged(paths, master_seed, 0, exec)
    }

    /// Exact variance of the sample at the horizon, when the method has one
    /// in closed form.
    pub fn terminal_variance(&self) -> Option<f64> {
        match &self.kind {
            SamplerKind::Brownian => Some(self.grid.end() - self.grid.t0),
            SamplerKind::Mvn(t) => Some(t.terminal_variance()),
            SamplerKind::Volterra(t) => Some(t.row(t.n()).iter().map(|z| z * z).sum::<f64>() * self.grid.dt),
            _ => None,
        }
    }
}

fn volterra_table(hurst: HurstParam, n: usize, dt: f64) -> LowerTriangular {
    let h = hurst.value();
    let a = h - 0.5;
    let k = kappa(hurst);
    let u = power_lag_weights(a, n, dt, CellRule::CellAveraged);
    let inner = inner_kernel_table(h, n, dt, INNER_KERNEL_CELLS);
    LowerTriangular::from_rows(n, |row| {
        let t = row as f64 * dt;
        let ta = t.powf(a);
        let ir = inner.row(row);
        (0..row)
            .map(|j| {
                let s_a = ((j as f64 + 0.5) * dt).powf(-a);
                k * s_a * (ta * u[row - 1 - j] - a * ir[j])
            })
            .collect()
    })
}

// Mandelbrot-Van Ness on [0, T] with the past truncated to (−L, 0].
#[derive(Debug, Clone)]
struct MvnTable {
    n: usize,
    dt: f64,
    kappa: f64,
    main: CausalConvolution,
    // g[x] = dt^α [x^{α+1} − (x−1)^{α+1}] / (α+1) for x = 1..=n+m: the cell
    // average of (t_k − s)^α over the past cell [−i dt, −(i−1) dt] is g[k+i].
    g: Vec<f64>,
    tail_cells: usize,
}

impl MvnTable {
    fn new(alpha: FracOrder, n: usize, dt: f64, tail_len: f64) -> Self {
        let a = alpha.value();
        let horizon = n as f64 * dt;
        let tail_cells = ((tail_len * horizon / dt).round() as usize).max(1);
        let w = power_lag_weights(a, n + tail_cells, dt, CellRule::CellAveraged);
        let main = CausalConvolution::new(&w[..n]);
        let mut g = vec![0.0];
        g.extend_from_slice(&w);
        MvnTable { n, dt, kappa: kappa(alpha.hurst()), main, g, tail_cells }
    }

    fn tail_coef(&self, k: usize, i: usize) -> f64 {
        self.g[k + i] - self.g[i]
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let sd = self.dt.sqrt();
        let dw: Vec<f64> = normals(rng, self.n).into_iter().map(|z| sd * z).collect();
        let past: Vec<f64> = normals(rng, self.tail_cells).into_iter().map(|z| sd * z).collect();
        let base: f64 = crate::kernels::dot(&self.g[1..=self.tail_cells], &past);
        (0..=self.n)
            .map(|k| {
                if k == 0 {
                    return 0.0;
                }
                let tail = crate::kernels::dot(&self.g[k + 1..=k + self.tail_cells], &past) - base;
                self.kappa * (self.main.at(&dw, k) + tail)
            })
            .collect()
    }

    fn terminal_variance(&self) -> f64 {
        let main: f64 = self.g[1..=self.n].iter().map(|w| w * w).sum();
        let tail: f64 = (1..=self.tail_cells).map(|i| self.tail_coef(self.n, i).powi(2)).sum();
        self.kappa * self.kappa * self.dt * (main + tail)
    }
}

/// Standard Brownian motion on `n` steps of `[0, horizon]`.
pub fn brownian_path(n: usize, horizon: f64, seed: u64) -> Result<Path> {
    check_n(n)?;
    Ok(Process::Brownian.sampler(Grid::horizon(n, horizon)?)?.path(seed))
}

/// Exact fBm on the grid from the Cholesky factor of its covariance.
pub fn fbm_cholesky(h: HurstParam, n: usize, horizon: f64, seed: u64) -> Result<Path> {
    check_n(n)?;
    Ok(Process::FbmCholesky { hurst: h }.sampler(Grid::horizon(n, horizon)?)?.path(seed))
}

/// Approximate fBm with `H = 1/2 + α` from the truncated moving-average
/// representation.
pub fn fbm_mvn(alpha: FracOrder, n: usize, horizon: f64, tail_len: f64, seed: u64) -> Result<Path> {
    check_n(n)?;
    Ok(Process::FbmMvn { alpha, tail_len }.sampler(Grid::horizon(n, horizon)?)?.path(seed))
}

/// fBm from its Volterra kernel representation against a Brownian driver.
pub fn fbm_volterra(h: HurstParam, n: usize, horizon: f64, seed: u64) -> Result<Path> {
    check_n(n)?;
    Ok(Process::FbmVolterra { hurst: h }.sampler(Grid::horizon(n, horizon)?)?.path(seed))
}

/// `N_t = W(φ(t))` on `n` steps of `[0, 1]`.
pub fn time_changed_bm(phi: SingularFunction, n: usize, seed: u64) -> Result<Path> {
    check_n(n)?;
    Ok(Process::TimeChangedBm { cascade: phi }.sampler(Grid::horizon(n, 1.0)?)?.path(seed))
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::domain(format!("grid size must be at least 2, got {n}")))
    } else {
        Ok(())
    }
}
