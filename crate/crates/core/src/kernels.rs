//! Kernel weights and quadrature shared by the simulators and transforms.
//!
//! On a uniform grid `t_k = k dt` every kernel of the form `(t − s)^γ` is
//! Toeplitz: the weight of cell `j` seen from output index `k` only depends
//! on the lag `k − 1 − j`. Such weights are stored by lag, and the transform
//! is a causal convolution evaluated with a fixed summation order.

use serde::{Deserialize, Serialize};

use crate::par::par_map;

/// How the kernel is sampled on each grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellRule {
    /// Exact average of the kernel over the cell; finite for integrable
    /// endpoint singularities.
    #[default]
    CellAveraged,
    /// Kernel value at the left end of the cell, `(t_k − s_j)^γ`.
    LeftPoint,
}

/// Weights of `(t − s)^γ` by lag `l = k − 1 − j`, for `l = 0..n`.
///
/// With [`CellRule::CellAveraged`] the weight is
/// `dt^γ [(l+1)^{γ+1} − l^{γ+1}] / (γ+1)`, i.e. the mean of the kernel over
/// `[s_j, s_{j+1}]`. Requires `γ > −1`.
pub fn power_lag_weights(gamma: f64, n: usize, dt: f64, rule: CellRule) -> Vec<f64> {
    let scale = dt.powf(gamma);
    match rule {
        CellRule::CellAveraged => {
            let g1 = gamma + 1.0;
            let mut prev = 0.0_f64;
            (0..n)
                .map(|l| {
                    let next = ((l + 1) as f64).powf(g1);
                    let w = scale * (next - prev) / g1;
                    prev = next;
                    w
                })
                .collect()
        }
        CellRule::LeftPoint => (0..n).map(|l| scale * ((l + 1) as f64).powf(gamma)).collect(),
    }
}

/// Exact mean of `(t − s)^γ` over `s ∈ [c0, c1]`, with `c1 ≤ t`.
pub fn power_cell_average(gamma: f64, t: f64, c0: f64, c1: f64) -> f64 {
    let g1 = gamma + 1.0;
    ((t - c0).powf(g1) - (t - c1).max(0.0).powf(g1)) / (g1 * (c1 - c0))
}

/// Dot product with four interleaved accumulators. The summation order is a
/// function of the length only.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0_f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// A causal Toeplitz operator `out_k = Σ_{j<k} w_{k−1−j} x_j`.
#[derive(Debug, Clone)]
pub struct CausalConvolution {
    // reversed[i] = w[n − 1 − i], so that row k is a contiguous suffix.
    reversed: Vec<f64>,
}

impl CausalConvolution {
    pub fn new(lag_weights: &[f64]) -> Self {
        let mut reversed = lag_weights.to_vec();
        reversed.reverse();
        CausalConvolution { reversed }
    }

    pub fn len(&self) -> usize {
        self.reversed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reversed.is_empty()
    }

    /// Output at index `k`; `x` must hold at least `k` entries.
    #[inline]
    pub fn at(&self, x: &[f64], k: usize) -> f64 {
        let n = self.reversed.len();
        dot(&self.reversed[n - k..], &x[..k])
    }

    /// Outputs at `k = 0, stride, 2·stride, …, len`. `x.len()` must equal the
    /// operator length and be divisible by `stride`.
    pub fn apply_strided(&self, x: &[f64], stride: usize) -> Vec<f64> {
        let n = self.reversed.len();
        assert_eq!(x.len(), n, "operator built for {n} increments");
        assert!(stride >= 1 && n.is_multiple_of(stride), "stride must divide the grid");
        (0..=n / stride).map(|i| self.at(x, i * stride)).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.apply_strided(x, 1)
    }
}

/// A dense causal operator stored as a packed lower triangle:
/// `out_k = Σ_{j<k} a_{k,j} x_j`, row `k` holding `k` entries.
#[derive(Debug, Clone)]
pub struct LowerTriangular {
    n: usize,
    data: Vec<f64>,
}

impl LowerTriangular {
    /// Build from a per-row generator; row `k ∈ 1..=n` must return `k` values.
    pub fn from_rows<F>(n: usize, row: F) -> Self
    where
        F: Fn(usize) -> Vec<f64> + Sync + Send,
    {
        let rows = par_map(n, |i| row(i + 1));
        let mut data = Vec::with_capacity(n * (n + 1) / 2);
        for (i, r) in rows.into_iter().enumerate() {
            assert_eq!(r.len(), i + 1);
            data.extend_from_slice(&r);
        }
        LowerTriangular { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Row `k` (`1 ≤ k ≤ n`), i.e. the coefficients of `x_0..x_{k−1}`.
    pub fn row(&self, k: usize) -> &[f64] {
        let start = (k - 1) * k / 2;
        &self.data[start..start + k]
    }

    pub fn apply_strided(&self, x: &[f64], stride: usize) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        assert!(stride >= 1 && self.n.is_multiple_of(stride), "stride must divide the grid");
        (0..=self.n / stride)
            .map(|i| {
                let k = i * stride;
                if k == 0 {
                    0.0
                } else {
                    dot(self.row(k), &x[..k])
                }
            })
            .collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.apply_strided(x, 1)
    }
}

// Gauss-Legendre nodes and weights on [-1, 1].
const GL8_X: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_2];
const GL8_W: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, x: &[f64], w: &[f64]) -> f64 {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let mut acc = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        acc += wi * (f(c - r * xi) + f(c + r * xi));
    }
    acc * r
}

/// Integrates `∫_a^b f` with eight-point Gauss-Legendre.
pub fn gauss_legendre8<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    gauss_legendre(f, a, b, &GL8_X, &GL8_W)
}

/// Default number of geometric cells in [`inner_kernel`].
pub const INNER_KERNEL_CELLS: usize = 64;

// Relative width of the innermost geometric cell.
const INNER_KERNEL_FLOOR: f64 = 1e-9;

/// `K(t, s) = ∫_s^t u^{H−3/2} (u − s)^{H−1/2} du` for `0 < s < t`.
///
/// The integrand is singular at `u = s` when `H < 1/2` and has an unbounded
/// derivative there when `H > 1/2`. The range is split into `cells`
/// geometric cells clustered at `u = s`; each cell gets eight-point
/// Gauss-Legendre and the innermost one is mapped by `x = x₁ z^{1/(H+1/2)}`,
/// which absorbs the `(u − s)^{H−1/2}` factor exactly.
pub fn inner_kernel(h: f64, t: f64, s: f64, cells: usize) -> f64 {
    debug_assert!(0.0 < s && s < t);
    let a = h - 0.5;
    let b = h - 1.5;
    let len = t - s;
    let g = |u: f64| u.powf(b);
    let cells = cells.max(2);
    let ratio = INNER_KERNEL_FLOOR.powf(-1.0 / (cells - 1) as f64);

    let x1 = len * INNER_KERNEL_FLOOR;
    let p = 1.0 / (a + 1.0);
    let first = x1.powf(a + 1.0) / (a + 1.0) * gauss_legendre8(|z| g(s + x1 * z.powf(p)), 0.0, 1.0);

    let mut acc = first;
    let mut lo = x1;
    for i in 1..cells {
        let hi = if i == cells - 1 { len } else { lo * ratio };
        acc += gauss_legendre8(|x| x.powf(a) * g(s + x), lo, hi);
        lo = hi;
    }
    acc
}

/// `K(t_k, s*_j)` for every grid point `t_k = k dt` and cell midpoint
/// `s*_j = (j + 1/2) dt` with `j < k`.
///
/// The band next to the diagonal, `[s*_j, t_{j+1}]`, goes through
/// [`inner_kernel`]; every further cell `[t_m, t_{m+1}]` stays at least one
/// cell away from the singularity and is added with eight-point
/// Gauss-Legendre, accumulating along `k`.
pub fn inner_kernel_table(h: f64, n: usize, dt: f64, cells: usize) -> LowerTriangular {
    let a = h - 0.5;
    let b = h - 1.5;
    let columns: Vec<Vec<f64>> = par_map(n, |j| {
        let s = (j as f64 + 0.5) * dt;
        let mut col = Vec::with_capacity(n - j);
        let mut acc = inner_kernel(h, (j + 1) as f64 * dt, s, cells);
        col.push(acc);
        for m in (j + 1)..n {
            let lo = m as f64 * dt;
            let hi = (m + 1) as f64 * dt;
            acc += gauss_legendre8(|u| u.powf(b) * (u - s).powf(a), lo, hi);
            col.push(acc);
        }
        col
    });
    LowerTriangular::from_rows(n, |k| (0..k).map(|j| columns[j][k - 1 - j]).collect())
}
