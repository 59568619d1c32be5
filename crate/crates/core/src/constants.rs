//! Closed-form constants of the fractional martingale theory.
//!
//! Everything here is a pure function of the Hurst parameter `H` or of the
//! fractional order `alpha = H - 1/2`, so the values can be audited one by
//! one and called from any thread.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hurst parameter, restricted to the open interval `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h < 1.0 {
            Ok(HurstParam(h))
        } else {
            Err(Error::domain(format!("Hurst parameter must lie in (0, 1), got {h}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The fractional order `H - 1/2` whose transform of a Brownian motion
    /// has the same roughness as fBm with this Hurst parameter.
    pub fn frac_order(self) -> FracOrder {
        FracOrder(self.0 - 0.5)
    }

    pub fn is_brownian(self) -> bool {
        self.0 == 0.5
    }
}

impl TryFrom<f64> for HurstParam {
    type Error = Error;

    fn try_from(h: f64) -> Result<Self> {
        HurstParam::new(h)
    }
}

impl From<HurstParam> for f64 {
    fn from(h: HurstParam) -> f64 {
        h.0
    }
}

/// Order of a Riemann-Liouville transform, restricted to `(-1/2, 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FracOrder(f64);

impl FracOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > -0.5 && alpha < 0.5 {
            Ok(FracOrder(alpha))
        } else {
            Err(Error::domain(format!("fractional order must lie in (-1/2, 1/2), got {alpha}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `H = 1/2 + alpha`.
    pub fn hurst(self) -> HurstParam {
        HurstParam(0.5 + self.0)
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }
}

impl TryFrom<f64> for FracOrder {
    type Error = Error;

    fn try_from(alpha: f64) -> Result<Self> {
        FracOrder::new(alpha)
    }
}

impl From<FracOrder> for f64 {
    fn from(a: FracOrder) -> f64 {
        a.0
    }
}

// Lanczos approximation, g = 7, nine coefficients. Relative error is below
// 2e-15 on (0, 3), the only range the constants below ever touch.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function for positive arguments (reflection below 1/2).
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS[0];
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
    }
}

/// Euler Beta function `B(x, y) = Γ(x)Γ(y)/Γ(x+y)`.
pub fn beta_fn(x: f64, y: f64) -> f64 {
    gamma(x) * gamma(y) / gamma(x + y)
}

/// `E|ξ|^p` for a standard normal `ξ`: `2^{p/2} Γ((p+1)/2) / √π`.
pub fn abs_normal_moment(p: f64) -> f64 {
    2f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / PI.sqrt()
}

/// Critical variation order `β = 2 / (1 + 2α)`, equal to `1/H`.
pub fn beta_of_alpha(alpha: FracOrder) -> f64 {
    2.0 / (1.0 + 2.0 * alpha.value())
}

/// Normalizing constant of the moving-average representation of fBm:
/// `sqrt(2H Γ(3/2 − H) / (Γ(H + 1/2) Γ(2 − 2H)))`.
pub fn kappa(h: HurstParam) -> f64 {
    let h = h.value();
    (2.0 * h * gamma(1.5 - h) / (gamma(h + 0.5) * gamma(2.0 - 2.0 * h))).sqrt()
}

/// `c_H = E|ξ|^{1/H}`, the `1/H`-variation of fBm per unit time.
pub fn c_h(h: HurstParam) -> f64 {
    abs_normal_moment(1.0 / h.value())
}

/// `c_α = c_H κ_H^{−1/H}` with `H = 1/2 + α`: the `β`-variation per unit time
/// of the Riemann-Liouville transform of a Brownian motion.
pub fn c_alpha(alpha: FracOrder) -> f64 {
    let h = alpha.hurst();
    c_h(h) * kappa(h).powf(-1.0 / h.value())
}

/// `d_H = 1 / B(3/2 − H, H + 1/2)`, the constant that rebuilds fBm from its
/// fundamental martingale.
pub fn d_h(h: HurstParam) -> f64 {
    let h = h.value();
    1.0 / beta_fn(1.5 - h, h + 0.5)
}

/// All five constants for one Hurst parameter, as printed by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConstantsTable {
    pub hurst: f64,
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub c_h: f64,
    pub c_alpha: f64,
    pub d_h: f64,
}

impl ConstantsTable {
    pub fn new(h: HurstParam) -> Self {
        let alpha = h.frac_order();
        ConstantsTable {
            hurst: h.value(),
            alpha: alpha.value(),
            beta: beta_of_alpha(alpha),
            kappa: kappa(h),
            c_h: c_h(h),
            c_alpha: c_alpha(alpha),
            d_h: d_h(h),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn hp(h: f64) -> HurstParam {
        HurstParam::new(h).unwrap()
    }

    fn fo(a: f64) -> FracOrder {
        FracOrder::new(a).unwrap()
    }

    // Reference values computed with mpmath at 40 digits.
    const ORACLE: [(f64, f64, f64, f64, f64); 4] = [
        // (H, kappa, c_H, d_H, c_alpha)
        (0.25, 0.645_998_003_740_752, 3.0, 0.900_316_316_157_106_1, 17.226_480_265_107_12),
        (0.3, 0.730_282_934_079_923, 1.938_675_491_735_638, 0.935_489_283_788_639, 5.527_574_621_373_083),
        (0.7, 1.091_809_130_883_912_6, 0.846_509_009_912_664_3, 0.935_489_283_788_639, 0.746_683_006_967_467_7),
        (0.75, 1.069_644_635_031_990_3, 0.830_860_925_029_559_1, 0.900_316_316_157_106_1, 0.759_525_417_007_248_7),
    ];

    #[test]
    fn gamma_matches_high_precision() {
        let cases = [
            (0.1, 9.513_507_698_668_732),
            (0.5, 1.772_453_850_905_516),
            (1.3, 0.897_470_696_306_277_2),
            (2.5, 1.329_340_388_179_137),
            (2.9, 1.827_355_080_624_036),
        ];
        for (x, g) in cases {
            assert!((gamma(x) - g).abs() / g < 1e-13, "gamma({x})");
        }
    }

    #[test]
    fn beta_of_alpha_examples() {
        assert_eq!(beta_of_alpha(fo(0.0)), 2.0);
        assert!((beta_of_alpha(fo(0.25)) - 4.0 / 3.0).abs() < 1e-15);
        assert!((beta_of_alpha(fo(-0.25)) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn domains_are_open_intervals() {
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(HurstParam::new(bad).is_err());
        }
        for bad in [-0.5, 0.5, 0.7, f64::NAN] {
            assert!(FracOrder::new(bad).is_err());
        }
        assert!(serde_json::from_str::<HurstParam>("1.2").is_err());
        assert_eq!(serde_json::from_str::<HurstParam>("0.3").unwrap(), hp(0.3));
    }

    #[test]
    fn brownian_point_is_all_ones() {
        let h = hp(0.5);
        assert!((kappa(h) - 1.0).abs() < 1e-12);
        assert!((c_h(h) - 1.0).abs() < 1e-12);
        assert!((c_alpha(fo(0.0)) - 1.0).abs() < 1e-12);
        assert!((d_h(h) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn first_absolute_moment() {
        let expect = (2.0 / PI).sqrt();
        assert!((abs_normal_moment(1.0) - expect).abs() < 1e-14);
    }

    #[test]
    fn constants_match_oracle() {
        for (h, k, c, d, ca) in ORACLE {
            let hh = hp(h);
            assert!((kappa(hh) - k).abs() < 1e-10 * k, "kappa({h})");
            assert!((c_h(hh) - c).abs() < 1e-10 * c, "c_h({h})");
            assert!((d_h(hh) - d).abs() < 1e-10 * d, "d_h({h})");
            assert!((c_alpha(hh.frac_order()) - ca).abs() < 1e-10 * ca, "c_alpha({h})");
        }
    }

    #[test]
    fn d_h_symmetry() {
        for i in 1..100 {
            let h = i as f64 / 100.0;
            assert!((d_h(hp(h)) - d_h(hp(1.0 - h))).abs() < 1e-12);
        }
        assert!((d_h(hp(0.75)) - d_h(hp(0.25))).abs() < 1e-13);
    }

    #[test]
    fn beta_times_hurst_is_one() {
        for i in 1..1000 {
            let a = -0.5 + i as f64 / 1000.0;
            let a = fo(a);
            assert!((beta_of_alpha(a) * (0.5 + a.value()) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn sweep_finite_and_positive() {
        // c_H = E|xi|^{1/H} leaves the f64 range below H ~ 0.005.
        for i in 0..1000 {
            let h = hp(0.01 + 0.98 * i as f64 / 999.0);
            let a = h.frac_order();
            for v in [beta_of_alpha(a), kappa(h), c_h(h), c_alpha(a), d_h(h)] {
                assert!(v.is_finite() && v > 0.0, "H = {}", h.value());
            }
        }
    }

    #[test]
    fn c_h_against_monte_carlo() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let p = 1.0 / 0.7;
        let n = 10_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            sum += z.abs().powf(p);
        }
        let mc = sum / n as f64;
        let exact = c_h(hp(0.7));
        assert!((mc - exact).abs() / exact < 1e-3, "mc {mc} exact {exact}");
    }
}
