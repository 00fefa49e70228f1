//! One-dimensional quadrature building blocks.
//!
//! Everything in the crate that integrates a kernel reduces to 1D integrals
//! in the radial variable, possibly with an integrable singularity at the
//! origin, an algebraic or exponential tail, or an oscillating tail. The
//! routines here cover those three cases on top of an adaptive 21-point
//! Gauss-Kronrod rule.

#![allow(clippy::excessive_precision)]

use std::collections::BinaryHeap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{NonlocalError, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_980_187_419,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Tolerances and budgets shared by the adaptive routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    pub max_shells: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-15,
            max_subdivisions: 400,
            max_shells: 400,
        }
    }
}

impl QuadConfig {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    const ZERO: Estimate = Estimate {
        value: 0.0,
        error: 0.0,
    };

    fn add(self, other: Estimate) -> Estimate {
        Estimate {
            value: self.value + other.value,
            error: self.error + other.error,
        }
    }
}

/// Single application of the 21-point Gauss-Kronrod rule on `[a, b]`.
pub fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Estimate {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    for i in 0..10 {
        let dx = half * XGK[i];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    Estimate {
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    a: f64,
    b: f64,
    est: Estimate,
}

impl PartialEq for Interval {
    fn eq(&self, other: &Self) -> bool {
        self.est.error == other.est.error
    }
}
impl Eq for Interval {}
impl PartialOrd for Interval {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Interval {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.est.error.total_cmp(&other.est.error)
    }
}

/// Globally adaptive bisection on `[a, b]`; the interval with the largest
/// error estimate is split until the summed error meets the tolerance.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, cfg: &QuadConfig) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate::ZERO);
    }
    let first = gauss_kronrod(f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Interval { a, b, est: first });
    let mut total = first;
    for _ in 0..cfg.max_subdivisions {
        if total.error <= cfg.target(total.value) {
            return Ok(total);
        }
        let worst = heap.pop().expect("heap never empties");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval cannot be split further in floating point
            heap.push(worst);
            break;
        }
        let left = gauss_kronrod(f, worst.a, mid);
        let right = gauss_kronrod(f, mid, worst.b);
        total.value += left.value + right.value - worst.est.value;
        total.error += left.error + right.error - worst.est.error;
        heap.push(Interval {
            a: worst.a,
            b: mid,
            est: left,
        });
        heap.push(Interval {
            a: mid,
            b: worst.b,
            est: right,
        });
    }
    // recompute the error sum to avoid drift from repeated updates
    let error: f64 = heap.iter().map(|iv| iv.est.error).sum();
    let value: f64 = heap.iter().map(|iv| iv.est.value).sum();
    if error <= cfg.target(value) {
        Ok(Estimate { value, error })
    } else {
        Err(NonlocalError::ToleranceNotMet {
            what: format!("adaptive integral on [{a:.6e}, {b:.6e}]"),
            residual: error,
        })
    }
}

/// Adaptive integration over consecutive pieces `[p0,p1], [p1,p2], ...`.
/// The points must be sorted; duplicates are skipped.
pub fn adaptive_pieces<F: Fn(f64) -> f64>(
    f: &F,
    points: &[f64],
    cfg: &QuadConfig,
) -> Result<Estimate> {
    let mut total = Estimate::ZERO;
    for w in points.windows(2) {
        if w[1] > w[0] {
            total = total.add(adaptive(f, w[0], w[1], cfg)?);
        }
    }
    Ok(total)
}

/// Sums a sequence of shell contributions `c_0, c_1, ...` which is expected
/// to decay at least geometrically. When consecutive ratios settle, the
/// remaining geometric tail is added in closed form.
fn sum_shells<S: FnMut(usize) -> Result<Estimate>>(
    mut shell: S,
    cfg: &QuadConfig,
    what: &str,
) -> Result<Estimate> {
    let mut total = Estimate::ZERO;
    let mut prev: Option<f64> = None;
    let mut prev_ratio: Option<f64> = None;
    let mut zero_run = 0;
    for k in 0..cfg.max_shells {
        let c = shell(k)?;
        total = total.add(c);
        if c.value == 0.0 {
            zero_run += 1;
            if zero_run >= 3 {
                return Ok(total);
            }
            prev = None;
            prev_ratio = None;
            continue;
        }
        zero_run = 0;
        if c.value.abs() <= 0.1 * cfg.target(total.value) && k >= 2 {
            return Ok(total);
        }
        if let Some(p) = prev {
            let ratio = c.value / p;
            if let Some(pr) = prev_ratio {
                let settled = (ratio - pr).abs() <= 1e-6 * ratio.abs().max(1e-300);
                if ratio > 0.0 && ratio < 0.995 && settled {
                    let tail = c.value * ratio / (1.0 - ratio);
                    let tail_err = (ratio - pr).abs() * c.value.abs() / (1.0 - ratio).powi(2);
                    if tail_err <= cfg.target(total.value + tail) {
                        return Ok(Estimate {
                            value: total.value + tail,
                            error: total.error + tail_err,
                        });
                    }
                }
            }
            prev_ratio = Some(ratio);
        }
        prev = Some(c.value);
    }
    Err(NonlocalError::ToleranceNotMet {
        what: what.to_string(),
        residual: prev.map_or(f64::INFINITY, f64::abs),
    })
}

/// `∫_a^b f` where `f` may carry an integrable singularity at `a`.
/// Integrates over dyadic shells `[a + w/2^{k+1}, a + w/2^k]`.
pub fn singular_at_left<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    cfg: &QuadConfig,
) -> Result<Estimate> {
    if b <= a {
        return Ok(Estimate::ZERO);
    }
    let width = b - a;
    let shell_cfg = cfg.with_rel_tol(cfg.rel_tol * 0.1);
    sum_shells(
        |k| {
            let hi = a + width * 0.5f64.powi(k as i32);
            let lo = a + width * 0.5f64.powi(k as i32 + 1);
            adaptive(f, lo, hi, &shell_cfg)
        },
        cfg,
        "integrand singular at left endpoint",
    )
}

/// `∫_a^∞ f` over shells `[a + (2^k-1)w, a + (2^{k+1}-1)w]`.
pub fn semi_infinite<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    first_width: f64,
    cfg: &QuadConfig,
) -> Result<Estimate> {
    let shell_cfg = cfg.with_rel_tol(cfg.rel_tol * 0.1);
    sum_shells(
        |k| {
            let lo = a + first_width * (2f64.powi(k as i32) - 1.0);
            let hi = a + first_width * (2f64.powi(k as i32 + 1) - 1.0);
            adaptive(f, lo, hi, &shell_cfg)
        },
        cfg,
        "semi-infinite tail",
    )
}

/// `∫_a^∞ f` for an integrand that oscillates with (asymptotic) half-period
/// `half_period` and decays. Partial sums over half-periods are accelerated
/// with the Wynn epsilon algorithm.
pub fn oscillatory_tail<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    half_period: f64,
    cfg: &QuadConfig,
) -> Result<Estimate> {
    let piece_cfg = cfg.with_rel_tol(cfg.rel_tol * 0.01);
    let mut partial = Vec::new();
    let mut sum = 0.0;
    let mut err = 0.0;
    let mut last: Option<f64> = None;
    for k in 0..cfg.max_shells {
        let lo = a + half_period * k as f64;
        let piece = adaptive(f, lo, lo + half_period, &piece_cfg)?;
        sum += piece.value;
        err += piece.error;
        partial.push(sum);
        if partial.len() >= 12 && partial.len() % 4 == 0 {
            let est = wynn_epsilon(&partial);
            if let Some(prev) = last {
                let diff = (est - prev).abs();
                if diff <= cfg.target(est) {
                    return Ok(Estimate {
                        value: est,
                        error: err + diff,
                    });
                }
            }
            last = Some(est);
        }
    }
    Err(NonlocalError::ToleranceNotMet {
        what: "oscillatory tail".into(),
        residual: f64::INFINITY,
    })
}

/// Wynn's epsilon algorithm applied to a sequence of partial sums; returns
/// the deepest even-column entry.
pub fn wynn_epsilon(s: &[f64]) -> f64 {
    let n = s.len();
    if n == 0 {
        return 0.0;
    }
    // e[k] holds column j of the table, e_prev column j-1
    let mut prev: Vec<f64> = vec![0.0; n + 1];
    let mut cur: Vec<f64> = s.to_vec();
    let mut best = s[n - 1];
    let mut col = 0usize;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let d = cur[i + 1] - cur[i];
            let val = if d.abs() < 1e-300 {
                f64::INFINITY
            } else {
                prev[i + 1] + 1.0 / d
            };
            next.push(val);
        }
        col += 1;
        if next.iter().any(|v| !v.is_finite()) {
            break;
        }
        if col.is_multiple_of(2) {
            best = *next.last().unwrap();
        }
        prev = cur;
        cur = next;
    }
    best
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Cached 16-point Gauss-Legendre rule used for angular integration.
pub fn gauss_legendre_16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// Fixed-order Gauss-Legendre on `[a, b]`.
pub fn fixed_gauss<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(x, w)| w * f(c + h * x))
        .sum::<f64>()
        * h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_is_exact_for_polynomials() {
        let est = gauss_kronrod(&|x: f64| x.powi(20) - 3.0 * x.powi(7) + 1.0, 0.0, 2.0);
        let exact = 2f64.powi(21) / 21.0 - 3.0 * 2f64.powi(8) / 8.0 + 2.0;
        assert!((est.value - exact).abs() < 1e-9 * exact.abs());
    }

    #[test]
    fn gauss_legendre_matches_known_rule() {
        let (x, w) = gauss_legendre(3);
        assert!((x[2] - (0.6f64).sqrt()).abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);
        let (_, w16) = gauss_legendre(16);
        assert!((w16.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn endpoint_singularity() {
        // ∫_0^1 x^{-0.8} dx = 5
        let est = singular_at_left(&|x: f64| x.powf(-0.8), 0.0, 1.0, &QuadConfig::default()).unwrap();
        assert!((est.value - 5.0).abs() < 1e-8, "{}", est.value);
    }

    #[test]
    fn algebraic_tail() {
        // ∫_1^∞ r^{-1.1} dr = 10
        let est = semi_infinite(&|r: f64| r.powf(-1.1), 1.0, 1.0, &QuadConfig::default()).unwrap();
        assert!((est.value - 10.0).abs() < 1e-7, "{}", est.value);
    }

    #[test]
    fn oscillating_tail_sine_integral() {
        // ∫_1^∞ cos(t)/t dt = -Ci(1) = -0.337403922900968...
        let est = oscillatory_tail(
            &|t: f64| t.cos() / t,
            1.0,
            std::f64::consts::PI,
            &QuadConfig::default(),
        )
        .unwrap();
        assert!((est.value + 0.337_403_922_900_968_1).abs() < 1e-9, "{}", est.value);
    }

    #[test]
    fn pieces_handle_jump() {
        let f = |x: f64| if x < 0.3 { 1.0 } else { 2.0 };
        let est = adaptive_pieces(&f, &[0.0, 0.3, 1.0], &QuadConfig::default()).unwrap();
        assert!((est.value - 1.7).abs() < 1e-13);
    }
}
