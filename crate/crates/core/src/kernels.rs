//! Kernel zoo for small-order nonlocal operators.
//!
//! A [`Kernel`] is an even, nonnegative function `j: ℝ^N \ {0} → [0, ∞)`,
//! optionally restricted to a radial window `inner ≤ |z| < outer`. Windows
//! are how the near/far parts of a δ-split are represented, so every
//! operation on kernels (integrals, symbols, assembly) sees a split part
//! exactly like any other kernel.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{NonlocalError, Result};
use crate::expr::Expr;
use crate::quadrature::{self, Estimate, QuadConfig};
use crate::special::{
    bessel_k, digamma, gamma, spherical_cos_average, spherical_one_minus_cos_average, sphere_area, EULER_GAMMA,
};

/// Margin added to a kernel's singularity order when testing Lévy
/// integrability; the integral diverges logarithmically at the order itself.
pub const LEVY_MARGIN: f64 = 0.05;

/// Callable used by custom kernels.
pub type KernelFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A user-supplied kernel, given either as an expression in the coordinates
/// of `z` (serializable) or as a closure.
#[derive(Clone)]
pub struct CustomKernel {
    expr: Option<Expr>,
    func: KernelFn,
    /// Declared singularity order.
    pub sigma: f64,
    /// Radius outside of which the kernel vanishes, if known.
    pub support: Option<f64>,
    /// Radii at which the kernel may jump.
    pub breakpoints: Vec<f64>,
}

impl CustomKernel {
    pub fn from_expr(expr: Expr, sigma: f64, support: Option<f64>) -> Self {
        let e = expr.clone();
        Self {
            expr: Some(expr),
            func: Arc::new(move |z: &[f64]| e.eval(z)),
            sigma,
            support,
            breakpoints: Vec::new(),
        }
    }

    pub fn from_fn<F>(func: F, sigma: f64, support: Option<f64>) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            expr: None,
            func: Arc::new(func),
            sigma,
            support,
            breakpoints: Vec::new(),
        }
    }

    pub fn with_breakpoints(mut self, mut radii: Vec<f64>) -> Self {
        radii.retain(|r| r.is_finite() && *r > 0.0);
        self.breakpoints = radii;
        self
    }

    pub fn expr(&self) -> Option<&Expr> {
        self.expr.as_ref()
    }
}

impl fmt::Debug for CustomKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomKernel")
            .field("expr", &self.expr)
            .field("sigma", &self.sigma)
            .field("support", &self.support)
            .finish()
    }
}

#[derive(Serialize, Deserialize)]
struct CustomRepr {
    expr: Expr,
    sigma: f64,
    #[serde(default)]
    support: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    breakpoints: Vec<f64>,
}

impl Serialize for CustomKernel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let expr = self.expr.clone().ok_or_else(|| {
            serde::ser::Error::custom("closure-backed custom kernels cannot be serialized")
        })?;
        CustomRepr {
            expr,
            sigma: self.sigma,
            support: self.support,
            breakpoints: self.breakpoints.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CustomKernel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = CustomRepr::deserialize(d)?;
        Ok(CustomKernel::from_expr(repr.expr, repr.sigma, repr.support)
            .with_breakpoints(repr.breakpoints))
    }
}

/// Kernel families. Normalizations follow the usual conventions:
/// the fractional kernel has symbol |ξ|^{2s}, the logarithmic Laplacian
/// kernel is c_N 1_{B_1}|z|^{-N} and the logarithmic Schrödinger kernel is
/// d_N ω(|z|)|z|^{-N}.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Family {
    Fractional { s: f64 },
    LogLaplacian {},
    LogSchrodinger {},
    /// `1_{|z|<cutoff} |z|^{-N-sigma}`; negative sigma gives finite mass.
    TruncatedPower { sigma: f64, cutoff: f64 },
    /// Normalized Gaussian with total mass `mass`.
    Gaussian { mass: f64, width: f64 },
    /// `1_{|z|<radius}`.
    Indicator { radius: f64 },
    Custom(CustomKernel),
}

/// Radial restriction `inner ≤ |z| < outer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialWindow {
    pub inner: f64,
    pub outer: Option<f64>,
}

impl Default for RadialWindow {
    fn default() -> Self {
        Self {
            inner: 0.0,
            outer: None,
        }
    }
}

impl RadialWindow {
    pub fn is_full(&self) -> bool {
        self.inner == 0.0 && self.outer.is_none()
    }

    fn contains(&self, r: f64) -> bool {
        r >= self.inner && self.outer.is_none_or(|o| r < o)
    }

    fn outer_or_inf(&self) -> f64 {
        self.outer.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Kernel {
    #[serde(flatten)]
    pub family: Family,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "RadialWindow::is_full")]
    pub window: RadialWindow,
}

impl Kernel {
    fn build(family: Family, dim: usize) -> Result<Self> {
        let k = Self {
            family,
            dim,
            window: RadialWindow::default(),
        };
        k.validate()?;
        Ok(k)
    }

    pub fn fractional(dim: usize, s: f64) -> Result<Self> {
        Self::build(Family::Fractional { s }, dim)
    }

    pub fn log_laplacian(dim: usize) -> Result<Self> {
        Self::build(Family::LogLaplacian {}, dim)
    }

    pub fn log_schrodinger(dim: usize) -> Result<Self> {
        Self::build(Family::LogSchrodinger {}, dim)
    }

    pub fn truncated_power(dim: usize, sigma: f64, cutoff: f64) -> Result<Self> {
        Self::build(Family::TruncatedPower { sigma, cutoff }, dim)
    }

    pub fn gaussian(dim: usize, mass: f64, width: f64) -> Result<Self> {
        Self::build(Family::Gaussian { mass, width }, dim)
    }

    pub fn indicator(dim: usize, radius: f64) -> Result<Self> {
        Self::build(Family::Indicator { radius }, dim)
    }

    pub fn custom(dim: usize, custom: CustomKernel) -> Result<Self> {
        Self::build(Family::Custom(custom), dim)
    }

    /// Restricts the kernel to `inner ≤ |z| < outer`, intersecting with any
    /// existing window.
    pub fn restricted(&self, inner: f64, outer: Option<f64>) -> Self {
        let lo = self.window.inner.max(inner);
        let hi = match (self.window.outer, outer) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        Self {
            family: self.family.clone(),
            dim: self.dim,
            window: RadialWindow {
                inner: lo,
                outer: hi,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > 2 {
            return Err(NonlocalError::domain(format!(
                "kernel dimension must be 1 or 2, got {}",
                self.dim
            )));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(NonlocalError::domain(format!("{name} must be positive, got {v}")))
            }
        };
        match &self.family {
            Family::Fractional { s } => {
                if !(*s > 0.0 && *s < 1.0) {
                    return Err(NonlocalError::domain(format!("fractional order s={s} outside (0,1)")));
                }
            }
            Family::TruncatedPower { sigma, cutoff } => {
                positive("cutoff", *cutoff)?;
                let n = self.dim as f64;
                if !(*sigma > -n && *sigma < 2.0) {
                    return Err(NonlocalError::domain(format!(
                        "truncated power order {sigma} outside (-N, 2)"
                    )));
                }
            }
            Family::Gaussian { mass, width } => {
                positive("width", *width)?;
                if !(mass.is_finite() && *mass >= 0.0) {
                    return Err(NonlocalError::domain("gaussian mass must be nonnegative"));
                }
            }
            Family::Indicator { radius } => positive("radius", *radius)?,
            Family::Custom(c) => {
                if let Some(s) = c.support {
                    positive("support", s)?;
                }
                if let Some(e) = &c.expr {
                    if e.dims_used() > self.dim {
                        return Err(NonlocalError::domain(format!(
                            "custom kernel uses coordinate {} in dimension {}",
                            e.dims_used(),
                            self.dim
                        )));
                    }
                }
            }
            Family::LogLaplacian {} | Family::LogSchrodinger {} => {}
        }
        if self.window.inner < 0.0 || self.window.outer.is_some_and(|o| o <= 0.0) {
            return Err(NonlocalError::domain("invalid radial window"));
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match &self.family {
            Family::Fractional { .. } => "fractional",
            Family::LogLaplacian {} => "log_laplacian",
            Family::LogSchrodinger {} => "log_schrodinger",
            Family::TruncatedPower { .. } => "truncated_power",
            Family::Gaussian { .. } => "gaussian",
            Family::Indicator { .. } => "indicator",
            Family::Custom(_) => "custom",
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_radial(&self) -> bool {
        !matches!(self.family, Family::Custom(_))
    }

    /// Singularity order σ: j(z) ~ |z|^{-N-σ} at the origin. Zero for the
    /// logarithmic kernels and for bounded kernels.
    pub fn sigma(&self) -> f64 {
        match &self.family {
            Family::Fractional { s } => 2.0 * s,
            Family::TruncatedPower { sigma, .. } => *sigma,
            Family::Custom(c) => c.sigma,
            _ => 0.0,
        }
    }

    /// Multiplicative normalization of the family (c_{N,s}, c_N, d_N, ...).
    pub fn normalization(&self) -> f64 {
        let n = self.dim as f64;
        match &self.family {
            Family::Fractional { s } => {
                s * 4f64.powf(*s) * gamma(n / 2.0 + s) / (PI.powf(n / 2.0) * gamma(1.0 - s))
            }
            Family::LogLaplacian {} => log_laplacian_constant(self.dim),
            Family::LogSchrodinger {} => PI.powf(-n / 2.0),
            Family::Gaussian { mass, width } => mass * (2.0 * PI * width * width).powf(-n / 2.0),
            _ => 1.0,
        }
    }

    /// Additive zero-order constant of the full operator (ρ_N for the
    /// logarithmic Laplacian, zero otherwise).
    pub fn zero_order_shift(&self) -> f64 {
        match self.family {
            Family::LogLaplacian {} if self.window.is_full() => log_laplacian_shift(self.dim),
            _ => 0.0,
        }
    }

    fn base_support(&self) -> Option<f64> {
        match &self.family {
            Family::LogLaplacian {} => Some(1.0),
            Family::TruncatedPower { cutoff, .. } => Some(*cutoff),
            Family::Indicator { radius } => Some(*radius),
            Family::Custom(c) => c.support,
            _ => None,
        }
    }

    /// Radius outside of which the kernel vanishes, if finite.
    pub fn support_radius(&self) -> Option<f64> {
        match (self.base_support(), self.window.outer) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Sorted radii at which the kernel may be discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if let Some(s) = self.support_radius() {
            out.push(s);
        }
        if self.window.inner > 0.0 {
            out.push(self.window.inner);
        }
        if let Family::Custom(c) = &self.family {
            out.extend(c.breakpoints.iter().copied());
        }
        out.retain(|r| r.is_finite() && *r > 0.0);
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs());
        out
    }

    /// Radial profile of a zoo kernel without the window.
    fn base_profile(&self, r: f64) -> f64 {
        let n = self.dim as f64;
        match &self.family {
            Family::Fractional { s } => self.normalization() * r.powf(-n - 2.0 * s),
            Family::LogLaplacian {} => {
                if r < 1.0 {
                    log_laplacian_constant(self.dim) * r.powf(-n)
                } else {
                    0.0
                }
            }
            Family::LogSchrodinger {} => {
                // d_N 2^{1-N/2} r^{-N/2} K_{N/2}(r)
                PI.powf(-n / 2.0) * 2f64.powf(1.0 - n / 2.0) * r.powf(-n / 2.0) * bessel_k(n / 2.0, r)
            }
            Family::TruncatedPower { sigma, cutoff } => {
                if r < *cutoff {
                    r.powf(-n - sigma)
                } else {
                    0.0
                }
            }
            Family::Gaussian { width, .. } => {
                self.normalization() * (-r * r / (2.0 * width * width)).exp()
            }
            Family::Indicator { radius } => {
                if r < *radius {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Custom(_) => unreachable!("custom kernels have no radial profile"),
        }
    }

    /// Kernel value at `z ≠ 0` without the domain check.
    pub fn value(&self, z: &[f64]) -> f64 {
        let r = norm(z);
        if !self.window.contains(r) {
            return 0.0;
        }
        match &self.family {
            Family::Custom(c) => (c.func)(z),
            _ => self.base_profile(r),
        }
    }

    /// Kernel value j(z); `z = 0` is a domain error.
    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim {
            return Err(NonlocalError::domain(format!(
                "point of dimension {} for a kernel in dimension {}",
                z.len(),
                self.dim
            )));
        }
        if z.iter().all(|v| *v == 0.0) {
            return Err(NonlocalError::domain("kernel evaluated at z = 0"));
        }
        Ok(self.value(z))
    }

    /// Mean of `j(z) g(z)` over the sphere |z| = r.
    pub fn sphere_mean_with<G: Fn(&[f64]) -> f64>(&self, r: f64, g: G) -> f64 {
        match self.dim {
            1 => 0.5 * (self.value(&[r]) * g(&[r]) + self.value(&[-r]) * g(&[-r])),
            _ => {
                const M: usize = 64;
                let mut acc = 0.0;
                for k in 0..M {
                    let t = 2.0 * PI * (k as f64 + 0.5) / M as f64;
                    let z = [r * t.cos(), r * t.sin()];
                    acc += self.value(&z) * g(&z);
                }
                acc / M as f64
            }
        }
    }

    /// Mean of j over the sphere |z| = r.
    pub fn sphere_mean(&self, r: f64) -> f64 {
        if self.is_radial() {
            if self.window.contains(r) {
                self.base_profile(r)
            } else {
                0.0
            }
        } else {
            self.sphere_mean_with(r, |_| 1.0)
        }
    }

    /// Integrates a radial profile `f(r)` over `lo < r < hi`, splitting at
    /// the kernel breakpoints, treating `r = 0` as a possible integrable
    /// singularity and `hi = ∞` as a tail.
    pub fn integrate_profile<F: Fn(f64) -> f64>(
        &self,
        f: &F,
        lo: f64,
        hi: f64,
        cfg: &QuadConfig,
    ) -> Result<Estimate> {
        let hi = match self.support_radius() {
            Some(s) => hi.min(s),
            None => hi,
        };
        let lo = lo.max(self.window.inner);
        if hi <= lo {
            return Ok(Estimate {
                value: 0.0,
                error: 0.0,
            });
        }
        let mut pts = vec![lo];
        pts.extend(self.breakpoints().into_iter().filter(|b| *b > lo && *b < hi));
        let finite_hi = if hi.is_finite() {
            hi
        } else {
            // unit-scale break so that the tail starts at a finite radius
            pts.last().copied().unwrap_or(lo).max(1.0)
        };
        if finite_hi > *pts.last().unwrap() {
            pts.push(finite_hi);
        }
        let mut total = Estimate {
            value: 0.0,
            error: 0.0,
        };
        for (i, w) in pts.windows(2).enumerate() {
            let est = if i == 0 && w[0] == 0.0 {
                quadrature::singular_at_left(f, w[0], w[1], cfg)?
            } else {
                quadrature::adaptive(f, w[0], w[1], cfg)?
            };
            total.value += est.value;
            total.error += est.error;
        }
        if !hi.is_finite() {
            let last = *pts.last().unwrap();
            let tail = quadrature::semi_infinite(f, last, last.max(1.0), cfg)?;
            total.value += tail.value;
            total.error += tail.error;
        }
        Ok(total)
    }

    /// `∫_{ℝ^N} j(z) g(|z|) dz` for a radial weight `g`.
    pub fn radial_moment<G: Fn(f64) -> f64>(
        &self,
        g: &G,
        lo: f64,
        hi: f64,
        cfg: &QuadConfig,
    ) -> Result<Estimate> {
        let area = sphere_area(self.dim);
        let n1 = self.dim as i32 - 1;
        let f = |r: f64| area * self.sphere_mean(r) * g(r) * r.powi(n1);
        self.integrate_profile(&f, lo, hi, cfg)
    }

    /// Closed-form `∫_{|z|>R} j` for the base family (no window), when known.
    fn base_tail_closed(&self, radius: f64) -> Option<f64> {
        let n = self.dim as f64;
        let area = sphere_area(self.dim);
        let out = match &self.family {
            Family::Fractional { s } => {
                if radius == 0.0 {
                    f64::INFINITY
                } else {
                    self.normalization() * area * radius.powf(-2.0 * s) / (2.0 * s)
                }
            }
            Family::LogLaplacian {} => {
                if radius >= 1.0 {
                    0.0
                } else if radius == 0.0 {
                    f64::INFINITY
                } else {
                    log_laplacian_constant(self.dim) * area * (1.0 / radius).ln()
                }
            }
            Family::TruncatedPower { sigma, cutoff } => {
                if radius >= *cutoff {
                    0.0
                } else if radius == 0.0 && *sigma >= 0.0 {
                    f64::INFINITY
                } else if *sigma == 0.0 {
                    area * (cutoff / radius).ln()
                } else if radius == 0.0 {
                    area * cutoff.powf(-sigma) / (-sigma)
                } else {
                    area * (radius.powf(-sigma) - cutoff.powf(-sigma)) / sigma
                }
            }
            Family::Indicator { radius: rc } => {
                if radius >= *rc {
                    0.0
                } else {
                    area * (rc.powf(n) - radius.powf(n)) / n
                }
            }
            Family::Gaussian { mass, width } => {
                let t = radius / width;
                match self.dim {
                    1 => mass * statrs::function::erf::erfc(t / 2f64.sqrt()),
                    _ => mass * (-0.5 * t * t).exp(),
                }
            }
            Family::LogSchrodinger {} | Family::Custom(_) => return None,
        };
        Some(out)
    }

    /// Mass of the kernel in the annulus `lo ≤ |z| < hi` (`hi` may be ∞).
    /// Returns +∞ when the mass diverges.
    pub fn annulus_mass(&self, lo: f64, hi: f64, cfg: &QuadConfig) -> Result<f64> {
        let lo = lo.max(self.window.inner);
        let hi = hi.min(self.window.outer_or_inf());
        if hi <= lo {
            return Ok(0.0);
        }
        if let (Some(a), Some(b)) = (self.base_tail_closed(lo), self.base_tail_closed(hi.min(f64::MAX))) {
            let b = if hi.is_finite() { b } else { 0.0 };
            if a.is_infinite() {
                return Ok(f64::INFINITY);
            }
            return Ok((a - b).max(0.0));
        }
        match self.radial_moment(&|_| 1.0, lo, hi, cfg) {
            Ok(est) => Ok(est.value),
            Err(NonlocalError::ToleranceNotMet { .. }) if lo == 0.0 => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    }

    /// `∫_{|z|>R} j(z) dz`.
    pub fn tail_mass(&self, radius: f64, cfg: &QuadConfig) -> Result<f64> {
        self.annulus_mass(radius, f64::INFINITY, cfg)
    }

    /// Fourier symbol ψ(ξ) = ∫ (1 - cos ξ·z) j(z) dz, plus the zero-order
    /// terms of the logarithmic Laplacian when the kernel is unrestricted.
    pub fn symbol(&self, xi: &[f64], cfg: &QuadConfig) -> Result<f64> {
        if xi.len() != self.dim {
            return Err(NonlocalError::domain("frequency has wrong dimension"));
        }
        let freq = norm(xi);
        let log_zero_order = matches!(self.family, Family::LogLaplacian {}) && self.window.is_full();
        if freq == 0.0 {
            if log_zero_order {
                return Err(NonlocalError::domain(
                    "logarithmic Laplacian symbol is singular at ξ = 0",
                ));
            }
            return Ok(0.0);
        }
        let area = sphere_area(self.dim);
        let n1 = self.dim as i32 - 1;
        let radial = self.is_radial();
        let dim = self.dim;
        let osc = |r: f64| -> f64 {
            // sphere mean of j(z)(1 - cos ξ·z) times |S| r^{N-1}
            let m = if radial {
                self.sphere_mean(r) * spherical_one_minus_cos_average(dim, freq * r)
            } else {
                self.sphere_mean_with(r, |z| 2.0 * (0.5 * (z[0] * xi[0] + z.get(1).map_or(0.0, |v| v * xi[1]))).sin().powi(2))
            };
            area * m * r.powi(n1)
        };
        let half_period = PI / freq;
        let mut value = match self.support_radius() {
            Some(s) => self.integrate_profile(&osc, 0.0, s, cfg)?.value,
            None => {
                // [0, R] directly, then ∫_R^∞ j minus an oscillating remainder
                let start = (self.breakpoints().last().copied().unwrap_or(0.0)).max(half_period);
                let near = self.integrate_profile(&osc, 0.0, start, cfg)?.value;
                let mass = self.tail_mass(start, cfg)?;
                let cos_part = |r: f64| -> f64 {
                    let m = if radial {
                        self.sphere_mean(r) * spherical_cos_average(dim, freq * r)
                    } else {
                        self.sphere_mean_with(r, |z| {
                            (z[0] * xi[0] + z.get(1).map_or(0.0, |v| v * xi[1])).cos()
                        })
                    };
                    area * m * r.powi(n1)
                };
                let rem = quadrature::oscillatory_tail(&cos_part, start, half_period, cfg)?;
                near + mass - rem.value
            }
        };
        if log_zero_order {
            // -c_N ∫_{|y|>1} cos(ξ·y)|y|^{-N} dy + ρ_N, with c_N |S^{N-1}| = 2
            let tail = |r: f64| spherical_cos_average(dim, freq * r) / r;
            let rem = quadrature::oscillatory_tail(&tail, 1.0, half_period, cfg)?;
            value += -2.0 * rem.value + log_laplacian_shift(self.dim);
        }
        Ok(value)
    }

    /// Lévy-type integral ∫ min{1, |z|^σ} j(z) dz with divergence detection.
    pub fn levy_integral(&self, sigma_test: f64, cfg: &QuadConfig) -> Result<LevyValue> {
        if !(sigma_test > 0.0 && sigma_test <= 2.0) {
            return Err(NonlocalError::domain(format!(
                "sigma_test={sigma_test} outside (0, 2]"
            )));
        }
        let outer = self.tail_mass(1.0, cfg)?;
        if outer.is_infinite() {
            return Ok(LevyValue::Divergent {
                partial_sums: vec![f64::INFINITY],
            });
        }
        // dyadic shells toward the origin
        let mut partial = Vec::new();
        let mut sum = 0.0;
        let mut contributions = Vec::new();
        let moment = |r: f64| r.powf(sigma_test);
        for k in 0..cfg.max_shells.min(200) {
            let hi = 0.5f64.powi(k as i32);
            let lo = 0.5 * hi;
            let c = self.radial_moment(&moment, lo, hi, cfg)?.value;
            sum += c;
            partial.push(sum);
            contributions.push(c);
            if let Some(value) = geometric_limit(&contributions, sum, cfg.rel_tol) {
                return Ok(LevyValue::Finite(value + outer));
            }
        }
        Ok(LevyValue::Divergent {
            partial_sums: partial,
        })
    }

    /// Splits the kernel at radius δ into a singular near part and a far
    /// part of finite mass. The far mass c_δ stays bounded as δ → 0 exactly
    /// when ∫ j < ∞.
    pub fn delta_split(&self, delta: f64, cfg: &QuadConfig) -> Result<DeltaSplit> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(NonlocalError::domain(format!("delta must be positive, got {delta}")));
        }
        let near = self.restricted(0.0, Some(delta));
        let far = self.restricted(delta, None);
        let c_delta = far.tail_mass(0.0, cfg)?;
        Ok(DeltaSplit {
            delta,
            near,
            far,
            c_delta,
        })
    }

    /// Checks the standing assumptions on the kernel numerically.
    pub fn check_assumptions(&self, cfg: &QuadConfig) -> AssumptionReport {
        AssumptionReport {
            kernel: self.name().to_string(),
            dim: self.dim,
            sigma: self.sigma(),
            even: self.check_even(),
            levy_integrable: self.check_levy(cfg),
            non_integrable: self.check_non_integrable(cfg),
            square_integrable_annuli: self.check_square_integrable(cfg),
            gradient_bound: self.check_gradient(),
            smooth_away_from_origin: self.check_smoothness(),
        }
    }

    fn check_even(&self) -> EvennessCheck {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut worst_asym: f64 = 0.0;
        let mut min_value = f64::INFINITY;
        let samples = 10_000;
        let scale = self.support_radius().unwrap_or(3.0) * 1.5;
        for _ in 0..samples {
            let z: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-scale..scale)).collect();
            if norm(&z) == 0.0 {
                continue;
            }
            let neg: Vec<f64> = z.iter().map(|v| -v).collect();
            let (a, b) = (self.value(&z), self.value(&neg));
            min_value = min_value.min(a.min(b));
            let denom = a.abs().max(b.abs());
            if denom > 0.0 {
                worst_asym = worst_asym.max((a - b).abs() / denom);
            }
        }
        EvennessCheck {
            pass: worst_asym <= 1e-12 && min_value >= 0.0,
            samples,
            worst_relative_asymmetry: worst_asym,
            min_value,
        }
    }

    fn check_levy(&self, cfg: &QuadConfig) -> LevyCheck {
        let sigma_test = (self.sigma().max(0.0) + LEVY_MARGIN).min(2.0);
        match self.levy_integral(sigma_test, cfg) {
            Ok(LevyValue::Finite(v)) => LevyCheck {
                pass: true,
                sigma_test,
                value: Some(v),
                note: None,
            },
            Ok(LevyValue::Divergent { partial_sums }) => LevyCheck {
                pass: false,
                sigma_test,
                value: None,
                note: Some(format!(
                    "shell partial sums failed to stabilize (last {:.6e})",
                    partial_sums.last().copied().unwrap_or(f64::NAN)
                )),
            },
            Err(e) => LevyCheck {
                pass: false,
                sigma_test,
                value: None,
                note: Some(e.to_string()),
            },
        }
    }

    fn check_non_integrable(&self, cfg: &QuadConfig) -> DivergenceCheck {
        const SHELLS: usize = 60;
        const WINDOW: usize = 10;
        let outer = self.tail_mass(1.0, cfg).unwrap_or(f64::INFINITY);
        let mut partial = Vec::with_capacity(SHELLS);
        let mut sum = outer;
        for k in 0..SHELLS {
            let hi = 0.5f64.powi(k as i32);
            let c = self.annulus_mass(0.5 * hi, hi, cfg).unwrap_or(f64::INFINITY);
            sum += c;
            partial.push(sum);
        }
        let last = partial[SHELLS - 1];
        let earlier = partial[SHELLS - 1 - WINDOW];
        let growth = last - earlier;
        let diverges = !last.is_finite() || growth > DIVERGENCE_CAUCHY_TOL * last.abs();
        DivergenceCheck {
            pass: diverges,
            shells: SHELLS,
            partial_sums: partial,
            last_window_growth: growth,
        }
    }

    fn check_square_integrable(&self, cfg: &QuadConfig) -> SquareIntegrabilityCheck {
        let annuli = [(1e-3, 0.01), (0.01, 0.1), (0.1, 1.0), (0.5, 3.0)];
        let area = sphere_area(self.dim);
        let n1 = self.dim as i32 - 1;
        let radial = self.is_radial();
        let f = |r: f64| {
            let m = if radial {
                self.sphere_mean(r).powi(2)
            } else {
                self.sphere_mean_with(r, |z| self.value(z))
            };
            area * m * r.powi(n1)
        };
        let mut values = Vec::new();
        let mut pass = true;
        for (lo, hi) in annuli {
            let v = self
                .integrate_profile(&f, lo, hi, cfg)
                .map(|e| e.value)
                .unwrap_or(f64::INFINITY);
            pass &= v.is_finite();
            values.push(AnnulusValue {
                inner: lo,
                outer: hi,
                value: v,
            });
        }
        SquareIntegrabilityCheck { pass, values }
    }

    fn directions(&self) -> Vec<Vec<f64>> {
        match self.dim {
            1 => vec![vec![1.0], vec![-1.0]],
            _ => (0..8)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / 8.0 + 0.1;
                    vec![t.cos(), t.sin()]
                })
                .collect(),
        }
    }

    fn check_gradient(&self) -> GradientCheck {
        let sigma = self.sigma();
        let n = self.dim as f64;
        let breaks = self.breakpoints();
        let mut worst: f64 = 0.0;
        let mut at_small = 0.0f64;
        let mut at_reference = 0.0f64;
        let samples = 200;
        for dir in self.directions() {
            for k in 0..samples {
                // log-spaced radii in [1e-4, 3]
                let r = 1e-4 * (3e4f64).powf(k as f64 / (samples - 1) as f64);
                let eta = 1e-6 * r;
                if breaks.iter().any(|b| (r - b).abs() < 4.0 * eta + 1e-12) {
                    continue;
                }
                let z: Vec<f64> = dir.iter().map(|d| d * r).collect();
                let mut grad2 = 0.0;
                for i in 0..self.dim {
                    let mut zp = z.clone();
                    let mut zm = z.clone();
                    zp[i] += eta;
                    zm[i] -= eta;
                    let g = (self.value(&zp) - self.value(&zm)) / (2.0 * eta);
                    grad2 += g * g;
                }
                let ratio = grad2.sqrt() * r.powf(1.0 + sigma + n);
                if !ratio.is_finite() {
                    worst = f64::INFINITY;
                    continue;
                }
                worst = worst.max(ratio);
                if k == 0 {
                    at_small = at_small.max(ratio);
                }
                if (r - 1e-2).abs() / 1e-2 < 0.03 {
                    at_reference = at_reference.max(ratio);
                }
            }
        }
        // the ratio may not grow toward the origin
        let pass = worst.is_finite() && at_small <= 1.5 * at_reference + 1e-12;
        GradientCheck {
            pass,
            sigma,
            worst_ratio: worst,
            ratio_at_smallest_radius: at_small,
            ratio_near_reference_radius: at_reference,
        }
    }

    fn check_smoothness(&self) -> SmoothnessCheck {
        const POINTS: usize = 20_000;
        let r_min = 1e-3;
        let r_max = self.support_radius().map_or(4.0, |s| (1.5 * s).max(4.0));
        let mut locations: Vec<f64> = Vec::new();
        for dir in self.directions().into_iter().take(if self.is_radial() { 1 } else { 8 }) {
            let at = |r: f64| -> f64 {
                let z: Vec<f64> = dir.iter().map(|d| d * r).collect();
                self.value(&z)
            };
            let radii: Vec<f64> = (0..POINTS)
                .map(|k| r_min * (r_max / r_min).powf(k as f64 / (POINTS - 1) as f64))
                .collect();
            let vals: Vec<f64> = radii.iter().map(|r| at(*r)).collect();
            let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for k in 1..POINTS - 2 {
                let d = (vals[k + 1] - vals[k]).abs();
                let neighbors = (vals[k] - vals[k - 1]).abs().max((vals[k + 2] - vals[k + 1]).abs());
                if d > 50.0 * neighbors + 1e-12 * scale && d > 1e-10 * scale {
                    let loc = locate_jump(&at, radii[k], radii[k + 1]);
                    if !locations.iter().any(|l| (l - loc).abs() < 1e-6) {
                        locations.push(loc);
                    }
                }
            }
        }
        locations.sort_by(f64::total_cmp);
        SmoothnessCheck {
            pass: locations.is_empty(),
            scanned_range: (r_min, r_max),
            discontinuities: locations,
        }
    }

    /// Kernel data printed by `kernel-info`.
    pub fn constants(&self) -> KernelConstants {
        KernelConstants {
            normalization: self.normalization(),
            zero_order_shift: self.zero_order_shift(),
            sigma: self.sigma(),
            support_radius: self.support_radius(),
        }
    }
}

/// Relative Cauchy tolerance used to declare `∫ j = ∞`.
pub const DIVERGENCE_CAUCHY_TOL: f64 = 1e-6;

fn geometric_limit(contributions: &[f64], sum: f64, rel_tol: f64) -> Option<f64> {
    let n = contributions.len();
    if n < 4 {
        return None;
    }
    let (c0, c1, c2) = (contributions[n - 3], contributions[n - 2], contributions[n - 1]);
    if c2 == 0.0 && c1 == 0.0 {
        return Some(sum);
    }
    if c2.abs() <= 1e-3 * rel_tol * sum.abs() {
        return Some(sum);
    }
    if c0 <= 0.0 || c1 <= 0.0 || c2 <= 0.0 {
        return None;
    }
    let (q1, q2) = (c1 / c0, c2 / c1);
    if q2 < 0.99 && (q2 - q1).abs() <= 1e-6 * q2 {
        return Some(sum + c2 * q2 / (1.0 - q2));
    }
    None
}

fn locate_jump<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        if (fm - fa).abs() >= (fb - fm).abs() {
            b = m;
        } else {
            a = m;
        }
    }
    0.5 * (a + b)
}

pub fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// c_N = Γ(N/2) / π^{N/2}.
pub fn log_laplacian_constant(dim: usize) -> f64 {
    let n = dim as f64;
    gamma(n / 2.0) / PI.powf(n / 2.0)
}

/// ρ_N = 2 ln 2 + ψ(N/2) - γ.
pub fn log_laplacian_shift(dim: usize) -> f64 {
    2.0 * 2f64.ln() + digamma(dim as f64 / 2.0) - EULER_GAMMA
}

#[derive(Debug, Clone)]
pub enum LevyValue {
    Finite(f64),
    Divergent { partial_sums: Vec<f64> },
}

impl LevyValue {
    pub fn finite(&self) -> Option<f64> {
        match self {
            LevyValue::Finite(v) => Some(*v),
            LevyValue::Divergent { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeltaSplit {
    pub delta: f64,
    /// 1_{B_δ} j
    pub near: Kernel,
    /// j - near
    pub far: Kernel,
    /// ∫_{|z|≥δ} j(z) dz
    pub c_delta: f64,
}

/// Infimum of `min(k(x, x+z), k(x, x-z))` over a uniform grid of sample
/// points `x` in the box `[lo, hi]^N`. This is a lower-bound estimate of
/// the essential infimum.
pub fn symmetric_lower_bound<K>(k: K, z: &[f64], lo: f64, hi: f64, sample_budget: usize) -> f64
where
    K: Fn(&[f64], &[f64]) -> f64,
{
    let dim = z.len();
    let per_axis = ((sample_budget.max(1) as f64).powf(1.0 / dim as f64).floor() as usize).max(1);
    let coord = |i: usize| {
        if per_axis == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (per_axis - 1) as f64
        }
    };
    let total = per_axis.pow(dim as u32);
    let mut best = f64::INFINITY;
    for idx in 0..total {
        let mut x = Vec::with_capacity(dim);
        let mut rem = idx;
        for _ in 0..dim {
            x.push(coord(rem % per_axis));
            rem /= per_axis;
        }
        let plus: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + b).collect();
        let minus: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
        best = best.min(k(&x, &plus).min(k(&x, &minus)));
    }
    best
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvennessCheck {
    pub pass: bool,
    pub samples: usize,
    pub worst_relative_asymmetry: f64,
    pub min_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LevyCheck {
    pub pass: bool,
    pub sigma_test: f64,
    pub value: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DivergenceCheck {
    /// True when ∫ j = ∞ was detected.
    pub pass: bool,
    pub shells: usize,
    pub partial_sums: Vec<f64>,
    pub last_window_growth: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AnnulusValue {
    pub inner: f64,
    pub outer: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SquareIntegrabilityCheck {
    pub pass: bool,
    pub values: Vec<AnnulusValue>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GradientCheck {
    pub pass: bool,
    pub sigma: f64,
    pub worst_ratio: f64,
    pub ratio_at_smallest_radius: f64,
    pub ratio_near_reference_radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SmoothnessCheck {
    pub pass: bool,
    pub scanned_range: (f64, f64),
    pub discontinuities: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AssumptionReport {
    pub kernel: String,
    pub dim: usize,
    pub sigma: f64,
    pub even: EvennessCheck,
    pub levy_integrable: LevyCheck,
    pub non_integrable: DivergenceCheck,
    pub square_integrable_annuli: SquareIntegrabilityCheck,
    pub gradient_bound: GradientCheck,
    pub smooth_away_from_origin: SmoothnessCheck,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KernelConstants {
    pub normalization: f64,
    pub zero_order_shift: f64,
    pub sigma: f64,
    pub support_radius: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> QuadConfig {
        QuadConfig::default()
    }

    #[test]
    fn log_laplacian_values() {
        let k = Kernel::log_laplacian(1).unwrap();
        assert!((k.eval(&[0.5]).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(k.eval(&[1.5]).unwrap(), 0.0);
        assert_eq!(k.eval(&[-0.3]).unwrap(), k.eval(&[0.3]).unwrap());
        assert!(matches!(k.eval(&[0.0]), Err(NonlocalError::Domain(_))));
        assert!((k.normalization() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn log_schrodinger_near_origin_matches_log_laplacian() {
        for dim in [1, 2] {
            let ls = Kernel::log_schrodinger(dim).unwrap();
            let r = 1e-6;
            let z: Vec<f64> = std::iter::once(r).chain(std::iter::repeat_n(0.0, dim - 1)).collect();
            let expected = log_laplacian_constant(dim) * r.powi(-(dim as i32));
            assert!((ls.value(&z) / expected - 1.0).abs() < 1e-3);
        }
        // N = 1 closed form e^{-r}/r
        let ls = Kernel::log_schrodinger(1).unwrap();
        assert!((ls.value(&[0.7]) - (-0.7f64).exp() / 0.7).abs() < 1e-13);
    }

    #[test]
    fn tail_masses_closed_form() {
        let k = Kernel::log_laplacian(1).unwrap();
        assert!((k.tail_mass(0.1, &cfg()).unwrap() - 2.0 * 10f64.ln()).abs() < 1e-13);
        assert!(k.tail_mass(0.0, &cfg()).unwrap().is_infinite());
        let g = Kernel::gaussian(2, 1.0, 0.3).unwrap();
        assert!((g.tail_mass(0.0, &cfg()).unwrap() - 1.0).abs() < 1e-14);
        let ls = Kernel::log_schrodinger(1).unwrap();
        // ∫_{|z|>1} e^{-|z|}/|z| = 2 E_1(1)
        let e1 = 0.219_383_934_395_520_3;
        assert!((ls.tail_mass(1.0, &cfg()).unwrap() - 2.0 * e1).abs() < 1e-9);
    }

    #[test]
    fn windowed_masses_add_up() {
        let k = Kernel::fractional(2, 0.3).unwrap();
        let a = k.restricted(0.2, Some(0.7)).tail_mass(0.0, &cfg()).unwrap();
        let b = k.annulus_mass(0.2, 0.7, &cfg()).unwrap();
        assert!((a - b).abs() < 1e-12 * b);
    }

    #[test]
    fn delta_split_log_laplacian() {
        let k = Kernel::log_laplacian(1).unwrap();
        let split = k.delta_split(0.1, &cfg()).unwrap();
        assert!((split.c_delta - 2.0 * 10f64.ln()).abs() < 1e-12);
        assert!(k.delta_split(0.0, &cfg()).is_err());
        assert!(k.delta_split(-1.0, &cfg()).is_err());
    }

    #[test]
    fn levy_integral_examples() {
        let k = Kernel::log_laplacian(1).unwrap();
        let v = k.levy_integral(0.5, &cfg()).unwrap().finite().unwrap();
        assert!((v - 4.0).abs() < 1e-8, "{v}");
        let f3 = Kernel::fractional(1, 0.3).unwrap();
        assert!(f3.levy_integral(0.5, &cfg()).unwrap().finite().is_none());
        let f2 = Kernel::fractional(1, 0.2).unwrap();
        assert!(f2.levy_integral(0.5, &cfg()).unwrap().finite().is_some());
        assert!(k.levy_integral(0.0, &cfg()).is_err());
    }

    #[test]
    fn symmetric_lower_bound_examples() {
        let j = Kernel::log_laplacian(1).unwrap();
        let k_ti = |x: &[f64], y: &[f64]| j.value(&[x[0] - y[0]]);
        assert!((symmetric_lower_bound(k_ti, &[0.4], -3.0, 3.0, 1) - 2.5).abs() < 1e-14);
        let k_mod = |x: &[f64], y: &[f64]| (2.0 + x[0].sin()) * j.value(&[x[0] - y[0]]);
        // grid over [-π/2 - 2π, π/2 + 2π] contains x = -π/2 exactly
        let lo = -PI / 2.0 - 2.0 * PI;
        let hi = PI / 2.0 + 2.0 * PI;
        let est = symmetric_lower_bound(k_mod, &[0.4], lo, hi, 1001);
        assert!((est - 2.5).abs() < 1e-9, "{est}");
        let pz = symmetric_lower_bound(k_mod, &[0.4], lo, hi, 101);
        let mz = symmetric_lower_bound(k_mod, &[-0.4], lo, hi, 101);
        assert_eq!(pz, mz);
    }

    #[test]
    fn json_descriptor_shape() {
        let k = Kernel::fractional(1, 0.25).unwrap();
        let v: serde_json::Value = serde_json::to_value(&k).unwrap();
        assert_eq!(v["family"], "fractional");
        assert_eq!(v["dim"], 1);
        assert_eq!(v["params"]["s"], 0.25);
        let back: Kernel = serde_json::from_value(v).unwrap();
        assert_eq!(back.sigma(), 0.5);
        let ll: Kernel = serde_json::from_str(r#"{"family":"log_laplacian","dim":2,"params":{}}"#).unwrap();
        assert_eq!(ll.name(), "log_laplacian");
        let c: Kernel = serde_json::from_str(
            r#"{"family":"custom","dim":1,"params":{"expr":"max(0, 0.4 - r)","sigma":0.0,"support":0.4}}"#,
        )
        .unwrap();
        assert!((c.value(&[0.1]) - 0.3).abs() < 1e-15);
    }
}
