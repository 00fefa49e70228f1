//! Special functions needed by the kernel zoo.

use std::f64::consts::PI;

pub use statrs::function::gamma::{digamma, gamma};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Surface area of the unit sphere in ℝ^N.
pub fn sphere_area(dim: usize) -> f64 {
    let n = dim as f64;
    2.0 * PI.powf(n / 2.0) / gamma(n / 2.0)
}

/// Modified Bessel function of the second kind K_ν(x) for x > 0.
///
/// Uses K_ν(x) = ∫_0^∞ exp(-x cosh t) cosh(νt) dt with the trapezoidal rule,
/// which converges geometrically for this analytic, doubly-decaying integrand.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if (nu.abs() - 0.5).abs() < 1e-15 {
        return (PI / (2.0 * x)).sqrt() * (-x).exp();
    }
    let step = 0.1;
    let mut sum = 0.5 * (-x).exp();
    let mut k = 1usize;
    loop {
        let t = step * k as f64;
        let term = (-x * t.cosh() + nu * t).exp() * 0.5 * (1.0 + (-2.0 * nu * t).exp());
        sum += term;
        if term < 1e-18 * sum || k > 100_000 {
            break;
        }
        k += 1;
    }
    sum * step
}

/// Bessel function J_0 via the periodic-trapezoid form of
/// J_0(t) = (1/π) ∫_0^π cos(t sin θ) dθ.
pub fn bessel_j0(t: f64) -> f64 {
    let t = t.abs();
    let m = 32 + 2 * (t.ceil() as usize);
    let mut sum = 0.0;
    for k in 0..m {
        let theta = 2.0 * PI * k as f64 / m as f64;
        sum += (t * theta.sin()).cos();
    }
    sum / m as f64
}

/// Spherical average of cos(ξ·z) over |z| = r with |ξ| r = t, in dimension N:
/// cos t for N = 1 and J_0(t) for N = 2.
pub fn spherical_cos_average(dim: usize, t: f64) -> f64 {
    match dim {
        1 => t.cos(),
        2 => bessel_j0(t),
        _ => {
            // Γ(N/2) (2/t)^{N/2-1} J_{N/2-1}(t); only N ≤ 2 is used by the crate
            unimplemented!("spherical average for N > 2")
        }
    }
}

/// `1 - spherical_cos_average(dim, t)` without cancellation at small `t`.
pub fn spherical_one_minus_cos_average(dim: usize, t: f64) -> f64 {
    match dim {
        1 => 2.0 * (0.5 * t).sin().powi(2),
        2 if t.abs() < 1.0 => {
            // 1 - J_0(t) = sum_{k>=1} (-1)^{k+1} (t^2/4)^k / (k!)^2
            let q = 0.25 * t * t;
            let mut term = q;
            let mut sum = q;
            for k in 2..20 {
                term *= -q / (k * k) as f64;
                sum += term;
            }
            sum
        }
        _ => 1.0 - spherical_cos_average(dim, t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_integer_identity() {
        // the trapezoid route must reproduce the closed form K_{1/2}
        for &x in &[0.01, 0.3, 1.0, 4.0, 20.0] {
            let closed = (PI / (2.0 * x)).sqrt() * (-x).exp();
            let step = 0.1;
            let mut sum = 0.5 * (-x).exp();
            for k in 1..4000 {
                let t = step * k as f64;
                sum += (-x * t.cosh()).exp() * (0.5 * t).cosh();
            }
            assert!(((sum * step) - closed).abs() < 1e-12 * closed, "x={x}");
        }
    }

    #[test]
    fn k1_reference_values() {
        // Abramowitz & Stegun table 9.8
        assert!((bessel_k(1.0, 1.0) - 0.601_907_230_197_234_6).abs() < 1e-13);
        assert!((bessel_k(1.0, 0.1) - 9.853_844_780_870_606).abs() < 1e-11);
        assert!((bessel_k(0.0, 2.0) - 0.113_893_872_749_533_4).abs() < 1e-14);
    }

    #[test]
    fn one_minus_cos_average_matches_direct_form() {
        for &t in &[0.3, 0.99, 1.0, 2.5] {
            for dim in [1, 2] {
                let direct = 1.0 - spherical_cos_average(dim, t);
                assert!((spherical_one_minus_cos_average(dim, t) - direct).abs() < 1e-14);
            }
        }
        assert!((spherical_one_minus_cos_average(2, 1e-6) / 2.5e-13 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn j0_reference_values() {
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j0(10.0) + 0.245_935_764_451_348_3).abs() < 1e-14);
        assert!(bessel_j0(2.404_825_557_695_773).abs() < 1e-14);
    }

    #[test]
    fn log_laplacian_constants() {
        assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-14);
        let rho1 = 2.0 * 2f64.ln() + digamma(0.5) - EULER_GAMMA;
        assert!((rho1 + 2.0 * EULER_GAMMA).abs() < 1e-12);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(1) - 2.0).abs() < 1e-14);
    }
}
