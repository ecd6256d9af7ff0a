//! Gamma-function helpers and the Bessel functions needed by the radial
//! Fourier route for the fractional Laplacian.

use std::f64::consts::PI;

use statrs::function::gamma::{gamma as gamma_fn, ln_gamma};

use crate::quad::{integrate_to_infinity, QuadOptions};

pub fn gamma(x: f64) -> f64 {
    gamma_fn(x)
}

/// `Γ(a) / Γ(b)` for positive arguments, through log-gamma so that large
/// test-function exponents do not overflow.
pub fn gamma_ratio(a: f64, b: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    (ln_gamma(a) - ln_gamma(b)).exp()
}

/// Surface measure of the unit sphere `S^{d-1}`.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// `J_n(z)` for integer order by the trapezoid rule on Bessel's integral,
/// which converges geometrically for the periodic analytic integrand.
pub fn bessel_j_int(n: i32, z: f64) -> f64 {
    let m = (2.0 * (z.abs() + n.unsigned_abs() as f64) + 48.0).ceil() as usize;
    let h = 2.0 * PI / m as f64;
    let nf = n as f64;
    let s: f64 = (0..m)
        .map(|k| {
            let tau = k as f64 * h;
            (nf * tau - z * tau.sin()).cos()
        })
        .sum();
    s / m as f64
}

/// `z^ν K_ν(z)` for `ν > 0`, `z >= 0`, from `K_ν(z) = ∫₀^∞ e^{-z cosh t} cosh(νt) dt`.
/// At `z = 0` returns the limit `2^{ν-1} Γ(ν)`.
pub fn scaled_bessel_k(nu: f64, z: f64) -> f64 {
    if z == 0.0 {
        return 2f64.powf(nu - 1.0) * gamma(nu);
    }
    let lnz = z.ln();
    let opts = QuadOptions::with_tol(0.0, 1e-13);
    let r = integrate_to_infinity(
        |t| {
            let a = -z * t.cosh() + nu * (t + lnz);
            let b = -z * t.cosh() + nu * (lnz - t);
            0.5 * (a.exp() + b.exp())
        },
        0.0,
        &opts,
    );
    match r {
        Ok(q) => q.value,
        Err(crate::Error::Quadrature { value, .. }) => value,
        Err(_) => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_ratio_matches_direct() {
        let r = gamma_ratio(3.0, 2.5);
        assert!((r - 2.0 / gamma(2.5)).abs() < 1e-14);
        assert!((r - 1.504_505_556_127_350).abs() < 1e-12);
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn bessel_j_reference_values() {
        // Abramowitz & Stegun table values.
        assert!((bessel_j_int(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j_int(1, 2.5) - 0.497_094_102_464_274_4).abs() < 1e-14);
        assert!((bessel_j_int(0, 30.0) - (-0.086_367_983_581_040_2)).abs() < 1e-13);
    }

    #[test]
    fn bessel_k_half_order_closed_form() {
        // K_{1/2}(z) = sqrt(pi/(2z)) e^{-z}
        for &z in &[0.01f64, 0.3, 1.0, 7.5] {
            let want = z.sqrt() * (PI / (2.0 * z)).sqrt() * (-z).exp();
            let got = scaled_bessel_k(0.5, z);
            assert!(
                (got - want).abs() < 1e-12 * want.max(1e-300),
                "z={z}: {got} vs {want}"
            );
        }
        let lim = scaled_bessel_k(0.5, 0.0);
        assert!((lim - (PI / 2.0).sqrt()).abs() < 1e-14);
    }
}
