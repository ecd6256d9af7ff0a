//! Riemann–Liouville and Caputo derivatives in time, closed forms on the
//! cutoff family `φ(t) = (1 - t/T)₊^μ`, and the time-capacity integrals.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_with_breaks, QuadOptions};
use crate::special::{gamma, gamma_ratio};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderKind {
    TimeLeft,
    TimeRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// Order in `(0, 1)`.
    Sub,
    /// Order exactly 1.
    One,
    /// Order in `(1, 2)`.
    Super,
    /// Order exactly 2.
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FracOrder {
    pub value: f64,
    pub kind: OrderKind,
}

impl FracOrder {
    pub fn new(value: f64, kind: OrderKind) -> Result<Self> {
        if !(value > 0.0 && value <= 2.0) {
            return Err(Error::param(
                "order",
                format!("must lie in (0, 2], got {value}"),
            ));
        }
        Ok(FracOrder { value, kind })
    }

    pub fn regime(&self) -> Regime {
        match self.value {
            v if v < 1.0 => Regime::Sub,
            v if v == 1.0 => Regime::One,
            v if v < 2.0 => Regime::Super,
            _ => Regime::Two,
        }
    }

    /// Splits the order as `m + α` with integer `m` and `α ∈ [0, 1)`.
    pub fn split(&self) -> (u32, f64) {
        split_order(self.value)
    }
}

pub(crate) fn split_order(order: f64) -> (u32, f64) {
    let m = order.floor();
    (m as u32, order - m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutoffKind {
    PowerCutoff,
    SmoothCutoff,
}

/// The cutoff `φ(t) = (1 - t/T)₊^μ` or its smooth variant `ψ(t/T)^ℓ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionParams {
    pub horizon: f64,
    pub mu: f64,
    pub ell: f64,
    pub kind: CutoffKind,
}

impl TestFunctionParams {
    pub fn power(horizon: f64, mu: f64) -> Result<Self> {
        let p = TestFunctionParams {
            horizon,
            mu,
            ell: 1.0,
            kind: CutoffKind::PowerCutoff,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn smooth(horizon: f64, ell: f64) -> Result<Self> {
        let p = TestFunctionParams {
            horizon,
            mu: default_mu(0.0),
            ell,
            kind: CutoffKind::SmoothCutoff,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::param("T", "horizon must be positive and finite"));
        }
        if !(self.mu > 0.0) {
            return Err(Error::param("mu_tf", "exponent must be positive"));
        }
        if !(self.ell > 0.0) {
            return Err(Error::param("ell", "exponent must be positive"));
        }
        Ok(())
    }

    /// The smooth variant enters a Hölder step with exponent `p/(p-1)`.
    pub fn check_smooth_for_power(&self, p: f64) -> Result<()> {
        let pp = p / (p - 1.0);
        if self.kind == CutoffKind::SmoothCutoff && self.ell <= pp {
            return Err(Error::Hypothesis(format!(
                "ell = {} must exceed p/(p-1) = {pp}",
                self.ell
            )));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        let tau = t / self.horizon;
        match self.kind {
            CutoffKind::PowerCutoff => {
                if tau >= 1.0 {
                    0.0
                } else {
                    (1.0 - tau).powf(self.mu)
                }
            }
            CutoffKind::SmoothCutoff => smooth_ramp(tau).powf(self.ell),
        }
    }
}

/// `max(2·order + 3, 10)`.
pub fn default_mu(order: f64) -> f64 {
    (2.0 * order + 3.0).max(10.0)
}

fn bump_tail(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// C^∞ non-increasing ramp: 1 on `[0, 1/2]`, 0 on `[1, ∞)`.
pub fn smooth_ramp(tau: f64) -> f64 {
    if tau <= 0.5 {
        return 1.0;
    }
    if tau >= 1.0 {
        return 0.0;
    }
    let a = bump_tail(1.0 - tau);
    let b = bump_tail(tau - 0.5);
    a / (a + b)
}

fn check_interval(t: f64, horizon: f64) -> Result<()> {
    if !(t >= 0.0 && t <= horizon) {
        return Err(Error::Domain(format!("t = {t} outside [0, {horizon}]")));
    }
    Ok(())
}

/// Closed form of `D^{m+α}_{t|T} φ(t)` for the power cutoff.
pub fn rl_right_derivative_closed(params: &TestFunctionParams, order: f64, t: f64) -> Result<f64> {
    if params.kind != CutoffKind::PowerCutoff {
        return Err(Error::param(
            "kind",
            "closed form exists only for PowerCutoff",
        ));
    }
    if !(order > 0.0) {
        return Err(Error::param("order", "must be positive"));
    }
    if order >= params.mu {
        return Err(Error::Integrability {
            order,
            mu: params.mu,
            required: order,
        });
    }
    let big_t = params.horizon;
    check_interval(t, big_t)?;
    let g = gamma_ratio(params.mu + 1.0, params.mu + 1.0 - order);
    let base = 1.0 - t / big_t;
    let tail = if base <= 0.0 {
        0.0
    } else {
        base.powf(params.mu - order)
    };
    Ok(g * big_t.powf(-order) * tail)
}

/// Finite-difference weights for the `m`-th derivative at `z` on nodes `xs`.
fn fornberg(z: f64, xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

const STENCIL: usize = 9;

/// `n`-th derivative of `g` at `t` using nodes confined to `[lo, hi]`,
/// halving the step and keeping the level whose successive difference is
/// smallest. Returns `(value, error estimate)`.
fn nth_derivative(
    g: &mut dyn FnMut(f64) -> Result<f64>,
    t: f64,
    n: usize,
    lo: f64,
    hi: f64,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Ok((g(t)?, 0.0));
    }
    let width = hi - lo;
    let mut prev: Option<f64> = None;
    let mut best: Option<(f64, f64)> = None;
    let mut stale = 0;
    let mut memo: HashMap<u64, f64> = HashMap::new();
    let mut h = width / 8.0;
    for _ in 0..14 {
        let room_left = ((t - lo) / h + 1e-9).floor().max(0.0) as usize;
        let room_right = ((hi - t) / h + 1e-9).floor().max(0.0) as usize;
        if room_left + room_right < STENCIL - 1 {
            h *= 0.5;
            continue;
        }
        let c_lo = (STENCIL - 1).saturating_sub(room_right);
        let c_hi = room_left.min(STENCIL - 1);
        let c = (STENCIL / 2).clamp(c_lo, c_hi);
        let xs: Vec<f64> = (0..STENCIL)
            .map(|j| (t + (j as f64 - c as f64) * h).clamp(lo, hi))
            .collect();
        let w = fornberg(t, &xs, n);
        let mut d = 0.0;
        for (x, wi) in xs.iter().zip(&w) {
            let v = match memo.get(&x.to_bits()) {
                Some(v) => *v,
                None => {
                    let v = g(*x)?;
                    memo.insert(x.to_bits(), v);
                    v
                }
            };
            d += wi * v;
        }
        if let Some(p) = prev {
            let err = (d - p).abs();
            if best.is_none_or(|(_, e)| err < e) {
                best = Some((d, err));
                stale = 0;
            } else {
                stale += 1;
                if stale == 2 {
                    break;
                }
            }
        }
        prev = Some(d);
        h *= 0.5;
    }
    best.ok_or_else(|| Error::Domain("interval too short for a difference stencil".into()))
}

fn inner_opts() -> QuadOptions {
    QuadOptions::with_tol(1e-15, 1e-14)
}

fn accept(value: f64, err: f64, tol: f64) -> Result<f64> {
    let requested = tol * (1.0 + value.abs());
    if err <= requested {
        Ok(value)
    } else {
        Err(Error::Quadrature {
            value,
            achieved: err,
            requested,
        })
    }
}

/// Fractional integral `I^{a}_{t|T} f(t)` for `a ∈ (0,1)`, with the kernel
/// singularity removed by `s = t + (T - t) v^{1/a}`.
fn right_integral<F: Fn(f64) -> f64>(f: &F, horizon: f64, a: f64, t: f64) -> Result<f64> {
    let len = horizon - t;
    if len <= 0.0 {
        return Ok(0.0);
    }
    let r = integrate(|v| f(t + len * v.powf(1.0 / a)), 0.0, 1.0, &inner_opts());
    let q = crate::quad::value_or_estimate(&r).ok_or_else(|| r.err().unwrap())?;
    Ok(len.powf(a) / gamma(a + 1.0) * q.0)
}

fn left_integral<F: Fn(f64) -> f64>(f: &F, a: f64, t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Ok(0.0);
    }
    let r = integrate(|v| f(t - t * v.powf(1.0 / a)), 0.0, 1.0, &inner_opts());
    let q = crate::quad::value_or_estimate(&r).ok_or_else(|| r.err().unwrap())?;
    Ok(t.powf(a) / gamma(a + 1.0) * q.0)
}

/// Right-sided Riemann–Liouville derivative `D^{order}_{t|T} f(t)` by
/// quadrature: `(-d/dt)^n I^{n-order}_{t|T} f`, `n = ⌈order⌉`. Integer
/// orders reduce to classical derivatives with the sign `(-1)^n`.
pub fn rl_right_derivative_quadrature<F: Fn(f64) -> f64>(
    f: F,
    horizon: f64,
    order: f64,
    t: f64,
    tol: f64,
) -> Result<f64> {
    if !(order > 0.0 && order <= 2.0) {
        return Err(Error::param(
            "order",
            format!("must lie in (0, 2], got {order}"),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    check_interval(t, horizon)?;
    let n = order.ceil() as usize;
    let a = n as f64 - order;
    if t == horizon && a > 0.0 {
        if f(horizon) == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::Domain(
            "derivative is unbounded at t = T for f(T) != 0".into(),
        ));
    }
    let mut g = |x: f64| -> Result<f64> {
        if a == 0.0 {
            Ok(f(x))
        } else {
            right_integral(&f, horizon, a, x)
        }
    };
    let (d, err) = nth_derivative(&mut g, t, n, 0.0, horizon)?;
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    accept(sign * d, err, tol)
}

/// Caputo derivative `ᶜD^{order}_{0|t} f(t)`, evaluated as the RL
/// derivative of `f(s) - f(0) - f'(0) s` (the linear part only for orders
/// above 1). Stencil nodes stay inside `[0, horizon]`.
pub fn caputo_left_derivative<F: Fn(f64) -> f64>(
    f: F,
    f_prime0: Option<f64>,
    order: f64,
    t: f64,
    horizon: f64,
    tol: f64,
) -> Result<f64> {
    if !(order > 0.0 && order <= 2.0) {
        return Err(Error::param(
            "order",
            format!("must lie in (0, 2], got {order}"),
        ));
    }
    if !(t > 0.0 && t <= horizon) {
        return Err(Error::Domain(format!("t = {t} outside (0, {horizon}]")));
    }
    let n = order.ceil() as usize;
    let a = n as f64 - order;
    let slope = if order > 1.0 && a > 0.0 {
        f_prime0
            .ok_or_else(|| Error::MissingData("f'(0) is required for orders in (1, 2)".into()))?
    } else {
        0.0
    };
    let f0 = f(0.0);
    let shifted = |s: f64| f(s) - f0 - slope * s;
    let mut g = |x: f64| -> Result<f64> {
        if a == 0.0 {
            Ok(shifted(x))
        } else {
            left_integral(&shifted, a, x)
        }
    };
    let (d, err) = nth_derivative(&mut g, t, n, 0.0, horizon)?;
    accept(d, err, tol)
}

fn capacity_guard(params: &TestFunctionParams, order: f64, p: f64) -> Result<f64> {
    if params.kind != CutoffKind::PowerCutoff {
        return Err(Error::param(
            "kind",
            "closed form exists only for PowerCutoff",
        ));
    }
    if !(p > 1.0) {
        return Err(Error::param("p", "must exceed 1"));
    }
    let pp = p / (p - 1.0);
    let required = order * pp - 1.0;
    if !(params.mu > required) || order >= params.mu {
        return Err(Error::Integrability {
            order,
            mu: params.mu,
            required: required.max(order),
        });
    }
    Ok(pp)
}

/// `∫₀^T φ^{-1/(p-1)} |D^{order}_{t|T} φ|^{p/(p-1)} dt = C · T^{exponent}`.
pub fn capacity_time_integral(
    params: &TestFunctionParams,
    order: f64,
    p: f64,
) -> Result<(f64, f64)> {
    let pp = capacity_guard(params, order, p)?;
    let g = gamma_ratio(params.mu + 1.0, params.mu + 1.0 - order);
    let c = g.powf(pp) / (params.mu + 1.0 - order * pp);
    Ok((c, 1.0 - order * pp))
}

/// The same integral by adaptive quadrature of the pointwise integrand.
pub fn capacity_time_integral_quadrature(
    params: &TestFunctionParams,
    order: f64,
    p: f64,
    opts: &QuadOptions,
) -> Result<f64> {
    let pp = capacity_guard(params, order, p)?;
    let horizon = params.horizon;
    let integrand = |t: f64| {
        let phi = params.eval(t);
        if phi <= 0.0 {
            return 0.0;
        }
        let d = rl_right_derivative_closed(params, order, t).unwrap_or(0.0);
        phi.powf(-1.0 / (p - 1.0)) * d.abs().powf(pp)
    };
    let pts = [0.0, 0.5 * horizon, 0.9 * horizon, 0.99 * horizon, horizon];
    Ok(integrate_with_breaks(integrand, &pts, opts)?.value)
}

/// `∫₀^T D^{order}_{t|T} φ dt = C · T^{exponent}` with
/// `C = Γ(μ+1)/Γ(μ+2-order)` and exponent `1 - order`.
pub fn mean_time_integral(params: &TestFunctionParams, order: f64) -> Result<(f64, f64)> {
    if params.kind != CutoffKind::PowerCutoff {
        return Err(Error::param(
            "kind",
            "closed form exists only for PowerCutoff",
        ));
    }
    if order >= params.mu {
        return Err(Error::Integrability {
            order,
            mu: params.mu,
            required: order,
        });
    }
    Ok((
        gamma_ratio(params.mu + 1.0, params.mu + 2.0 - order),
        1.0 - order,
    ))
}

pub fn mean_time_integral_quadrature(
    params: &TestFunctionParams,
    order: f64,
    opts: &QuadOptions,
) -> Result<f64> {
    mean_time_integral(params, order)?;
    let horizon = params.horizon;
    let f = |t: f64| rl_right_derivative_closed(params, order, t).unwrap_or(0.0);
    Ok(integrate_with_breaks(f, &[0.0, 0.9 * horizon, horizon], opts)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn phi(t_horizon: f64, mu: f64) -> TestFunctionParams {
        TestFunctionParams::power(t_horizon, mu).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        let p = phi(1.0, 2.0);
        assert_eq!(rl_right_derivative_closed(&p, 0.5, 1.0).unwrap(), 0.0);
        assert_relative_eq!(
            rl_right_derivative_closed(&p, 0.5, 0.0).unwrap(),
            1.504506,
            epsilon = 1e-6
        );
        let p = phi(2.0, 3.0);
        assert_relative_eq!(
            rl_right_derivative_closed(&p, 1.5, 0.0).unwrap(),
            1.5957691216057308,
            epsilon = 1e-6
        );
    }

    #[test]
    fn closed_form_guards() {
        let p = phi(1.0, 2.0);
        assert!(matches!(
            rl_right_derivative_closed(&p, 2.0, 0.0),
            Err(Error::Integrability { .. })
        ));
        assert!(matches!(
            rl_right_derivative_closed(&p, 0.5, 1.5),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn right_derivative_of_constant() {
        let v = rl_right_derivative_quadrature(|_| 1.0, 1.0, 0.5, 0.0, 1e-8).unwrap();
        assert_relative_eq!(v, 0.564190, epsilon = 1e-6);
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let p = phi(1.0, 2.0);
        let q = rl_right_derivative_quadrature(|s| p.eval(s), 1.0, 0.5, 0.25, 1e-8).unwrap();
        let c = rl_right_derivative_closed(&p, 0.5, 0.25).unwrap();
        assert!((q - c).abs() < 1e-7, "{q} vs {c}");

        let p = phi(2.0, 4.5);
        let q = rl_right_derivative_quadrature(|s| p.eval(s), 2.0, 1.3, 0.6, 1e-8).unwrap();
        let c = rl_right_derivative_closed(&p, 1.3, 0.6).unwrap();
        assert!((q - c).abs() < 1e-6 * (1.0 + c.abs()), "{q} vs {c}");
    }

    #[test]
    fn right_derivative_vanishes_at_horizon() {
        let v = rl_right_derivative_quadrature(|s: f64| (1.0 - s).powi(3), 1.0, 0.7, 1.0, 1e-8)
            .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn caputo_examples() {
        let z = caputo_left_derivative(|_| 4.2, None, 0.4, 0.8, 1.0, 1e-9).unwrap();
        assert!(z.abs() < 1e-12);
        let v = caputo_left_derivative(|s| s, None, 0.5, 1.0, 1.0, 1e-8).unwrap();
        assert_relative_eq!(v, 1.128379, epsilon = 1e-6);
        let v = caputo_left_derivative(|s| s * s, None, 1.0, 0.5, 1.0, 1e-8).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-9);
        let v = caputo_left_derivative(|s| s * s, None, 0.999, 0.5, 1.0, 1e-7).unwrap();
        assert!((v - 1.0).abs() < 5e-3);
    }

    #[test]
    fn caputo_super_order_needs_slope() {
        let r = caputo_left_derivative(|s| s * s, None, 1.5, 0.5, 1.0, 1e-8);
        assert!(matches!(r, Err(Error::MissingData(_))));
        // ᶜD^{1.5} t² = 2 t^{0.5} / Γ(1.5)
        let v = caputo_left_derivative(|s| s * s, Some(0.0), 1.5, 0.5, 1.0, 1e-7).unwrap();
        assert_relative_eq!(v, 2.0 * 0.5f64.sqrt() / gamma(1.5), epsilon = 1e-6);
    }

    #[test]
    fn capacity_examples() {
        let (c, e) = capacity_time_integral(&phi(1.0, 3.0), 0.5, 2.0).unwrap();
        assert_relative_eq!(c, 1.0864977448406722, epsilon = 1e-12);
        assert_eq!(e, 0.0);
        let (_, e) = capacity_time_integral(&phi(1.0, 2.0), 0.5, 3.0).unwrap();
        assert_relative_eq!(e, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn capacity_quadrature_is_scale_consistent() {
        let opts = QuadOptions::with_tol(0.0, 1e-11);
        for &t in &[1.0, 2.0, 4.0] {
            let p = phi(t, 3.0);
            let (c, e) = capacity_time_integral(&p, 0.5, 2.0).unwrap();
            let q = capacity_time_integral_quadrature(&p, 0.5, 2.0, &opts).unwrap();
            assert_relative_eq!(q, c * t.powf(e), max_relative = 1e-8);
        }
    }

    #[test]
    fn capacity_guard_rejects_low_mu() {
        let r = capacity_time_integral(&phi(1.0, 0.9), 0.8, 1.5);
        assert!(matches!(r, Err(Error::Integrability { .. })));
    }

    #[test]
    fn mean_integral_examples() {
        let opts = QuadOptions::with_tol(0.0, 1e-11);
        let p = phi(1.0, 2.0);
        let (c, e) = mean_time_integral(&p, 0.5).unwrap();
        assert_relative_eq!(c, 0.601802, epsilon = 1e-6);
        assert_eq!(e, 0.5);
        let (c, e) = mean_time_integral(&p, 1.0).unwrap();
        assert_relative_eq!(c, 1.0, epsilon = 1e-14);
        assert_eq!(e, 0.0);
        let (_, e) = mean_time_integral(&phi(1.0, 5.0), 1.3).unwrap();
        assert_relative_eq!(e, -0.3, epsilon = 1e-15);
        for &t in &[1.0, 10.0] {
            let p = phi(t, 2.0);
            let q = mean_time_integral_quadrature(&p, 0.5, &opts).unwrap();
            assert_relative_eq!(q, c_of(&p) * t.powf(0.5), max_relative = 1e-9);
        }
    }

    fn c_of(p: &TestFunctionParams) -> f64 {
        mean_time_integral(p, 0.5).unwrap().0
    }

    #[test]
    fn smooth_ramp_shape() {
        assert_eq!(smooth_ramp(0.3), 1.0);
        assert_eq!(smooth_ramp(1.2), 0.0);
        let mut last = 1.0;
        for k in 0..=100 {
            let v = smooth_ramp(0.5 + k as f64 / 200.0);
            assert!(v <= last);
            last = v;
        }
        let s = TestFunctionParams::smooth(1.0, 3.0).unwrap();
        assert!(s.check_smooth_for_power(2.0).is_ok());
        assert!(s.check_smooth_for_power(1.2).is_err());
    }

    #[test]
    fn order_regimes() {
        let o = FracOrder::new(1.5, OrderKind::TimeRight).unwrap();
        assert_eq!(o.regime(), Regime::Super);
        assert_eq!(o.split(), (1, 0.5));
        assert!(FracOrder::new(2.5, OrderKind::TimeLeft).is_err());
        assert_eq!(default_mu(0.5), 10.0);
        assert_eq!(default_mu(4.0), 11.0);
    }
}
