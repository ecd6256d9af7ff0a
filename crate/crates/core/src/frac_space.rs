//! The fractional Laplacian `(-Δ)^s` by singular integral and by Fourier
//! multiplier, the weight `Φ_R(x) = ⟨x/R⟩^{-q₀}`, and the spatial capacity
//! integral.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_with_breaks, QuadOptions};
use crate::special::{bessel_j_int, gamma, scaled_bessel_k, sphere_area};

/// Far-field model `f(y) ≈ limit + amplitude·|y|^{-decay}` for `|y| ≥ radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailModel {
    pub limit: f64,
    pub amplitude: f64,
    pub decay: f64,
    pub radius: f64,
}

/// A scalar field on `ℝ^d` that the fractional Laplacian can act on.
pub trait Field: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let h = 1e-5 * self.length_scale();
        let mut y = x.to_vec();
        (0..x.len())
            .map(|i| {
                y[i] = x[i] + h;
                let fp = self.value(&y);
                y[i] = x[i] - h;
                let fm = self.value(&y);
                y[i] = x[i];
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    fn laplacian(&self, x: &[f64]) -> f64 {
        let h = 1e-4 * self.length_scale();
        let f0 = self.value(x);
        let mut y = x.to_vec();
        let mut s = 0.0;
        for i in 0..x.len() {
            y[i] = x[i] + h;
            let fp = self.value(&y);
            y[i] = x[i] - h;
            let fm = self.value(&y);
            y[i] = x[i];
            s += (fp - 2.0 * f0 + fm) / (h * h);
        }
        s
    }

    fn length_scale(&self) -> f64 {
        1.0
    }

    fn tail(&self) -> Option<TailModel> {
        None
    }

    /// True when the field depends on `|x|` only.
    fn is_radial(&self) -> bool {
        false
    }

    /// Fourier transform `∫ f(x) e^{-ix·ξ} dx` at `|ξ| = k` for radial fields.
    fn fourier_radial(&self, _k: f64) -> Option<f64> {
        None
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `amplitude · exp(-|x|²/width²)`.
#[derive(Debug, Clone, Copy)]
pub struct Gaussian {
    pub d: usize,
    pub amplitude: f64,
    pub width: f64,
}

impl Field for Gaussian {
    fn dim(&self) -> usize {
        self.d
    }
    fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        self.amplitude * (-r2 / (self.width * self.width)).exp()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let f = self.value(x);
        let a2 = self.width * self.width;
        x.iter().map(|xi| -2.0 * xi / a2 * f).collect()
    }
    fn laplacian(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let a2 = self.width * self.width;
        (4.0 * r2 / (a2 * a2) - 2.0 * self.d as f64 / a2) * self.value(x)
    }
    fn length_scale(&self) -> f64 {
        self.width
    }
    fn tail(&self) -> Option<TailModel> {
        Some(TailModel {
            limit: 0.0,
            amplitude: 0.0,
            decay: 0.0,
            radius: 7.0 * self.width,
        })
    }
    fn is_radial(&self) -> bool {
        true
    }
    fn fourier_radial(&self, k: f64) -> Option<f64> {
        let a = self.width;
        Some(self.amplitude * (PI * a * a).powf(self.d as f64 / 2.0) * (-a * a * k * k / 4.0).exp())
    }
}

/// The constant field `c`.
#[derive(Debug, Clone, Copy)]
pub struct Constant {
    pub d: usize,
    pub c: f64,
}

impl Field for Constant {
    fn dim(&self) -> usize {
        self.d
    }
    fn value(&self, _x: &[f64]) -> f64 {
        self.c
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }
    fn laplacian(&self, _x: &[f64]) -> f64 {
        0.0
    }
    fn tail(&self) -> Option<TailModel> {
        Some(TailModel {
            limit: self.c,
            amplitude: 0.0,
            decay: 0.0,
            radius: 1.0,
        })
    }
    fn is_radial(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub r: f64,
    pub q0: f64,
    pub d: usize,
    pub s: f64,
}

impl WeightParams {
    pub fn new(r: f64, q0: f64, d: usize, s: f64) -> Result<Self> {
        let w = WeightParams { r, q0, d, s };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::param("R", "scale must be positive"));
        }
        if self.d == 0 {
            return Err(Error::param("d", "dimension must be at least 1"));
        }
        if !(self.s > 0.0 && self.s <= 1.0) {
            return Err(Error::param("s", "half-order must lie in (0, 1]"));
        }
        if !(self.q0 > 0.0) {
            return Err(Error::param("q0", "decay exponent must be positive"));
        }
        Ok(())
    }

    /// Checks `d < q0 < d + 2sp`.
    pub fn check_capacity_hypothesis(&self, p: f64) -> Result<()> {
        let d = self.d as f64;
        if !(self.q0 > d) {
            return Err(Error::Hypothesis(format!(
                "d < q0 fails: d = {d}, q0 = {}",
                self.q0
            )));
        }
        let upper = d + 2.0 * self.s * p;
        if !(self.q0 < upper) {
            return Err(Error::Hypothesis(format!(
                "q0 < d + 2sp fails: q0 = {}, d + 2sp = {upper}",
                self.q0
            )));
        }
        Ok(())
    }

    pub fn field(&self) -> Bracket {
        Bracket {
            d: self.d,
            q0: self.q0,
            r: self.r,
        }
    }
}

/// `Φ_R(x) = (1 + |x/R|²)^{-q0/2}`.
pub fn weight_value(params: &WeightParams, x: &[f64]) -> f64 {
    let r = norm(x) / params.r;
    (1.0 + r * r).powf(-params.q0 / 2.0)
}

/// `Φ_R` as a field.
#[derive(Debug, Clone, Copy)]
pub struct Bracket {
    pub d: usize,
    pub q0: f64,
    pub r: f64,
}

impl Bracket {
    fn radial(&self, rho: f64) -> f64 {
        let u = rho / self.r;
        (1.0 + u * u).powf(-self.q0 / 2.0)
    }

    /// `‖Φ_R‖₁`, finite for `q0 > d`.
    pub fn l1_norm(&self) -> f64 {
        let d = self.d as f64;
        self.r.powf(d) * PI.powf(d / 2.0) * gamma((self.q0 - d) / 2.0) / gamma(self.q0 / 2.0)
    }
}

impl Field for Bracket {
    fn dim(&self) -> usize {
        self.d
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.radial(norm(x))
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r2 = self.r * self.r;
        let b = 1.0 + x.iter().map(|v| v * v).sum::<f64>() / r2;
        let c = -self.q0 / r2 * b.powf(-self.q0 / 2.0 - 1.0);
        x.iter().map(|xi| c * xi).collect()
    }
    fn laplacian(&self, x: &[f64]) -> f64 {
        let q = self.q0;
        let r2 = self.r * self.r;
        let u2 = x.iter().map(|v| v * v).sum::<f64>() / r2;
        let b = 1.0 + u2;
        (-q * self.d as f64 * b.powf(-q / 2.0 - 1.0) + q * (q + 2.0) * u2 * b.powf(-q / 2.0 - 2.0))
            / r2
    }
    fn length_scale(&self) -> f64 {
        self.r
    }
    fn tail(&self) -> Option<TailModel> {
        Some(TailModel {
            limit: 0.0,
            amplitude: self.r.powf(self.q0),
            decay: self.q0,
            radius: 10.0 * self.r,
        })
    }
    fn is_radial(&self) -> bool {
        true
    }
    fn fourier_radial(&self, k: f64) -> Option<f64> {
        let d = self.d as f64;
        let nu = (self.q0 - d) / 2.0;
        if nu <= 0.0 {
            return None;
        }
        let rk = self.r * k;
        let c = (2.0 * PI).powf(d / 2.0) * 2f64.powf(1.0 - self.q0 / 2.0) / gamma(self.q0 / 2.0);
        Some(self.r.powf(d) * c * scaled_bessel_k(nu, rk))
    }
}

/// `f(x/R)`.
pub struct Dilated<'a> {
    pub inner: &'a dyn Field,
    pub r: f64,
}

impl Field for Dilated<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let y: Vec<f64> = x.iter().map(|v| v / self.r).collect();
        self.inner.value(&y)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let y: Vec<f64> = x.iter().map(|v| v / self.r).collect();
        self.inner
            .gradient(&y)
            .into_iter()
            .map(|g| g / self.r)
            .collect()
    }
    fn laplacian(&self, x: &[f64]) -> f64 {
        let y: Vec<f64> = x.iter().map(|v| v / self.r).collect();
        self.inner.laplacian(&y) / (self.r * self.r)
    }
    fn length_scale(&self) -> f64 {
        self.inner.length_scale() * self.r
    }
    fn tail(&self) -> Option<TailModel> {
        self.inner.tail().map(|t| TailModel {
            limit: t.limit,
            amplitude: t.amplitude * self.r.powf(t.decay),
            decay: t.decay,
            radius: t.radius * self.r,
        })
    }
    fn is_radial(&self) -> bool {
        self.inner.is_radial()
    }
    fn fourier_radial(&self, k: f64) -> Option<f64> {
        let d = self.dim() as f64;
        self.inner
            .fourier_radial(self.r * k)
            .map(|v| self.r.powf(d) * v)
    }
}

/// `a·f + b·g`.
pub struct Combination<'a> {
    pub a: f64,
    pub f: &'a dyn Field,
    pub b: f64,
    pub g: &'a dyn Field,
}

impl Field for Combination<'_> {
    fn dim(&self) -> usize {
        self.f.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.a * self.f.value(x) + self.b * self.g.value(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let gf = self.f.gradient(x);
        let gg = self.g.gradient(x);
        gf.iter()
            .zip(&gg)
            .map(|(u, v)| self.a * u + self.b * v)
            .collect()
    }
    fn laplacian(&self, x: &[f64]) -> f64 {
        self.a * self.f.laplacian(x) + self.b * self.g.laplacian(x)
    }
    fn length_scale(&self) -> f64 {
        self.f.length_scale().min(self.g.length_scale())
    }
    fn tail(&self) -> Option<TailModel> {
        let (tf, tg) = (self.f.tail()?, self.g.tail()?);
        let (amplitude, decay) = if tf.amplitude == 0.0 {
            (self.b * tg.amplitude, tg.decay)
        } else if tg.amplitude == 0.0 || tf.decay == tg.decay {
            (self.a * tf.amplitude + self.b * tg.amplitude, tf.decay)
        } else {
            return None;
        };
        Some(TailModel {
            limit: self.a * tf.limit + self.b * tg.limit,
            amplitude,
            decay,
            radius: tf.radius.max(tg.radius),
        })
    }
    fn is_radial(&self) -> bool {
        self.f.is_radial() && self.g.is_radial()
    }
    fn fourier_radial(&self, k: f64) -> Option<f64> {
        Some(self.a * self.f.fourier_radial(k)? + self.b * self.g.fourier_radial(k)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    SingularIntegral,
    FourierMultiplier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FracLaplacianSpec {
    pub s: f64,
    pub d: usize,
    pub c_ds: f64,
    pub method: Method,
}

/// `C_{d,s} = s 4^s Γ(d/2 + s) / (π^{d/2} Γ(1 - s))`.
pub fn normalization(d: usize, s: f64) -> f64 {
    let h = d as f64 / 2.0;
    s * 4f64.powf(s) * gamma(h + s) / (PI.powf(h) * gamma(1.0 - s))
}

impl FracLaplacianSpec {
    pub fn new(s: f64, d: usize, method: Method) -> Result<Self> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::param("s", format!("must lie in (0, 1], got {s}")));
        }
        if d == 0 {
            return Err(Error::param("d", "dimension must be at least 1"));
        }
        let c_ds = if s < 1.0 { normalization(d, s) } else { 0.0 };
        Ok(FracLaplacianSpec { s, d, c_ds, method })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FracLapOptions {
    pub tol: f64,
    /// Radius inside which the gradient term is subtracted (orders `s ≥ 1/2`).
    pub compensation_radius: f64,
    /// Cut radius in units of `|x| + tail radius`; beyond it the tail model is used.
    pub cut_factor: f64,
}

impl Default for FracLapOptions {
    fn default() -> Self {
        FracLapOptions {
            tol: 1e-10,
            compensation_radius: 1.0,
            cut_factor: 100.0,
        }
    }
}

/// Evaluates `(-Δ)^s f(x)` with the method in `spec`.
pub fn frac_laplacian_pointwise(
    field: &dyn Field,
    spec: &FracLaplacianSpec,
    x: &[f64],
    opts: &FracLapOptions,
) -> Result<f64> {
    if x.len() != spec.d || field.dim() != spec.d {
        return Err(Error::param(
            "x",
            "dimension mismatch between point, field and operator",
        ));
    }
    if spec.s == 1.0 {
        return Ok(-field.laplacian(x));
    }
    match spec.method {
        Method::SingularIntegral => singular_integral(field, spec, x, opts),
        Method::FourierMultiplier => fourier_multiplier(field, spec, x, opts),
    }
}

fn sphere_average(
    field: &dyn Field,
    x: &[f64],
    f0: f64,
    grad: &[f64],
    rho: f64,
    compensate: bool,
    opts: &QuadOptions,
) -> Result<f64> {
    let d = x.len();
    let comp = if compensate { rho } else { 0.0 };
    if d == 1 {
        let g = grad[0];
        let a = f0 - field.value(&[x[0] + rho]) + comp * g;
        let b = f0 - field.value(&[x[0] - rho]) - comp * g;
        return Ok(a + b);
    }
    if field.is_radial() {
        // Put x on the first axis; the sphere integral reduces to the polar angle.
        let r = norm(x);
        let g_r = if r > 0.0 {
            grad.iter().zip(x).map(|(g, xi)| g * xi).sum::<f64>() / r
        } else {
            0.0
        };
        let sd2 = sphere_area(d - 1);
        let mut y = vec![0.0; d];
        let integrand = |th: f64| {
            let (sn, cs) = th.sin_cos();
            y[0] = r + rho * cs;
            y[1] = rho * sn;
            let v = f0 - field.value(&y) + comp * g_r * cs;
            v * sn.powi(d as i32 - 2)
        };
        let mut peak = vec![0.0, PI];
        if r > 0.0 && rho > 0.0 {
            // x + ρω passes closest to the origin at θ = π; refine around it.
            let w = (r.min(rho) / r.max(rho)).clamp(1e-6, 1.0);
            peak = vec![0.0, PI - w.min(PI / 2.0), PI];
        }
        let q = integrate_with_breaks(integrand, &peak, opts)?;
        return Ok(sd2 * q.value);
    }
    if d == 2 {
        let mut y = [0.0; 2];
        let q = integrate(
            |th| {
                let (sn, cs) = th.sin_cos();
                y[0] = x[0] + rho * cs;
                y[1] = x[1] + rho * sn;
                f0 - field.value(&y) + comp * (grad[0] * cs + grad[1] * sn)
            },
            0.0,
            2.0 * PI,
            opts,
        )?;
        return Ok(q.value);
    }
    Err(Error::Domain(
        "non-radial fields are supported for d <= 2 only".into(),
    ))
}

fn singular_integral(
    field: &dyn Field,
    spec: &FracLaplacianSpec,
    x: &[f64],
    opts: &FracLapOptions,
) -> Result<f64> {
    let tail = field.tail().ok_or_else(|| {
        Error::Tail("singular integral needs the field's far-field decay model".into())
    })?;
    let d = spec.d;
    let s = spec.s;
    let area = sphere_area(d);
    let r = norm(x);
    let f0 = field.value(x);
    let grad = field.gradient(x);
    let lap = field.laplacian(x);
    let compensate = s >= 0.5;
    let delta = opts.compensation_radius;
    let scale = field.length_scale();
    let eps = 1e-3 * scale.min(1.0);
    let cut = opts.cut_factor * (r + tail.radius);

    // Second-order Taylor model on (0, ε): the sphere average is -ρ²|S|Δf/(2d).
    let inner = -area * lap / (2.0 * d as f64) * eps.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s);

    let mut breaks = vec![eps];
    let mut b = eps;
    while b < cut {
        b *= 4.0;
        if b < cut {
            breaks.push(b);
        }
    }
    for extra in [r, 0.5 * r, 1.5 * r, r - scale, r + scale, delta] {
        if extra > eps && extra < cut {
            breaks.push(extra);
        }
    }
    breaks.push(cut);
    breaks.sort_by(f64::total_cmp);

    let inner_opts = QuadOptions::with_tol(opts.tol * 1e-2 * (1.0 + f0.abs()), 1e-12);
    let outer_opts = QuadOptions::with_tol(opts.tol * (1.0 + f0.abs()), opts.tol);
    let mut failure: Option<Error> = None;
    let outer = integrate_with_breaks(
        |rho| {
            let comp = compensate && rho < delta;
            match sphere_average(field, x, f0, &grad, rho, comp, &inner_opts) {
                Ok(v) => v * rho.powf(-1.0 - 2.0 * s),
                Err(e) => {
                    if let Some((v, _)) = crate::quad::value_or_estimate(&Err(e)) {
                        v * rho.powf(-1.0 - 2.0 * s)
                    } else {
                        failure.get_or_insert(Error::Domain("sphere average failed".into()));
                        0.0
                    }
                }
            }
        },
        &breaks,
        &outer_opts,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let outer = outer?.value;
    let far = area
        * ((f0 - tail.limit) * cut.powf(-2.0 * s) / (2.0 * s)
            - tail.amplitude * cut.powf(-tail.decay - 2.0 * s) / (tail.decay + 2.0 * s));
    Ok(spec.c_ds * (inner + outer + far))
}

fn fourier_multiplier(
    field: &dyn Field,
    spec: &FracLaplacianSpec,
    x: &[f64],
    opts: &FracLapOptions,
) -> Result<f64> {
    if !field.is_radial() || field.fourier_radial(1.0).is_none() {
        return Err(Error::MissingData(
            "Fourier multiplier needs a radial field with a known transform".into(),
        ));
    }
    let d = spec.d;
    if d > 3 {
        return Err(Error::Domain(
            "Fourier multiplier is implemented for d <= 3".into(),
        ));
    }
    let s = spec.s;
    let r = norm(x);
    let fk = |k: f64| field.fourier_radial(k).unwrap_or(0.0);
    let weight = |k: f64| k.powf(2.0 * s + d as f64 - 1.0) * fk(k).abs();

    // Truncate where the spectral integrand has decayed by sixteen orders.
    let scale = field.length_scale();
    let mut peak: f64 = 0.0;
    let mut kmax = 1.0 / scale;
    for j in 0..200 {
        let k = (j as f64 + 0.5) * 0.25 / scale;
        peak = peak.max(weight(k));
    }
    while weight(kmax) > 1e-17 * peak || weight(1.5 * kmax) > 1e-17 * peak {
        kmax *= 1.5;
        if kmax > 1e6 / scale {
            break;
        }
    }
    let kernel = |k: f64| -> f64 {
        let z = k * r;
        match d {
            1 => z.cos() / PI,
            2 => bessel_j_int(0, z) / (2.0 * PI),
            _ => {
                let sinc = if z.abs() < 1e-8 {
                    1.0 - z * z / 6.0
                } else {
                    z.sin() / z
                };
                sinc / (2.0 * PI * PI)
            }
        }
    };
    let mut breaks = vec![0.0];
    let period = if r > 0.0 { 2.0 * PI / r } else { kmax };
    let step = period.max(kmax / 2000.0).min(kmax / 4.0);
    let mut k = step;
    while k < kmax {
        breaks.push(k);
        k += step;
    }
    breaks.push(kmax);
    let q = integrate_with_breaks(
        |k| k.powf(2.0 * s) * fk(k) * kernel(k) * k.powi(d as i32 - 1),
        &breaks,
        &QuadOptions::with_tol(opts.tol * 1e-2, opts.tol * 1e-2),
    )?;
    Ok(q.value)
}

/// One row of a weight-bound sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundSample {
    pub radius: f64,
    pub value: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub samples: Vec<BoundSample>,
    pub max_ratio: f64,
    pub stable: bool,
}

/// Ratio `|(-Δ)^s Φ₁(x)| / ⟨x⟩^{-d-2s}` over sample points. Stable means all
/// ratios are finite and the outermost two are within a factor 10.
pub fn weight_fraclap_bound_check(
    params: &WeightParams,
    points: &[Vec<f64>],
    opts: &FracLapOptions,
) -> Result<BoundReport> {
    params.validate()?;
    if !(params.q0 > params.d as f64) {
        return Err(Error::Hypothesis(format!(
            "q0 > d fails: q0 = {}, d = {}",
            params.q0, params.d
        )));
    }
    let field = Bracket {
        d: params.d,
        q0: params.q0,
        r: 1.0,
    };
    let spec = FracLaplacianSpec::new(params.s, params.d, Method::SingularIntegral)?;
    let d = params.d as f64;
    let samples = points
        .par_iter()
        .map(|x| {
            let value = frac_laplacian_pointwise(&field, &spec, x, opts)?;
            let r = norm(x);
            let bracket = (1.0 + r * r).sqrt();
            Ok(BoundSample {
                radius: r,
                value,
                ratio: value.abs() / bracket.powf(-d - 2.0 * params.s),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_ratio = samples.iter().map(|b| b.ratio).fold(0.0, f64::max);
    let mut order: Vec<&BoundSample> = samples.iter().collect();
    order.sort_by(|a, b| a.radius.total_cmp(&b.radius));
    let finite = samples.iter().all(|b| b.ratio.is_finite());
    let stable = finite
        && match order.as_slice() {
            [.., a, b] => b.ratio <= 10.0 * a.ratio && a.ratio <= 10.0 * b.ratio,
            _ => true,
        };
    Ok(BoundReport {
        samples,
        max_ratio,
        stable,
    })
}

/// `lhs = (-Δ)^s[ψ(·/R)](x)` and `rhs = R^{-2s} [(-Δ)^s ψ](x/R)`, each by
/// its own quadrature.
pub fn scaling_identity_check(
    psi: &dyn Field,
    spec: &FracLaplacianSpec,
    r: f64,
    x: &[f64],
    opts: &FracLapOptions,
) -> Result<(f64, f64)> {
    if !(r > 0.0) {
        return Err(Error::param("R", "scale must be positive"));
    }
    let dilated = Dilated { inner: psi, r };
    let lhs = frac_laplacian_pointwise(&dilated, spec, x, opts)?;
    let y: Vec<f64> = x.iter().map(|v| v / r).collect();
    let rhs = r.powf(-2.0 * spec.s) * frac_laplacian_pointwise(psi, spec, &y, opts)?;
    Ok((lhs, rhs))
}

/// `∫ Φ_R^{-1/(p-1)} |(-Δ)^s Φ_R|^{p/(p-1)} dx` by radial reduction, with the
/// predicted `R`-exponent `d - 2sp/(p-1)`.
///
/// The radial profile is tabulated on a geometric grid in `|x|/R`, integrated
/// in `log |x|` by Simpson's rule, and closed at both ends analytically: a
/// constant core near the origin and the far-field law
/// `(-Δ)^s Φ_R ≈ -C_{d,s} ‖Φ_R‖₁ |x|^{-d-2s}` beyond the grid.
pub fn capacity_space_integral(
    params: &WeightParams,
    p: f64,
    opts: &FracLapOptions,
) -> Result<(f64, f64)> {
    params.validate()?;
    if !(p > 1.0) {
        return Err(Error::param("p", "must exceed 1"));
    }
    params.check_capacity_hypothesis(p)?;
    let d = params.d;
    let df = d as f64;
    let s = params.s;
    let pp = p / (p - 1.0);
    let predicted = predicted_space_exponent(d, s, p);
    let field = params.field();
    let spec = FracLaplacianSpec::new(s, d, Method::SingularIntegral)?;

    let (lo, hi, n) = (1e-3f64, 3e2f64, 160usize);
    let du = (hi / lo).ln() / n as f64;
    let radii: Vec<f64> = (0..=n)
        .map(|j| params.r * lo * (j as f64 * du).exp())
        .collect();
    let integrand = |rho: f64, lap: f64| {
        let w = (1.0 + (rho / params.r).powi(2)).powf(-params.q0 / 2.0);
        w.powf(-1.0 / (p - 1.0)) * lap.abs().powf(pp)
    };
    let values = radii
        .par_iter()
        .map(|&rho| {
            let mut x = vec![0.0; d];
            x[0] = rho;
            let lap = frac_laplacian_pointwise(&field, &spec, &x, opts)?;
            Ok(integrand(rho, lap) * rho.powf(df))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut mid = 0.0;
    for j in 0..n {
        let w = if j == 0 {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        mid += w * values[j];
    }
    mid += values[n];
    mid *= du / 3.0;

    let origin = {
        let lap0 = frac_laplacian_pointwise(&field, &spec, &vec![0.0; d], opts)?;
        integrand(0.0, lap0) * radii[0].powf(df) / df
    };
    let far = {
        let c = spec.c_ds * field.l1_norm();
        let rf = radii[n];
        // integrand ~ (ρ/R)^{q0/(p-1)} (c ρ^{-d-2s})^{p'} ρ^{d-1}
        let e = params.q0 / (p - 1.0) - (df + 2.0 * s) * pp + df;
        let coef = params.r.powf(-params.q0 / (p - 1.0)) * c.powf(pp);
        coef * rf.powf(e) / (-e)
    };
    let area = sphere_area(d);
    Ok((area * (origin + mid + far), predicted))
}

/// `d - 2sp/(p-1)`.
pub fn predicted_space_exponent(d: usize, s: f64, p: f64) -> f64 {
    d as f64 - 2.0 * s * p / (p - 1.0)
}

/// Least-squares slope of `log value` against `log R`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(s: f64, d: usize, m: Method) -> FracLaplacianSpec {
        FracLaplacianSpec::new(s, d, m).unwrap()
    }

    #[test]
    fn normalization_known_values() {
        // d = 1, s = 1/2 gives 1/π.
        assert_relative_eq!(normalization(1, 0.5), 1.0 / PI, epsilon = 1e-14);
        // d = 3, s = 1/2 gives 1/π².
        assert_relative_eq!(normalization(3, 0.5), 1.0 / (PI * PI), epsilon = 1e-14);
    }

    #[test]
    fn weight_examples() {
        let w = WeightParams::new(1.0, 3.0, 1, 0.5).unwrap();
        assert_eq!(weight_value(&w, &[0.0]), 1.0);
        let w = WeightParams::new(2.0, 2.0, 2, 0.5).unwrap();
        assert_relative_eq!(weight_value(&w, &[2.0, 0.0]), 0.5, epsilon = 1e-15);
        let mut last = 1.0;
        for k in 0..50 {
            let v = weight_value(&w, &[0.3 * k as f64, 0.1]);
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn constants_are_annihilated() {
        let c = Constant { d: 1, c: 3.5 };
        for &s in &[0.25, 0.5, 0.75] {
            let v = frac_laplacian_pointwise(
                &c,
                &spec(s, 1, Method::SingularIntegral),
                &[0.7],
                &Default::default(),
            )
            .unwrap();
            assert!(v.abs() < 1e-12);
        }
        let c = Constant { d: 2, c: -1.0 };
        let v = frac_laplacian_pointwise(
            &c,
            &spec(0.6, 2, Method::SingularIntegral),
            &[0.7, 0.1],
            &Default::default(),
        )
        .unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn gaussian_methods_agree_d1() {
        let g = Gaussian {
            d: 1,
            amplitude: 1.0,
            width: 1.0,
        };
        let opts = FracLapOptions::default();
        let a =
            frac_laplacian_pointwise(&g, &spec(0.5, 1, Method::SingularIntegral), &[0.0], &opts)
                .unwrap();
        let b =
            frac_laplacian_pointwise(&g, &spec(0.5, 1, Method::FourierMultiplier), &[0.0], &opts)
                .unwrap();
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        // Closed form at the origin: (1/π)∫ k e^{-k²/4} √π dk = 2/√π.
        assert_relative_eq!(b, 2.0 / PI.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn compensation_radius_is_invisible() {
        let g = Gaussian {
            d: 1,
            amplitude: 1.0,
            width: 1.0,
        };
        let sp = spec(0.75, 1, Method::SingularIntegral);
        let o1 = FracLapOptions {
            compensation_radius: 0.3,
            ..Default::default()
        };
        let o2 = FracLapOptions {
            compensation_radius: 2.5,
            ..Default::default()
        };
        let a = frac_laplacian_pointwise(&g, &sp, &[0.4], &o1).unwrap();
        let b = frac_laplacian_pointwise(&g, &sp, &[0.4], &o2).unwrap();
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn missing_tail_is_an_error() {
        struct Bare;
        impl Field for Bare {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, x: &[f64]) -> f64 {
                (-x[0] * x[0]).exp()
            }
        }
        let r = frac_laplacian_pointwise(
            &Bare,
            &spec(0.5, 1, Method::SingularIntegral),
            &[0.0],
            &Default::default(),
        );
        assert!(matches!(r, Err(Error::Tail(_))));
    }

    #[test]
    fn bracket_methods_agree_d2_and_d3() {
        let opts = FracLapOptions::default();
        for &(d, q0) in &[(2usize, 3.0), (3, 4.0)] {
            let f = Bracket { d, q0, r: 1.0 };
            let mut x = vec![0.0; d];
            x[0] = 1.5;
            let a =
                frac_laplacian_pointwise(&f, &spec(0.5, d, Method::SingularIntegral), &x, &opts)
                    .unwrap();
            let b =
                frac_laplacian_pointwise(&f, &spec(0.5, d, Method::FourierMultiplier), &x, &opts)
                    .unwrap();
            assert!(
                (a - b).abs() < 1e-4 * b.abs().max(1e-3),
                "d={d}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn classical_dispatch_at_s_one() {
        let g = Gaussian {
            d: 1,
            amplitude: 1.0,
            width: 1.0,
        };
        let sp = spec(1.0, 1, Method::SingularIntegral);
        let (lhs, rhs) = scaling_identity_check(&g, &sp, 2.0, &[0.3], &Default::default()).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        let v = frac_laplacian_pointwise(&g, &sp, &[0.0], &Default::default()).unwrap();
        assert_relative_eq!(v, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn scaling_identity_bracket() {
        let f = Bracket {
            d: 1,
            q0: 3.0,
            r: 1.0,
        };
        let (lhs, rhs) = scaling_identity_check(
            &f,
            &spec(0.5, 1, Method::SingularIntegral),
            4.0,
            &[2.0],
            &Default::default(),
        )
        .unwrap();
        assert!((lhs - rhs).abs() < 1e-5, "{lhs} vs {rhs}");
        let (lhs, rhs) = scaling_identity_check(
            &f,
            &spec(0.5, 1, Method::SingularIntegral),
            1.0,
            &[2.0],
            &Default::default(),
        )
        .unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn weight_bound_ratio_is_stable() {
        let w = WeightParams::new(1.0, 2.0, 1, 0.5).unwrap();
        let pts: Vec<Vec<f64>> = [0.0, 1.0, 10.0, 100.0].iter().map(|&r| vec![r]).collect();
        let rep = weight_fraclap_bound_check(&w, &pts, &Default::default()).unwrap();
        assert!(rep.stable, "{rep:?}");
        assert!(rep.samples[0].value.is_finite());
    }

    #[test]
    fn capacity_hypothesis_boundaries() {
        let w = WeightParams::new(1.0, 5.0, 1, 1.0).unwrap();
        let r = capacity_space_integral(&w, 2.0, &Default::default());
        assert!(matches!(r, Err(Error::Hypothesis(m)) if m.contains("d + 2sp")));
        let w = WeightParams::new(1.0, 3.0, 2, 1.0).unwrap();
        assert!(w.check_capacity_hypothesis(2.0).is_ok());
        assert_eq!(predicted_space_exponent(2, 1.0, 2.0), -2.0);
    }

    #[test]
    fn capacity_slope_d1() {
        let rs = [1.0, 2.0, 4.0, 8.0];
        let mut vals = Vec::new();
        let mut pred = 0.0;
        for &r in &rs {
            let w = WeightParams::new(r, 1.5, 1, 0.5).unwrap();
            let (v, e) = capacity_space_integral(&w, 2.0, &Default::default()).unwrap();
            vals.push(v);
            pred = e;
        }
        assert_eq!(pred, -1.0);
        assert!((loglog_slope(&rs, &vals) - pred).abs() < 0.05);
    }
}
