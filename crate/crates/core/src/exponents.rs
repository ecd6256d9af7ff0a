//! Critical exponents, the `D`/`E` families of the two-component system,
//! the `h`/`H` max–min characterizations and the nonexistence classifiers.
//!
//! Everything algebraic is generic over [`Scalar`], implemented for `f64`
//! and for exact rationals (`BigRational`), so proof identities can be
//! checked with exact equality.

use std::collections::BTreeMap;
use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, ToPrimitive};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub trait Scalar: Clone + PartialOrd + Debug + Num {
    fn ratio(n: i64, d: i64) -> Self;
    fn to_f64(&self) -> f64;
    /// Equality for the boundary rows: exact for rationals, relative
    /// `1e-12` for floats.
    fn same(&self, other: &Self) -> bool;
}

impl Scalar for f64 {
    fn ratio(n: i64, d: i64) -> Self {
        n as f64 / d as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn same(&self, other: &Self) -> bool {
        (self - other).abs() <= 1e-12 * (1.0 + self.abs().max(other.abs()))
    }
}

impl Scalar for BigRational {
    fn ratio(n: i64, d: i64) -> Self {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn same(&self, other: &Self) -> bool {
        self == other
    }
}

fn max2<S: Scalar>(a: S, b: S) -> S {
    if a >= b {
        a
    } else {
        b
    }
}

fn min2<S: Scalar>(a: S, b: S) -> S {
    if a <= b {
        a
    } else {
        b
    }
}

/// Parameter bundle for the scalar, damped and coupled problems. `beta` is used by the damped
/// problem only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentInputs {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub gamma: f64,
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
    pub p: f64,
    pub q: f64,
    pub d: u32,
}

impl Default for ExponentInputs {
    fn default() -> Self {
        ExponentInputs {
            alpha: 1.0,
            beta: 2.0,
            delta: 2.0,
            gamma: 1.0,
            theta: 1.0,
            mu: 2.0,
            sigma: 2.0,
            p: 2.0,
            q: 2.0,
            d: 1,
        }
    }
}

fn in_range(field: &str, v: f64, lo: f64, hi: f64, open_lo: bool, text: &str) -> Result<()> {
    let ok_lo = if open_lo { v > lo } else { v >= lo };
    if !(ok_lo && v <= hi) {
        return Err(Error::param(field, format!("must lie in {text}, got {v}")));
    }
    Ok(())
}

impl ExponentInputs {
    /// Range checks for the scalar problem.
    pub fn validate_scalar(&self) -> Result<()> {
        in_range("alpha", self.alpha, 0.0, 1.0, true, "(0,1]")?;
        in_range("delta", self.delta, 0.0, 2.0, true, "(0,2]")?;
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::param("p", format!("must exceed 1, got {}", self.p)));
        }
        if self.d < 1 {
            return Err(Error::param("d", "dimension must be at least 1"));
        }
        Ok(())
    }

    pub fn validate_damped(&self) -> Result<()> {
        self.validate_scalar()?;
        if !(self.beta > 1.0 && self.beta <= 2.0) {
            return Err(Error::param(
                "beta",
                format!("must lie in (1,2], got {}", self.beta),
            ));
        }
        Ok(())
    }

    pub fn validate_system(&self) -> Result<()> {
        in_range("gamma", self.gamma, 0.0, 1.0, true, "(0,1]")?;
        in_range("theta", self.theta, 0.0, 1.0, true, "(0,1]")?;
        in_range("mu", self.mu, 0.0, 2.0, true, "(0,2]")?;
        in_range("sigma", self.sigma, 0.0, 2.0, true, "(0,2]")?;
        for (name, v) in [("p", self.p), ("q", self.q)] {
            if !(v > 1.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must exceed 1, got {v}")));
            }
        }
        if self.d < 1 {
            return Err(Error::param("d", "dimension must be at least 1"));
        }
        Ok(())
    }

    pub fn system(&self) -> SystemParams<f64> {
        SystemParams {
            gamma: self.gamma,
            theta: self.theta,
            mu: self.mu,
            sigma: self.sigma,
            p: self.p,
            q: self.q,
        }
    }
}

/// `1 + αδ / (αd + δ(1 - α))`.
pub fn p_star<S: Scalar>(alpha: &S, delta: &S, d: &S) -> S {
    let one = S::one();
    one.clone()
        + alpha.clone() * delta.clone()
            / (alpha.clone() * d.clone() + delta.clone() * (one - alpha.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Nonexistence,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub verdict: Verdict,
    /// Tags of every condition that evaluated true; empty when undetermined.
    pub fired: Vec<String>,
    pub numbers: BTreeMap<String, f64>,
}

impl RegimeReport {
    pub fn fired_condition(&self) -> String {
        self.fired.join("; ")
    }
}

/// Scalar problem: nonexistence iff `p < p*`, or `p ≤ p*` when `α = 1`.
pub fn theorem1_classify<S: Scalar>(alpha: &S, delta: &S, d: &S, p: &S) -> RegimeReport {
    let ps = p_star(alpha, delta, d);
    let mut fired = Vec::new();
    if *p < ps {
        fired.push("Thm1 p<p*".to_string());
    } else if *alpha == S::one() && p.same(&ps) {
        fired.push("Thm1 p=p* (alpha=1)".to_string());
    }
    let mut numbers = BTreeMap::new();
    numbers.insert("p".into(), p.to_f64());
    numbers.insert("p_star".into(), ps.to_f64());
    RegimeReport {
        verdict: if fired.is_empty() {
            Verdict::Undetermined
        } else {
            Verdict::Nonexistence
        },
        fired,
        numbers,
    }
}

/// Damped problem: the same inequality on `(α, δ, d)`; `β` enters the
/// capacity terms only.
pub fn theorem3_classify<S: Scalar>(alpha: &S, beta: &S, delta: &S, d: &S, p: &S) -> RegimeReport {
    let mut r = theorem1_classify(alpha, delta, d, p);
    for tag in r.fired.iter_mut() {
        *tag = tag.replacen("Thm1", "Thm3", 1);
    }
    r.numbers.insert("beta".into(), beta.to_f64());
    r
}

pub fn theorem1_classify_inputs(inputs: &ExponentInputs) -> Result<RegimeReport> {
    inputs.validate_scalar()?;
    Ok(theorem1_classify(
        &inputs.alpha,
        &inputs.delta,
        &(inputs.d as f64),
        &inputs.p,
    ))
}

pub fn theorem3_classify_inputs(inputs: &ExponentInputs) -> Result<RegimeReport> {
    inputs.validate_damped()?;
    Ok(theorem3_classify(
        &inputs.alpha,
        &inputs.beta,
        &inputs.delta,
        &(inputs.d as f64),
        &inputs.p,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams<S> {
    pub gamma: S,
    pub theta: S,
    pub mu: S,
    pub sigma: S,
    pub p: S,
    pub q: S,
}

impl<S: Scalar> SystemParams<S> {
    /// `(γ, μ, p) ↔ (θ, σ, q)`.
    pub fn swapped(&self) -> Self {
        SystemParams {
            gamma: self.theta.clone(),
            theta: self.gamma.clone(),
            mu: self.sigma.clone(),
            sigma: self.mu.clone(),
            p: self.q.clone(),
            q: self.p.clone(),
        }
    }

    fn pq1(&self) -> S {
        self.p.clone() * self.q.clone() - S::one()
    }

    /// `θp + γpq - pq + 1`.
    pub fn kappa_d(&self) -> S {
        let pq = self.p.clone() * self.q.clone();
        self.theta.clone() * self.p.clone() + self.gamma.clone() * pq.clone() - pq + S::one()
    }

    /// `γq + θpq - pq + 1`.
    pub fn kappa_e(&self) -> S {
        self.swapped().kappa_d()
    }

    /// The two positivity hypotheses.
    pub fn check_hypotheses(&self) -> Result<()> {
        if !(self.p.clone() * self.q.clone() > S::one()) {
            return Err(Error::Hypothesis("pq > 1 fails".into()));
        }
        if !(self.kappa_d() > S::zero()) {
            return Err(Error::Hypothesis(format!(
                "theta p + gamma pq - pq + 1 > 0 fails (value {})",
                self.kappa_d().to_f64()
            )));
        }
        if !(self.kappa_e() > S::zero()) {
            return Err(Error::Hypothesis(format!(
                "gamma q + theta pq - pq + 1 > 0 fails (value {})",
                self.kappa_e().to_f64()
            )));
        }
        Ok(())
    }

    pub fn to_f64(&self) -> SystemParams<f64> {
        SystemParams {
            gamma: self.gamma.to_f64(),
            theta: self.theta.to_f64(),
            mu: self.mu.to_f64(),
            sigma: self.sigma.to_f64(),
            p: self.p.to_f64(),
            q: self.q.to_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Family<S> {
    pub values: [S; 4],
    pub bar: S,
}

fn d_raw<S: Scalar>(s: &SystemParams<S>) -> [S; 4] {
    let (g, t, m, sg, p, q) = (
        s.gamma.clone(),
        s.theta.clone(),
        s.mu.clone(),
        s.sigma.clone(),
        s.p.clone(),
        s.q.clone(),
    );
    let pq = p.clone() * q.clone();
    let pq1 = s.pq1();
    let kd = s.kappa_d();
    let d1 = (t.clone() * sg.clone() * p.clone() + t.clone() * m.clone() * pq.clone()
        - sg.clone() * pq.clone()
        + sg.clone())
        / (t.clone() * pq1.clone());
    let d2 = m.clone() * kd.clone() / (g.clone() * pq1.clone());
    let d3 = (g.clone() * sg.clone() * p + g.clone() * m.clone() * pq.clone() - m.clone() * pq + m)
        / (g * pq1.clone());
    let d4 = sg * kd / (t * pq1);
    [d1, d2, d3, d4]
}

fn e_raw<S: Scalar>(s: &SystemParams<S>) -> [S; 4] {
    let (g, t, m, sg, p, q) = (
        s.gamma.clone(),
        s.theta.clone(),
        s.mu.clone(),
        s.sigma.clone(),
        s.p.clone(),
        s.q.clone(),
    );
    let pq = p.clone() * q.clone();
    let pq1 = s.pq1();
    let ke = s.kappa_e();
    let e1 = (t.clone() * m.clone() * q.clone() + t.clone() * sg.clone() * pq.clone()
        - sg.clone() * pq.clone()
        + sg.clone())
        / (t.clone() * pq1.clone());
    let e2 = m.clone() * ke.clone() / (g.clone() * pq1.clone());
    let e3 = (g.clone() * m.clone() * q + g.clone() * sg.clone() * pq.clone() - m.clone() * pq + m)
        / (g * pq1.clone());
    let e4 = sg * ke / (t * pq1);
    [e1, e2, e3, e4]
}

fn aggregate<S: Scalar>(v: [S; 4]) -> Family<S> {
    let bar = min2(
        max2(v[0].clone(), v[1].clone()),
        max2(v[2].clone(), v[3].clone()),
    );
    Family { values: v, bar }
}

/// `D₁..D₄` and `D̄ = min{max{D₁,D₂}, max{D₃,D₄}}`.
pub fn d_exponents<S: Scalar>(s: &SystemParams<S>) -> Result<Family<S>> {
    s.check_hypotheses()?;
    Ok(aggregate(d_raw(s)))
}

/// `E₁..E₄` and `Ē`.
pub fn e_exponents<S: Scalar>(s: &SystemParams<S>) -> Result<Family<S>> {
    s.check_hypotheses()?;
    Ok(aggregate(e_raw(s)))
}

/// `h_i(d₀)`, `i ∈ 1..=4`.
pub fn h<S: Scalar>(s: &SystemParams<S>, i: usize, d0: &S) -> S {
    let (g, t, m, sg, p, q) = (
        s.gamma.clone(),
        s.theta.clone(),
        s.mu.clone(),
        s.sigma.clone(),
        s.p.clone(),
        s.q.clone(),
    );
    let pq = p.clone() * q.clone();
    let pq1 = s.pq1();
    let one = S::one();
    match i {
        1 => (p * (t + g * q) - pq + one) / (d0.clone() * pq1),
        2 => (p * (t + d0.clone() * m * q) - pq + one) / (d0.clone() * pq1),
        3 => (p * (sg * d0.clone() + g * q) - pq + one) / (d0.clone() * pq1),
        4 => p * (sg + m * q) / pq1 - one / d0.clone(),
        _ => panic!("h index must be 1..=4"),
    }
}

/// `H_i(d₀)`: the q-leading family that controls the `ρᵢ` exponents.
pub fn big_h<S: Scalar>(s: &SystemParams<S>, i: usize, d0: &S) -> S {
    let (g, t, m, sg, p, q) = (
        s.gamma.clone(),
        s.theta.clone(),
        s.mu.clone(),
        s.sigma.clone(),
        s.p.clone(),
        s.q.clone(),
    );
    let pq = p.clone() * q.clone();
    let pq1 = s.pq1();
    let one = S::one();
    match i {
        1 => (q * (g + t * p) - pq + one) / (d0.clone() * pq1),
        2 => (q * (g + d0.clone() * sg * p) - pq + one) / (d0.clone() * pq1),
        3 => (q * (m * d0.clone() + t * p) - pq + one) / (d0.clone() * pq1),
        4 => q * (m + sg * p) / pq1 - one / d0.clone(),
        _ => panic!("H index must be 1..=4"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HFamily {
    Lower,
    Upper,
}

fn envelope(s: &SystemParams<f64>, fam: HFamily, d0: f64) -> f64 {
    (1..=4)
        .map(|i| match fam {
            HFamily::Lower => h(s, i, &d0),
            HFamily::Upper => big_h(s, i, &d0),
        })
        .fold(f64::INFINITY, f64::min)
}

/// `max_{d₀} min_i h_i(d₀)` (or the `H` family): coarse evaluation on the
/// grid followed by golden-section refinement in `y = 1/d₀`, where every
/// member is affine and the envelope is therefore concave.
pub fn maxmin(s: &SystemParams<f64>, fam: HFamily, d0_grid: &[f64]) -> Result<f64> {
    Ok(maxmin_point(s, fam, d0_grid)?.1)
}

/// As [`maxmin`], also returning the maximizing `d₀`.
pub fn maxmin_point(s: &SystemParams<f64>, fam: HFamily, d0_grid: &[f64]) -> Result<(f64, f64)> {
    s.check_hypotheses()?;
    let mut grid: Vec<f64> = d0_grid.iter().copied().filter(|v| *v > 0.0).collect();
    grid.sort_by(f64::total_cmp);
    if grid.len() < 3 {
        return Err(Error::param(
            "d0_grid",
            "needs at least three positive points",
        ));
    }
    let a = s.theta / s.sigma;
    let b = s.gamma / s.mu;
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    if !(lo < a.min(b) && hi > a.max(b)) {
        return Err(Error::param(
            "d0_grid",
            format!("grid [{lo}, {hi}] does not bracket the breakpoints {{{a}, {b}}}"),
        ));
    }
    grid.push(a);
    grid.push(b);
    grid.sort_by(f64::total_cmp);
    let vals: Vec<f64> = grid.iter().map(|&x| envelope(s, fam, x)).collect();
    let k = vals
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let x_lo = grid[k.saturating_sub(1)];
    let x_hi = grid[(k + 1).min(grid.len() - 1)];
    let f = |y: f64| envelope(s, fam, 1.0 / y);
    let (mut ya, mut yb) = (1.0 / x_hi, 1.0 / x_lo);
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = yb - gr * (yb - ya);
    let mut d = ya + gr * (yb - ya);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (yb - ya).abs() <= 1e-15 * yb.abs() {
            break;
        }
        if fc >= fd {
            yb = d;
            d = c;
            fd = fc;
            c = yb - gr * (yb - ya);
            fc = f(c);
        } else {
            ya = c;
            c = d;
            fc = fd;
            d = ya + gr * (yb - ya);
            fd = f(d);
        }
    }
    let best = [(grid[k], vals[k]), (1.0 / c, fc), (1.0 / d, fd)]
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((grid[k], vals[k]));
    Ok(best)
}

/// A log-spaced grid that brackets the breakpoints `θ/σ`, `γ/μ` by three
/// decades on each side.
pub fn default_d0_grid(s: &SystemParams<f64>, points: usize) -> Vec<f64> {
    let a = (s.theta / s.sigma).min(s.gamma / s.mu) * 1e-3;
    let b = (s.theta / s.sigma).max(s.gamma / s.mu) * 1e3;
    let n = points.max(3);
    (0..n)
        .map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// Identities between the families at the breakpoints, as `(name, lhs, rhs)`.
pub fn endpoint_identities<S: Scalar>(s: &SystemParams<S>) -> Result<Vec<(String, S, S)>> {
    let dd = d_exponents(s)?;
    let ee = e_exponents(s)?;
    let a = s.theta.clone() / s.sigma.clone();
    let b = s.gamma.clone() / s.mu.clone();
    let [d1, d2, d3, d4] = dd.values;
    let [e1, e2, e3, e4] = ee.values;
    let rows = vec![
        ("h2(theta/sigma)=D1", h(s, 2, &a), d1.clone()),
        ("h4(theta/sigma)=D1", h(s, 4, &a), d1),
        ("h2(gamma/mu)=D2", h(s, 2, &b), d2.clone()),
        ("h1(gamma/mu)=D2", h(s, 1, &b), d2),
        ("h3(gamma/mu)=D3", h(s, 3, &b), d3.clone()),
        ("h4(gamma/mu)=D3", h(s, 4, &b), d3),
        ("h3(theta/sigma)=D4", h(s, 3, &a), d4.clone()),
        ("h1(theta/sigma)=D4", h(s, 1, &a), d4),
        ("H3(theta/sigma)=E1", big_h(s, 3, &a), e1.clone()),
        ("H4(theta/sigma)=E1", big_h(s, 4, &a), e1),
        ("H3(gamma/mu)=E2", big_h(s, 3, &b), e2.clone()),
        ("H1(gamma/mu)=E2", big_h(s, 1, &b), e2),
        ("H2(gamma/mu)=E3", big_h(s, 2, &b), e3.clone()),
        ("H4(gamma/mu)=E3", big_h(s, 4, &b), e3),
        ("H2(theta/sigma)=E4", big_h(s, 2, &a), e4.clone()),
        ("H1(theta/sigma)=E4", big_h(s, 1, &a), e4),
    ];
    Ok(rows
        .into_iter()
        .map(|(n, l, r)| (n.to_string(), l, r))
        .collect())
}

/// The system classifier. Every row whose literal condition holds is listed.
pub fn theorem2_classify<S: Scalar>(s: &SystemParams<S>, d: &S) -> Result<RegimeReport> {
    let dd = d_exponents(s)?;
    let ee = e_exponents(s)?;
    let one = S::one();
    let pq = s.p.clone() * s.q.clone();
    let mut fired = Vec::new();
    if *d < max2(dd.bar.clone(), ee.bar.clone()) {
        fired.push("Thm2 d<max{Dbar,Ebar}".to_string());
    }
    let theta1 = s.theta == one;
    let gamma1 = s.gamma == one;
    if d.same(&dd.bar) && theta1 {
        if !gamma1 && pq > one.clone() / (one.clone() - s.gamma.clone()) {
            fired.push("Thm2 row1 d=Dbar, theta=1, gamma!=1, pq>1/(1-gamma)".to_string());
        }
        let bound =
            s.p.clone() * (s.q.clone() - one.clone()) / (s.q.clone() * (s.p.clone() - one.clone()));
        if s.gamma <= one && s.gamma <= bound {
            fired.push("Thm2 row2 d=Dbar, theta=1, gamma<=p(q-1)/(q(p-1))".to_string());
        }
    }
    if d.same(&ee.bar) && gamma1 {
        if !theta1 && pq > one.clone() / (one.clone() - s.theta.clone()) {
            fired.push("Thm2 row3 d=Ebar, gamma=1, theta!=1, pq>1/(1-theta)".to_string());
        }
        let bound =
            s.q.clone() * (s.p.clone() - one.clone()) / (s.p.clone() * (s.q.clone() - one.clone()));
        if s.theta <= one && s.theta <= bound {
            fired.push("Thm2 row4 d=Ebar, gamma=1, theta<=q(p-1)/(p(q-1))".to_string());
        }
    }
    let mut numbers = BTreeMap::new();
    for (i, v) in dd.values.iter().enumerate() {
        numbers.insert(format!("D{}", i + 1), v.to_f64());
    }
    for (i, v) in ee.values.iter().enumerate() {
        numbers.insert(format!("E{}", i + 1), v.to_f64());
    }
    numbers.insert("Dbar".into(), dd.bar.to_f64());
    numbers.insert("Ebar".into(), ee.bar.to_f64());
    numbers.insert("d".into(), d.to_f64());
    Ok(RegimeReport {
        verdict: if fired.is_empty() {
            Verdict::Undetermined
        } else {
            Verdict::Nonexistence
        },
        fired,
        numbers,
    })
}

pub fn theorem2_classify_inputs(inputs: &ExponentInputs) -> Result<RegimeReport> {
    inputs.validate_system()?;
    theorem2_classify(&inputs.system(), &(inputs.d as f64))
}

/// Uniform draw of system parameters satisfying both positivity hypotheses.
pub fn sample_system<R: Rng>(rng: &mut R) -> SystemParams<f64> {
    loop {
        let s = SystemParams {
            gamma: rng.gen_range(0.05..=1.0),
            theta: rng.gen_range(0.05..=1.0),
            mu: rng.gen_range(0.05..=2.0),
            sigma: rng.gen_range(0.05..=2.0),
            p: rng.gen_range(1.05..6.0),
            q: rng.gen_range(1.05..6.0),
        };
        if s.kappa_d() > 1e-3 && s.kappa_e() > 1e-3 {
            return s;
        }
    }
}

/// Rational draw with small denominators satisfying both hypotheses.
pub fn sample_system_rational<R: Rng>(rng: &mut R) -> SystemParams<BigRational> {
    let r =
        |rng: &mut R, lo: i64, hi: i64, den: i64| BigRational::ratio(rng.gen_range(lo..=hi), den);
    loop {
        let s = SystemParams {
            gamma: r(rng, 1, 12, 12),
            theta: r(rng, 1, 12, 12),
            mu: r(rng, 1, 24, 12),
            sigma: r(rng, 1, 24, 12),
            p: r(rng, 11, 60, 10),
            q: r(rng, 11, 60, 10),
        };
        if s.kappa_d() > BigRational::from_integer(0.into())
            && s.kappa_e() > BigRational::from_integer(0.into())
        {
            return s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::ratio(n, d)
    }

    fn symmetric(p: f64, qq: f64) -> SystemParams<f64> {
        SystemParams {
            gamma: 1.0,
            theta: 1.0,
            mu: 2.0,
            sigma: 2.0,
            p,
            q: qq,
        }
    }

    #[test]
    fn p_star_examples() {
        assert_eq!(p_star(&1.0, &2.0, &1.0), 3.0);
        assert_eq!(p_star(&1.0, &2.0, &2.0), 2.0);
        assert_eq!(p_star(&q(1, 2), &q(2, 1), &q(1, 1)), q(5, 3));
    }

    #[test]
    fn p_star_monotone() {
        let mut last = 0.0;
        for k in 1..=20 {
            let v = p_star(&0.6, &(0.1 * k as f64), &2.0);
            assert!(v > last);
            last = v;
        }
        let mut last = f64::INFINITY;
        for d in 1..10 {
            let v = p_star(&0.6, &1.5, &(d as f64));
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn theorem1_examples() {
        assert_eq!(
            theorem1_classify(&1.0, &2.0, &1.0, &3.0).verdict,
            Verdict::Nonexistence
        );
        assert_eq!(
            theorem1_classify(&q(1, 2), &q(2, 1), &q(1, 1), &q(5, 3)).verdict,
            Verdict::Undetermined
        );
        assert_eq!(
            theorem1_classify(&0.5, &2.0, &1.0, &(5.0 / 3.0)).verdict,
            Verdict::Undetermined
        );
        assert_eq!(
            theorem1_classify(&0.3, &1.0, &3.0, &10.0).verdict,
            Verdict::Undetermined
        );
        assert_eq!(
            theorem1_classify(&0.3, &1.0, &3.0, &1.0001).verdict,
            Verdict::Nonexistence
        );
    }

    #[test]
    fn theorem3_examples() {
        let r = theorem3_classify(&1.0, &2.0, &2.0, &1.0, &3.0);
        assert_eq!(r.verdict, Verdict::Nonexistence);
        assert!(r.fired[0].starts_with("Thm3"));
        assert_eq!(
            theorem3_classify(&q(1, 2), &q(3, 2), &q(2, 1), &q(1, 1), &q(5, 3)).verdict,
            Verdict::Undetermined
        );
    }

    #[test]
    fn symmetric_case_values() {
        let d = d_exponents(&symmetric(2.0, 2.0)).unwrap();
        let e = e_exponents(&symmetric(2.0, 2.0)).unwrap();
        assert_relative_eq!(d.bar, 2.0, epsilon = 1e-14);
        assert_relative_eq!(e.bar, 2.0, epsilon = 1e-14);
        let s = SystemParams {
            gamma: q(1, 1),
            theta: q(1, 1),
            mu: q(2, 1),
            sigma: q(2, 1),
            p: q(2, 1),
            q: q(3, 1),
        };
        assert_eq!(d_exponents(&s).unwrap().bar, q(6, 5));
        assert_eq!(e_exponents(&s).unwrap().bar, q(8, 5));
    }

    #[test]
    fn symmetry_swaps_families() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let s = sample_system_rational(&mut rng);
            let d = d_exponents(&s.swapped()).unwrap();
            let e = e_exponents(&s).unwrap();
            assert_eq!(d.bar, e.bar);
            let mut a = d.values.to_vec();
            let mut b = e.values.to_vec();
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn maxmin_matches_aggregates() {
        let s = symmetric(2.0, 2.0);
        let g = default_d0_grid(&s, 200);
        assert_relative_eq!(maxmin(&s, HFamily::Lower, &g).unwrap(), 2.0, epsilon = 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let s = sample_system(&mut rng);
            let g = default_d0_grid(&s, 120);
            let dbar = d_exponents(&s).unwrap().bar;
            let ebar = e_exponents(&s).unwrap().bar;
            assert!(
                (maxmin(&s, HFamily::Lower, &g).unwrap() - dbar).abs() < 1e-8 * (1.0 + dbar.abs())
            );
            assert!(
                (maxmin(&s, HFamily::Upper, &g).unwrap() - ebar).abs() < 1e-8 * (1.0 + ebar.abs())
            );
        }
    }

    #[test]
    fn maxmin_rejects_coarse_grid() {
        let s = symmetric(2.0, 2.0);
        assert!(maxmin(&s, HFamily::Lower, &[0.6, 1.0, 2.0]).is_err());
    }

    #[test]
    fn h_limits_and_identity() {
        let s = symmetric(2.0, 3.0);
        let a = s.theta / s.sigma;
        assert_relative_eq!(h(&s, 2, &a), h(&s, 4, &a), epsilon = 1e-14);
        let big = 1e12;
        assert_relative_eq!(
            h(&s, 4, &big),
            s.p * (s.sigma + s.mu * s.q) / (s.p * s.q - 1.0),
            epsilon = 1e-10
        );
    }

    #[test]
    fn endpoint_identities_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let s = sample_system_rational(&mut rng);
            for (name, l, r) in endpoint_identities(&s).unwrap() {
                assert_eq!(l, r, "{name}");
            }
        }
    }

    #[test]
    fn h2_monotonicity_switch() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let s = sample_system(&mut rng);
            let xs: Vec<f64> = (1..50).map(|k| 0.05 * k as f64).collect();
            let non_increasing = xs
                .windows(2)
                .all(|w| h(&s, 2, &w[1]) <= h(&s, 2, &w[0]) + 1e-12);
            assert_eq!(non_increasing, s.p * (s.q - s.theta) <= 1.0);
        }
    }

    #[test]
    fn theorem2_examples() {
        let s = symmetric(2.0, 2.0);
        let r = theorem2_classify(&s, &1.0).unwrap();
        assert_eq!(r.verdict, Verdict::Nonexistence);
        assert_eq!(r.fired, vec!["Thm2 d<max{Dbar,Ebar}".to_string()]);
        assert_eq!(
            theorem2_classify(&s, &3.0).unwrap().verdict,
            Verdict::Undetermined
        );

        let s = SystemParams {
            gamma: q(1, 2),
            theta: q(1, 1),
            mu: q(1, 1),
            sigma: q(2, 1),
            p: q(3, 2),
            q: q(2, 1),
        };
        assert_eq!(d_exponents(&s).unwrap().bar, q(1, 1));
        let r = theorem2_classify(&s, &q(1, 1)).unwrap();
        assert_eq!(r.verdict, Verdict::Nonexistence);
        assert!(r.fired.iter().any(|t| t.contains("row1")));
    }

    #[test]
    fn hypotheses_enforced() {
        let s = SystemParams {
            gamma: 0.1,
            theta: 0.1,
            mu: 1.0,
            sigma: 1.0,
            p: 5.0,
            q: 5.0,
        };
        assert!(matches!(d_exponents(&s), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn input_validation_names_fields() {
        let bad = ExponentInputs {
            delta: 3.0,
            ..Default::default()
        };
        match bad.validate_scalar() {
            Err(Error::InvalidParameter { field, message }) => {
                assert_eq!(field, "delta");
                assert!(message.contains("(0,2]"));
            }
            other => panic!("{other:?}"),
        }
    }
}
