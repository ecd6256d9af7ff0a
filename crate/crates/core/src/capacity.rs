//! Assembly of the capacity right-hand sides and their sign analysis.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::{
    default_d0_grid, maxmin_point, p_star, ExponentInputs, HFamily, Scalar, SystemParams,
};
use crate::frac_space::{capacity_space_integral, FracLapOptions, WeightParams};
use crate::frac_time::{capacity_time_integral_quadrature, default_mu, TestFunctionParams};
use crate::quad::QuadOptions;
use crate::special::gamma_ratio;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TermLabel {
    DataTerm,
    TimeCapacity,
    SpaceCapacity,
    Mixed,
}

/// `coefficient · T^t_exp · R^r_exp · K^k_exp`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Term {
    pub name: String,
    pub label: TermLabel,
    pub coefficient: f64,
    pub t_exp: f64,
    pub r_exp: f64,
    pub k_exp: f64,
    /// Filled from outside (the windowed solution norm).
    pub tail: bool,
    /// Coefficient is `1.0` standing in for an implied constant.
    pub placeholder: bool,
}

/// `R = K^k_power · T^t_power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RRule {
    pub t_power: f64,
    pub k: f64,
    pub k_power: f64,
}

impl RRule {
    pub fn power(t_power: f64) -> Self {
        RRule {
            t_power,
            k: 1.0,
            k_power: 0.0,
        }
    }

    pub fn radius(&self, t: f64) -> f64 {
        self.k.powf(self.k_power) * t.powf(self.t_power)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataNorms {
    pub u0: f64,
    pub u1: f64,
    pub v0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityBound {
    pub terms: Vec<Term>,
    pub substitution: RRule,
    pub data_norms: DataNorms,
}

impl Term {
    fn new(name: &str, label: TermLabel, coefficient: f64, t_exp: f64, r_exp: f64) -> Self {
        Term {
            name: name.to_string(),
            label,
            coefficient,
            t_exp,
            r_exp,
            k_exp: 0.0,
            tail: false,
            placeholder: false,
        }
    }

    /// Exponent of `T` after the R-rule substitution.
    pub fn collapsed_exponent(&self, rule: &RRule) -> f64 {
        self.t_exp + self.r_exp * rule.t_power
    }

    pub fn value_at(&self, t: f64, r: f64, k: f64) -> f64 {
        if self.coefficient == 0.0 {
            return 0.0;
        }
        self.coefficient * t.powf(self.t_exp) * r.powf(self.r_exp) * k.powf(self.k_exp)
    }
}

impl CapacityBound {
    pub fn term_values(&self, t: f64) -> Vec<f64> {
        let r = self.substitution.radius(t);
        self.terms
            .iter()
            .map(|term| term.value_at(t, r, self.substitution.k))
            .collect()
    }

    /// Sum of all terms at horizon `t` with `R` from the substitution rule.
    pub fn evaluate(&self, t: f64) -> f64 {
        self.term_values(t).iter().sum()
    }

    pub fn collapsed_exponents(&self) -> Vec<f64> {
        self.terms
            .iter()
            .map(|t| t.collapsed_exponent(&self.substitution))
            .collect()
    }

    /// Largest collapsed exponent among non-tail terms with nonzero coefficient.
    pub fn dominant_exponent(&self) -> f64 {
        self.terms
            .iter()
            .filter(|t| !t.tail && t.coefficient != 0.0)
            .map(|t| t.collapsed_exponent(&self.substitution))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Replaces every placeholder coefficient carrying `label`.
    pub fn with_constant(mut self, label: TermLabel, c: f64) -> Self {
        for t in self
            .terms
            .iter_mut()
            .filter(|t| t.label == label && t.placeholder)
        {
            t.coefficient = c;
            t.placeholder = false;
        }
        self
    }

    /// Sets the value of the tail hook.
    pub fn with_tail(mut self, tail: f64) -> Self {
        for t in self.terms.iter_mut().filter(|t| t.tail) {
            t.coefficient = tail;
        }
        self
    }

    /// CSV with columns `T`, one per term, `total`.
    pub fn write_trace<W: Write>(&self, ts: &[f64], w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["T".to_string()];
        header.extend(self.terms.iter().map(|t| t.name.clone()));
        header.push("total".into());
        wr.write_record(&header)?;
        for &t in ts {
            let vals = self.term_values(t);
            let total: f64 = vals.iter().sum();
            let mut row = vec![t.to_string()];
            row.extend(vals.iter().map(|v| v.to_string()));
            row.push(total.to_string());
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// `T = 1, 10, ..., 10⁶`.
pub fn default_bound_times() -> Vec<f64> {
    (0..=6).map(|k| 10f64.powi(k)).collect()
}

fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

/// The substitution `R = T^{α/δ}`.
pub fn standard_rule(inputs: &ExponentInputs) -> RRule {
    RRule::power(inputs.alpha / inputs.delta)
}

/// Time-cutoff exponent used for the closed-form constants.
pub fn cutoff_mu(order: f64, p: f64) -> f64 {
    default_mu(order).max(order * conjugate(p) + 1.0)
}

/// `T^{-α}‖u0‖₁ + R^d T^{1-αp′} + T R^{d-δp′}`.
///
/// The data coefficient carries `Γ(μ+1)/Γ(μ+1-α)` from the cutoff; the
/// capacity terms are unit placeholders until filled by
/// [`numeric_constants`].
pub fn scalar_bound(
    inputs: &ExponentInputs,
    norms: &DataNorms,
    rule: RRule,
) -> Result<CapacityBound> {
    inputs.validate_scalar()?;
    let (a, dl, p, d) = (inputs.alpha, inputs.delta, inputs.p, inputs.d as f64);
    let pp = conjugate(p);
    let mu = cutoff_mu(a, p);
    let mut time = Term::new(
        "time-capacity",
        TermLabel::TimeCapacity,
        1.0,
        1.0 - a * pp,
        d,
    );
    time.placeholder = true;
    let mut space = Term::new(
        "space-capacity",
        TermLabel::SpaceCapacity,
        1.0,
        1.0,
        d - dl * pp,
    );
    space.placeholder = true;
    Ok(CapacityBound {
        terms: vec![
            Term::new(
                "data-u0",
                TermLabel::DataTerm,
                norms.u0 * gamma_ratio(mu + 1.0, mu + 1.0 - a),
                -a,
                0.0,
            ),
            time,
            space,
        ],
        substitution: rule,
        data_norms: *norms,
    })
}

/// Adds `T^{-(β-1)}‖u1‖₁` and `R^d T^{1-βp′}` to the scalar bound.
pub fn scalar_bound_damped(
    inputs: &ExponentInputs,
    norms: &DataNorms,
    rule: RRule,
) -> Result<CapacityBound> {
    inputs.validate_damped()?;
    let mut b = scalar_bound(inputs, norms, rule)?;
    let (beta, p, d) = (inputs.beta, inputs.p, inputs.d as f64);
    let mu = cutoff_mu(beta, p);
    b.terms.insert(
        1,
        Term::new(
            "data-u1",
            TermLabel::DataTerm,
            norms.u1 * gamma_ratio(mu + 1.0, mu + 2.0 - beta),
            -(beta - 1.0),
            0.0,
        ),
    );
    let mut t = Term::new(
        "time-capacity-beta",
        TermLabel::TimeCapacity,
        1.0,
        1.0 - beta * conjugate(p),
        d,
    );
    t.placeholder = true;
    b.terms.insert(3, t);
    Ok(b)
}

/// `T^{-α}‖u0‖₁ + K^{-1} + K^{d/p′}·tail` under `R = (KT)^{α/δ}`; only
/// defined at `α = 1`, `p = p*`.
pub fn boundary_bound_k(
    inputs: &ExponentInputs,
    norms: &DataNorms,
    k: f64,
    tail: f64,
) -> Result<CapacityBound> {
    inputs.validate_scalar()?;
    let d = inputs.d as f64;
    if inputs.alpha != 1.0 {
        return Err(Error::Case(format!(
            "K-refinement requires alpha = 1, got {}",
            inputs.alpha
        )));
    }
    let ps = p_star(&inputs.alpha, &inputs.delta, &d);
    if !inputs.p.same(&ps) {
        return Err(Error::Case(format!(
            "K-refinement requires p = p* = {ps}, got {}",
            inputs.p
        )));
    }
    if !(k >= 1.0) {
        return Err(Error::param("K", "must be at least 1"));
    }
    let rule = RRule {
        t_power: inputs.alpha / inputs.delta,
        k,
        k_power: inputs.alpha / inputs.delta,
    };
    let mu = cutoff_mu(inputs.alpha, inputs.p);
    let mut inv_k = Term::new("K-inverse", TermLabel::Mixed, 1.0, 0.0, 0.0);
    inv_k.k_exp = -1.0;
    inv_k.placeholder = true;
    let mut tail_term = Term::new("tail", TermLabel::Mixed, tail, 0.0, 0.0);
    tail_term.k_exp = d / conjugate(inputs.p);
    tail_term.tail = true;
    Ok(CapacityBound {
        terms: vec![
            Term::new(
                "data-u0",
                TermLabel::DataTerm,
                norms.u0 * gamma_ratio(mu + 1.0, mu + 1.0 - inputs.alpha),
                -inputs.alpha,
                0.0,
            ),
            inv_k,
            tail_term,
        ],
        substitution: rule,
        data_norms: *norms,
    })
}

/// Constants for the scalar bound: the time-capacity coefficient
/// `C_time·‖Φ₁‖₁` and the space-capacity coefficient `C_space/(μ+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NumericConstants {
    pub time: f64,
    pub space: f64,
}

/// Computes the capacity constants by quadrature at `T = R = 1`, using the
/// weight with decay `q0` (which must satisfy `d < q0 < d + δp`).
pub fn numeric_constants(inputs: &ExponentInputs, q0: f64, order: f64) -> Result<NumericConstants> {
    let p = inputs.p;
    let mu = cutoff_mu(order, p);
    let tf = TestFunctionParams::power(1.0, mu)?;
    let time = capacity_time_integral_quadrature(&tf, order, p, &QuadOptions::default())?;
    let w = WeightParams::new(1.0, q0, inputs.d as usize, inputs.delta / 2.0)?;
    let (space, _) = capacity_space_integral(&w, p, &FracLapOptions::default())?;
    Ok(NumericConstants {
        time: time * w.field().l1_norm(),
        space: space / (mu + 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SignVerdict {
    VanishesAsTGrows,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermSign {
    pub name: String,
    pub exponent: f64,
    pub negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignReport {
    pub verdict: SignVerdict,
    pub terms: Vec<TermSign>,
}

/// Tolerance under which a collapsed exponent counts as zero.
const EXP_TOL: f64 = 1e-12;

pub fn sign_analysis(bound: &CapacityBound) -> SignReport {
    let terms: Vec<TermSign> = bound
        .terms
        .iter()
        .filter(|t| !t.tail)
        .map(|t| {
            let e = t.collapsed_exponent(&bound.substitution);
            TermSign {
                name: t.name.clone(),
                exponent: e,
                negative: e < -EXP_TOL,
            }
        })
        .collect();
    let verdict = if terms.iter().all(|t| t.negative) {
        SignVerdict::VanishesAsTGrows
    } else {
        SignVerdict::Inconclusive
    };
    SignReport { verdict, terms }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemExponents<S> {
    pub sigma: [S; 4],
    pub rho: [S; 4],
    pub d0: S,
}

pub fn system_exponents<S: Scalar>(
    s: &SystemParams<S>,
    d: &S,
    d0: &S,
) -> Result<SystemExponents<S>> {
    let one = S::one();
    let pq1 = s.p.clone() * s.q.clone() - one.clone();
    if !(pq1 > S::zero()) {
        return Err(Error::Hypothesis("pq > 1 fails".into()));
    }
    let (g, t, m, sg, p, q) = (
        s.gamma.clone(),
        s.theta.clone(),
        s.mu.clone(),
        s.sigma.clone(),
        s.p.clone(),
        s.q.clone(),
    );
    let base = d0.clone() * d.clone() + one;
    let dz = d0.clone();
    let sigma = [
        base.clone() - p.clone() * (sg.clone() * dz.clone() + g.clone() * q.clone()) / pq1.clone(),
        base.clone() - dz.clone() * p.clone() * (sg.clone() + m.clone() * q.clone()) / pq1.clone(),
        base.clone() - p.clone() * (t.clone() + g.clone() * q.clone()) / pq1.clone(),
        base.clone() - p.clone() * (t.clone() + dz.clone() * m.clone() * q.clone()) / pq1.clone(),
    ];
    let rho = [
        base.clone() - q.clone() * (g.clone() + t.clone() * p.clone()) / pq1.clone(),
        base.clone() - q.clone() * (g.clone() + dz.clone() * sg.clone() * p.clone()) / pq1.clone(),
        base.clone() - q.clone() * (m.clone() * dz.clone() + t * p.clone()) / pq1.clone(),
        base - dz.clone() * q * (m + sg * p) / pq1,
    ];
    Ok(SystemExponents { sigma, rho, d0: dz })
}

/// A `d₀` making every `σᵢ` (or every `ρᵢ` for the upper family) negative,
/// if the max–min search finds one.
pub fn feasible_d0(s: &SystemParams<f64>, d: f64, fam: HFamily) -> Result<Option<f64>> {
    let grid = default_d0_grid(s, 400);
    let (d0, _) = maxmin_point(s, fam, &grid)?;
    let e = system_exponents(s, &d, &d0)?;
    let set = match fam {
        HFamily::Lower => e.sigma,
        HFamily::Upper => e.rho,
    };
    Ok(set.iter().all(|v| *v < 0.0).then_some(d0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::{d_exponents, theorem1_classify, Verdict};
    use approx::assert_relative_eq;
    use num_rational::BigRational;

    fn inputs(alpha: f64, delta: f64, p: f64, d: u32) -> ExponentInputs {
        ExponentInputs {
            alpha,
            delta,
            p,
            d,
            ..Default::default()
        }
    }

    #[test]
    fn scalar_bound_exponents() {
        let i = inputs(1.0, 2.0, 2.0, 1);
        let b = scalar_bound(
            &i,
            &DataNorms {
                u0: 1.0,
                ..Default::default()
            },
            standard_rule(&i),
        )
        .unwrap();
        let e = b.collapsed_exponents();
        assert_relative_eq!(e[0], -1.0);
        assert_relative_eq!(e[1], -0.5);
        assert_relative_eq!(e[2], -0.5);
        assert_eq!(sign_analysis(&b).verdict, SignVerdict::VanishesAsTGrows);
    }

    #[test]
    fn scalar_bound_critical_and_super() {
        let i = inputs(1.0, 2.0, 3.0, 1);
        let b = scalar_bound(&i, &DataNorms::default(), standard_rule(&i)).unwrap();
        assert!(b.collapsed_exponents()[1].abs() < 1e-14);
        assert_eq!(sign_analysis(&b).verdict, SignVerdict::Inconclusive);
        let i = inputs(0.6, 1.5, 1.0 + 0.6 * 1.5 / (0.6 + 1.5 * 0.4), 1);
        let b = scalar_bound(&i, &DataNorms::default(), standard_rule(&i)).unwrap();
        assert_eq!(sign_analysis(&b).verdict, SignVerdict::Inconclusive);
        let i = inputs(1.0, 2.0, 4.0, 1);
        let b = scalar_bound(&i, &DataNorms::default(), standard_rule(&i)).unwrap();
        assert_eq!(sign_analysis(&b).verdict, SignVerdict::Inconclusive);
    }

    #[test]
    fn zero_data_subcritical_vanishes() {
        let i = inputs(0.5, 1.0, 1.2, 2);
        let b = scalar_bound(&i, &DataNorms::default(), standard_rule(&i)).unwrap();
        assert!(b.evaluate(1e8) < b.evaluate(1e2));
        assert!(b.evaluate(1e12) < 1e-2);
    }

    #[test]
    fn damped_terms() {
        let i = ExponentInputs {
            alpha: 1.0,
            beta: 2.0,
            delta: 2.0,
            p: 3.0,
            d: 1,
            ..Default::default()
        };
        let b = scalar_bound_damped(
            &i,
            &DataNorms {
                u0: 1.0,
                u1: 1.0,
                v0: 0.0,
            },
            standard_rule(&i),
        )
        .unwrap();
        assert_eq!(b.terms.len(), 5);
        let e = b.collapsed_exponents();
        assert_relative_eq!(e[1], -1.0);
        assert_relative_eq!(e[3], -1.5);
        let b0 = scalar_bound_damped(
            &i,
            &DataNorms {
                u0: 1.0,
                ..Default::default()
            },
            standard_rule(&i),
        )
        .unwrap();
        assert_eq!(b0.terms[1].coefficient, 0.0);
    }

    #[test]
    fn boundary_bound_guards_and_limit() {
        let i = inputs(1.0, 2.0, 2.0, 1);
        assert!(matches!(
            boundary_bound_k(&i, &DataNorms::default(), 2.0, 0.0),
            Err(Error::Case(_))
        ));
        let i = inputs(0.5, 2.0, 5.0 / 3.0, 1);
        assert!(matches!(
            boundary_bound_k(&i, &DataNorms::default(), 2.0, 0.0),
            Err(Error::Case(_))
        ));
        let i = inputs(1.0, 2.0, 3.0, 1);
        let norms = DataNorms {
            u0: 1.0,
            ..Default::default()
        };
        let mut last = f64::INFINITY;
        for k in [1.0, 10.0, 100.0, 1000.0] {
            let b = boundary_bound_k(&i, &norms, k, 0.0).unwrap();
            let v = b.evaluate(1e12);
            assert!(v < last);
            last = v;
        }
        assert!(last < 2e-3);
        let k = 50.0;
        let tails: Vec<f64> = (1..=6).map(|n| 10f64.powi(-2 * n)).collect();
        let vals: Vec<f64> = tails
            .iter()
            .map(|&tl| boundary_bound_k(&i, &norms, k, tl).unwrap().evaluate(1e14))
            .collect();
        assert_relative_eq!(*vals.last().unwrap(), 1.0 / k, max_relative = 1e-6);
    }

    #[test]
    fn critical_system_exponents_vanish() {
        let s = SystemParams {
            gamma: BigRational::ratio(1, 1),
            theta: BigRational::ratio(1, 1),
            mu: BigRational::ratio(2, 1),
            sigma: BigRational::ratio(2, 1),
            p: BigRational::ratio(2, 1),
            q: BigRational::ratio(2, 1),
        };
        let e = system_exponents(&s, &BigRational::ratio(2, 1), &BigRational::ratio(1, 2)).unwrap();
        for v in e.sigma.iter().chain(e.rho.iter()) {
            assert_eq!(*v, BigRational::ratio(0, 1));
        }
    }

    #[test]
    fn sigma_small_d0_limit() {
        let s = SystemParams {
            gamma: 1.0,
            theta: 1.0,
            mu: 2.0,
            sigma: 2.0,
            p: 2.0,
            q: 2.0,
        };
        let e = system_exponents(&s, &1.0, &1e-12).unwrap();
        assert_relative_eq!(e.sigma[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn sigma_feasibility_matches_dbar() {
        let s = SystemParams {
            gamma: 1.0,
            theta: 1.0,
            mu: 2.0,
            sigma: 2.0,
            p: 2.0,
            q: 3.0,
        };
        let dbar = d_exponents(&s).unwrap().bar;
        assert!(feasible_d0(&s, dbar - 0.1, HFamily::Lower)
            .unwrap()
            .is_some());
        assert!(feasible_d0(&s, dbar + 0.1, HFamily::Lower)
            .unwrap()
            .is_none());
        assert!(feasible_d0(&s, 1.0, HFamily::Upper).unwrap().is_some());
        assert!(feasible_d0(&s, 2.0, HFamily::Upper).unwrap().is_none());
    }

    #[test]
    fn sign_analysis_agrees_with_classifier() {
        for (a, dl, p, d) in [
            (1.0, 2.0, 2.5, 1),
            (0.4, 1.2, 1.3, 3),
            (0.4, 1.2, 3.0, 3),
            (0.9, 0.5, 1.5, 2),
        ] {
            let i = inputs(a, dl, p, d);
            let b = scalar_bound(&i, &DataNorms::default(), standard_rule(&i)).unwrap();
            let strict = p < p_star(&a, &dl, &(d as f64));
            assert_eq!(
                sign_analysis(&b).verdict == SignVerdict::VanishesAsTGrows,
                strict
            );
            if strict {
                assert_eq!(
                    theorem1_classify(&a, &dl, &(d as f64), &p).verdict,
                    Verdict::Nonexistence
                );
            }
        }
    }

    #[test]
    fn trace_csv_columns() {
        let i = inputs(1.0, 2.0, 2.0, 1);
        let b = scalar_bound(
            &i,
            &DataNorms {
                u0: 1.0,
                ..Default::default()
            },
            standard_rule(&i),
        )
        .unwrap();
        let mut buf = Vec::new();
        b.write_trace(&[1.0, 10.0], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, "T,data-u0,time-capacity,space-capacity,total");
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn numeric_slope_matches_dominant_exponent() {
        let i = inputs(1.0, 2.0, 2.0, 1);
        let c = numeric_constants(&i, 2.0, i.alpha).unwrap();
        let b = scalar_bound(
            &i,
            &DataNorms {
                u0: 1.0,
                ..Default::default()
            },
            standard_rule(&i),
        )
        .unwrap()
        .with_constant(TermLabel::TimeCapacity, c.time)
        .with_constant(TermLabel::SpaceCapacity, c.space);
        let ts = [1e4, 1e5, 1e6];
        let ys: Vec<f64> = ts.iter().map(|&t| b.evaluate(t)).collect();
        let slope = crate::frac_space::loglog_slope(&ts, &ys);
        assert!((slope - b.dominant_exponent()).abs() < 0.05, "{slope}");
    }
}
