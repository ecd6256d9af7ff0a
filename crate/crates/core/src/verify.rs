//! The verification suite behind `fraccap verify`.

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{
    feasible_d0, scalar_bound, sign_analysis, standard_rule, DataNorms, SignVerdict,
};
use crate::error::{Error, Result};
use crate::exponents::{
    d_exponents, default_d0_grid, e_exponents, endpoint_identities, maxmin, p_star, sample_system,
    sample_system_rational, theorem1_classify, ExponentInputs, HFamily, Scalar, SystemParams,
    Verdict,
};
use crate::frac_space::{
    capacity_space_integral, loglog_slope, scaling_identity_check, weight_fraclap_bound_check,
    Bracket, FracLapOptions, FracLaplacianSpec, Method, WeightParams,
};
use crate::frac_time::{
    capacity_time_integral, capacity_time_integral_quadrature, rl_right_derivative_closed,
    rl_right_derivative_quadrature, TestFunctionParams,
};
use crate::quad::QuadOptions;
use crate::transforms::{
    certify, planar_rotation, pullback_capacity_lower_bound, pullback_direct, SpaceTransform,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyOptions {
    /// Overrides the tolerance of the quadrature-based checks.
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Added to `D̄` before comparison; a mutation hook for the suite itself.
    #[serde(default)]
    pub perturb_dbar: f64,
}

fn default_samples() -> usize {
    200
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            tol: None,
            seed: 0,
            samples: default_samples(),
            perturb_dbar: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub check: String,
    pub passed: bool,
    pub achieved: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(check: &str, achieved: f64, tolerance: f64, detail: String) -> Self {
        CheckResult {
            check: check.into(),
            passed: achieved.is_finite() && achieved <= tolerance,
            achieved,
            tolerance,
            detail,
        }
    }

    fn failed(check: &str, tolerance: f64, e: &Error) -> Self {
        CheckResult {
            check: check.into(),
            passed: false,
            achieved: f64::INFINITY,
            tolerance,
            detail: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub all_passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for c in &self.checks {
            wr.serialize(c)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// A quadrature value, or the estimate carried by a non-converged result.
fn value_or_attained(r: Result<f64>) -> Result<f64> {
    match r {
        Err(Error::Quadrature { value, .. }) => Ok(value),
        other => other,
    }
}

fn time_derivative_check(tol: f64) -> CheckResult {
    let name = "time-derivative-closed-vs-quadrature";
    let horizon = 2.0;
    let mut worst: f64 = 0.0;
    for m in [0.0, 1.0] {
        for mu in [4.0, 7.0, 10.0] {
            for alpha in [0.3, 0.6, 0.9] {
                let order = m + alpha;
                let tf = match TestFunctionParams::power(horizon, mu) {
                    Ok(t) => t,
                    Err(e) => return CheckResult::failed(name, tol, &e),
                };
                for frac in [0.1, 0.5, 0.9] {
                    let t = frac * horizon;
                    let closed = match rl_right_derivative_closed(&tf, order, t) {
                        Ok(v) => v,
                        Err(e) => return CheckResult::failed(name, tol, &e),
                    };
                    let quad = value_or_attained(rl_right_derivative_quadrature(
                        |s| tf.eval(s),
                        horizon,
                        order,
                        t,
                        tol,
                    ));
                    match quad {
                        Ok(q) => worst = worst.max((closed - q).abs() / (1.0 + closed.abs())),
                        Err(e) => return CheckResult::failed(name, tol, &e),
                    }
                }
            }
        }
    }
    CheckResult::new(
        name,
        worst,
        tol,
        "max |closed - quadrature| / (1 + |closed|)".into(),
    )
}

fn time_scaling_check(tol: f64) -> CheckResult {
    let name = "time-capacity-scaling";
    let tuples = [(0.5, 2.0), (0.8, 3.0), (1.3, 2.5)];
    let opts = QuadOptions::with_tol(1e-14, tol.min(1e-8) * 1e-2);
    let mut worst_slope: f64 = 0.0;
    let mut worst_c: f64 = 0.0;
    for (order, p) in tuples {
        let mu = crate::capacity::cutoff_mu(order, p);
        let ts = [1.0, 10.0, 100.0];
        let mut ys = Vec::new();
        let mut closed = (0.0, 0.0);
        for &t in &ts {
            let tf = TestFunctionParams::power(t, mu).expect("valid cutoff");
            closed = match capacity_time_integral(&tf, order, p) {
                Ok(c) => c,
                Err(e) => return CheckResult::failed(name, tol, &e),
            };
            match capacity_time_integral_quadrature(&tf, order, p, &opts) {
                Ok(v) => ys.push(v),
                Err(e) => return CheckResult::failed(name, tol, &e),
            }
        }
        worst_slope = worst_slope.max((loglog_slope(&ts, &ys) - closed.1).abs());
        worst_c = worst_c.max((ys[0] - closed.0).abs() / closed.0);
    }
    let mut r = CheckResult::new(
        name,
        worst_c,
        tol,
        format!("constant rel. error; slope error {worst_slope:.3e} (limit 1e-3)"),
    );
    r.passed &= worst_slope <= 1e-3;
    r
}

fn weight_bound_check() -> CheckResult {
    let name = "weight-decay-bound";
    let opts = FracLapOptions::default();
    let mut worst: f64 = 0.0;
    for (d, s, q0) in [(1usize, 0.5, 2.0), (1, 0.75, 3.0), (2, 0.5, 3.0)] {
        let w = WeightParams::new(1.0, q0, d, s).expect("valid weight");
        let pts: Vec<Vec<f64>> = [1.0, 10.0, 100.0]
            .iter()
            .map(|&r| {
                let mut x = vec![0.0; d];
                x[0] = r;
                x
            })
            .collect();
        match weight_fraclap_bound_check(&w, &pts, &opts) {
            Ok(rep) => {
                let mut s = rep.samples.clone();
                s.sort_by(|a, b| a.radius.total_cmp(&b.radius));
                let growth = s[s.len() - 1].ratio / s[s.len() - 2].ratio;
                worst = worst.max(if rep.stable { growth } else { f64::INFINITY });
            }
            Err(e) => return CheckResult::failed(name, 1.5, &e),
        }
    }
    CheckResult::new(
        name,
        worst,
        1.5,
        "ratio growth between |x| = 10 and 100".into(),
    )
}

fn space_scaling_check(tol: f64) -> CheckResult {
    let name = "space-scaling-identity";
    let opts = FracLapOptions::default();
    let mut worst: f64 = 0.0;
    for s in [0.3, 0.5, 0.8] {
        let spec = match FracLaplacianSpec::new(s, 1, Method::SingularIntegral) {
            Ok(sp) => sp,
            Err(e) => return CheckResult::failed(name, tol, &e),
        };
        let psi = Bracket {
            d: 1,
            q0: 3.0,
            r: 1.0,
        };
        for (r, x) in [(0.5, 0.3), (2.0, 1.7), (7.0, 4.0)] {
            match scaling_identity_check(&psi, &spec, r, &[x], &opts) {
                Ok((l, rr)) => worst = worst.max((l - rr).abs() / rr.abs().max(1e-300)),
                Err(e) => return CheckResult::failed(name, tol, &e),
            }
        }
    }
    CheckResult::new(
        name,
        worst,
        tol,
        "relative residual of the dilation identity".into(),
    )
}

fn space_slope_check() -> CheckResult {
    let name = "space-capacity-slope";
    let opts = FracLapOptions::default();
    let mut worst: f64 = 0.0;
    for (s, p) in [(0.5, 2.0), (0.75, 3.0), (1.0, 1.5)] {
        let q0 = 1.0 + s * p;
        let rs = [1.0, 10.0, 100.0];
        let mut ys = Vec::new();
        let mut predicted = 0.0;
        for &r in &rs {
            let w = WeightParams::new(r, q0, 1, s).expect("valid weight");
            match capacity_space_integral(&w, p, &opts) {
                Ok((v, pr)) => {
                    ys.push(v);
                    predicted = pr;
                }
                Err(e) => return CheckResult::failed(name, 0.05, &e),
            }
        }
        worst = worst.max((loglog_slope(&rs, &ys) - predicted).abs());
    }
    CheckResult::new(
        name,
        worst,
        0.05,
        "|fitted R-slope - (d - 2sp/(p-1))|".into(),
    )
}

fn maxmin_check(opts: &VerifyOptions, fam: HFamily) -> CheckResult {
    let name = match fam {
        HFamily::Lower => "maxmin-lower-family",
        HFamily::Upper => "maxmin-upper-family",
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6a09);
    let mut worst: f64 = 0.0;
    for _ in 0..opts.samples {
        let s = sample_system(&mut rng);
        let grid = default_d0_grid(&s, 120);
        let (target, found) = match fam {
            HFamily::Lower => (
                d_exponents(&s).map(|f| f.bar + opts.perturb_dbar),
                maxmin(&s, fam, &grid),
            ),
            HFamily::Upper => (e_exponents(&s).map(|f| f.bar), maxmin(&s, fam, &grid)),
        };
        match (target, found) {
            (Ok(t), Ok(f)) => worst = worst.max((t - f).abs()),
            (Err(e), _) | (_, Err(e)) => return CheckResult::failed(name, 1e-4, &e),
        }
    }
    CheckResult::new(name, worst, 1e-4, format!("{} random tuples", opts.samples))
}

fn endpoint_check(opts: &VerifyOptions) -> CheckResult {
    let name = "endpoint-identities-exact";
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xbb67);
    let mut bad = 0usize;
    let mut first = String::new();
    for _ in 0..50 {
        let s = sample_system_rational(&mut rng);
        match endpoint_identities(&s) {
            Ok(rows) => {
                for (n, l, r) in rows {
                    if l != r {
                        bad += 1;
                        if first.is_empty() {
                            first = n;
                        }
                    }
                }
            }
            Err(e) => return CheckResult::failed(name, 0.0, &e),
        }
    }
    CheckResult::new(
        name,
        bad as f64,
        0.0,
        format!("mismatches in rational arithmetic {first}"),
    )
}

fn symmetric_check(opts: &VerifyOptions) -> CheckResult {
    let name = "symmetric-case-identities-exact";
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x3c6e);
    let mut bad = 0usize;
    for _ in 0..50 {
        let p = BigRational::ratio(rng.gen_range(11..80), 10);
        let q = BigRational::ratio(rng.gen_range(11..80), 10);
        let one = BigRational::ratio(1, 1);
        let two = BigRational::ratio(2, 1);
        let s = SystemParams {
            gamma: one.clone(),
            theta: one.clone(),
            mu: two.clone(),
            sigma: two.clone(),
            p: p.clone(),
            q: q.clone(),
        };
        let pq1 = p.clone() * q.clone() - one.clone();
        let want_d = two.clone() * (p.clone() + one.clone()) / pq1.clone();
        let want_e = two * (q + one) / pq1;
        match (d_exponents(&s), e_exponents(&s)) {
            (Ok(d), Ok(e)) => {
                if d.bar != want_d || e.bar != want_e {
                    bad += 1;
                }
            }
            (Err(e), _) | (_, Err(e)) => return CheckResult::failed(name, 0.0, &e),
        }
    }
    CheckResult::new(name, bad as f64, 0.0, "50 rational (p, q)".into())
}

fn coherence_check(opts: &VerifyOptions) -> CheckResult {
    let name = "classifier-capacity-coherence";
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xa54f);
    let mut bad = 0usize;
    for _ in 0..opts.samples {
        let i = ExponentInputs {
            alpha: rng.gen_range(0.05..=1.0),
            delta: rng.gen_range(0.05..=2.0),
            d: rng.gen_range(1..=4),
            p: rng.gen_range(1.01..5.0),
            ..Default::default()
        };
        let d = i.d as f64;
        let strict = i.p < p_star(&i.alpha, &i.delta, &d);
        let b = match scalar_bound(&i, &DataNorms::default(), standard_rule(&i)) {
            Ok(b) => b,
            Err(e) => return CheckResult::failed(name, 0.0, &e),
        };
        let vanishes = sign_analysis(&b).verdict == SignVerdict::VanishesAsTGrows;
        let nonexist =
            theorem1_classify(&i.alpha, &i.delta, &d, &i.p).verdict == Verdict::Nonexistence;
        if vanishes != strict || (strict && !nonexist) {
            bad += 1;
        }
        let s = sample_system(&mut rng);
        let dd = rng.gen_range(1..=4) as f64;
        match (d_exponents(&s), feasible_d0(&s, dd, HFamily::Lower)) {
            (Ok(f), Ok(feas)) => {
                if (dd < f.bar) != feas.is_some() {
                    bad += 1;
                }
            }
            (Err(e), _) | (_, Err(e)) => return CheckResult::failed(name, 0.0, &e),
        }
    }
    CheckResult::new(
        name,
        bad as f64,
        0.0,
        format!("{} scalar and system tuples", opts.samples),
    )
}

fn change_of_variables(tol: f64) -> CheckResult {
    let name = "change-of-variables";
    let q = QuadOptions::with_tol(1e-12, 1e-9);
    let u = |x: &[f64]| (-x.iter().map(|v| v * v).sum::<f64>()).exp();
    let cases: Vec<(SpaceTransform, WeightParams)> = vec![
        (
            SpaceTransform::dilation(1, 2.0).expect("dilation"),
            WeightParams::new(1.5, 2.0, 1, 0.5).expect("weight"),
        ),
        (
            SpaceTransform::rotation(planar_rotation(2, 0.7)).expect("rotation"),
            WeightParams::new(1.0, 3.0, 2, 0.5).expect("weight"),
        ),
    ];
    let mut worst_gap: f64 = 0.0;
    let mut violated = false;
    for (t, w) in &cases {
        let res = certify(t, 256, 4.0, 1).and_then(|c| {
            let (l, r) = pullback_capacity_lower_bound(&u, 6.0, t, &c, w, 2.0, &q)?;
            let direct = pullback_direct(&u, 6.0, t, w, 2.0, &q)?;
            Ok((l, r, direct))
        });
        match res {
            Ok((l, r, direct)) => {
                violated |= l < r * (1.0 - 1e-9);
                worst_gap = worst_gap.max((l - direct).abs() / direct.abs());
            }
            Err(e) => return CheckResult::failed(name, tol, &e),
        }
    }
    let achieved = if violated { f64::INFINITY } else { worst_gap };
    CheckResult::new(
        name,
        achieved,
        tol,
        "lhs >= c0 rhs, and |lhs - direct| / direct".into(),
    )
}

/// Runs every check; independent checks execute in parallel and are
/// reported in a fixed order.
pub fn run_suite(opts: &VerifyOptions) -> VerifyReport {
    let tol = opts.tol.unwrap_or(1e-6);
    let o = *opts;
    let jobs: Vec<Box<dyn Fn() -> CheckResult + Send + Sync>> = vec![
        Box::new(move || time_derivative_check(tol)),
        Box::new(move || time_scaling_check(opts.tol.unwrap_or(1e-5))),
        Box::new(weight_bound_check),
        Box::new(move || space_scaling_check(opts.tol.unwrap_or(1e-5))),
        Box::new(space_slope_check),
        Box::new(move || maxmin_check(&o, HFamily::Lower)),
        Box::new(move || maxmin_check(&o, HFamily::Upper)),
        Box::new(move || endpoint_check(&o)),
        Box::new(move || symmetric_check(&o)),
        Box::new(move || coherence_check(&o)),
        Box::new(move || change_of_variables(opts.tol.unwrap_or(1e-6))),
    ];
    let checks: Vec<CheckResult> = jobs.par_iter().map(|f| f()).collect();
    VerifyReport {
        all_passed: checks.iter().all(|c| c.passed),
        checks,
    }
}
