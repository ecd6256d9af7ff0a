//! The TOML run configuration read by the command-line tool.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::capacity::DataNorms;
use crate::error::{Error, Result};
use crate::exponents::ExponentInputs;
use crate::simulator::{SimConfig, TransformSpec};
use crate::verify::VerifyOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Exponents,
    Regimes,
    Capacity,
    Verify,
    Simulate,
    TransformCheck,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Exponents => "exponents",
            Mode::Regimes => "regimes",
            Mode::Capacity => "capacity",
            Mode::Verify => "verify",
            Mode::Simulate => "simulate",
            Mode::TransformCheck => "transform-check",
        }
    }
}

/// A swept parameter: a single value, an explicit list, or `steps` evenly
/// spaced values from `from` to `to` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sweep {
    Value(f64),
    List(Vec<f64>),
    Range { from: f64, to: f64, steps: usize },
}

impl Sweep {
    pub fn values(&self, field: &str) -> Result<Vec<f64>> {
        match self {
            Sweep::Value(v) => Ok(vec![*v]),
            Sweep::List(v) if !v.is_empty() => Ok(v.clone()),
            Sweep::List(_) => Err(Error::config(field, "list must not be empty")),
            Sweep::Range { from, to, steps } => {
                if *steps == 0 {
                    return Err(Error::config(field, "steps must be positive"));
                }
                if *steps == 1 {
                    return Ok(vec![*from]);
                }
                Ok((0..*steps)
                    .map(|i| from + (to - from) * i as f64 / (*steps - 1) as f64)
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepProblem {
    Scalar,
    Damped,
    System,
}

/// Parameter grid for `exponents` and `regimes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub problem: SweepProblem,
    pub alpha: Option<Sweep>,
    pub beta: Option<Sweep>,
    pub delta: Option<Sweep>,
    pub gamma: Option<Sweep>,
    pub theta: Option<Sweep>,
    pub mu: Option<Sweep>,
    pub sigma: Option<Sweep>,
    pub p: Option<Sweep>,
    pub q: Option<Sweep>,
    pub d: Option<Sweep>,
    /// Grid points for the max–min columns.
    #[serde(default = "default_d0_points")]
    pub d0_points: usize,
}

fn default_d0_points() -> usize {
    200
}

/// Range check for a named exponent parameter.
pub fn check_field(field: &str, v: f64) -> Result<()> {
    let name = field.rsplit('.').next().unwrap_or(field);
    let (ok, text) = match name {
        "alpha" | "gamma" | "theta" => (v > 0.0 && v <= 1.0, "(0,1]"),
        "beta" => (v > 1.0 && v <= 2.0, "(1,2]"),
        "delta" | "mu" | "sigma" => (v > 0.0 && v <= 2.0, "(0,2]"),
        "p" | "q" => (v > 1.0 && v.is_finite(), "(1,inf)"),
        "d" => (v >= 1.0 && v.fract() == 0.0, "the positive integers"),
        _ => (v.is_finite(), "finite reals"),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::config(field, format!("must lie in {text}, got {v}")))
    }
}

impl SweepBlock {
    /// Required fields for `problem`; `p` is optional for the scalar
    /// exponent tables, where `p*` does not depend on it.
    fn fields(&self, need_p: bool) -> Vec<(&'static str, Option<&Sweep>, bool)> {
        match self.problem {
            SweepProblem::Scalar | SweepProblem::Damped => {
                let mut v = vec![
                    ("alpha", self.alpha.as_ref(), true),
                    ("delta", self.delta.as_ref(), true),
                    ("d", self.d.as_ref(), true),
                    ("p", self.p.as_ref(), need_p),
                ];
                if self.problem == SweepProblem::Damped {
                    v.insert(1, ("beta", self.beta.as_ref(), true));
                }
                v
            }
            SweepProblem::System => vec![
                ("gamma", self.gamma.as_ref(), true),
                ("theta", self.theta.as_ref(), true),
                ("mu", self.mu.as_ref(), true),
                ("sigma", self.sigma.as_ref(), true),
                ("p", self.p.as_ref(), true),
                ("q", self.q.as_ref(), true),
                ("d", self.d.as_ref(), need_p),
            ],
        }
    }

    /// Cartesian product of the sweeps, validated field by field.
    pub fn expand(&self, section: &str, need_p: bool) -> Result<Vec<ExponentInputs>> {
        let mut rows = vec![ExponentInputs {
            d: 1,
            ..Default::default()
        }];
        for (name, sweep, required) in self.fields(need_p) {
            let field = format!("{section}.{name}");
            let Some(sweep) = sweep else {
                if required {
                    return Err(Error::config(
                        field,
                        format!("required for the {:?} problem", self.problem),
                    ));
                }
                continue;
            };
            let values = sweep.values(&field)?;
            for v in &values {
                check_field(&field, *v)?;
            }
            rows = rows
                .into_iter()
                .flat_map(|r| {
                    values.iter().map(move |&v| {
                        let mut r = r;
                        match name {
                            "alpha" => r.alpha = v,
                            "beta" => r.beta = v,
                            "delta" => r.delta = v,
                            "gamma" => r.gamma = v,
                            "theta" => r.theta = v,
                            "mu" => r.mu = v,
                            "sigma" => r.sigma = v,
                            "p" => r.p = v,
                            "q" => r.q = v,
                            _ => r.d = v as u32,
                        }
                        r
                    })
                })
                .collect();
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapacityProblem {
    Scalar,
    Damped,
    Boundary,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityBlock {
    pub problem: CapacityProblem,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub theta: Option<f64>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub d: u32,
    #[serde(default)]
    pub norms: DataNorms,
    /// Horizons for the trace.
    #[serde(default)]
    pub t_values: Option<Sweep>,
    /// Refinement constant for the boundary bound.
    #[serde(default)]
    pub k: Option<f64>,
    #[serde(default)]
    pub tail: Option<f64>,
    /// Fixed `d₀` for the system exponents; the max–min optimum otherwise.
    #[serde(default)]
    pub d0: Option<f64>,
    /// Weight decay; when given, the capacity constants are computed.
    #[serde(default)]
    pub q0: Option<f64>,
}

impl CapacityBlock {
    pub fn inputs(&self) -> Result<ExponentInputs> {
        let mut i = ExponentInputs {
            d: self.d,
            ..Default::default()
        };
        check_field("capacity.d", self.d as f64)?;
        let names: &[&str] = match self.problem {
            CapacityProblem::Scalar | CapacityProblem::Boundary => &["alpha", "delta", "p"],
            CapacityProblem::Damped => &["alpha", "beta", "delta", "p"],
            CapacityProblem::System => &["gamma", "theta", "mu", "sigma", "p", "q"],
        };
        for &name in names {
            let field = format!("capacity.{name}");
            let v = match name {
                "alpha" => self.alpha,
                "beta" => self.beta,
                "delta" => self.delta,
                "gamma" => self.gamma,
                "theta" => self.theta,
                "mu" => self.mu,
                "sigma" => self.sigma,
                "p" => self.p,
                _ => self.q,
            }
            .ok_or_else(|| {
                Error::config(&field, format!("required for the {:?} bound", self.problem))
            })?;
            check_field(&field, v)?;
            match name {
                "alpha" => i.alpha = v,
                "beta" => i.beta = v,
                "delta" => i.delta = v,
                "gamma" => i.gamma = v,
                "theta" => i.theta = v,
                "mu" => i.mu = v,
                "sigma" => i.sigma = v,
                "p" => i.p = v,
                _ => i.q = v,
            }
        }
        Ok(i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PullbackBlock {
    pub r: f64,
    pub q0: f64,
    pub p: f64,
    /// Half-width of the support box of the Gaussian test field.
    #[serde(default = "default_support")]
    pub support: f64,
}

fn default_support() -> f64 {
    6.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformCheckBlock {
    pub d: usize,
    pub transform: TransformSpec,
    #[serde(default = "default_budget")]
    pub sample_budget: usize,
    #[serde(default = "default_box")]
    pub box_half_width: f64,
    #[serde(default)]
    pub pullback: Option<PullbackBlock>,
}

fn default_budget() -> usize {
    1024
}

fn default_box() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub exponents: Option<SweepBlock>,
    #[serde(default)]
    pub regimes: Option<SweepBlock>,
    #[serde(default)]
    pub capacity: Option<CapacityBlock>,
    #[serde(default)]
    pub verify: Option<VerifyOptions>,
    #[serde(default)]
    pub simulate: Option<SimConfig>,
    #[serde(default)]
    pub transform_check: Option<TransformCheckBlock>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| locate_field(text, s.start))
                .unwrap_or_else(|| "<root>".into());
            Error::config(field, e.to_string().trim_end().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Checks that a `mode` key, if present, agrees with the subcommand.
    pub fn check_mode(&self, mode: Mode) -> Result<()> {
        match self.mode {
            Some(m) if m != mode => Err(Error::config(
                "mode",
                format!(
                    "config declares `{}` but the subcommand is `{}`",
                    m.name(),
                    mode.name()
                ),
            )),
            _ => Ok(()),
        }
    }
}

/// Dotted name of the key on the line containing byte `pos`, prefixed by
/// the nearest preceding `[section]` header.
fn locate_field(text: &str, pos: usize) -> String {
    let pos = pos.min(text.len());
    let line_start = text[..pos].rfind('\n').map(|i| i + 1).unwrap_or(0);
    let line = text[line_start..].lines().next().unwrap_or("");
    let key = line.split('=').next().unwrap_or("").trim();
    let section = text[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && l.ends_with(']'))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    let key = if key.starts_with('[') { "" } else { key };
    match (section, key) {
        (Some(s), "") => s,
        (Some(s), k) => format!("{s}.{k}"),
        (None, "") => "<root>".into(),
        (None, k) => k.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_expansion_and_order() {
        let c = RunConfig::parse(
            r#"
            [exponents]
            problem = "scalar"
            alpha = { from = 0.1, to = 1.0, steps = 10 }
            delta = 2.0
            d = [1, 2]
            "#,
        )
        .unwrap();
        let rows = c.exponents.unwrap().expand("exponents", false).unwrap();
        assert_eq!(rows.len(), 20);
        assert_eq!(rows[0].alpha, 0.1);
        assert_eq!(rows[1].d, 2);
        assert!((rows[19].alpha - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_delta_names_constraint() {
        let c = RunConfig::parse(
            "[exponents]\nproblem = \"scalar\"\nalpha = 0.5\ndelta = 3.0\nd = 1\n",
        )
        .unwrap();
        match c.exponents.unwrap().expand("exponents", false) {
            Err(Error::Config { field, message }) => {
                assert_eq!(field, "exponents.delta");
                assert!(message.contains("(0,2]"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_location() {
        let e = RunConfig::parse("[simulate]\nproblem = \"scalar\"\nbogus = 1\n").unwrap_err();
        let text = e.to_string();
        assert!(text.contains("line"), "{text}");
        let e = RunConfig::parse("[exponents]\nproblem = \"scalar\"\nalpha = \"x\"\n").unwrap_err();
        match e {
            Error::Config { field, .. } => assert_eq!(field, "exponents.alpha"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mode_mismatch() {
        let c = RunConfig::parse("mode = \"verify\"\n").unwrap();
        assert!(c.check_mode(Mode::Verify).is_ok());
        assert!(c.check_mode(Mode::Simulate).is_err());
    }

    #[test]
    fn missing_required_field() {
        let c =
            RunConfig::parse("[regimes]\nproblem = \"scalar\"\nalpha = 0.5\ndelta = 2.0\nd = 1\n")
                .unwrap();
        match c.regimes.unwrap().expand("regimes", true) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "regimes.p"),
            other => panic!("{other:?}"),
        }
    }
}
