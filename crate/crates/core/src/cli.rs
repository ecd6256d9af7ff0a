//! Command-line front end: subcommand dispatch, flag overrides, output files
//! and exit codes.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::capacity::{
    boundary_bound_k, default_bound_times, feasible_d0, numeric_constants, scalar_bound,
    scalar_bound_damped, sign_analysis, standard_rule, system_exponents, CapacityBound, TermLabel,
};
use crate::config::{
    CapacityBlock, CapacityProblem, Mode, RunConfig, SweepBlock, SweepProblem, TransformCheckBlock,
};
use crate::error::{Error, Result};
use crate::exponents::{
    d_exponents, default_d0_grid, e_exponents, maxmin, maxmin_point, p_star,
    theorem1_classify_inputs, theorem2_classify_inputs, theorem3_classify_inputs, ExponentInputs,
    HFamily, Verdict,
};
use crate::frac_space::WeightParams;
use crate::quad::QuadOptions;
use crate::simulator::{run as run_simulation, write_trace, RunStatus};
use crate::transforms::{certify, pullback_capacity_lower_bound, pullback_direct};
use crate::verify::{run_suite, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;
pub const EXIT_BLEW_UP: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "fraccap",
    version,
    about = "Nonlinear-capacity exponents, verification checks and blow-up simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for sampled checks and initial-data noise.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Tolerance override for quadrature-based checks.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads for sweeps and the verification suite.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Critical exponents over a parameter grid.
    Exponents,
    /// Nonexistence classification over a parameter grid.
    Regimes,
    /// Capacity bound assembly and sign analysis.
    Capacity,
    /// Verification suite for the analytic building blocks.
    Verify,
    /// Blow-up simulation.
    Simulate,
    /// Transform certificates and the change-of-variables bound.
    TransformCheck,
}

impl Command {
    fn mode(&self) -> Mode {
        match self {
            Command::Exponents => Mode::Exponents,
            Command::Regimes => Mode::Regimes,
            Command::Capacity => Mode::Capacity,
            Command::Verify => Mode::Verify,
            Command::Simulate => Mode::Simulate,
            Command::TransformCheck => Mode::TransformCheck,
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    seed: Option<u64>,
    tol: Option<f64>,
}

/// Process exit code for an error.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config { .. }
        | Error::InvalidParameter { .. }
        | Error::Hypothesis(_)
        | Error::Case(_)
        | Error::Domain(_)
        | Error::Integrability { .. }
        | Error::MissingData(_)
        | Error::Tail(_) => EXIT_VALIDATION,
        Error::Assumption { .. } | Error::Certificate(_) | Error::Quadrature { .. } => {
            EXIT_CHECK_FAILED
        }
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_OTHER,
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let mode = cli.command.mode();
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::parse("")?,
    };
    cfg.check_mode(mode)?;
    if let Some(t) = cli.tol.or(cfg.tol) {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::config("--tol", "must be positive"));
        }
    }
    if let Some(j) = cli.jobs.or(cfg.jobs) {
        if j == 0 {
            return Err(Error::config("--jobs", "must be at least 1"));
        }
        // A second initialisation in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global();
    }
    let ctx = Ctx {
        seed: cli.seed.or(cfg.seed),
        tol: cli.tol.or(cfg.tol),
        cfg,
        out: cli.out,
    };
    fs::create_dir_all(&ctx.out)?;
    match mode {
        Mode::Exponents => cmd_exponents(&ctx),
        Mode::Regimes => cmd_regimes(&ctx),
        Mode::Capacity => cmd_capacity(&ctx),
        Mode::Verify => cmd_verify(&ctx),
        Mode::Simulate => cmd_simulate(&ctx),
        Mode::TransformCheck => cmd_transform_check(&ctx),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn section<'a, T>(v: &'a Option<T>, name: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| {
        Error::config(
            name,
            "section is required for this subcommand (pass --config)",
        )
    })
}

fn input_columns(problem: SweepProblem, with_p: bool) -> Vec<&'static str> {
    match problem {
        SweepProblem::Scalar if with_p => vec!["alpha", "delta", "d", "p"],
        SweepProblem::Scalar => vec!["alpha", "delta", "d"],
        SweepProblem::Damped if with_p => vec!["alpha", "beta", "delta", "d", "p"],
        SweepProblem::Damped => vec!["alpha", "beta", "delta", "d"],
        SweepProblem::System if with_p => vec!["gamma", "theta", "mu", "sigma", "p", "q", "d"],
        SweepProblem::System => vec!["gamma", "theta", "mu", "sigma", "p", "q"],
    }
}

fn input_values(i: &ExponentInputs, cols: &[&str]) -> Vec<String> {
    cols.iter()
        .map(|c| match *c {
            "alpha" => num(i.alpha),
            "beta" => num(i.beta),
            "delta" => num(i.delta),
            "gamma" => num(i.gamma),
            "theta" => num(i.theta),
            "mu" => num(i.mu),
            "sigma" => num(i.sigma),
            "p" => num(i.p),
            "q" => num(i.q),
            _ => i.d.to_string(),
        })
        .collect()
}

fn family_columns() -> Vec<String> {
    let mut v: Vec<String> = (1..=4).map(|i| format!("D{i}")).collect();
    v.extend((1..=4).map(|i| format!("E{i}")));
    v.push("Dbar".into());
    v.push("Ebar".into());
    v
}

fn system_row(
    i: &ExponentInputs,
    d0_points: usize,
    with_maxmin: bool,
) -> (Vec<String>, Option<String>) {
    let s = i.system();
    let width = 10 + if with_maxmin { 2 } else { 0 };
    match (d_exponents(&s), e_exponents(&s)) {
        (Ok(dd), Ok(ee)) => {
            let mut row: Vec<String> = dd
                .values
                .iter()
                .chain(ee.values.iter())
                .map(|v| num(*v))
                .collect();
            row.push(num(dd.bar));
            row.push(num(ee.bar));
            if with_maxmin {
                let grid = default_d0_grid(&s, d0_points);
                for fam in [HFamily::Lower, HFamily::Upper] {
                    row.push(maxmin(&s, fam, &grid).map(num).unwrap_or_default());
                }
            }
            (row, None)
        }
        (Err(e), _) | (_, Err(e)) => (vec![String::new(); width], Some(e.to_string())),
    }
}

fn cmd_exponents(ctx: &Ctx) -> Result<i32> {
    let block: &SweepBlock = section(&ctx.cfg.exponents, "exponents")?;
    let rows = block.expand("exponents", false)?;
    let mut header: Vec<String> = input_columns(block.problem, false)
        .iter()
        .map(|s| s.to_string())
        .collect();
    let cols = input_columns(block.problem, false);
    let table: Vec<(Vec<String>, Option<String>)> = match block.problem {
        SweepProblem::Scalar | SweepProblem::Damped => {
            header.push("p_star".into());
            rows.par_iter()
                .map(|i| {
                    let mut r = input_values(i, &cols);
                    r.push(num(p_star(&i.alpha, &i.delta, &(i.d as f64))));
                    (r, None)
                })
                .collect()
        }
        SweepProblem::System => {
            header.extend(family_columns());
            header.push("maxmin_h".into());
            header.push("maxmin_H".into());
            rows.par_iter()
                .map(|i| {
                    let mut r = input_values(i, &cols);
                    let (vals, err) = system_row(i, block.d0_points, true);
                    r.extend(vals);
                    (r, err)
                })
                .collect()
        }
    };
    header.push("status".into());
    let csv_rows: Vec<Vec<String>> = table
        .iter()
        .map(|(r, e)| {
            let mut r = r.clone();
            r.push(e.clone().unwrap_or_else(|| "ok".into()));
            r
        })
        .collect();
    write_csv(&ctx.out.join("exponents.csv"), &header, &csv_rows)?;
    let invalid = table.iter().filter(|(_, e)| e.is_some()).count();
    let summary = json!({
        "mode": "exponents",
        "problem": block.problem,
        "rows": table.len(),
        "invalid_rows": invalid,
        "csv": "exponents.csv",
    });
    write_json(&ctx.out.join("exponents.json"), &summary)?;
    println!(
        "exponents: {} rows written to {}",
        table.len(),
        ctx.out.join("exponents.csv").display()
    );
    Ok(EXIT_OK)
}

fn cmd_regimes(ctx: &Ctx) -> Result<i32> {
    let block: &SweepBlock = section(&ctx.cfg.regimes, "regimes")?;
    let rows = block.expand("regimes", true)?;
    let cols = input_columns(block.problem, true);
    let mut header: Vec<String> = cols.iter().map(|s| s.to_string()).collect();
    match block.problem {
        SweepProblem::System => header.extend(family_columns()),
        _ => header.push("p_star".into()),
    }
    header.push("verdict".into());
    header.push("fired_condition".into());
    let results: Vec<(
        Vec<String>,
        std::result::Result<Verdict, String>,
        Option<Value>,
    )> = rows
        .par_iter()
        .map(|i| {
            let mut r = input_values(i, &cols);
            let report = match block.problem {
                SweepProblem::Scalar => theorem1_classify_inputs(i),
                SweepProblem::Damped => theorem3_classify_inputs(i),
                SweepProblem::System => theorem2_classify_inputs(i),
            };
            match report {
                Ok(rep) => {
                    if block.problem == SweepProblem::System {
                        for c in family_columns() {
                            r.push(rep.numbers.get(&c).map(|v| num(*v)).unwrap_or_default());
                        }
                    } else {
                        r.push(
                            rep.numbers
                                .get("p_star")
                                .map(|v| num(*v))
                                .unwrap_or_default(),
                        );
                    }
                    r.push(format!("{:?}", rep.verdict));
                    r.push(rep.fired_condition());
                    let v = serde_json::to_value(&rep).ok();
                    (r, Ok(rep.verdict), v)
                }
                Err(e) => {
                    let pad = if block.problem == SweepProblem::System {
                        10
                    } else {
                        1
                    };
                    r.extend(vec![String::new(); pad]);
                    r.push("Invalid".into());
                    r.push(e.to_string());
                    (r, Err(e.to_string()), None)
                }
            }
        })
        .collect();
    let csv_rows: Vec<Vec<String>> = results.iter().map(|(r, _, _)| r.clone()).collect();
    write_csv(&ctx.out.join("regimes.csv"), &header, &csv_rows)?;
    let count = |v: Verdict| results.iter().filter(|(_, r, _)| *r == Ok(v)).count();
    let mut summary = json!({
        "mode": "regimes",
        "problem": block.problem,
        "rows": results.len(),
        "nonexistence": count(Verdict::Nonexistence),
        "undetermined": count(Verdict::Undetermined),
        "invalid": results.iter().filter(|(_, r, _)| r.is_err()).count(),
        "csv": "regimes.csv",
    });
    if results.len() == 1 {
        summary["report"] = results[0].2.clone().unwrap_or(Value::Null);
    }
    write_json(&ctx.out.join("regimes.json"), &summary)?;
    println!(
        "regimes: {} rows, {} nonexistence, {} undetermined",
        results.len(),
        count(Verdict::Nonexistence),
        count(Verdict::Undetermined)
    );
    Ok(EXIT_OK)
}

fn fill_constants(
    bound: &mut CapacityBound,
    i: &ExponentInputs,
    q0: f64,
    damped: bool,
) -> Result<()> {
    let c = numeric_constants(i, q0, i.alpha)?;
    let cb = if damped {
        Some(numeric_constants(i, q0, i.beta)?.time)
    } else {
        None
    };
    for t in bound.terms.iter_mut().filter(|t| t.placeholder) {
        match (t.label, t.name.as_str()) {
            (TermLabel::TimeCapacity, "time-capacity-beta") => {
                if let Some(v) = cb {
                    t.coefficient = v;
                    t.placeholder = false;
                }
            }
            (TermLabel::TimeCapacity, _) => {
                t.coefficient = c.time;
                t.placeholder = false;
            }
            (TermLabel::SpaceCapacity, _) => {
                t.coefficient = c.space;
                t.placeholder = false;
            }
            _ => {}
        }
    }
    Ok(())
}

fn cmd_capacity(ctx: &Ctx) -> Result<i32> {
    let block: &CapacityBlock = section(&ctx.cfg.capacity, "capacity")?;
    let i = block.inputs()?;
    let ts = match &block.t_values {
        Some(s) => s.values("capacity.t_values")?,
        None => default_bound_times(),
    };
    if ts.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::config(
            "capacity.t_values",
            "horizons must be positive",
        ));
    }
    if block.problem == CapacityProblem::System {
        let s = i.system();
        let d = i.d as f64;
        let grid = default_d0_grid(&s, 200);
        let d0 = match block.d0 {
            Some(v) if v > 0.0 => v,
            Some(_) => return Err(Error::config("capacity.d0", "must be positive")),
            None => maxmin_point(&s, HFamily::Lower, &grid)?.0,
        };
        let at = system_exponents(&s, &d, &d0)?;
        let header: Vec<String> = [
            "d0", "sigma1", "sigma2", "sigma3", "sigma4", "rho1", "rho2", "rho3", "rho4",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let rows = grid
            .iter()
            .map(|&x| {
                let e = system_exponents(&s, &d, &x)?;
                let mut r = vec![num(x)];
                r.extend(e.sigma.iter().chain(e.rho.iter()).map(|v| num(*v)));
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        write_csv(&ctx.out.join("capacity.csv"), &header, &rows)?;
        let summary = json!({
            "mode": "capacity",
            "problem": "system",
            "d0": d0,
            "exponents": at,
            "all_sigma_negative": at.sigma.iter().all(|v| *v < 0.0),
            "all_rho_negative": at.rho.iter().all(|v| *v < 0.0),
            "sigma_feasible_d0": feasible_d0(&s, d, HFamily::Lower)?,
            "rho_feasible_d0": feasible_d0(&s, d, HFamily::Upper)?,
            "csv": "capacity.csv",
        });
        write_json(&ctx.out.join("capacity.json"), &summary)?;
        println!("capacity: system exponents at d0 = {d0}");
        return Ok(EXIT_OK);
    }
    let mut bound = match block.problem {
        CapacityProblem::Scalar => scalar_bound(&i, &block.norms, standard_rule(&i))?,
        CapacityProblem::Damped => scalar_bound_damped(&i, &block.norms, standard_rule(&i))?,
        _ => {
            let k = block
                .k
                .ok_or_else(|| Error::config("capacity.k", "required for the boundary bound"))?;
            boundary_bound_k(&i, &block.norms, k, block.tail.unwrap_or(0.0))?
        }
    };
    if let Some(q0) = block.q0 {
        fill_constants(&mut bound, &i, q0, block.problem == CapacityProblem::Damped)?;
    }
    let file = fs::File::create(ctx.out.join("capacity.csv"))?;
    bound.write_trace(&ts, file)?;
    let sign = sign_analysis(&bound);
    let summary = json!({
        "mode": "capacity",
        "problem": block.problem,
        "bound": bound,
        "collapsed_exponents": bound.collapsed_exponents(),
        "dominant_exponent": bound.dominant_exponent(),
        "sign": sign,
        "csv": "capacity.csv",
    });
    write_json(&ctx.out.join("capacity.json"), &summary)?;
    println!("capacity: {:?}", sign.verdict);
    Ok(EXIT_OK)
}

fn cmd_verify(ctx: &Ctx) -> Result<i32> {
    let mut opts: VerifyOptions = ctx.cfg.verify.unwrap_or_default();
    if let Some(s) = ctx.seed {
        opts.seed = s;
    }
    if let Some(t) = ctx.tol {
        opts.tol = Some(t);
    }
    let report = run_suite(&opts);
    report.write_csv(fs::File::create(ctx.out.join("verify.csv"))?)?;
    write_json(&ctx.out.join("verify.json"), &report)?;
    for c in &report.checks {
        println!(
            "{:<34} {:<4} achieved {:.3e} tolerance {:.1e}",
            c.check,
            if c.passed { "PASS" } else { "FAIL" },
            c.achieved,
            c.tolerance
        );
    }
    if report.all_passed {
        Ok(EXIT_OK)
    } else {
        let failing: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.check.as_str())
            .collect();
        eprintln!("failing checks: {}", failing.join(", "));
        Ok(EXIT_CHECK_FAILED)
    }
}

fn cmd_simulate(ctx: &Ctx) -> Result<i32> {
    let mut sim = section(&ctx.cfg.simulate, "simulate")?.clone();
    if let Some(s) = ctx.seed {
        sim.seed = s;
    }
    let result = run_simulation(&sim)?;
    write_trace(&result.trace, fs::File::create(ctx.out.join("trace.csv"))?)?;
    let summary = json!({
        "mode": "simulate",
        "outcome": result.outcome,
        "trace": "trace.csv",
    });
    write_json(&ctx.out.join("outcome.json"), &summary)?;
    for w in &result.outcome.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "simulate: {:?} after {} steps",
        result.outcome.status, result.outcome.steps
    );
    Ok(match result.outcome.status {
        RunStatus::ReachedHorizon => EXIT_OK,
        RunStatus::Diverged { .. } => EXIT_DIVERGED,
        RunStatus::BlewUp { .. } => EXIT_BLEW_UP,
    })
}

fn cmd_transform_check(ctx: &Ctx) -> Result<i32> {
    let block: &TransformCheckBlock = section(&ctx.cfg.transform_check, "transform_check")?;
    let t = block
        .transform
        .build(block.d)
        .map_err(|e| Error::config("transform_check.transform", e.to_string()))?;
    let seed = ctx.seed.unwrap_or(0);
    let cert = match certify(&t, block.sample_budget, block.box_half_width, seed) {
        Ok(c) => c,
        Err(e @ Error::Assumption { .. }) => {
            write_json(
                &ctx.out.join("transform.json"),
                &json!({"mode": "transform-check", "transform": t.label(), "error": e.to_string()}),
            )?;
            eprintln!("transform-check: {e}");
            return Ok(EXIT_CHECK_FAILED);
        }
        Err(e) => return Err(e),
    };
    let mut summary = json!({
        "mode": "transform-check",
        "transform": t.label(),
        "certificate": cert,
    });
    let mut code = EXIT_OK;
    if let Some(pb) = &block.pullback {
        let w = WeightParams::new(pb.r, pb.q0, block.d, 1.0)
            .map_err(|e| Error::config("transform_check.pullback", e.to_string()))?;
        let u = |x: &[f64]| (-x.iter().map(|v| v * v).sum::<f64>()).exp();
        let q = QuadOptions::with_tol(1e-12, ctx.tol.unwrap_or(1e-9));
        let direct = pullback_direct(&u, pb.support, &t, &w, pb.p, &q)?;
        match pullback_capacity_lower_bound(&u, pb.support, &t, &cert, &w, pb.p, &q) {
            Ok((lhs, rhs)) => {
                let holds = lhs >= rhs * (1.0 - 1e-9);
                if !holds {
                    code = EXIT_CHECK_FAILED;
                }
                summary["pullback"] =
                    json!({"lhs": lhs, "rhs": rhs, "direct": direct, "holds": holds});
            }
            Err(e) => {
                code = EXIT_CHECK_FAILED;
                summary["pullback"] = json!({"direct": direct, "error": e.to_string()});
            }
        }
    }
    write_json(&ctx.out.join("transform.json"), &summary)?;
    println!(
        "transform-check: {} (A2 {})",
        t.label(),
        if cert.a2_holds {
            "holds"
        } else {
            "not certified"
        }
    );
    Ok(code)
}
