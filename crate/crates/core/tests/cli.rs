use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fraccap"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run_mode(mode: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(mode)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_lists_subcommands() {
    let o = bin().arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in [
        "exponents",
        "regimes",
        "capacity",
        "verify",
        "simulate",
        "transform-check",
    ] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn delta_out_of_range_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(
        &cfg,
        "[exponents]\nproblem = \"scalar\"\nalpha = 0.5\ndelta = 3.0\nd = 1\n",
    )
    .unwrap();
    let o = run_mode("exponents", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("delta") && e.contains("(0,2]"), "{e}");
}

#[test]
fn unknown_key_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[simulate]\nproblem = \"scalar\"\nbogus = 1\n").unwrap();
    let o = run_mode("simulate", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("simulate.bogus"), "{}", stderr(&o));
}

#[test]
fn missing_section_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["capacity", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("capacity"), "{}", stderr(&o));
}

#[test]
fn exponent_sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_mode(
        "exponents",
        &config("exponents_alpha_sweep.toml"),
        dir.path(),
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut rd = csv::Reader::from_path(dir.path().join("exponents.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 10);
    let last: f64 = rows[9][3].parse().unwrap();
    assert!((last - 3.0).abs() < 1e-9);
    assert!(dir.path().join("exponents.json").exists());
}

#[test]
fn system_regimes_report_fired_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_mode("regimes", &config("regimes_system.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("regimes.csv")).unwrap();
    assert!(text.contains("Nonexistence") && text.contains("Undetermined"));
    assert!(text.contains("d<max{Dbar,Ebar}"));
}

#[test]
fn scalar_capacity_vanishes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_mode("capacity", &config("capacity_scalar.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("capacity.json")).unwrap())
            .unwrap();
    assert!(json.to_string().contains("VanishesAsTGrows"), "{json}");
    let mut rd = csv::Reader::from_path(dir.path().join("capacity.csv")).unwrap();
    let totals: Vec<f64> = rd
        .records()
        .map(|r| r.unwrap().iter().last().unwrap().parse().unwrap())
        .collect();
    assert!(totals.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn simulate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let zero = run_mode(
        "simulate",
        &config("simulate_zero.toml"),
        &dir.path().join("zero"),
        &[],
    );
    assert_eq!(zero.status.code(), Some(0), "{}", stderr(&zero));
    let outcome = std::fs::read_to_string(dir.path().join("zero/outcome.json")).unwrap();
    assert!(outcome.contains("ReachedHorizon"));
    assert!(dir.path().join("zero/trace.csv").exists());

    let blow = run_mode(
        "simulate",
        &config("simulate_subcritical.toml"),
        &dir.path().join("blow"),
        &[],
    );
    assert_eq!(blow.status.code(), Some(5), "{}", stderr(&blow));
    let outcome = std::fs::read_to_string(dir.path().join("blow/outcome.json")).unwrap();
    assert!(outcome.contains("BlewUp"));
}

#[test]
fn shift_fails_transform_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_mode(
        "transform-check",
        &config("transform_shift.toml"),
        dir.path(),
        &[],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let dil = run_mode(
        "transform-check",
        &config("transform_dilation.toml"),
        &dir.path().join("dil"),
        &[],
    );
    assert_eq!(dil.status.code(), Some(0), "{}", stderr(&dil));
}

#[test]
fn unreachable_tolerance_fails_verify() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["verify", "--tol", "1e-30", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert!(text.contains("false"));
}
