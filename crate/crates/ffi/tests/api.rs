use std::ffi::{CStr, CString};
use std::ptr;

use fraccap_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(fc_last_error()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn p_star_matches_closed_form() {
    unsafe {
        let h = fc_inputs_new();
        assert_eq!(fc_inputs_set(h, c("alpha").as_ptr(), 0.5), FcStatus::Ok);
        assert_eq!(fc_inputs_set(h, c("d").as_ptr(), 1.0), FcStatus::Ok);
        let mut v = 0.0;
        assert_eq!(fc_p_star(h, &mut v), FcStatus::Ok);
        assert!((v - 5.0 / 3.0).abs() < 1e-14);
        fc_inputs_free(h);
    }
}

#[test]
fn invalid_delta_is_a_validation_error() {
    unsafe {
        let h = fc_inputs_new();
        fc_inputs_set(h, c("delta").as_ptr(), 3.0);
        let mut v = 0.0;
        assert_eq!(fc_p_star(h, &mut v), FcStatus::Validation);
        let msg = last_error();
        assert!(msg.contains("delta") && msg.contains("(0,2]"), "{msg}");
        fc_inputs_free(h);
    }
}

#[test]
fn unknown_field_and_bad_dimension() {
    unsafe {
        let h = fc_inputs_new();
        assert_eq!(
            fc_inputs_set(h, c("omega").as_ptr(), 1.0),
            FcStatus::Validation
        );
        assert!(last_error().contains("omega"));
        assert_eq!(fc_inputs_set(h, c("d").as_ptr(), 1.5), FcStatus::Validation);
        let mut v = 0.0;
        assert_eq!(fc_inputs_get(h, c("d").as_ptr(), &mut v), FcStatus::Ok);
        assert_eq!(v, 1.0);
        fc_inputs_free(h);
    }
}

#[test]
fn null_arguments_are_reported() {
    unsafe {
        let mut v = 0.0;
        assert_eq!(fc_p_star(ptr::null(), &mut v), FcStatus::NullPointer);
        let h = fc_inputs_new();
        assert_eq!(fc_inputs_set(h, ptr::null(), 1.0), FcStatus::NullPointer);
        assert_eq!(
            fc_classify(h, FcProblem::Scalar, ptr::null_mut()),
            FcStatus::NullPointer
        );
        fc_inputs_free(h);
        fc_inputs_free(ptr::null_mut());
        fc_report_free(ptr::null_mut());
        fc_simulation_free(ptr::null_mut());
    }
}

#[test]
fn scalar_classification_round_trip() {
    unsafe {
        let h = fc_inputs_new();
        fc_inputs_set(h, c("alpha").as_ptr(), 0.5);
        fc_inputs_set(h, c("p").as_ptr(), 1.5);
        let mut r = ptr::null_mut();
        assert_eq!(fc_classify(h, FcProblem::Scalar, &mut r), FcStatus::Ok);
        assert_eq!(fc_report_verdict(r), FcVerdict::Nonexistence);
        let fired = CStr::from_ptr(fc_report_fired(r)).to_str().unwrap();
        assert!(fired.contains("p<p*"), "{fired}");
        let mut ps = 0.0;
        assert_eq!(
            fc_report_number(r, c("p_star").as_ptr(), &mut ps),
            FcStatus::Ok
        );
        assert!((ps - 5.0 / 3.0).abs() < 1e-14);
        assert_eq!(
            fc_report_number(r, c("nope").as_ptr(), &mut ps),
            FcStatus::OutOfRange
        );
        fc_report_free(r);

        fc_inputs_set(h, c("p").as_ptr(), 2.0);
        assert_eq!(fc_classify(h, FcProblem::Scalar, &mut r), FcStatus::Ok);
        assert_eq!(fc_report_verdict(r), FcVerdict::Undetermined);
        assert_eq!(CStr::from_ptr(fc_report_fired(r)).to_bytes().len(), 0);
        fc_report_free(r);
        fc_inputs_free(h);
    }
}

#[test]
fn system_exponents_symmetric_case() {
    unsafe {
        let h = fc_inputs_new();
        let mut out = FcSystemExponents::default();
        assert_eq!(fc_system_exponents(h, &mut out), FcStatus::Ok);
        assert_eq!(out.d, [2.0; 4]);
        assert_eq!(out.e, [2.0; 4]);
        assert_eq!((out.dbar, out.ebar), (2.0, 2.0));

        let mut r = ptr::null_mut();
        fc_inputs_set(h, c("d").as_ptr(), 1.0);
        assert_eq!(fc_classify(h, FcProblem::System, &mut r), FcStatus::Ok);
        assert_eq!(fc_report_verdict(r), FcVerdict::Nonexistence);
        let mut dbar = 0.0;
        assert_eq!(
            fc_report_number(r, c("Dbar").as_ptr(), &mut dbar),
            FcStatus::Ok
        );
        assert_eq!(dbar, 2.0);
        fc_report_free(r);
        fc_inputs_free(h);
    }
}

const ZERO_RUN: &str = r#"
[simulate]
problem = "scalar"
grid = { d = 1, half_width = 10.0, n = 64, dt = 0.01, t_max = 0.1 }
physics = { alpha = 0.5, delta = 2.0, p = 2.0 }
transform = { kind = "identity" }
data = { amplitude = 0.0, width = 1.0 }
"#;

#[test]
fn simulation_zero_data_reaches_horizon() {
    unsafe {
        let mut sim = ptr::null_mut();
        assert_eq!(
            fc_simulation_from_toml(c(ZERO_RUN).as_ptr(), &mut sim),
            FcStatus::Ok,
            "{}",
            last_error()
        );
        assert_eq!(fc_simulation_trace_len(sim), 0);
        let mut status = FcRunStatus::BlewUp;
        let mut t = 0.0;
        assert_eq!(fc_simulation_run(sim, &mut status, &mut t), FcStatus::Ok);
        assert_eq!(status, FcRunStatus::ReachedHorizon);
        assert!(t.is_nan());
        let n = fc_simulation_trace_len(sim);
        assert!(n > 1);
        let mut row = FcNormRow::default();
        for i in 0..n {
            assert_eq!(fc_simulation_trace_row(sim, i, &mut row), FcStatus::Ok);
            assert_eq!(row.step, i as u64);
            assert_eq!(row.linf, 0.0);
        }
        assert_eq!(
            fc_simulation_trace_row(sim, n, &mut row),
            FcStatus::OutOfRange
        );
        fc_simulation_free(sim);
    }
}

#[test]
fn simulation_config_errors() {
    unsafe {
        let mut sim = ptr::null_mut();
        assert_eq!(
            fc_simulation_from_toml(c("seed = 1\n").as_ptr(), &mut sim),
            FcStatus::Validation
        );
        assert!(sim.is_null());
        assert!(last_error().contains("simulate"));
        let bad = ZERO_RUN.replace("n = 64", "n = 64, bogus = 1");
        assert_eq!(
            fc_simulation_from_toml(c(&bad).as_ptr(), &mut sim),
            FcStatus::Validation
        );
        assert!(last_error().contains("bogus"));
    }
}

#[test]
fn version_is_nonempty() {
    let v = unsafe { CStr::from_ptr(fc_version()) };
    assert!(!v.to_bytes().is_empty());
}
