use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use slds_core::model::{random_sparse_model, simulate_dataset, SparseModelSpec};
use slds_core::ModelParams;
use slds_ffi::*;

fn last_error() -> String {
    let p = slds_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn row_major(m: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().cloned().collect()
}

fn new_model(p: &ModelParams) -> *mut SldsModel {
    let mut out = ptr::null_mut();
    let status = unsafe {
        slds_model_new(
            p.state_dim(),
            p.obs_dim(),
            row_major(&p.a).as_ptr(),
            row_major(&p.c).as_ptr(),
            row_major(&p.q).as_ptr(),
            row_major(&p.r).as_ptr(),
            p.pi1.as_ptr(),
            row_major(&p.v1).as_ptr(),
            &mut out,
        )
    };
    assert_eq!(status, SldsStatus::Ok);
    out
}

/// Flatten series into the back-to-back buffer plus lengths.
fn flatten(seqs: &[slds_core::ObservationSequence]) -> (Vec<f64>, Vec<usize>) {
    let mut data = Vec::new();
    for s in seqs {
        data.extend(row_major(&s.values));
    }
    (data, seqs.iter().map(|s| s.len()).collect())
}

fn truth() -> ModelParams {
    random_sparse_model(&SparseModelSpec::new(3, 2, 0.5), 7).unwrap()
}

#[test]
fn parameters_round_trip_through_the_handle() {
    let p = truth();
    let m = new_model(&p);
    let (mut l, mut d) = (0, 0);
    assert_eq!(unsafe { slds_model_dims(m, &mut l, &mut d) }, SldsStatus::Ok);
    assert_eq!((l, d), (3, 2));
    let mut c = vec![0.0; 6];
    assert_eq!(unsafe { slds_model_copy(m, SldsParam::C, c.as_mut_ptr(), 6) }, SldsStatus::Ok);
    assert_eq!(c, row_major(&p.c));
    let mut pi = vec![0.0; 3];
    assert_eq!(unsafe { slds_model_copy(m, SldsParam::Pi1, pi.as_mut_ptr(), 3) }, SldsStatus::Ok);
    assert_eq!(pi.as_slice(), p.pi1.as_slice());
    let mut short = vec![0.0; 4];
    assert_eq!(unsafe { slds_model_copy(m, SldsParam::A, short.as_mut_ptr(), 4) }, SldsStatus::InvalidArgument);
    assert!(last_error().contains("9 elements"));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { slds_model_save(m, path.as_ptr()) }, SldsStatus::Ok);
    assert!(slds_last_error_message().is_null());
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { slds_model_load(path.as_ptr(), &mut back) }, SldsStatus::Ok);
    let mut a = vec![0.0; 9];
    assert_eq!(unsafe { slds_model_copy(back, SldsParam::A, a.as_mut_ptr(), 9) }, SldsStatus::Ok);
    assert_eq!(a, row_major(&p.a));
    unsafe {
        slds_model_free(m);
        slds_model_free(back);
        slds_model_free(ptr::null_mut());
    }
}

#[test]
fn failures_report_status_and_message() {
    let mut out = ptr::null_mut();
    let missing = CString::new("/nonexistent/model.json").unwrap();
    assert_eq!(unsafe { slds_model_load(missing.as_ptr(), &mut out) }, SldsStatus::IoError);
    assert!(out.is_null());
    assert_eq!(unsafe { slds_model_load(ptr::null(), &mut out) }, SldsStatus::NullPointer);
    assert!(last_error().contains("path"));

    let bad_q = [1.0, 2.0, 2.0, 1.0];
    let eye = [1.0, 0.0, 0.0, 1.0];
    let status = unsafe {
        slds_model_new(2, 2, eye.as_ptr(), eye.as_ptr(), bad_q.as_ptr(), eye.as_ptr(), eye.as_ptr(), eye.as_ptr(), &mut out)
    };
    assert_ne!(status, SldsStatus::Ok);
    assert!(last_error().contains("Q not PSD"), "{}", last_error());

    let cfg = slds_fit_config_default(2, 0.0);
    let data = [1.0, 2.0];
    let lengths = [1usize];
    let status = unsafe { slds_fit(data.as_ptr(), lengths.as_ptr(), 1, 2, &cfg, &mut out, ptr::null_mut()) };
    assert_eq!(status, SldsStatus::InvalidArgument);
    assert!(last_error().contains("fewer than 2"));
}

#[test]
fn fit_forecast_and_scores_match_the_library() {
    let p = truth();
    let train = simulate_dataset(&p, 15, 20, 1).unwrap();
    let test = simulate_dataset(&p, 10, 20, 2).unwrap();
    let (data, lengths) = flatten(&train);
    let mut cfg = slds_fit_config_default(3, 1.0);
    cfg.em_max_iter = 25;
    assert_eq!(cfg.prox_max_iter, slds_core::FitConfig::new(3, 1.0).prox_max_iter);

    let mut model = ptr::null_mut();
    let mut iters = 0usize;
    let status = unsafe { slds_fit(data.as_ptr(), lengths.as_ptr(), 15, 2, &cfg, &mut model, &mut iters) };
    assert_eq!(status, SldsStatus::Ok, "{}", last_error());
    let (expected, diag) = slds_core::em_fit(&train, &slds_core::FitConfig::from(&cfg)).unwrap();
    assert_eq!(iters, diag.iterations_run);
    let mut a = vec![0.0; 9];
    unsafe { slds_model_copy(model, SldsParam::A, a.as_mut_ptr(), 9) };
    assert_eq!(a, row_major(&expected.a));

    let prefix = row_major(&test[0].prefix(8).values);
    let mut fc = vec![0.0; 3 * 2];
    assert_eq!(unsafe { slds_forecast(model, prefix.as_ptr(), 8, 3, fc.as_mut_ptr(), 6) }, SldsStatus::Ok);
    for h in 0..3 {
        let y = slds_core::forecasting::predict_observation(&expected, &test[0], 8, 9 + h).unwrap();
        assert!((fc[2 * h] - y[0]).abs() < 1e-12 && (fc[2 * h + 1] - y[1]).abs() < 1e-12);
    }

    let (tdata, tlen) = flatten(&test);
    let mut ll = 0.0;
    assert_eq!(unsafe { slds_log_likelihood(model, tdata.as_ptr(), tlen.as_ptr(), 10, &mut ll) }, SldsStatus::Ok);
    let want = slds_core::inference::total_log_likelihood(&expected, &test).unwrap();
    assert!((ll - want).abs() <= 1e-9 * want.abs());

    let mut score = 0.0;
    assert_eq!(unsafe { slds_amae(model, tdata.as_ptr(), tlen.as_ptr(), 10, 5, 3, &mut score) }, SldsStatus::Ok);
    let tasks = slds_core::evaluation::sample_tasks(&test, 5, 3).unwrap();
    let want = slds_core::evaluation::TaskEvaluator::new(&expected, &test).unwrap().amae(&tasks).unwrap();
    assert!((score - want).abs() < 1e-12);
    unsafe { slds_model_free(model) };
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/slds.h")
}

#[test]
fn generated_header_declares_the_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "slds_last_error_message",
        "slds_fit_config_default",
        "slds_model_new",
        "slds_model_load",
        "slds_model_save",
        "slds_model_free",
        "slds_model_dims",
        "slds_model_copy",
        "slds_fit",
        "slds_forecast",
        "slds_log_likelihood",
        "slds_amae",
        "typedef struct SldsModel SldsModel",
        "SLDS_STATUS_NUMERICAL_ERROR = 4",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "slds.h"

int main(void) {
    double a[1] = {0.5}, c[1] = {1.0}, q[1] = {0.1}, r[1] = {0.1}, pi[1] = {0.0}, v[1] = {1.0};
    SldsModel *m = NULL;
    if (slds_model_new(1, 1, a, c, q, r, pi, v, &m) != SLDS_STATUS_OK) return 1;
    double prefix[2] = {1.0, 1.0}, out[2];
    if (slds_forecast(m, prefix, 2, 2, out, 2) != SLDS_STATUS_OK) return 2;
    if (slds_model_load(NULL, &m) != SLDS_STATUS_NULL_POINTER) return 3;
    printf("%.6f %.6f %s\n", out[0], out[1], slds_last_error_message());
    slds_model_free(m);
    return 0;
}
"#;

/// Compile and run a C client against the static library when a C compiler
/// and the archive are available.
#[test]
fn c_client_links_against_the_static_library() {
    let exe = std::env::current_exe().unwrap();
    let archive = exe.parent().unwrap().parent().unwrap().join("libslds_ffi.a");
    if !archive.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library at {}", archive.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let bin = dir.path().join("client");
    let built = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&archive)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(built.status.success(), "{}", String::from_utf8_lossy(&built.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success());
    let text = String::from_utf8(run.stdout).unwrap();
    let fields: Vec<&str> = text.split_whitespace().collect();
    let first: f64 = fields[0].parse().unwrap();
    let second: f64 = fields[1].parse().unwrap();
    assert!((second - 0.5 * first).abs() < 1e-6);
    assert!(text.contains("path is null"));
}
