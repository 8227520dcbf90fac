use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use tcnn_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(tcnn_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn simulated(n: usize, p: usize, seed: u64) -> *mut TcnnDataset {
    let mut data = ptr::null_mut();
    assert_eq!(unsafe { tcnn_dataset_simulate(n, p, seed, &mut data) }, TcnnStatus::Ok);
    data
}

fn fitted(data: *const TcnnDataset, kind: &str) -> *mut TcnnModel {
    let kind = CString::new(kind).unwrap();
    let mut model = ptr::null_mut();
    let status = unsafe { tcnn_model_fit(data, kind.as_ptr(), 5, 3, &mut model) };
    assert_eq!(status, TcnnStatus::Ok, "{}", last_error());
    model
}

fn covariates(data: *const TcnnDataset) -> (Vec<f64>, usize, usize) {
    let (mut n, mut p) = (0, 0);
    unsafe {
        assert_eq!(tcnn_dataset_dims(data, &mut n, &mut p), TcnnStatus::Ok);
        let mut x = vec![0.0; n * p];
        assert_eq!(tcnn_dataset_covariates(data, x.as_mut_ptr()), TcnnStatus::Ok);
        (x, n, p)
    }
}

#[test]
fn fit_predict_save_load() {
    let data = simulated(200, 5, 1);
    let (x, n, p) = covariates(data);
    assert_eq!((n, p), (200, 5));
    let model = fitted(data, "tcnn");

    let mut tau = vec![0.0; n];
    let mut truth = vec![0.0; n];
    unsafe {
        assert_eq!(
            tcnn_model_predict_cate(model, x.as_ptr(), n, p, tau.as_mut_ptr()),
            TcnnStatus::Ok
        );
        assert_eq!(tcnn_dataset_true_cate(data, truth.as_mut_ptr()), TcnnStatus::Ok);
    }
    let mut err = f64::NAN;
    assert_eq!(
        unsafe { tcnn_pehe(tau.as_ptr(), truth.as_ptr(), n, &mut err) },
        TcnnStatus::Ok
    );
    assert!(err.is_finite() && err > 0.0);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.tcnn").to_str().unwrap()).unwrap();
    let mut loaded = ptr::null_mut();
    let mut again = vec![0.0; n];
    unsafe {
        assert_eq!(tcnn_model_save(model, path.as_ptr()), TcnnStatus::Ok);
        assert_eq!(tcnn_model_load(path.as_ptr(), &mut loaded), TcnnStatus::Ok);
        assert_eq!(
            tcnn_model_predict_cate(loaded, x.as_ptr(), n, p, again.as_mut_ptr()),
            TcnnStatus::Ok
        );
        tcnn_model_free(loaded);
        tcnn_model_free(model);
        tcnn_dataset_free(data);
    }
    assert_eq!(tau, again);
}

#[test]
fn band_brackets_and_is_seeded() {
    let data = simulated(150, 4, 2);
    let (x, n, p) = covariates(data);
    let model = fitted(data, "icnn");
    let run = || {
        let (mut mean, mut lo, mut hi) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let status = unsafe {
            tcnn_model_cate_band(
                model,
                x.as_ptr(),
                n,
                p,
                30,
                0.9,
                11,
                mean.as_mut_ptr(),
                lo.as_mut_ptr(),
                hi.as_mut_ptr(),
            )
        };
        assert_eq!(status, TcnnStatus::Ok, "{}", last_error());
        (mean, lo, hi)
    };
    let (mean, lo, hi) = run();
    assert!(lo.iter().zip(&hi).all(|(l, h)| l <= h));
    assert!(lo.iter().zip(&hi).any(|(l, h)| l < h));
    assert_eq!(run(), (mean, lo, hi));
    unsafe {
        tcnn_model_free(model);
        tcnn_dataset_free(data);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let data = simulated(50, 4, 3);
    let bad_kind = CString::new("forest").unwrap();
    let mut model = ptr::null_mut();
    let status = unsafe { tcnn_model_fit(data, bad_kind.as_ptr(), 1, 0, &mut model) };
    assert_eq!(status, TcnnStatus::InvalidArgument);
    assert!(last_error().contains("forest"));
    assert!(model.is_null());

    let mut n = 0;
    let status = unsafe { tcnn_dataset_dims(ptr::null(), &mut n, &mut n) };
    assert_eq!(status, TcnnStatus::NullPointer);

    let x = [0.0, 1.0, 2.0, 3.0];
    let a = [1.0, 2.0];
    let y = [0.0, 0.0];
    let mut d2 = ptr::null_mut();
    let status = unsafe { tcnn_dataset_from_arrays(x.as_ptr(), 2, 2, a.as_ptr(), y.as_ptr(), &mut d2) };
    assert_eq!(status, TcnnStatus::Input);

    let missing = CString::new("/nonexistent/model.tcnn").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { tcnn_model_load(missing.as_ptr(), &mut m) }, TcnnStatus::Io);

    let mut truth = vec![0.0; 2];
    let a = [1.0, 0.0];
    let status = unsafe { tcnn_dataset_from_arrays(x.as_ptr(), 2, 2, a.as_ptr(), y.as_ptr(), &mut d2) };
    assert_eq!(status, TcnnStatus::Ok);
    assert_eq!(
        unsafe { tcnn_dataset_true_cate(d2, truth.as_mut_ptr()) },
        TcnnStatus::Input
    );
    unsafe {
        tcnn_dataset_free(d2);
        tcnn_dataset_free(data);
    }
    assert_eq!(status, TcnnStatus::Ok);
}

#[test]
fn tnn_single_arm_is_estimation_error() {
    let x = [0.0, 1.0, 2.0];
    let a = [1.0, 1.0, 1.0];
    let y = [1.0, 2.0, 3.0];
    let mut data = ptr::null_mut();
    unsafe {
        assert_eq!(
            tcnn_dataset_from_arrays(x.as_ptr(), 3, 1, a.as_ptr(), y.as_ptr(), &mut data),
            TcnnStatus::Ok
        );
        let kind = CString::new("tnn").unwrap();
        let mut model = ptr::null_mut();
        assert_eq!(
            tcnn_model_fit(data, kind.as_ptr(), 1, 0, &mut model),
            TcnnStatus::Estimation
        );
        tcnn_dataset_free(data);
    }
}

fn static_lib() -> Option<PathBuf> {
    // target/<profile>/deps/abi-<hash> -> target/<profile>/libtcnn_ffi.a
    let exe = std::env::current_exe().ok()?;
    let lib = exe.parent()?.parent()?.join("libtcnn_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_against_header() {
    let Some(lib) = static_lib() else {
        eprintln!("static library not found; skipping C link check");
        return;
    };
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "tcnn.h"
int main(void) {
    double a[3] = {1.0, 2.0, 3.0}, b[3] = {1.0, 2.0, 5.0}, out = 0.0;
    if (tcnn_pehe(a, b, 3, &out) != TCNN_STATUS_OK) return 1;
    TcnnDataset *d = NULL;
    if (tcnn_dataset_simulate(20, 4, 1, &d) != TCNN_STATUS_OK) return 2;
    size_t n = 0, p = 0;
    tcnn_dataset_dims(d, &n, &p);
    tcnn_dataset_free(d);
    if (tcnn_dataset_simulate(20, 2, 1, &d) != TCNN_STATUS_INVALID_ARGUMENT) return 3;
    printf("%.12f %zu %zu\n", out, n, p);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let cc = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output();
    let Ok(cc) = cc else {
        eprintln!("no C compiler; skipping C link check");
        return;
    };
    assert!(cc.status.success(), "{}", String::from_utf8_lossy(&cc.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "1.154700538379 20 4");
}
