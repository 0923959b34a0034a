//! The C ABI exercised from Rust, plus a syntax check of the generated header.

use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use equiwave_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { eqw_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn model(n: u32, k: u32, radius: f64, m: usize) -> *mut EqwModel {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { eqw_model_new(n, k, radius, m, &mut h) }, EqwStatus::Ok);
    h
}

#[test]
fn version_is_exposed() {
    let v = unsafe { CStr::from_ptr(eqw_version()) }.to_str().unwrap();
    assert_eq!(v, equiwave::io::VERSION);
}

#[test]
fn inadmissible_model_reports_status_and_message() {
    let mut h = ptr::null_mut();
    let s = unsafe { eqw_model_new(1, 0, 10.0, 90, &mut h) };
    assert_eq!(s, EqwStatus::InvalidParams);
    assert!(h.is_null());
    assert!(last_error().contains("k = 0"));
    assert_eq!(unsafe { eqw_model_new(1, 1, 10.0, 90, ptr::null_mut()) }, EqwStatus::NullPointer);
}

#[test]
fn grid_profile_and_greens_match_the_library() {
    let h = model(1, 1, 10.0, 72);
    let n = unsafe { eqw_model_nodes(h) };
    assert_eq!(n, 73);
    let mut r = vec![0.0; n];
    let mut q = vec![0.0; n];
    assert_eq!(unsafe { eqw_model_grid(h, r.as_mut_ptr(), n) }, EqwStatus::Ok);
    assert_eq!(unsafe { eqw_model_soliton(h, q.as_mut_ptr(), n) }, EqwStatus::Ok);
    assert_eq!((r[0], r[n - 1]), (1.0, 10.0));
    assert_eq!(q[0], 0.0);
    assert!(q.windows(2).all(|w| w[1] > w[0]));

    let mut small = vec![0.0; n];
    assert_eq!(unsafe { eqw_model_greens(h, small.as_mut_ptr(), n) }, EqwStatus::BufferTooSmall);
    let mut g = vec![0.0; n * n];
    assert_eq!(unsafe { eqw_model_greens(h, g.as_mut_ptr(), g.len()) }, EqwStatus::Ok);
    for i in 0..n {
        for j in 0..n {
            assert!((g[i * n + j] - g[j * n + i]).abs() <= 1e-12 * g[n + 1].abs().max(1.0));
        }
    }
    assert!(g[n * n / 2] > 0.0);
    unsafe { eqw_model_free(h) };
}

#[test]
fn ensembles_are_seeded_and_indexable() {
    let h = model(1, 1, 10.0, 72);
    let n = unsafe { eqw_model_nodes(h) };
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(unsafe { eqw_sample_gaussian(h, 5, 3, &mut a) }, EqwStatus::Ok);
    assert_eq!(unsafe { eqw_sample_gaussian(h, 5, 3, &mut b) }, EqwStatus::Ok);
    assert_eq!(unsafe { eqw_ensemble_len(a) }, 3);
    let (mut x, mut y) = (vec![0.0; n], vec![0.0; n]);
    assert_eq!(unsafe { eqw_ensemble_sample(a, 2, x.as_mut_ptr(), n) }, EqwStatus::Ok);
    assert_eq!(unsafe { eqw_ensemble_sample(b, 2, y.as_mut_ptr(), n) }, EqwStatus::Ok);
    assert_eq!(x, y);
    assert_eq!((x[0], x[n - 1]), (0.0, 0.0));
    assert_eq!(unsafe { eqw_ensemble_sample(a, 3, x.as_mut_ptr(), n) }, EqwStatus::InvalidArgument);

    let mut v = 0.0;
    assert_eq!(unsafe { eqw_potential(h, x.as_ptr(), n, 10.0, &mut v) }, EqwStatus::Ok);
    assert!(v.is_finite());
    let zero = vec![0.0; n];
    assert_eq!(unsafe { eqw_potential(h, zero.as_ptr(), n, 10.0, &mut v) }, EqwStatus::Ok);
    assert_eq!(v, 0.0);
    unsafe {
        eqw_ensemble_free(a);
        eqw_ensemble_free(b);
        eqw_model_free(h);
    }
}

#[test]
fn evolution_is_in_place_and_validated() {
    let h = model(1, 1, 10.0, 72);
    let n = unsafe { eqw_model_nodes(h) };
    let mut psi = vec![0.0; n];
    let mut w = vec![0.0; n];
    assert_eq!(unsafe { eqw_evolve(h, psi.as_mut_ptr(), w.as_mut_ptr(), n, 2.0, 0) }, EqwStatus::Ok);
    assert!(psi.iter().chain(&w).all(|v| *v == 0.0));
    for (i, p) in psi.iter_mut().enumerate().take(n - 1).skip(1) {
        *p = 0.1 * ((i as f64) * std::f64::consts::PI / (n - 1) as f64).sin();
    }
    assert_eq!(unsafe { eqw_evolve(h, psi.as_mut_ptr(), w.as_mut_ptr(), n, 1.0, 4) }, EqwStatus::Ok);
    assert!(psi.iter().any(|v| *v != 0.0));
    assert_eq!(unsafe { eqw_evolve(h, psi.as_mut_ptr(), w.as_mut_ptr(), n - 1, 1.0, 0) }, EqwStatus::InvalidArgument);
    unsafe { eqw_model_free(h) };
}

#[test]
fn model_from_string_and_acceptance_entry() {
    let mut h = ptr::null_mut();
    let desc = CString::new("0, 1, 8, 56").unwrap();
    assert_eq!(unsafe { eqw_model_from_str(desc.as_ptr(), &mut h) }, EqwStatus::Ok);
    assert_eq!(unsafe { eqw_model_nodes(h) }, 57);
    unsafe { eqw_model_free(h) };
    let bad = CString::new("1,1,8").unwrap();
    assert_eq!(unsafe { eqw_model_from_str(bad.as_ptr(), &mut h) }, EqwStatus::InvalidArgument);

    let mut passed = -1;
    assert_eq!(unsafe { eqw_acceptance_criterion(11, 42, &mut passed) }, EqwStatus::Ok);
    assert_eq!(passed, 1);
    assert_eq!(unsafe { eqw_acceptance_criterion(0, 42, &mut passed) }, EqwStatus::InvalidArgument);
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/equiwave.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["eqw_model_new", "eqw_model_free", "eqw_sample_gaussian", "eqw_evolve", "eqw_last_error", "EQW_STATUS_OK"] {
        assert!(text.contains(name), "{name} missing from the header");
    }
    // Syntax check with the system C compiler, when one is installed.
    if let Ok(out) = std::process::Command::new("cc").args(["-fsyntax-only", "-x", "c", "-std=c99"]).arg(&header).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
