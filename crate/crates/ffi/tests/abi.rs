use std::ffi::{CStr, CString};
use std::ptr;

use sparse_hinf_ffi::*;

fn plant_json(a: f64) -> CString {
    CString::new(format!(
        r#"{{"format":1,"domain":"discrete","ts":1.0,"A":[[{a}]],"B1":[[1]],"B2":[[1]],"C1":[[1]],"C2":[[1]],"D12":[[0.1]],"D21":[[0.1]]}}"#
    ))
    .unwrap()
}

fn last_error() -> String {
    let p = sh_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(a: f64) -> *mut ShPlant {
    let mut p = ptr::null_mut();
    assert_eq!(
        unsafe { sh_plant_from_json(plant_json(a).as_ptr(), &mut p) },
        ShStatus::Ok
    );
    p
}

#[test]
fn null_arguments_are_reported() {
    let mut p = ptr::null_mut();
    assert_eq!(
        unsafe { sh_plant_from_json(ptr::null(), &mut p) },
        ShStatus::NullPointer
    );
    assert!(last_error().contains("json"));
    let mut n = 0.0;
    assert_eq!(
        unsafe { sh_plant_hinf_norm(ptr::null(), &mut n) },
        ShStatus::NullPointer
    );
    unsafe {
        sh_plant_free(ptr::null_mut());
        sh_controller_free(ptr::null_mut());
        sh_string_free(ptr::null_mut());
    }
}

#[test]
fn parse_errors_carry_a_message() {
    let bad = CString::new(r#"{"format":1,"domain":"discrete","ts":1.0,"A":[[1,2]]}"#).unwrap();
    let mut p = ptr::null_mut();
    let s = unsafe { sh_plant_from_json(bad.as_ptr(), &mut p) };
    assert_ne!(s, ShStatus::Ok);
    assert!(p.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn plant_roundtrip_and_queries() {
    let p = load(0.5);
    let (mut nx, mut ny) = (0, 0);
    assert_eq!(
        unsafe {
            sh_plant_dims(
                p,
                &mut nx,
                ptr::null_mut(),
                ptr::null_mut(),
                ptr::null_mut(),
                &mut ny,
            )
        },
        ShStatus::Ok
    );
    assert_eq!((nx, ny), (1, 1));
    let mut ts = 0.0;
    unsafe { sh_plant_sample_time(p, &mut ts) };
    assert_eq!(ts, 1.0);
    let mut n = 0.0;
    assert_eq!(unsafe { sh_plant_hinf_norm(p, &mut n) }, ShStatus::Ok);
    // 1 / (1 - 0.5) at z = 1
    assert!((n - 2.0).abs() < 1e-6, "{n}");

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { sh_plant_to_json(p, &mut s) }, ShStatus::Ok);
    let mut q = ptr::null_mut();
    assert_eq!(unsafe { sh_plant_from_json(s, &mut q) }, ShStatus::Ok);
    unsafe {
        sh_string_free(s);
        sh_plant_free(q);
    }

    let mut d = ptr::null_mut();
    assert_eq!(
        unsafe { sh_plant_discretize(p, 0.1, &mut d) },
        ShStatus::Domain
    );
    unsafe { sh_plant_free(p) };
}

#[test]
fn synthesis_through_the_abi() {
    let p = load(1.2);
    let mut opts = sh_synth_options_default(25.0);
    opts.n_taps = 2;
    let mut k = ptr::null_mut();
    assert_eq!(
        unsafe { sh_synthesize(p, &opts, ptr::null(), &mut k) },
        ShStatus::Ok,
        "{}",
        last_error()
    );

    let (mut mu, mut min_eig, mut cert) = (0.0, 0.0, 0.0);
    assert_eq!(
        unsafe { sh_controller_certificate(k, &mut mu, &mut min_eig, &mut cert) },
        ShStatus::Ok
    );
    assert_eq!(mu, 25.0);
    assert!(min_eig > 0.0 && cert < 5.0);
    let mut n = 0.0;
    assert_eq!(unsafe { sh_closed_loop_norm(p, k, &mut n) }, ShStatus::Ok);
    assert!((n - cert).abs() < 1e-3 * cert.max(1.0), "{n} vs {cert}");

    let mut buf = [0.0; 1];
    assert_eq!(
        unsafe { sh_controller_tap(k, 5, buf.as_mut_ptr(), 1) },
        ShStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { sh_controller_tap(k, 0, buf.as_mut_ptr(), 0) },
        ShStatus::Dimension
    );
    assert_eq!(
        unsafe { sh_controller_tap(k, 0, buf.as_mut_ptr(), 1) },
        ShStatus::Ok
    );

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { sh_controller_to_json(k, &mut s) }, ShStatus::Ok);
    let mut k2 = ptr::null_mut();
    assert_eq!(unsafe { sh_controller_from_json(s, &mut k2) }, ShStatus::Ok);
    let mut again = [0.0; 1];
    unsafe { sh_controller_tap(k2, 0, again.as_mut_ptr(), 1) };
    assert_eq!(buf, again);
    unsafe {
        sh_string_free(s);
        sh_controller_free(k2);
        sh_controller_free(k);
        sh_plant_free(p);
    }
}

#[test]
fn zero_pattern_on_unstable_plant_is_infeasible() {
    let p = load(1.5);
    let opts = sh_synth_options_default(10.0);
    let zero = [0u8];
    let mut k = ptr::null_mut();
    let s = unsafe { sh_synthesize(p, &opts, zero.as_ptr(), &mut k) };
    assert_eq!(s, ShStatus::Infeasible, "{}", last_error());
    assert!(k.is_null());
    unsafe { sh_plant_free(p) };
}

#[test]
fn version_is_a_string() {
    let v = unsafe { CStr::from_ptr(sh_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
