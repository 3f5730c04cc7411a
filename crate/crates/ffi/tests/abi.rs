use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use checkin_reid_ffi::*;

fn last_error() -> String {
    let p = cr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn synth(json: &str) -> *mut CrDataset {
    let spec = CString::new(json).unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { cr_synth_generate(spec.as_ptr(), &mut ds) },
        CrStatus::Ok
    );
    assert!(!ds.is_null());
    ds
}

#[test]
fn synth_stats_and_attack_roundtrip() {
    let ds = synth(r#"{"n_users": 20, "n_venues": 80, "checkins_per_user": 30, "seed": 3}"#);
    let mut stats = CrDatasetStats::default();
    assert_eq!(unsafe { cr_dataset_stats(ds, &mut stats) }, CrStatus::Ok);
    assert_eq!(stats.checkins, 600);
    assert_eq!(stats.users, 20);

    let cfg = CString::new(r#"{"repetitions": 5, "base_seed": 9}"#).unwrap();
    let mut res = ptr::null_mut();
    assert_eq!(
        unsafe { cr_experiment_run(ds, cfg.as_ptr(), &mut res) },
        CrStatus::Ok
    );
    let mut sizes = 0usize;
    assert_eq!(
        unsafe { cr_result_test_sizes(res, &mut sizes) },
        CrStatus::Ok
    );
    assert_eq!(sizes, 10);
    let (mut k, mut l) = (0usize, 0usize);
    assert_eq!(
        unsafe { cr_result_sizes(res, &mut k, &mut l) },
        CrStatus::Ok
    );
    assert_eq!(k, 20);
    assert_eq!(l as u64, stats.venues);
    let (mut mean, mut se) = (0.0, 0.0);
    assert_eq!(
        unsafe { cr_result_accuracy(res, 1, &mut mean, &mut se) },
        CrStatus::Ok
    );
    assert!((0.0..=1.0).contains(&mean));
    assert_eq!(
        unsafe { cr_result_accuracy(res, 11, &mut mean, &mut se) },
        CrStatus::InvalidInput
    );
    assert!(last_error().contains("11"));

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { cr_result_to_json(res, &mut json) }, CrStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["n_users"], 20);
    assert_eq!(
        v["per_m"][0]["accuracy_mean"].as_f64().unwrap(),
        mean_at(res, 1)
    );
    unsafe {
        cr_string_free(json);
        cr_result_free(res);
        cr_dataset_free(ds);
    }
}

fn mean_at(res: *const CrResult, m: usize) -> f64 {
    let (mut mean, mut se) = (0.0, 0.0);
    assert_eq!(
        unsafe { cr_result_accuracy(res, m, &mut mean, &mut se) },
        CrStatus::Ok
    );
    mean
}

#[test]
fn dataset_directory_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(r#"{"n_users": 5, "n_venues": 12, "checkins_per_user": 4}"#);
    let path = CString::new(dir.path().join("d").to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { cr_dataset_write_dir(ds, path.as_ptr()) },
        CrStatus::Ok
    );
    let mut back = ptr::null_mut();
    assert_eq!(
        unsafe { cr_dataset_read_dir(path.as_ptr(), &mut back) },
        CrStatus::Ok
    );
    let (mut a, mut b) = (CrDatasetStats::default(), CrDatasetStats::default());
    unsafe {
        cr_dataset_stats(ds, &mut a);
        cr_dataset_stats(back, &mut b);
        cr_dataset_free(ds);
        cr_dataset_free(back);
    }
    assert_eq!(a, b);
}

#[test]
fn error_codes() {
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { cr_dataset_read_dir(ptr::null(), &mut ds) },
        CrStatus::NullPointer
    );
    assert!(last_error().contains("path"));

    let missing = CString::new("/nonexistent/checkin-reid").unwrap();
    assert_eq!(
        unsafe { cr_dataset_read_dir(missing.as_ptr(), &mut ds) },
        CrStatus::Io
    );

    let bad = CString::new("{not json").unwrap();
    assert_eq!(
        unsafe { cr_synth_generate(bad.as_ptr(), &mut ds) },
        CrStatus::InvalidInput
    );

    // More users than can fit on exclusive single-venue supports.
    let infeasible = CString::new(
        r#"{"n_users": 10, "n_venues": 5, "support_size": 1, "exclusive_supports": true}"#,
    )
    .unwrap();
    assert_eq!(
        unsafe { cr_synth_generate(infeasible.as_ptr(), &mut ds) },
        CrStatus::Infeasible
    );

    let small = synth(r#"{"n_users": 4, "n_venues": 10, "checkins_per_user": 5}"#);
    let mut res = ptr::null_mut();
    assert_eq!(
        unsafe { cr_experiment_run(small, ptr::null(), &mut res) },
        CrStatus::Infeasible
    );
    assert!(res.is_null());
    unsafe { cr_dataset_free(small) };

    // Success clears the previous message.
    assert_eq!(cr_haversine(0.0, 0.0, 0.0, 0.0), 0.0);
    let mut h = 0.0;
    assert_eq!(
        unsafe { cr_entropy_bits([1u64, 1].as_ptr(), 2, &mut h) },
        CrStatus::Ok
    );
    assert!(cr_last_error().is_null());
}

#[test]
fn numeric_helpers() {
    let d = cr_haversine(0.0, 0.0, 1.0, 0.0);
    assert!((d - 111_195.0802335329).abs() < 1e-6);

    let mut h = 0.0;
    assert_eq!(
        unsafe { cr_entropy_bits([1u64, 1, 1, 1].as_ptr(), 4, &mut h) },
        CrStatus::Ok
    );
    assert!((h - 2.0).abs() < 1e-12);
    assert_eq!(
        unsafe { cr_entropy_bits([0u64].as_ptr(), 1, &mut h) },
        CrStatus::Infeasible
    );

    let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let ys = [2.0, 4.0, 6.0, 8.0, 10.0, 12.0];
    let (mut r, mut p) = (0.0, 1.0);
    assert_eq!(
        unsafe { cr_pearson(xs.as_ptr(), ys.as_ptr(), 6, 1, &mut r, &mut p) },
        CrStatus::Ok
    );
    assert_eq!(r, 1.0);
    assert_eq!(p, 0.0);

    let v = unsafe { CStr::from_ptr(cr_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/checkin_reid.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in [
        "cr_dataset_read_dir",
        "cr_experiment_run",
        "cr_result_free",
        "CR_STATUS_INFEASIBLE = 3",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-x", "c", header])
        .output()
    else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
