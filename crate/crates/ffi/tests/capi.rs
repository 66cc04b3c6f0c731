use std::ffi::{CStr, CString};
use std::ptr;

use latentdiff_ffi::*;

const TINY: &str = r#"{
  "data": {"n": 400, "m": 4, "test_n": 200, "bins": 10},
  "regressor": {"hidden": [16, 8], "epochs": 5, "batch_size": 64},
  "diffusion": {"epochs": 3, "batch_size": 64, "hidden": 32, "blocks": 1, "embed_dim": 16, "timesteps": 10},
  "head": {"epochs": 5, "batch_size": 64},
  "analytics": {"max_pairs": 2000}
}"#;

fn last_error() -> String {
    let p = ld_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(ld_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_rejected() {
    let mut out = 0.0;
    let status = unsafe { ld_schedule_alpha_bar(ptr::null(), 0, &mut out) };
    assert_eq!(status, LdStatus::NullPointer);
    assert!(last_error().contains("schedule"));

    let status = unsafe { ld_config_parse(ptr::null(), false, ptr::null_mut()) };
    assert_eq!(status, LdStatus::NullPointer);

    unsafe {
        ld_config_free(ptr::null_mut());
        ld_run_free(ptr::null_mut());
        ld_schedule_free(ptr::null_mut());
    }
}

#[test]
fn success_clears_the_error() {
    let mut cfg = ptr::null_mut();
    let bad = CString::new(r#"{"priority": {"lambda": 2.0}, "bogus": 1}"#).unwrap();
    assert_eq!(
        unsafe { ld_config_parse(bad.as_ptr(), false, &mut cfg) },
        LdStatus::Config
    );
    assert!(last_error().contains("bogus"));
    assert!(cfg.is_null());

    let empty = CString::new("").unwrap();
    assert_eq!(
        unsafe { ld_config_parse(empty.as_ptr(), false, &mut cfg) },
        LdStatus::Ok
    );
    assert!(ld_last_error().is_null());
    unsafe { ld_config_free(cfg) };
}

#[test]
fn invalid_utf8_is_reported() {
    let bytes = [b'{', 0xff, b'}', 0];
    let mut cfg = ptr::null_mut();
    let status = unsafe { ld_config_parse(bytes.as_ptr().cast(), false, &mut cfg) };
    assert_eq!(status, LdStatus::InvalidUtf8);
}

#[test]
fn config_hash_ignores_seed_only_through_seed() {
    let text = CString::new("{}").unwrap();
    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(ld_config_parse(text.as_ptr(), false, &mut cfg), LdStatus::Ok);
        let mut a = [0 as std::ffi::c_char; 65];
        let mut b = [0 as std::ffi::c_char; 65];
        assert_eq!(ld_config_hash(cfg, a.as_mut_ptr(), a.len()), LdStatus::Ok);
        assert_eq!(ld_config_set_seed(cfg, 7), LdStatus::Ok);
        assert_eq!(ld_config_hash(cfg, b.as_mut_ptr(), b.len()), LdStatus::Ok);
        let (a, b) = (CStr::from_ptr(a.as_ptr()), CStr::from_ptr(b.as_ptr()));
        assert_eq!(a.to_bytes().len(), 64);
        assert_ne!(a, b);

        let mut short = [0 as std::ffi::c_char; 10];
        assert_eq!(ld_config_hash(cfg, short.as_mut_ptr(), short.len()), LdStatus::Shape);
        ld_config_free(cfg);
    }
}

#[test]
fn cosine_schedule_endpoints() {
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(ld_schedule_new(LdScheduleKind::Cosine, 50, 0.008, &mut s), LdStatus::Ok);
        let mut v = 0.0;
        assert_eq!(ld_schedule_alpha_bar(s, 0, &mut v), LdStatus::Ok);
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(ld_schedule_alpha_bar(s, 50, &mut v), LdStatus::Ok);
        assert!(v < 1e-3);
        assert_eq!(ld_schedule_alpha_bar(s, 51, &mut v), LdStatus::Numeric);
        ld_schedule_free(s);

        assert_eq!(
            ld_schedule_new(LdScheduleKind::Linear, 0, 0.008, &mut s),
            LdStatus::Config
        );
    }
}

#[test]
fn priorities_and_allocation() {
    let errors = [1.0, 2.0, 3.0, 4.0];
    let counts = [100usize, 50, 10, 1];
    let mut probs = [0.0; 4];
    let mut quotas = [0usize; 4];
    unsafe {
        let status = ld_priority_scores(errors.as_ptr(), counts.as_ptr(), 4, 0.7, false, probs.as_mut_ptr());
        assert_eq!(status, LdStatus::Ok);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(probs.windows(2).all(|w| w[0] < w[1]));

        let status = ld_allocate_budget(probs.as_ptr(), 4, 101, LdAllocationMode::Priority, quotas.as_mut_ptr());
        assert_eq!(status, LdStatus::Ok);
        assert_eq!(quotas.iter().sum::<usize>(), 101);

        let status = ld_allocate_budget(probs.as_ptr(), 4, 8, LdAllocationMode::Uniform, quotas.as_mut_ptr());
        assert_eq!(status, LdStatus::Ok);
        assert_eq!(quotas, [2, 2, 2, 2]);

        let status = ld_priority_scores(errors.as_ptr(), ptr::null(), 4, 0.7, false, probs.as_mut_ptr());
        assert_eq!(status, LdStatus::NullPointer);
    }
}

#[test]
fn metrics_of_perfect_predictions() {
    let y = [1.0, 2.0, 3.0, 4.0];
    let mut m = LdRegionMetrics::default();
    unsafe {
        assert_eq!(ld_region_metrics(y.as_ptr(), y.as_ptr(), 4, &mut m), LdStatus::Ok);
    }
    assert_eq!(m.count, 4);
    assert_eq!(m.mae, 0.0);
    assert!((m.pearson - 1.0).abs() < 1e-12);
    assert_eq!(m.degenerate, 0);
}

#[test]
fn tiny_pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let text = CString::new(TINY).unwrap();
    let out_dir = CString::new(dir.path().to_str().unwrap()).unwrap();
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(ld_config_parse(text.as_ptr(), false, &mut cfg), LdStatus::Ok);
        let mut run = ptr::null_mut();
        let status = ld_run_pipeline(cfg, out_dir.as_ptr(), &mut run);
        assert_eq!(status, LdStatus::Ok, "{}", last_error());

        let key = CString::new("mae.all").unwrap();
        let mut vanilla = f64::NAN;
        let mut augmented = f64::NAN;
        for (name, out) in [("vanilla", &mut vanilla), ("augmented", &mut augmented)] {
            let name = CString::new(name).unwrap();
            assert_eq!(ld_run_metric(run, name.as_ptr(), key.as_ptr(), out), LdStatus::Ok);
        }
        assert!(vanilla.is_finite() && augmented.is_finite());

        let bogus = CString::new("nope").unwrap();
        let report = CString::new("vanilla").unwrap();
        let mut v = 0.0;
        assert_eq!(
            ld_run_metric(run, report.as_ptr(), bogus.as_ptr(), &mut v),
            LdStatus::NotFound
        );

        let mut count = usize::MAX;
        assert_eq!(ld_run_synthetic_count(run, &mut count), LdStatus::Ok);
        assert!(count < usize::MAX);

        ld_run_free(run);
        ld_config_free(cfg);
    }
    assert!(dir.path().join("reports/metrics_augmented.json").is_file());
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/latentdiff.h")).unwrap();
    for name in [
        "ld_last_error",
        "ld_version",
        "ld_config_parse",
        "ld_config_set_seed",
        "ld_config_hash",
        "ld_config_free",
        "ld_run_pipeline",
        "ld_run_metric",
        "ld_run_synthetic_count",
        "ld_run_free",
        "ld_schedule_new",
        "ld_schedule_alpha_bar",
        "ld_schedule_free",
        "ld_priority_scores",
        "ld_allocate_budget",
        "ld_region_metrics",
        "typedef struct LdConfig LdConfig",
        "LD_STATUS_MISSING_ARTIFACT = 7",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/latentdiff.h");
    let out = std::process::Command::new(cc)
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| {
            std::process::Command::new(c)
                .arg("--version")
                .output()
                .is_ok_and(|o| o.status.success())
        })
        .ok_or(())
}
