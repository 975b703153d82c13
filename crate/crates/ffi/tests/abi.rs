use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use betaweighter_ffi::*;

fn last_error() -> String {
    let p = bw_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn special_functions_and_errors() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(bw_beta_cdf(0.25, 1.0, 1.0, &mut v), BwStatus::Ok);
        assert!((v - 0.25).abs() < 1e-15);
        assert!(bw_last_error().is_null());
        assert_eq!(bw_beta_cdf(0.5, 2.0, 2.0, &mut v), BwStatus::Ok);
        assert!((v - 0.5).abs() < 1e-12);
        assert_eq!(bw_beta_quantile(0.5, 2.0, 2.0, &mut v), BwStatus::Ok);
        assert!((v - 0.5).abs() < 1e-10);

        assert_eq!(bw_beta_cdf(0.5, -1.0, 1.0, &mut v), BwStatus::Domain);
        assert!(last_error().contains("positive"), "{}", last_error());
        assert_eq!(bw_beta_cdf(1.5, 1.0, 1.0, &mut v), BwStatus::Domain);
        assert_eq!(bw_beta_cdf(0.5, 1.0, 1.0, ptr::null_mut()), BwStatus::NullPointer);
    }
}

#[test]
fn rng_samples_are_reproducible_and_in_range() {
    unsafe {
        let draw = |seed| {
            let mut rng = ptr::null_mut();
            assert_eq!(bw_rng_new(seed, 4, &mut rng), BwStatus::Ok);
            let xs: Vec<f64> = (0..50)
                .map(|_| {
                    let mut x = 0.0;
                    assert_eq!(bw_rng_sample_beta(rng, 2.0, 5.0, &mut x), BwStatus::Ok);
                    x
                })
                .collect();
            bw_rng_free(rng);
            xs
        };
        let a = draw(9);
        assert_eq!(a, draw(9));
        assert_ne!(a, draw(10));
        assert!(a.iter().all(|&x| x > 0.0 && x < 1.0));
        let mut x = 0.0;
        assert_eq!(bw_rng_sample_beta(ptr::null_mut(), 1.0, 1.0, &mut x), BwStatus::NullPointer);
        bw_rng_free(ptr::null_mut());
    }
}

#[test]
fn weight_table_lifecycle() {
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(bw_weight_table_new(3, &mut t), BwStatus::Ok);
        assert_eq!(bw_weight_table_set(t, 0, 1.0, 10.0), BwStatus::Ok);
        assert_eq!(bw_weight_table_set(t, 2, 10.0, 1.0), BwStatus::Ok);
        assert_eq!(bw_weight_table_set(t, 3, 1.0, 1.0), BwStatus::Contract);
        assert_eq!(bw_weight_table_set(t, 1, 0.0, 1.0), BwStatus::Domain);

        let mut pruned = 0;
        assert_eq!(bw_weight_table_prune(t, 0.25, 0.5, false, &mut pruned), BwStatus::Ok);
        assert_eq!(pruned, 1);
        let mut n = 0;
        assert_eq!(bw_weight_table_active_count(t, &mut n), BwStatus::Ok);
        assert_eq!(n, 2);

        let (mut a, mut b, mut active) = (0.0, 0.0, true);
        assert_eq!(bw_weight_table_get(t, 0, &mut a, &mut b, &mut active), BwStatus::Ok);
        assert!(!active);
        assert!((a - 1.0).abs() < 1e-12 && (b - 10.0).abs() < 1e-12);

        let mut w = [0.0; 3];
        assert_eq!(bw_weight_table_expected(t, w.as_mut_ptr(), 3), BwStatus::Ok);
        assert!((w[0] - 1.0 / 11.0).abs() < 1e-12);
        assert!((w[1] - 0.5).abs() < 1e-12);
        assert!((w[2] - 10.0 / 11.0).abs() < 1e-12);
        assert_eq!(bw_weight_table_expected(t, w.as_mut_ptr(), 2), BwStatus::Contract);
        assert_eq!(bw_weight_table_prune(t, 1.5, 0.5, false, ptr::null_mut()), BwStatus::Config);
        bw_weight_table_free(t);
    }
}

#[test]
fn configure_run_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let c = |s: &str| CString::new(s).unwrap();
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(bw_config_new(&mut cfg), BwStatus::Ok);
        let ini = c("method = bdw\nsource_cap = 60\ntarget_train = 40\ntarget_test = 30\nhidden = 5\n");
        assert_eq!(bw_config_apply_ini(cfg, ini.as_ptr()), BwStatus::Ok);
        assert_eq!(bw_config_set(cfg, c("epochs").as_ptr(), c("2").as_ptr()), BwStatus::Ok);
        assert_eq!(bw_config_set(cfg, c("batch_size").as_ptr(), c("16").as_ptr()), BwStatus::Ok);
        assert_eq!(bw_config_set(cfg, c("meta_batch").as_ptr(), c("8").as_ptr()), BwStatus::Ok);
        assert_eq!(bw_config_set(cfg, c("method").as_ptr(), c("sorcery").as_ptr()), BwStatus::Config);
        assert!(last_error().contains("sorcery"));
        assert_eq!(bw_config_set(cfg, c("no_such_key").as_ptr(), c("1").as_ptr()), BwStatus::Config);
        let bad = [0xffu8, 0];
        assert_eq!(bw_config_set(cfg, bad.as_ptr().cast(), c("1").as_ptr()), BwStatus::InvalidUtf8);

        let mut report = ptr::null_mut();
        assert_eq!(bw_run(cfg, &mut report), BwStatus::Ok, "{}", last_error());
        let mut epochs = 0;
        assert_eq!(bw_report_epochs(report, &mut epochs), BwStatus::Ok);
        assert_eq!(epochs, 2);
        let mut loss = 0.0;
        assert_eq!(bw_report_test_loss(report, 1, &mut loss), BwStatus::Ok);
        assert!(loss.is_finite() && loss > 0.0);
        assert_eq!(bw_report_test_loss(report, 2, &mut loss), BwStatus::Contract);

        let out = c(dir.path().join("r").to_str().unwrap());
        assert_eq!(bw_report_export(report, out.as_ptr()), BwStatus::Ok);
        assert!(dir.path().join("r").join("metrics.jsonl").is_file());
        bw_report_free(report);

        assert_eq!(bw_config_set(cfg, c("data_dir").as_ptr(), c("/nonexistent").as_ptr()), BwStatus::Ok);
        let mut report = ptr::null_mut();
        assert_ne!(bw_run(cfg, &mut report), BwStatus::Ok);
        assert!(report.is_null());
        bw_config_free(cfg);
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/betaweighter.h");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{header}\"\nint probe(void) {{ double v; BwWeightTable *t = 0; \
             bw_weight_table_new(4, &t); bw_weight_table_free(t); \
             return bw_beta_cdf(0.5, 1.0, 1.0, &v) == BW_STATUS_OK; }}\n"
        ),
    )
    .unwrap();
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let status = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(&src)
            .status()
            .unwrap_or_else(|e| panic!("{compiler} not runnable: {e}"));
        assert!(status.success(), "{compiler} rejected the header");
    }
}
