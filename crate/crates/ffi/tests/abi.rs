use std::ffi::{CStr, CString};
use std::ptr;

use kinefp::cli::config::EXAMPLE_CONFIG;
use kinefp_ffi::*;

fn last_error() -> String {
    let p = kfp_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn config(text: &str) -> *mut KfpConfig {
    let c = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(
        unsafe { kfp_config_from_toml(c.as_ptr(), &mut cfg) },
        KfpStatus::Ok
    );
    cfg
}

#[test]
fn run_round_trip() {
    let cfg = config(EXAMPLE_CONFIG);
    unsafe {
        let hash = kfp_config_hash(cfg);
        assert_eq!(CStr::from_ptr(hash).to_bytes().len(), 64);
        kfp_string_free(hash);

        let mut run = ptr::null_mut();
        assert_eq!(kfp_run(cfg, &mut run), KfpStatus::Ok);
        let (mut st, mut it) = (KfpRunStatus::Diverged, 0usize);
        assert_eq!(kfp_run_summary(run, &mut st, &mut it), KfpStatus::Ok);
        assert_eq!(st, KfpRunStatus::Converged);
        assert!((2..=25).contains(&it));

        let n = kfp_run_time_count(run);
        assert_eq!(n, 21);
        let (mut t, mut m) = (0.0, 0.0);
        assert_eq!(kfp_run_sample(run, n - 1, &mut t, &mut m), KfpStatus::Ok);
        assert!((t - 0.3).abs() < 1e-12 && m > 0.0);

        assert_eq!(kfp_run_field_len(run, KfpField::Density), 32 * 32);
        assert_eq!(kfp_run_field_len(run, KfpField::Taf), 32);
        let mut buf = vec![0.0; 32];
        assert_eq!(
            kfp_run_copy_field(run, KfpField::Taf, n - 1, buf.as_mut_ptr(), buf.len()),
            KfpStatus::Ok
        );
        assert!(buf.iter().all(|c| *c >= -1e-12 && c.is_finite()));
        assert_eq!(
            kfp_run_copy_field(run, KfpField::Density, 0, buf.as_mut_ptr(), buf.len()),
            KfpStatus::BufferTooSmall
        );
        assert!(last_error().contains("1024"));
        assert_eq!(
            kfp_run_sample(run, n, &mut t, &mut m),
            KfpStatus::InvalidArgument
        );

        kfp_run_free(run);
        kfp_config_free(cfg);
    }
}

#[test]
fn config_errors_name_the_field() {
    let text = CString::new(EXAMPLE_CONFIG.replace("sigma = 0.5\n", "")).unwrap();
    let mut cfg = ptr::null_mut();
    let st = unsafe { kfp_config_from_toml(text.as_ptr(), &mut cfg) };
    assert_eq!(st, KfpStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("model.sigma"));

    let cfg = config(EXAMPLE_CONFIG);
    let name = CString::new("nx").unwrap();
    unsafe {
        assert_eq!(kfp_config_set(cfg, name.as_ptr(), 31.0), KfpStatus::Config);
        assert_eq!(kfp_config_set(cfg, name.as_ptr(), 16.0), KfpStatus::Ok);
        assert!(kfp_last_error_message().is_null());
        kfp_config_free(cfg);
    }
}

#[test]
fn null_handles_are_refused() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(
            kfp_config_from_toml(ptr::null(), &mut out),
            KfpStatus::NullPointer
        );
        assert_eq!(
            kfp_run(ptr::null(), &mut out.cast()),
            KfpStatus::NullPointer
        );
        assert_eq!(kfp_run_time_count(ptr::null()), 0);
        assert!(kfp_config_hash(ptr::null()).is_null());
        kfp_config_free(ptr::null_mut());
        kfp_run_free(ptr::null_mut());
        kfp_string_free(ptr::null_mut());
    }
}

#[test]
fn kernel_and_verify() {
    let (x, v, xi, nu) = ([0.1], [0.2], [0.0], [0.0]);
    let mut g = 0.0;
    let st = unsafe {
        kfp_eval_kernel(
            1.0,
            0.5,
            1,
            1.0,
            x.as_ptr(),
            v.as_ptr(),
            0.0,
            xi.as_ptr(),
            nu.as_ptr(),
            &mut g,
        )
    };
    assert_eq!(st, KfpStatus::Ok);
    assert!(g > 0.0 && g.is_finite());
    let st = unsafe {
        kfp_eval_kernel(
            1.0,
            0.5,
            4,
            1.0,
            x.as_ptr(),
            v.as_ptr(),
            0.0,
            xi.as_ptr(),
            nu.as_ptr(),
            &mut g,
        )
    };
    assert_eq!(st, KfpStatus::InvalidArgument);

    let suite = CString::new("kernels").unwrap();
    let (mut p, mut f) = (0, 0);
    assert_eq!(
        unsafe { kfp_verify(suite.as_ptr(), &mut p, &mut f) },
        KfpStatus::Ok
    );
    assert_eq!((p, f), (4, 0));
    let bad = CString::new("nope").unwrap();
    assert_eq!(
        unsafe { kfp_verify(bad.as_ptr(), &mut p, &mut f) },
        KfpStatus::InvalidArgument
    );
    assert!(unsafe { CStr::from_ptr(kfp_version()) }
        .to_str()
        .unwrap()
        .starts_with("0."));
}
