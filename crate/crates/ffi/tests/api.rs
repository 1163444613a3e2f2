//! Calls through the C ABI from Rust.

use std::ffi::CStr;
use std::ptr;

use cheshire_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(chs_last_error_message()) }.to_string_lossy().into_owned()
}

struct Handles {
    ctx: *mut ChsContext,
    obs: *mut ChsObservable,
    ptr: *mut ChsPointer,
}

impl Drop for Handles {
    fn drop(&mut self) {
        unsafe {
            chs_context_free(self.ctx);
            chs_observable_free(self.obs);
            chs_pointer_free(self.ptr);
        }
    }
}

fn qcc_handles(arm: u32, kind: u32) -> Handles {
    let mut h = Handles {
        ctx: ptr::null_mut(),
        obs: ptr::null_mut(),
        ptr: ptr::null_mut(),
    };
    unsafe {
        assert_eq!(chs_context_qcc(&mut h.ctx), ChsStatus::Ok);
        assert_eq!(chs_observable_qcc(arm, kind, &mut h.obs), ChsStatus::Ok);
        assert_eq!(chs_pointer_gaussian(0.0, 1.0, &mut h.ptr), ChsStatus::Ok);
    }
    h
}

#[test]
fn qcc_weak_values() {
    let expected = [
        (CHS_ARM_I, CHS_OBSERVABLE_PROJECTOR, 1.0),
        (CHS_ARM_I, CHS_OBSERVABLE_SIGMA_X, 0.0),
        (CHS_ARM_II, CHS_OBSERVABLE_PROJECTOR, 0.0),
        (CHS_ARM_II, CHS_OBSERVABLE_SIGMA_X, 1.0),
    ];
    for (arm, kind, want) in expected {
        let h = qcc_handles(arm, kind);
        let (mut re, mut im) = (f64::NAN, f64::NAN);
        assert_eq!(unsafe { chs_weak_value(h.ctx, h.obs, &mut re, &mut im) }, ChsStatus::Ok);
        assert!((re - want).abs() < 1e-12 && im.abs() < 1e-12);
    }
    let h = qcc_handles(CHS_ARM_I, CHS_OBSERVABLE_PROJECTOR);
    let mut p = 0.0;
    assert_eq!(unsafe { chs_context_postselect_prob(h.ctx, &mut p) }, ChsStatus::Ok);
    assert!((p - 0.25).abs() < 1e-14);
}

#[test]
fn run_ideal_qcc_report() {
    let mut cfg = std::mem::MaybeUninit::<ChsQccConfig>::uninit();
    assert_eq!(unsafe { chs_qcc_config_default(cfg.as_mut_ptr()) }, ChsStatus::Ok);
    let cfg = unsafe { cfg.assume_init() };
    assert_eq!(cfg.flipped_arm, CHS_ARM_II);
    let mut r = ChsQccReport::default();
    assert_eq!(unsafe { chs_run_ideal_qcc(&cfg, &mut r) }, ChsStatus::Ok);
    assert!((r.wv_pi_i_re - 1.0).abs() < 1e-12);
    assert!((r.wv_sigma_ii_re - 1.0).abs() < 1e-12);
    assert!((r.shift_i / cfg.g_i - 1.0).abs() < 1e-3);

    let bad = ChsQccConfig { pointer_width: -1.0, ..cfg };
    assert_eq!(unsafe { chs_run_ideal_qcc(&bad, &mut r) }, ChsStatus::Validation);
    assert!(!last_error().is_empty());
    let bad = ChsQccConfig { flipped_arm: 7, ..cfg };
    assert_eq!(unsafe { chs_run_ideal_qcc(&bad, &mut r) }, ChsStatus::InvalidArgument);
}

#[test]
fn coupling_and_linear_response() {
    let h = qcc_handles(CHS_ARM_I, CHS_OBSERVABLE_PROJECTOR);
    let mut m = ChsWeakMeasurement::default();
    let mut fin: *mut ChsPointer = ptr::null_mut();
    assert_eq!(
        unsafe { chs_couple_and_postselect(h.ctx, h.obs, h.ptr, 0.05, &mut m, &mut fin) },
        ChsStatus::Ok
    );
    assert_eq!(m.has_weak_value, 1);
    assert!((m.postselect_prob - 0.25).abs() < 1e-12);
    let mut x = 0.0;
    assert_eq!(unsafe { chs_pointer_mean_position(fin, &mut x) }, ChsStatus::Ok);
    assert!((x - 0.05).abs() < 1e-12);
    let mut n = 0.0;
    assert_eq!(unsafe { chs_pointer_norm_sqr(fin, &mut n) }, ChsStatus::Ok);
    assert!((n - 0.25).abs() < 1e-12);
    unsafe { chs_pointer_free(fin) };

    let mut lr = ChsLinearResponse::default();
    assert_eq!(unsafe { chs_linear_response(h.ctx, h.obs, h.ptr, 0.05, &mut lr) }, ChsStatus::Ok);
    assert!(lr.abs_error < 1e-12);
}

#[test]
fn generic_context_and_observable() {
    // Tilted spin through the generic constructors: weak value tan θ = 3.
    let th = 3f64.atan();
    let (pre, post) = ([1.0, 0.0], [th.cos(), th.sin()]);
    let sx = [0.0, 1.0, 1.0, 0.0];
    let mut ctx = ptr::null_mut();
    let mut obs = ptr::null_mut();
    unsafe {
        assert_eq!(
            chs_context_new(2, pre.as_ptr(), ptr::null(), post.as_ptr(), ptr::null(), &mut ctx),
            ChsStatus::Ok
        );
        assert_eq!(chs_observable_new(2, sx.as_ptr(), ptr::null(), &mut obs), ChsStatus::Ok);
        let (mut re, mut im) = (0.0, 0.0);
        assert_eq!(chs_weak_value(ctx, obs, &mut re, &mut im), ChsStatus::Ok);
        assert!((re - 3.0).abs() < 1e-12);

        let mut tilted = ptr::null_mut();
        let mut spin = ptr::null_mut();
        assert_eq!(chs_context_tilted_spin(3.0, &mut tilted), ChsStatus::Ok);
        assert_eq!(chs_observable_spin_sigma_x(&mut spin), ChsStatus::Ok);
        let (mut re2, mut im2) = (0.0, 0.0);
        assert_eq!(chs_weak_value(tilted, spin, &mut re2, &mut im2), ChsStatus::Ok);
        assert!((re - re2).abs() < 1e-12);
        // Labels differ, so mixing the two families is rejected.
        assert_eq!(chs_weak_value(tilted, obs, &mut re2, &mut im2), ChsStatus::Validation);
        chs_context_free(tilted);
        chs_observable_free(spin);

        let not_hermitian = [0.0, 1.0, 0.0, 0.0];
        let mut o2 = ptr::null_mut();
        assert_eq!(chs_observable_new(2, not_hermitian.as_ptr(), ptr::null(), &mut o2), ChsStatus::Validation);
        assert!(o2.is_null());
        chs_context_free(ctx);
        chs_observable_free(obs);
    }
}

#[test]
fn orthogonal_postselection_is_numerical() {
    let (pre, post) = ([1.0, 0.0], [0.0, 1.0]);
    let sx = [0.0, 1.0, 1.0, 0.0];
    unsafe {
        let mut ctx = ptr::null_mut();
        let mut obs = ptr::null_mut();
        chs_context_new(2, pre.as_ptr(), ptr::null(), post.as_ptr(), ptr::null(), &mut ctx);
        chs_observable_new(2, sx.as_ptr(), ptr::null(), &mut obs);
        let (mut re, mut im) = (0.0, 0.0);
        assert_eq!(chs_weak_value(ctx, obs, &mut re, &mut im), ChsStatus::Numerical);
        let mut p: *mut ChsPointer = ptr::null_mut();
        chs_pointer_gaussian(0.0, 1.0, &mut p);
        let mut m = ChsWeakMeasurement::default();
        assert_eq!(chs_couple_and_postselect(ctx, obs, p, 0.1, &mut m, ptr::null_mut()), ChsStatus::Ok);
        assert_eq!(m.has_weak_value, 0);
        chs_pointer_free(p);
        chs_context_free(ctx);
        chs_observable_free(obs);
    }
}

#[test]
fn intensities() {
    let mut r = ChsIntensityReport::default();
    unsafe {
        assert_eq!(chs_intensity_absorber(CHS_ARM_II, 0.3, &mut r), ChsStatus::Ok);
        assert_eq!(r.ratio, 1.0);
        assert_eq!(chs_intensity_absorber(CHS_ARM_I, 0.1, &mut r), ChsStatus::Ok);
        assert!((r.ratio - (-0.2f64).exp()).abs() < 1e-12);
        assert_eq!(r.has_inferred_weak_value, 1);
        assert_eq!(chs_intensity_absorber(CHS_ARM_I, -0.1, &mut r), ChsStatus::Validation);
        assert_eq!(chs_intensity_magnetic(CHS_ARM_II, 0.2, &mut r), ChsStatus::Ok);
        assert!((r.ratio - (1.0 + 0.1f64.sin().powi(2))).abs() < 1e-12);
        assert_eq!(chs_intensity_magnetic(CHS_ARM_I, 4.0, &mut r), ChsStatus::Validation);
        assert!(last_error().contains("alpha") || !last_error().is_empty());
    }
}

#[test]
fn monte_carlo_batch() {
    let h = qcc_handles(CHS_ARM_I, CHS_OBSERVABLE_PROJECTOR);
    unsafe {
        let mut b = ptr::null_mut();
        assert_eq!(chs_sample_trials(h.ctx, h.obs, h.ptr, 0.1, 100_000, 3, &mut b), ChsStatus::Ok);
        let (mut total, mut post) = (0u64, 0u64);
        assert_eq!(chs_batch_counts(b, &mut total, &mut post), ChsStatus::Ok);
        assert_eq!(total, 100_000);
        let mut buf = vec![0.0; post as usize];
        let mut written = 0usize;
        assert_eq!(chs_batch_positions(b, buf.as_mut_ptr(), buf.len(), &mut written), ChsStatus::Ok);
        assert_eq!(written as u64, post);
        let mut est = ChsEstimatorReport::default();
        assert_eq!(chs_estimate_weak_value(b, h.ptr, 0.1, &mut est), ChsStatus::Ok);
        assert!(((est.estimated_wv_re - 1.0) / est.std_error).abs() <= 4.0);
        let mean = buf.iter().sum::<f64>() / buf.len() as f64;
        assert!((mean / 0.1 - est.estimated_wv_re).abs() < 1e-9);
        assert_eq!(chs_estimate_weak_value(b, h.ptr, 0.0, &mut est), ChsStatus::Validation);
        chs_batch_free(b);

        let mut b2 = ptr::null_mut();
        assert_eq!(chs_sample_trials(h.ctx, h.obs, h.ptr, 0.1, 0, 3, &mut b2), ChsStatus::Validation);
        assert!(b2.is_null());
    }
}

#[test]
fn null_and_invalid_arguments() {
    unsafe {
        assert_eq!(chs_context_qcc(ptr::null_mut()), ChsStatus::NullPointer);
        let mut x = 0.0;
        assert_eq!(chs_context_postselect_prob(ptr::null(), &mut x), ChsStatus::NullPointer);
        assert!(last_error().contains("null"));
        let mut o = ptr::null_mut();
        assert_eq!(chs_observable_qcc(9, CHS_OBSERVABLE_PROJECTOR, &mut o), ChsStatus::InvalidArgument);
        assert_eq!(chs_pointer_gaussian(0.0, 0.0, &mut ptr::null_mut()), ChsStatus::Validation);
        // Freeing null is a no-op.
        chs_context_free(ptr::null_mut());
        chs_batch_free(ptr::null_mut());

        let mut code = 99;
        assert_eq!(chs_parse_arm(c"II".as_ptr(), &mut code), ChsStatus::Ok);
        assert_eq!(code, CHS_ARM_II);
        assert_eq!(chs_parse_arm(c"III".as_ptr(), &mut code), ChsStatus::InvalidArgument);

        let mut buf = [0i8; 8];
        let full = chs_last_error_copy(buf.as_mut_ptr().cast(), buf.len());
        assert!(full > 7);
        assert_eq!(buf[7], 0);

        assert_eq!(chs_context_qcc(&mut ptr::null_mut()), ChsStatus::Ok);
        assert!(last_error().is_empty());
    }
    let v = unsafe { CStr::from_ptr(chs_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
