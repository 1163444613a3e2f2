//! C ABI over the `cheshire` simulator.
//!
//! Objects cross the boundary as opaque handles created by `chs_*_new` /
//! `chs_*` constructors and released with the matching `chs_*_free`.
//! Every fallible call returns a [`ChsStatus`]; on failure a description
//! is available from [`chs_last_error_message`] on the same thread.
//! Arms and arm observables are passed as the `CHS_ARM_*` and
//! `CHS_OBSERVABLE_*` integer constants.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cheshire::montecarlo::{estimate_weak_value, sample_trials, TrialBatch};
use cheshire::neutron::{intensity_absorber, intensity_magnetic, AbsorberConfig, IntensityReport, MagneticConfig};
use cheshire::pointer::GaussianPointerState;
use cheshire::qcc::{self, Arm, ArmObservable, QccConfig};
use cheshire::qstate::{Complex, Operator, StateVector};
use cheshire::weakmeas::{
    couple_and_postselect, linear_response_report, spin_sigma_x, tilted_spin_context, weak_value, Observable,
    PrePostContext,
};
use cheshire::{Error, ErrorClass};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Validation = 3,
    Capacity = 4,
    Numerical = 5,
    Panic = 6,
}

pub const CHS_ARM_I: u32 = 0;
pub const CHS_ARM_II: u32 = 1;
pub const CHS_OBSERVABLE_PROJECTOR: u32 = 0;
pub const CHS_OBSERVABLE_SIGMA_X: u32 = 1;

/// Pre/postselection context.
pub struct ChsContext(PrePostContext);
/// Hermitian observable on a context's subsystems.
pub struct ChsObservable(Observable);
/// Gaussian-superposition pointer state.
pub struct ChsPointer(GaussianPointerState);
/// Monte Carlo trial batch.
pub struct ChsBatch(TrialBatch);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ChsWeakMeasurement {
    /// Zero when the postselection is orthogonal and the weak value undefined.
    pub has_weak_value: u8,
    pub weak_value_re: f64,
    pub weak_value_im: f64,
    pub transition_element_re: f64,
    pub transition_element_im: f64,
    pub postselect_prob_unperturbed: f64,
    pub postselect_prob: f64,
    pub g: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ChsLinearResponse {
    pub weak_value_re: f64,
    pub weak_value_im: f64,
    pub exact_shift: f64,
    pub predicted_shift: f64,
    pub abs_error: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ChsQccConfig {
    pub observable_i: u32,
    pub observable_ii: u32,
    pub g_i: f64,
    pub g_ii: f64,
    pub pointer_width: f64,
    pub flipped_arm: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ChsQccReport {
    pub wv_pi_i_re: f64,
    pub wv_pi_i_im: f64,
    pub wv_sigma_i_re: f64,
    pub wv_sigma_i_im: f64,
    pub wv_pi_ii_re: f64,
    pub wv_pi_ii_im: f64,
    pub wv_sigma_ii_re: f64,
    pub wv_sigma_ii_im: f64,
    pub shift_i: f64,
    pub shift_ii: f64,
    pub postselect_prob: f64,
    pub margin_i: f64,
    pub margin_ii: f64,
    pub warning: u8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ChsIntensityReport {
    pub i0: f64,
    pub i_perturbed: f64,
    pub ratio: f64,
    pub first_order_prediction: f64,
    pub second_order_prediction: f64,
    pub has_inferred_weak_value: u8,
    pub inferred_weak_value: f64,
    pub expansion_error: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ChsEstimatorReport {
    pub mean_shift: f64,
    pub std_error: f64,
    pub estimated_wv_re: f64,
    pub postselect_rate: f64,
    pub n_total: u64,
    pub n_postselected: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(ChsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.class() {
            ErrorClass::Validation => ChsStatus::Validation,
            ErrorClass::Capacity => ChsStatus::Capacity,
            ErrorClass::Numerical => ChsStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(ChsStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(ChsStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ChsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            ChsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("panic: {msg}"));
            ChsStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_handle<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    write_out(out, Box::into_raw(Box::new(value)))
}

fn arm(code: u32) -> Result<Arm, Failure> {
    match code {
        CHS_ARM_I => Ok(Arm::I),
        CHS_ARM_II => Ok(Arm::II),
        _ => Err(invalid(format!("unknown arm code {code}"))),
    }
}

fn arm_code(a: Arm) -> u32 {
    match a {
        Arm::I => CHS_ARM_I,
        Arm::II => CHS_ARM_II,
    }
}

fn arm_observable(code: u32) -> Result<ArmObservable, Failure> {
    match code {
        CHS_OBSERVABLE_PROJECTOR => Ok(ArmObservable::Projector),
        CHS_OBSERVABLE_SIGMA_X => Ok(ArmObservable::SigmaX),
        _ => Err(invalid(format!("unknown observable code {code}"))),
    }
}

fn arm_observable_code(k: ArmObservable) -> u32 {
    match k {
        ArmObservable::Projector => CHS_OBSERVABLE_PROJECTOR,
        ArmObservable::SigmaX => CHS_OBSERVABLE_SIGMA_X,
    }
}

unsafe fn complex_slice(re: *const f64, im: *const f64, len: usize) -> Result<Vec<Complex>, Failure> {
    if re.is_null() {
        return Err(null("real parts"));
    }
    let re = std::slice::from_raw_parts(re, len);
    let im = if im.is_null() {
        vec![0.0; len]
    } else {
        std::slice::from_raw_parts(im, len).to_vec()
    };
    Ok(re.iter().zip(im).map(|(r, i)| Complex::new(*r, i)).collect())
}

/// Label of the single subsystem used by the generic constructors.
const GENERIC_LABEL: &str = "q";

/// Version string of the library; static, never freed.
#[no_mangle]
pub extern "C" fn chs_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next `chs_*` call on the same thread.
#[no_mangle]
pub extern "C" fn chs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `cap`). Returns the full message length excluding the terminator.
#[no_mangle]
pub unsafe extern "C" fn chs_last_error_copy(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow().as_bytes().to_vec();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

// Contexts.

/// The QCC pre/postselection with spin flipped on arm II.
#[no_mangle]
pub unsafe extern "C" fn chs_context_qcc(out: *mut *mut ChsContext) -> ChsStatus {
    guard(|| write_handle(out, ChsContext(qcc::build_prepost())))
}

/// The QCC context with the postselected spin flipped on `flipped_arm`.
#[no_mangle]
pub unsafe extern "C" fn chs_context_qcc_flipped(flipped_arm: u32, out: *mut *mut ChsContext) -> ChsStatus {
    guard(|| write_handle(out, ChsContext(qcc::build_prepost_flipped(arm(flipped_arm)?))))
}

/// Spin preselected along +z, postselected at angle `atan(tan_theta)`.
#[no_mangle]
pub unsafe extern "C" fn chs_context_tilted_spin(tan_theta: f64, out: *mut *mut ChsContext) -> ChsStatus {
    guard(|| write_handle(out, ChsContext(tilted_spin_context(tan_theta)?)))
}

/// Context on one subsystem of dimension `dim` from pre and post
/// amplitudes. Imaginary parts may be null.
#[no_mangle]
pub unsafe extern "C" fn chs_context_new(
    dim: usize,
    pre_re: *const f64,
    pre_im: *const f64,
    post_re: *const f64,
    post_im: *const f64,
    out: *mut *mut ChsContext,
) -> ChsStatus {
    guard(|| {
        let pre = StateVector::single(GENERIC_LABEL, complex_slice(pre_re, pre_im, dim)?)?;
        let post = StateVector::single(GENERIC_LABEL, complex_slice(post_re, post_im, dim)?)?;
        write_handle(out, ChsContext(PrePostContext::without_evolution(pre, post)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn chs_context_free(ctx: *mut ChsContext) {
    if !ctx.is_null() {
        drop(Box::from_raw(ctx));
    }
}

/// `|<χ|ψ>|²` without coupling.
#[no_mangle]
pub unsafe extern "C" fn chs_context_postselect_prob(ctx: *const ChsContext, out: *mut f64) -> ChsStatus {
    guard(|| write_out(out, borrow(ctx, "context")?.0.postselect_prob()))
}

// Observables.

#[no_mangle]
pub unsafe extern "C" fn chs_observable_qcc(arm_code: u32, kind: u32, out: *mut *mut ChsObservable) -> ChsStatus {
    guard(|| write_handle(out, ChsObservable(qcc::observable(arm(arm_code)?, arm_observable(kind)?))))
}

/// σx on the spin of a tilted-spin context.
#[no_mangle]
pub unsafe extern "C" fn chs_observable_spin_sigma_x(out: *mut *mut ChsObservable) -> ChsStatus {
    guard(|| write_handle(out, ChsObservable(spin_sigma_x())))
}

/// Hermitian observable for contexts made with [`chs_context_new`];
/// `re`/`im` hold the `dim × dim` matrix in row-major order, `im` may be null.
#[no_mangle]
pub unsafe extern "C" fn chs_observable_new(
    dim: usize,
    re: *const f64,
    im: *const f64,
    out: *mut *mut ChsObservable,
) -> ChsStatus {
    guard(|| {
        let len = dim.checked_mul(dim).ok_or_else(|| invalid("dimension overflows"))?;
        let entries = complex_slice(re, im, len)?;
        let m = cheshire::qstate::DMatrix::from_row_slice(dim, dim, &entries);
        let op = Operator::hermitian(&[dim], m)?;
        write_handle(out, ChsObservable(Observable::new(&[GENERIC_LABEL], op)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn chs_observable_free(obs: *mut ChsObservable) {
    if !obs.is_null() {
        drop(Box::from_raw(obs));
    }
}

/// `A^w = <χ|A|ψ> / <χ|ψ>`.
#[no_mangle]
pub unsafe extern "C" fn chs_weak_value(
    ctx: *const ChsContext,
    obs: *const ChsObservable,
    out_re: *mut f64,
    out_im: *mut f64,
) -> ChsStatus {
    guard(|| {
        let w = weak_value(&borrow(ctx, "context")?.0, &borrow(obs, "observable")?.0)?;
        if out_re.is_null() || out_im.is_null() {
            return Err(null("output pointer"));
        }
        write_out(out_re, w.re)?;
        write_out(out_im, w.im)
    })
}

// Pointers.

#[no_mangle]
pub unsafe extern "C" fn chs_pointer_gaussian(center: f64, width: f64, out: *mut *mut ChsPointer) -> ChsStatus {
    guard(|| write_handle(out, ChsPointer(GaussianPointerState::gaussian(center, width)?)))
}

#[no_mangle]
pub unsafe extern "C" fn chs_pointer_free(p: *mut ChsPointer) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

#[no_mangle]
pub unsafe extern "C" fn chs_pointer_mean_position(p: *const ChsPointer, out: *mut f64) -> ChsStatus {
    guard(|| write_out(out, borrow(p, "pointer")?.0.mean_position()?))
}

#[no_mangle]
pub unsafe extern "C" fn chs_pointer_norm_sqr(p: *const ChsPointer, out: *mut f64) -> ChsStatus {
    guard(|| write_out(out, borrow(p, "pointer")?.0.norm_sqr()))
}

/// `|φ(x)|²`.
#[no_mangle]
pub unsafe extern "C" fn chs_pointer_density(p: *const ChsPointer, x: f64, out: *mut f64) -> ChsStatus {
    guard(|| write_out(out, borrow(p, "pointer")?.0.density(x)))
}

/// Exact coupling of strength `g` followed by postselection. When
/// `out_pointer` is non-null it receives the unnormalized final pointer.
#[no_mangle]
pub unsafe extern "C" fn chs_couple_and_postselect(
    ctx: *const ChsContext,
    obs: *const ChsObservable,
    pointer: *const ChsPointer,
    g: f64,
    out: *mut ChsWeakMeasurement,
    out_pointer: *mut *mut ChsPointer,
) -> ChsStatus {
    guard(|| {
        let r = couple_and_postselect(
            &borrow(ctx, "context")?.0,
            &borrow(obs, "observable")?.0,
            &borrow(pointer, "pointer")?.0,
            g,
        )?;
        let w = r.weak_value.unwrap_or_default();
        write_out(
            out,
            ChsWeakMeasurement {
                has_weak_value: r.weak_value.is_some() as u8,
                weak_value_re: w.re,
                weak_value_im: w.im,
                transition_element_re: r.transition_element.re,
                transition_element_im: r.transition_element.im,
                postselect_prob_unperturbed: r.postselect_prob_unperturbed,
                postselect_prob: r.postselect_prob,
                g: r.g,
            },
        )?;
        if !out_pointer.is_null() {
            write_handle(out_pointer, ChsPointer(r.pointer_final))?;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn chs_linear_response(
    ctx: *const ChsContext,
    obs: *const ChsObservable,
    pointer: *const ChsPointer,
    g: f64,
    out: *mut ChsLinearResponse,
) -> ChsStatus {
    guard(|| {
        let r = linear_response_report(
            &borrow(ctx, "context")?.0,
            &borrow(obs, "observable")?.0,
            &borrow(pointer, "pointer")?.0,
            g,
        )?;
        write_out(
            out,
            ChsLinearResponse {
                weak_value_re: r.weak_value.re,
                weak_value_im: r.weak_value.im,
                exact_shift: r.exact_shift,
                predicted_shift: r.predicted_shift,
                abs_error: r.abs_error,
            },
        )
    })
}

// QCC.

#[no_mangle]
pub unsafe extern "C" fn chs_qcc_config_default(out: *mut ChsQccConfig) -> ChsStatus {
    guard(|| {
        let d = QccConfig::default();
        write_out(
            out,
            ChsQccConfig {
                observable_i: arm_observable_code(d.observable_i),
                observable_ii: arm_observable_code(d.observable_ii),
                g_i: d.g_i,
                g_ii: d.g_ii,
                pointer_width: d.pointer_width,
                flipped_arm: arm_code(d.flipped_arm),
            },
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn chs_run_ideal_qcc(cfg: *const ChsQccConfig, out: *mut ChsQccReport) -> ChsStatus {
    guard(|| {
        let c = borrow(cfg, "config")?;
        let cfg = QccConfig {
            observable_i: arm_observable(c.observable_i)?,
            observable_ii: arm_observable(c.observable_ii)?,
            g_i: c.g_i,
            g_ii: c.g_ii,
            pointer_width: c.pointer_width,
            flipped_arm: arm(c.flipped_arm)?,
        };
        let r = qcc::run_ideal_qcc(&cfg)?;
        write_out(
            out,
            ChsQccReport {
                wv_pi_i_re: r.wv_pi_i.re,
                wv_pi_i_im: r.wv_pi_i.im,
                wv_sigma_i_re: r.wv_sigma_i.re,
                wv_sigma_i_im: r.wv_sigma_i.im,
                wv_pi_ii_re: r.wv_pi_ii.re,
                wv_pi_ii_im: r.wv_pi_ii.im,
                wv_sigma_ii_re: r.wv_sigma_ii.re,
                wv_sigma_ii_im: r.wv_sigma_ii.im,
                shift_i: r.shift_i,
                shift_ii: r.shift_ii,
                postselect_prob: r.postselect_prob,
                margin_i: r.margin_i,
                margin_ii: r.margin_ii,
                warning: r.warning as u8,
            },
        )
    })
}

// Neutron intensities.

fn intensity(r: IntensityReport) -> ChsIntensityReport {
    ChsIntensityReport {
        i0: r.i0,
        i_perturbed: r.i_perturbed,
        ratio: r.ratio,
        first_order_prediction: r.first_order_prediction,
        second_order_prediction: r.second_order_prediction,
        has_inferred_weak_value: r.inferred_weak_value.is_some() as u8,
        inferred_weak_value: r.inferred_weak_value.unwrap_or(0.0),
        expansion_error: r.expansion_error,
    }
}

/// Absorber `e^{-m}` on `arm_code` in the QCC interferometer.
#[no_mangle]
pub unsafe extern "C" fn chs_intensity_absorber(arm_code: u32, m: f64, out: *mut ChsIntensityReport) -> ChsStatus {
    guard(|| {
        let r = intensity_absorber(&AbsorberConfig { arm: arm(arm_code)?, m })?;
        write_out(out, intensity(r))
    })
}

/// Spin rotation by `alpha` about x on `arm_code`.
#[no_mangle]
pub unsafe extern "C" fn chs_intensity_magnetic(
    arm_code: u32,
    alpha: f64,
    out: *mut ChsIntensityReport,
) -> ChsStatus {
    guard(|| {
        let r = intensity_magnetic(&MagneticConfig {
            arm: arm(arm_code)?,
            alpha,
        })?;
        write_out(out, intensity(r))
    })
}

// Monte Carlo.

/// Samples `n` seeded trials; the result does not depend on thread count.
#[no_mangle]
pub unsafe extern "C" fn chs_sample_trials(
    ctx: *const ChsContext,
    obs: *const ChsObservable,
    pointer: *const ChsPointer,
    g: f64,
    n: u64,
    seed: u64,
    out: *mut *mut ChsBatch,
) -> ChsStatus {
    guard(|| {
        let b = sample_trials(
            &borrow(ctx, "context")?.0,
            &borrow(obs, "observable")?.0,
            &borrow(pointer, "pointer")?.0,
            g,
            n,
            seed,
        )?;
        write_handle(out, ChsBatch(b))
    })
}

#[no_mangle]
pub unsafe extern "C" fn chs_batch_free(b: *mut ChsBatch) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

#[no_mangle]
pub unsafe extern "C" fn chs_batch_counts(b: *const ChsBatch, n_total: *mut u64, n_postselected: *mut u64) -> ChsStatus {
    guard(|| {
        let b = &borrow(b, "batch")?.0;
        write_out(n_total, b.n_total)?;
        write_out(n_postselected, b.n_postselected)
    })
}

/// Copies up to `cap` postselected readouts into `buf`; `written` receives
/// the number copied. Pass `cap = 0` to query the count only.
#[no_mangle]
pub unsafe extern "C" fn chs_batch_positions(
    b: *const ChsBatch,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> ChsStatus {
    guard(|| {
        let b = &borrow(b, "batch")?.0;
        let n = b.positions.len().min(cap);
        if n > 0 {
            if buf.is_null() {
                return Err(null("buffer"));
            }
            ptr::copy_nonoverlapping(b.positions.as_ptr(), buf, n);
        }
        write_out(written, n)
    })
}

#[no_mangle]
pub unsafe extern "C" fn chs_estimate_weak_value(
    b: *const ChsBatch,
    pointer: *const ChsPointer,
    g: f64,
    out: *mut ChsEstimatorReport,
) -> ChsStatus {
    guard(|| {
        let r = estimate_weak_value(&borrow(b, "batch")?.0, &borrow(pointer, "pointer")?.0, g)?;
        write_out(
            out,
            ChsEstimatorReport {
                mean_shift: r.mean_shift,
                std_error: r.std_error,
                estimated_wv_re: r.estimated_wv_re,
                postselect_rate: r.postselect_rate,
                n_total: r.n_total,
                n_postselected: r.n_postselected,
            },
        )
    })
}

/// Reads a NUL-terminated arm name (`I`, `II`, `1`, `2`) into an arm code.
#[no_mangle]
pub unsafe extern "C" fn chs_parse_arm(name: *const c_char, out: *mut u32) -> ChsStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        let s = CStr::from_ptr(name).to_str().map_err(|_| invalid("name is not UTF-8"))?;
        let a: Arm = s.parse().map_err(|_| invalid(format!("unknown arm `{s}`")))?;
        write_out(out, arm_code(a))
    })
}
