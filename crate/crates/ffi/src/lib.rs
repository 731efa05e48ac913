//! C ABI over the ccf library.
//!
//! Objects cross the boundary as opaque handles created by `ccf_*_new`-style
//! constructors and released by the matching `*_free`. Every fallible call
//! returns a [`CcfStatus`]; on failure, [`ccf_last_error`] describes it.
//! Functions and potentials are passed as JSON in the same format as the
//! CLI configs.

use std::cell::RefCell;
use std::ffi::{CStr, CString, c_char};
use std::panic::{AssertUnwindSafe, catch_unwind};
use std::ptr;

use ccf::Error;
use ccf::basedyn::BaseSystem;
use ccf::cocycle::{Cocycle, Generator, RealFn, UhParams, Verdict};
use ccf::schrodinger::{EnergyGrid, EnergyVerdict, Potential, ScanParams, SpectrumScan};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CcfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Degenerate = 3,
    Precondition = 4,
    Rational = 5,
    Resolution = 6,
    Obstruction = 7,
    Budget = 8,
    Internal = 9,
    Io = 10,
    Json = 11,
    Panic = 12,
}

/// Outcome of the uniform hyperbolicity test.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CcfVerdict {
    Uh = 0,
    NotUh = 1,
    Inconclusive = 2,
}

/// Base dynamical system.
pub struct CcfBase(BaseSystem);

/// SL(2,R) cocycle over a base.
pub struct CcfCocycle(Cocycle);

/// Result of an energy scan.
pub struct CcfScan(SpectrumScan);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CcfStatus {
    match e.root() {
        Error::Input(_) => CcfStatus::InvalidInput,
        Error::Degenerate(_) => CcfStatus::Degenerate,
        Error::Precondition(_) => CcfStatus::Precondition,
        Error::Rational { .. } => CcfStatus::Rational,
        Error::Resolution(_) => CcfStatus::Resolution,
        Error::Obstruction { .. } => CcfStatus::Obstruction,
        Error::Budget(_) => CcfStatus::Budget,
        Error::Internal(_) | Error::Stage { .. } => CcfStatus::Internal,
        Error::Io(_) => CcfStatus::Io,
        Error::Json(_) => CcfStatus::Json,
    }
}

/// Runs `f`, recording any error or panic for `ccf_last_error`.
fn guard(f: impl FnOnce() -> Result<(), (CcfStatus, String)>) -> CcfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CcfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(msg);
            CcfStatus::Panic
        }
    }
}

fn lib(e: Error) -> (CcfStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CcfStatus, String) {
    (CcfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, (CcfStatus, String)> {
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (CcfStatus, String)> {
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn json<T: serde::de::DeserializeOwned>(p: *const c_char, what: &str) -> Result<T, (CcfStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|e| (CcfStatus::InvalidInput, format!("{what}: {e}")))?;
    serde_json::from_str(s).map_err(|e| (CcfStatus::Json, format!("{what}: {e}")))
}

fn boxed<T>(slot: &mut *mut T, value: T) {
    *slot = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[unsafe(no_mangle)]
pub extern "C" fn ccf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[unsafe(no_mangle)]
pub extern "C" fn ccf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

unsafe fn new_base(out_base: *mut *mut CcfBase, f: impl FnOnce() -> ccf::Result<BaseSystem>) -> CcfStatus {
    guard(|| {
        let slot = unsafe { out(out_base, "out_base") }?;
        boxed(slot, CcfBase(f().map_err(lib)?));
        Ok(())
    })
}

/// Circle rotation x ↦ x + alpha.
///
/// # Safety
/// `out_base` must be a valid pointer.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_base_circle(alpha: f64, out_base: *mut *mut CcfBase) -> CcfStatus {
    unsafe { new_base(out_base, || BaseSystem::circle(alpha)) }
}

/// Torus translation by (alpha1, alpha2).
///
/// # Safety
/// `out_base` must be a valid pointer.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_base_torus(alpha1: f64, alpha2: f64, out_base: *mut *mut CcfBase) -> CcfStatus {
    unsafe { new_base(out_base, || BaseSystem::torus([alpha1, alpha2])) }
}

/// Skew-shift (x, y) ↦ (x + alpha, y + x).
///
/// # Safety
/// `out_base` must be a valid pointer.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_base_skew_shift(alpha: f64, out_base: *mut *mut CcfBase) -> CcfStatus {
    unsafe { new_base(out_base, || BaseSystem::skew_shift(alpha)) }
}

/// Adding machine on `depth` digits in base `radix`.
///
/// # Safety
/// `out_base` must be a valid pointer.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_base_odometer(radix: u32, depth: u32, out_base: *mut *mut CcfBase) -> CcfStatus {
    unsafe { new_base(out_base, || BaseSystem::odometer(radix, depth)) }
}

/// # Safety
/// `base` must come from a `ccf_base_*` constructor and not be freed twice.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_base_free(base: *mut CcfBase) {
    if !base.is_null() {
        drop(unsafe { Box::from_raw(base) });
    }
}

/// Cocycle from a generator JSON document such as
/// `{"kind": "rotation", "angle": {"kind": "constant", "value": 0.5}}`.
///
/// # Safety
/// `base` must be a live handle, `generator_json` a NUL-terminated string and
/// `out_cocycle` a valid pointer.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_cocycle_from_json(
    base: *const CcfBase,
    generator_json: *const c_char,
    out_cocycle: *mut *mut CcfCocycle,
) -> CcfStatus {
    guard(|| {
        let base = unsafe { get(base, "base") }?;
        let g: Generator = unsafe { json(generator_json, "generator_json") }?;
        let slot = unsafe { out(out_cocycle, "out_cocycle") }?;
        boxed(slot, CcfCocycle(Cocycle::from_generator(base.0, g)));
        Ok(())
    })
}

/// Schrödinger cocycle (E − V, −1; 1, 0) for a potential given as a
/// function JSON document such as `{"kind": "trig", "terms": [{"amp": 0.3, "kx": 1}]}`.
///
/// # Safety
/// As for `ccf_cocycle_from_json`.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_cocycle_schrodinger(
    base: *const CcfBase,
    potential_json: *const c_char,
    energy: f64,
    out_cocycle: *mut *mut CcfCocycle,
) -> CcfStatus {
    guard(|| {
        let base = unsafe { get(base, "base") }?;
        let v: RealFn = unsafe { json(potential_json, "potential_json") }?;
        let slot = unsafe { out(out_cocycle, "out_cocycle") }?;
        boxed(slot, CcfCocycle(Cocycle::schrodinger(base.0, energy, v)));
        Ok(())
    })
}

/// # Safety
/// `cocycle` must come from a `ccf_cocycle_*` constructor and not be freed twice.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_cocycle_free(cocycle: *mut CcfCocycle) {
    if !cocycle.is_null() {
        drop(unsafe { Box::from_raw(cocycle) });
    }
}

/// The matrix at base point (x, y), written row-major to `out_matrix[4]`.
/// Odometer points are taken as the integer part of x.
///
/// # Safety
/// `cocycle` must be live and `out_matrix` point to four doubles.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_cocycle_eval(
    cocycle: *const CcfCocycle,
    x: f64,
    y: f64,
    out_matrix: *mut f64,
) -> CcfStatus {
    guard(|| {
        let c = unsafe { get(cocycle, "cocycle") }?;
        if out_matrix.is_null() {
            return Err(null("out_matrix"));
        }
        let m = c.0.eval(&c.0.base().point(x, y));
        let dst = unsafe { std::slice::from_raw_parts_mut(out_matrix, 4) };
        dst.copy_from_slice(&[m.a, m.b, m.c, m.d]);
        Ok(())
    })
}

/// Cone-field test of uniform hyperbolicity with default parameters;
/// `out_n` receives the iterate count of the deciding level.
///
/// # Safety
/// `cocycle` must be live and the out pointers valid.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_uh_test(
    cocycle: *const CcfCocycle,
    out_verdict: *mut CcfVerdict,
    out_n: *mut usize,
) -> CcfStatus {
    guard(|| {
        let c = unsafe { get(cocycle, "cocycle") }?;
        let verdict = unsafe { out(out_verdict, "out_verdict") }?;
        let n = unsafe { out(out_n, "out_n") }?;
        let cert = ccf::cocycle::uh_test(&c.0, &UhParams::default()).map_err(lib)?;
        *verdict = match cert.verdict {
            Verdict::Uh => CcfVerdict::Uh,
            Verdict::NotUh => CcfVerdict::NotUh,
            Verdict::Inconclusive => CcfVerdict::Inconclusive,
        };
        *n = cert.n;
        Ok(())
    })
}

/// Fibered rotation number in [0, 1) along `iterations` steps from (x, y).
///
/// # Safety
/// `cocycle` must be live and `out_rho` valid.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_rotation_number(
    cocycle: *const CcfCocycle,
    x: f64,
    y: f64,
    iterations: u64,
    out_rho: *mut f64,
) -> CcfStatus {
    guard(|| {
        let c = unsafe { get(cocycle, "cocycle") }?;
        let rho = unsafe { out(out_rho, "out_rho") }?;
        *rho = ccf::cocycle::rotation_number(&c.0, &c.0.base().point(x, y), iterations).map_err(lib)?;
        Ok(())
    })
}

/// Top Lyapunov exponent estimate along one orbit.
///
/// # Safety
/// `cocycle` must be live and `out_exponent` valid.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_lyapunov(
    cocycle: *const CcfCocycle,
    x: f64,
    y: f64,
    iterations: u64,
    out_exponent: *mut f64,
) -> CcfStatus {
    guard(|| {
        let c = unsafe { get(cocycle, "cocycle") }?;
        let e = unsafe { out(out_exponent, "out_exponent") }?;
        *e = ccf::cocycle::lyapunov(&c.0, &c.0.base().point(x, y), iterations)
            .map_err(lib)?
            .exponent;
        Ok(())
    })
}

/// Winding number of the cocycle along the base loop `index`.
///
/// # Safety
/// `cocycle` must be live and `out_winding` valid.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_winding_number(
    cocycle: *const CcfCocycle,
    index: usize,
    out_winding: *mut i64,
) -> CcfStatus {
    guard(|| {
        let c = unsafe { get(cocycle, "cocycle") }?;
        let w = unsafe { out(out_winding, "out_winding") }?;
        *w = ccf::cocycle::winding_number(&c.0, index).map_err(lib)?;
        Ok(())
    })
}

/// Scans energies min, min + step, …, max for gaps of the Schrödinger
/// operator with the given potential.
///
/// # Safety
/// `base` must be live, `potential_json` NUL-terminated and `out_scan` valid.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_spectrum_scan(
    base: *const CcfBase,
    potential_json: *const c_char,
    min: f64,
    max: f64,
    step: f64,
    out_scan: *mut *mut CcfScan,
) -> CcfStatus {
    guard(|| {
        let base = unsafe { get(base, "base") }?;
        let v: RealFn = unsafe { json(potential_json, "potential_json") }?;
        let slot = unsafe { out(out_scan, "out_scan") }?;
        let grid = EnergyGrid::new(min, max, step).map_err(lib)?;
        let scan = ccf::schrodinger::spectrum_scan(base.0, &Potential::new("V", v), grid, &ScanParams::default())
            .map_err(lib)?;
        boxed(slot, CcfScan(scan));
        Ok(())
    })
}

/// Number of energies in the scan.
///
/// # Safety
/// `scan` must be live.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_scan_point_count(scan: *const CcfScan) -> usize {
    unsafe { scan.as_ref() }.map_or(0, |s| s.0.points.len())
}

/// Energy `i` of the scan and its verdict.
///
/// # Safety
/// `scan` must be live and the out pointers valid.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_scan_point(
    scan: *const CcfScan,
    i: usize,
    out_energy: *mut f64,
    out_in_gap: *mut bool,
) -> CcfStatus {
    guard(|| {
        let s = unsafe { get(scan, "scan") }?;
        let p = s.0.points.get(i).ok_or_else(|| {
            (CcfStatus::InvalidInput, format!("point {i} out of range ({} points)", s.0.points.len()))
        })?;
        *unsafe { out(out_energy, "out_energy") }? = p.energy;
        *unsafe { out(out_in_gap, "out_in_gap") }? = p.verdict == EnergyVerdict::Gap;
        Ok(())
    })
}

/// Number of gaps found.
///
/// # Safety
/// `scan` must be live.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_scan_gap_count(scan: *const CcfScan) -> usize {
    unsafe { scan.as_ref() }.map_or(0, |s| s.0.gaps.len())
}

/// Refined edges of gap `i`; an edge is NaN where the gap runs off the grid.
///
/// # Safety
/// `scan` must be live and the out pointers valid.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_scan_gap(
    scan: *const CcfScan,
    i: usize,
    out_lower: *mut f64,
    out_upper: *mut f64,
) -> CcfStatus {
    guard(|| {
        let s = unsafe { get(scan, "scan") }?;
        let g = s.0.gaps.get(i).ok_or_else(|| {
            (CcfStatus::InvalidInput, format!("gap {i} out of range ({} gaps)", s.0.gaps.len()))
        })?;
        *unsafe { out(out_lower, "out_lower") }? = g.lower_edge.unwrap_or(f64::NAN);
        *unsafe { out(out_upper, "out_upper") }? = g.upper_edge.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// # Safety
/// `scan` must come from `ccf_spectrum_scan` and not be freed twice.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_scan_free(scan: *mut CcfScan) {
    if !scan.is_null() {
        drop(unsafe { Box::from_raw(scan) });
    }
}

/// Perturbs the potential by less than `epsilon` in sup norm so that
/// `energy` lies in a gap. The full result, including the new potential and
/// its certificates, is returned as JSON in `out_json` (free with
/// `ccf_string_free`).
///
/// # Safety
/// `base` must be live, `potential_json` NUL-terminated and `out_json` valid.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn ccf_open_gap(
    base: *const CcfBase,
    potential_json: *const c_char,
    energy: f64,
    epsilon: f64,
    out_json: *mut *mut c_char,
) -> CcfStatus {
    guard(|| {
        let base = unsafe { get(base, "base") }?;
        let v: RealFn = unsafe { json(potential_json, "potential_json") }?;
        let slot = unsafe { out(out_json, "out_json") }?;
        let g = ccf::projection::open_gap(base.0, &Potential::new("V", v), energy, epsilon, &Default::default())
            .map_err(lib)?;
        let text = ccf::output::to_json(&g).map_err(lib)?;
        *slot = CString::new(text)
            .map_err(|e| (CcfStatus::Internal, e.to_string()))?
            .into_raw();
        Ok(())
    })
}
