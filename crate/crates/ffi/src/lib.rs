//! C ABI over the archdisco engine.
//!
//! Every function returns an [`ArchdiscoStatus`]; results go through out
//! pointers. On failure a message is kept per thread and can be fetched with
//! [`archdisco_last_error`]. Strings handed out by this library must be
//! released with [`archdisco_string_free`], architecture handles with
//! [`archdisco_arch_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use archdisco::arch_ir::{parse_arch, ArchError};
use archdisco::discovery::{replay, ReplayError};
use archdisco::expert::{generate_instructions, resolve_conflicts, InstructionVector};
use archdisco::llm::ValidatedArch;
use archdisco::metrics::{load_preset, MetricsRecord, UserCriteria};
use archdisco::scoring::{co2_lbs, combined_effectiveness, energy_kwh_pue, PowerProfile, ScoringWeights};

/// Number of instruction codes.
pub const ARCHDISCO_INSTRUCTION_COUNT: usize = 15;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchdiscoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    /// Malformed document or schema violation.
    ArchMalformed = 4,
    /// Well-formed document whose shapes or references do not check out.
    ArchInvalid = 5,
    Io = 6,
    SchemaMismatch = 7,
    Divergence = 8,
    Panic = 99,
}

/// Opaque validated architecture.
pub struct ArchdiscoArch {
    inner: ValidatedArch,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchdiscoMetrics {
    pub a1: f64,
    pub a2: f64,
    /// kWh-PUE
    pub e1: f64,
    /// kWh-PUE
    pub e2: f64,
    pub fps: f64,
    pub params: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchdiscoCriteria {
    pub pa1: f64,
    pub pa2: f64,
    pub pe1: f64,
    pub pe2: f64,
    pub pf: f64,
    pub ta1: f64,
    pub ta2: f64,
    pub te1: f64,
    pub te2: f64,
    pub tf: f64,
    pub ot: f64,
    pub ut: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchdiscoWeights {
    pub aw: f64,
    pub fw: f64,
    pub ew: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchdiscoPower {
    pub cpu_watts: f64,
    pub ram_watts: f64,
    pub gpu_watts: f64,
    pub gpu_count: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchdiscoScore {
    pub cm: f64,
    pub ta: f64,
    pub va: f64,
    pub nf: f64,
    pub t_ne: f64,
    pub v_ne: f64,
}

impl From<ArchdiscoMetrics> for MetricsRecord {
    fn from(m: ArchdiscoMetrics) -> Self {
        MetricsRecord {
            a1: m.a1,
            a2: m.a2,
            e1: m.e1,
            e2: m.e2,
            f: m.fps,
            p: m.params,
        }
    }
}

impl From<ArchdiscoCriteria> for UserCriteria {
    fn from(c: ArchdiscoCriteria) -> Self {
        UserCriteria {
            pa1: c.pa1,
            pa2: c.pa2,
            pe1: c.pe1,
            pe2: c.pe2,
            pf: c.pf,
            ta1: c.ta1,
            ta2: c.ta2,
            te1: c.te1,
            te2: c.te2,
            tf: c.tf,
            ot: c.ot,
            ut: c.ut,
        }
    }
}

impl From<UserCriteria> for ArchdiscoCriteria {
    fn from(c: UserCriteria) -> Self {
        ArchdiscoCriteria {
            pa1: c.pa1,
            pa2: c.pa2,
            pe1: c.pe1,
            pe2: c.pe2,
            pf: c.pf,
            ta1: c.ta1,
            ta2: c.ta2,
            te1: c.te1,
            te2: c.te2,
            tf: c.tf,
            ot: c.ot,
            ut: c.ut,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

type Res<T> = Result<T, (ArchdiscoStatus, String)>;

fn guard(f: impl FnOnce() -> Res<()>) -> ArchdiscoStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ArchdiscoStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ArchdiscoStatus::Panic
        }
    }
}

fn null() -> (ArchdiscoStatus, String) {
    (ArchdiscoStatus::NullPointer, "null pointer argument".into())
}

unsafe fn deref<'a, T>(p: *const T) -> Res<&'a T> {
    p.as_ref().ok_or_else(null)
}

unsafe fn out<'a, T>(p: *mut T) -> Res<&'a mut T> {
    p.as_mut().ok_or_else(null)
}

unsafe fn text<'a>(p: *const c_char) -> Res<&'a str> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (ArchdiscoStatus::InvalidUtf8, e.to_string()))
}

fn arch_status(e: &ArchError) -> ArchdiscoStatus {
    match e {
        ArchError::MalformedDocument { .. } | ArchError::SchemaViolation { .. } => ArchdiscoStatus::ArchMalformed,
        _ => ArchdiscoStatus::ArchInvalid,
    }
}

/// Message of the last failed call on this thread, or NULL. Free with
/// `archdisco_string_free`.
#[no_mangle]
pub extern "C" fn archdisco_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |s| s.clone().into_raw()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn archdisco_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Static code (e.g. "ACL") of instruction `index` in canonical order, or
/// NULL when out of range. Do not free.
#[no_mangle]
pub extern "C" fn archdisco_instruction_code(index: usize) -> *const c_char {
    const CODES: [&CStr; ARCHDISCO_INSTRUCTION_COUNT] = [
        c"ACL", c"ASC", c"ADL", c"RCL", c"RSC", c"RDL", c"AD", c"AMK", c"AWI", c"AR", c"RK", c"RD", c"AMN", c"RN",
        c"RR",
    ];
    CODES.get(index).map_or(ptr::null(), |c| c.as_ptr())
}

/// Parse and validate a JSON architecture document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn archdisco_arch_parse(json: *const c_char, out_arch: *mut *mut ArchdiscoArch) -> ArchdiscoStatus {
    guard(|| {
        let slot = out(out_arch)?;
        *slot = ptr::null_mut();
        let src = text(json)?;
        let graph = parse_arch(src).map_err(|e| (arch_status(&e), e.to_string()))?;
        let inner = ValidatedArch::from_graph(graph).map_err(|e| (arch_status(&e), e.to_string()))?;
        *slot = Box::into_raw(Box::new(ArchdiscoArch { inner }));
        Ok(())
    })
}

/// # Safety
/// `arch` must be NULL or a handle from `archdisco_arch_parse`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn archdisco_arch_free(arch: *mut ArchdiscoArch) {
    if !arch.is_null() {
        drop(Box::from_raw(arch));
    }
}

/// # Safety
/// `arch` must be a live handle; `out_params` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn archdisco_arch_params(arch: *const ArchdiscoArch, out_params: *mut u64) -> ArchdiscoStatus {
    guard(|| {
        *out(out_params)? = deref(arch)?.inner.report.total_params;
        Ok(())
    })
}

/// Multiply-accumulate count of the convolution and dense layers.
///
/// # Safety
/// `arch` must be a live handle; `out_flops` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn archdisco_arch_flops(arch: *const ArchdiscoArch, out_flops: *mut u64) -> ArchdiscoStatus {
    guard(|| {
        *out(out_flops)? = deref(arch)?.inner.report.total_flops;
        Ok(())
    })
}

/// Canonical JSON of the architecture. Free with `archdisco_string_free`.
///
/// # Safety
/// `arch` must be a live handle; `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn archdisco_arch_to_json(arch: *const ArchdiscoArch, out_json: *mut *mut c_char) -> ArchdiscoStatus {
    guard(|| {
        let slot = out(out_json)?;
        let s = deref(arch)?.inner.document().to_string();
        *slot = CString::new(s).map_err(|e| (ArchdiscoStatus::InvalidArgument, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Priorities and thresholds of experiment setting `n` (1-5).
///
/// # Safety
/// `out_criteria` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn archdisco_preset(n: u32, out_criteria: *mut ArchdiscoCriteria) -> ArchdiscoStatus {
    guard(|| {
        let slot = out(out_criteria)?;
        let c = load_preset(n).map_err(|e| (ArchdiscoStatus::InvalidArgument, e.to_string()))?;
        *slot = c.into();
        Ok(())
    })
}

/// Instruction weights for `metrics`, written to 15 doubles in canonical order.
///
/// # Safety
/// `metrics`, `criteria` valid pointers; `out_weights` points to 15 doubles.
#[no_mangle]
pub unsafe extern "C" fn archdisco_generate_instructions(
    metrics: *const ArchdiscoMetrics,
    criteria: *const ArchdiscoCriteria,
    out_weights: *mut f64,
) -> ArchdiscoStatus {
    guard(|| {
        let m: MetricsRecord = (*deref(metrics)?).into();
        let c: UserCriteria = (*deref(criteria)?).into();
        if out_weights.is_null() {
            return Err(null());
        }
        let v = generate_instructions(&m, &c);
        let dst = std::slice::from_raw_parts_mut(out_weights, ARCHDISCO_INSTRUCTION_COUNT);
        dst.copy_from_slice(v.weights());
        Ok(())
    })
}

/// Conflict-free instructions, heaviest first. `out_indices` and
/// `out_weights` must each hold 15 entries; `out_len` receives the count.
///
/// # Safety
/// `weights` points to 15 doubles; the out pointers are valid as described.
#[no_mangle]
pub unsafe extern "C" fn archdisco_resolve_conflicts(
    weights: *const f64,
    out_indices: *mut u32,
    out_weights: *mut f64,
    out_len: *mut usize,
) -> ArchdiscoStatus {
    guard(|| {
        if weights.is_null() || out_indices.is_null() || out_weights.is_null() {
            return Err(null());
        }
        let len = out(out_len)?;
        let src = std::slice::from_raw_parts(weights, ARCHDISCO_INSTRUCTION_COUNT);
        let mut w = [0.0; ARCHDISCO_INSTRUCTION_COUNT];
        w.copy_from_slice(src);
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err((ArchdiscoStatus::InvalidArgument, "weights must be finite and >= 0".into()));
        }
        let rc = resolve_conflicts(&InstructionVector::from_weights(w));
        let idx = std::slice::from_raw_parts_mut(out_indices, ARCHDISCO_INSTRUCTION_COUNT);
        let wts = std::slice::from_raw_parts_mut(out_weights, ARCHDISCO_INSTRUCTION_COUNT);
        for (k, (code, weight)) in rc.as_pairs().into_iter().enumerate() {
            idx[k] = code.index() as u32;
            wts[k] = weight;
        }
        *len = rc.len();
        Ok(())
    })
}

/// Combined effectiveness of `metrics`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn archdisco_score(
    metrics: *const ArchdiscoMetrics,
    criteria: *const ArchdiscoCriteria,
    weights: *const ArchdiscoWeights,
    out_score: *mut ArchdiscoScore,
) -> ArchdiscoStatus {
    guard(|| {
        let m: MetricsRecord = (*deref(metrics)?).into();
        let c: UserCriteria = (*deref(criteria)?).into();
        let w = deref(weights)?;
        let slot = out(out_score)?;
        let w = ScoringWeights {
            aw: w.aw,
            fw: w.fw,
            ew: w.ew,
        };
        let r = combined_effectiveness(&m, &c, &w);
        *slot = ArchdiscoScore {
            cm: r.cm,
            ta: r.ta,
            va: r.va,
            nf: r.nf,
            t_ne: r.t_ne,
            v_ne: r.v_ne,
        };
        Ok(())
    })
}

/// Energy in kWh-PUE for `hours` under `power`; NULL uses the default profile.
///
/// # Safety
/// `power` NULL or valid; `out_kwh` valid.
#[no_mangle]
pub unsafe extern "C" fn archdisco_energy_kwh_pue(
    hours: f64,
    power: *const ArchdiscoPower,
    out_kwh: *mut f64,
) -> ArchdiscoStatus {
    guard(|| {
        let slot = out(out_kwh)?;
        let p = match power.as_ref() {
            None => PowerProfile::default(),
            Some(p) => PowerProfile {
                p_c: p.cpu_watts,
                p_r: p.ram_watts,
                p_g: p.gpu_watts,
                g: p.gpu_count,
            },
        };
        if !hours.is_finite() || hours < 0.0 || !p.is_valid() {
            return Err((ArchdiscoStatus::InvalidArgument, "hours and watts must be finite and >= 0".into()));
        }
        *slot = energy_kwh_pue(hours, &p);
        Ok(())
    })
}

/// Pounds of CO2 for `kwh` kWh-PUE.
#[no_mangle]
pub extern "C" fn archdisco_co2_lbs(kwh: f64) -> f64 {
    co2_lbs(kwh)
}

/// Replay a trajectory file. On success `out_best_index` is the best
/// iteration or -1. Divergent iterations are listed in the error message.
///
/// # Safety
/// `path` a NUL-terminated string; `out_best_index` valid.
#[no_mangle]
pub unsafe extern "C" fn archdisco_replay(path: *const c_char, out_best_index: *mut i64) -> ArchdiscoStatus {
    guard(|| {
        let slot = out(out_best_index)?;
        let p = text(path)?;
        let report = replay(Path::new(p), None).map_err(|e| {
            let status = match e {
                ReplayError::Io { .. } => ArchdiscoStatus::Io,
                ReplayError::SchemaMismatch(_) => ArchdiscoStatus::SchemaMismatch,
                ReplayError::DivergenceDetected(_) => ArchdiscoStatus::Divergence,
            };
            (status, e.to_string())
        })?;
        *slot = report.best_index.map_or(-1, |i| i as i64);
        Ok(())
    })
}
