//! C ABI over the core toolkit.
//!
//! Every fallible call returns a [`QrgStatus`]; on failure the message is
//! kept per thread and read with [`qrg_last_error_message`]. Objects are
//! opaque handles owned by the caller and released with the matching
//! `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use qresgan::autodiff::Rng;
use qresgan::families::{self, Family, Task};
use qresgan::gan::{Checkpoint, Generator, GeneratorKind};
use qresgan::qstate::{self, DensityCandidate, FidelityConvention, PreparedState};
use qresgan::Error;

/// Call outcome.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QrgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Data = 4,
    Numeric = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QrgFamily {
    WernerLike = 0,
    BellDiagonal = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QrgTask {
    Teleportation = 0,
    LocalBroadcast = 1,
    NonlocalBroadcast = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QrgGeneratorKind {
    Cholesky = 0,
    Ldl = 1,
    Direct = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QrgFidelity {
    Squared = 0,
    Root = 1,
}

/// Opaque two-qubit Hermitian matrix.
pub struct QrgState(DensityCandidate);

/// Opaque generator network.
pub struct QrgGenerator {
    gen: Generator,
    family: Option<(Family, Task)>,
}

impl From<QrgFamily> for Family {
    fn from(f: QrgFamily) -> Self {
        match f {
            QrgFamily::WernerLike => Family::WernerLike,
            QrgFamily::BellDiagonal => Family::BellDiagonal,
        }
    }
}

impl From<QrgTask> for Task {
    fn from(t: QrgTask) -> Self {
        match t {
            QrgTask::Teleportation => Task::Teleportation,
            QrgTask::LocalBroadcast => Task::LocalBroadcast,
            QrgTask::NonlocalBroadcast => Task::NonlocalBroadcast,
        }
    }
}

impl From<QrgGeneratorKind> for GeneratorKind {
    fn from(k: QrgGeneratorKind) -> Self {
        match k {
            QrgGeneratorKind::Cholesky => GeneratorKind::Cholesky,
            QrgGeneratorKind::Ldl => GeneratorKind::Ldl,
            QrgGeneratorKind::Direct => GeneratorKind::Direct,
        }
    }
}

impl From<QrgFidelity> for FidelityConvention {
    fn from(f: QrgFidelity) -> Self {
        match f {
            QrgFidelity::Squared => FidelityConvention::Squared,
            QrgFidelity::Root => FidelityConvention::Root,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> QrgStatus {
    match err {
        Error::Config(_) => QrgStatus::Config,
        Error::InvalidParameter(_) | Error::DimensionMismatch(_) => QrgStatus::InvalidArgument,
        Error::Data(_) | Error::Json(_) | Error::InsufficientData(_) | Error::LowAcceptance { .. } => {
            QrgStatus::Data
        }
        Error::Io { .. } => QrgStatus::Io,
        _ => QrgStatus::Numeric,
    }
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), QrgFail>) -> QrgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            QrgStatus::Ok
        }
        Ok(Err(QrgFail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside library call".into());
            QrgStatus::Panic
        }
    }
}

struct QrgFail(QrgStatus, String);

impl From<Error> for QrgFail {
    fn from(e: Error) -> Self {
        QrgFail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> QrgFail {
    QrgFail(QrgStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or valid for reads of `n` values.
unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], QrgFail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// # Safety
/// `p` must be null or point to a live handle.
unsafe fn state_ref<'a>(p: *const QrgState) -> Result<&'a DensityCandidate, QrgFail> {
    p.as_ref().map(|s| &s.0).ok_or_else(|| null("state"))
}

/// # Safety
/// `out` must be null or valid for one write.
unsafe fn put<T>(out: *mut T, v: T) -> Result<(), QrgFail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qrg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message (NUL-terminated, possibly
/// truncated) into `buf` and returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn qrg_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast(), buf, n);
            buf.add(n).write(0);
        }
        msg.len()
    })
}

/// Builds a state from 16 real and 16 imaginary parts, row-major; the
/// matrix is Hermitized.
///
/// # Safety
/// `re` and `im` must point to 16 values each; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qrg_state_new(re: *const f64, im: *const f64, out: *mut *mut QrgState) -> QrgStatus {
    guard(|| {
        let s = DensityCandidate::from_parts(slice(re, 16, "re")?, slice(im, 16, "im")?)?;
        put(out, Box::into_raw(Box::new(QrgState(s))))
    })
}

/// Werner-like state `p|ψ><ψ| + (1−p)/4 I`, `|ψ> = α|00> + √(1−α²)|11>`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qrg_state_werner_like(p: f64, alpha: f64, out: *mut *mut QrgState) -> QrgStatus {
    guard(|| {
        let params = families::WernerLikeParams::new(p, alpha)?;
        let s = families::werner_like_state(&params)?;
        put(out, Box::into_raw(Box::new(QrgState(s))))
    })
}

/// Bell-diagonal state with correlation coefficients `c[0..3]`.
///
/// # Safety
/// `c` must point to 3 values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qrg_state_bell_diagonal(c: *const f64, out: *mut *mut QrgState) -> QrgStatus {
    guard(|| {
        let c = slice(c, 3, "c")?;
        let params = families::BellDiagonalParams::new([c[0], c[1], c[2]])?;
        let s = families::bell_diagonal_state(&params)?;
        put(out, Box::into_raw(Box::new(QrgState(s))))
    })
}

/// Releases a state; null is ignored.
///
/// # Safety
/// `state` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qrg_state_free(state: *mut QrgState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Writes 16 real then 16 imaginary parts, row-major.
///
/// # Safety
/// `state` must be live; `out` must be valid for 32 writes.
#[no_mangle]
pub unsafe extern "C" fn qrg_state_flatten(state: *const QrgState, out: *mut f64) -> QrgStatus {
    guard(|| {
        let s = state_ref(state)?;
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(s.flatten().as_ptr(), out, 32);
        Ok(())
    })
}

/// Ascending eigenvalues into `out[0..4]`.
///
/// # Safety
/// `state` must be live; `out` must be valid for 4 writes.
#[no_mangle]
pub unsafe extern "C" fn qrg_state_eigenvalues(state: *const QrgState, out: *mut f64) -> QrgStatus {
    guard(|| {
        let ev = state_ref(state)?.eigenvalues()?;
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(ev.as_ptr(), out, 4);
        Ok(())
    })
}

/// Best teleportation fidelity `½(1 + N/3)`.
///
/// # Safety
/// `state` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qrg_state_teleportation_fmax(state: *const QrgState, out: *mut f64) -> QrgStatus {
    guard(|| put(out, qstate::teleportation_score(state_ref(state)?)?.f_max))
}

/// Smallest eigenvalue of the partial transpose.
///
/// # Safety
/// `state` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qrg_state_min_eig_pt(state: *const QrgState, out: *mut f64) -> QrgStatus {
    guard(|| put(out, qstate::min_eig_pt(state_ref(state)?)?))
}

/// Whether the state is useful for `task` under the `family` criterion.
///
/// # Safety
/// `state` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qrg_state_criterion(
    state: *const QrgState,
    family: QrgFamily,
    task: QrgTask,
    out: *mut bool,
) -> QrgStatus {
    guard(|| put(out, families::criterion(family.into(), task.into(), state_ref(state)?)?))
}

/// Uhlmann fidelity between two states.
///
/// # Safety
/// Both states must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qrg_state_fidelity(
    a: *const QrgState,
    b: *const QrgState,
    convention: QrgFidelity,
    out: *mut f64,
) -> QrgStatus {
    guard(|| {
        let f = PreparedState::new(state_ref(a)?)?.fidelity(state_ref(b)?, convention.into())?;
        put(out, f)
    })
}

/// Untrained generator with weights drawn from `seed`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qrg_generator_new(kind: QrgGeneratorKind, seed: u64, out: *mut *mut QrgGenerator) -> QrgStatus {
    guard(|| {
        let gen = Generator::new(kind.into(), Default::default(), &mut Rng::seed_from_u64(seed))?;
        put(out, Box::into_raw(Box::new(QrgGenerator { gen, family: None })))
    })
}

/// Generator restored from a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qrg_generator_load(path: *const c_char, out: *mut *mut QrgGenerator) -> QrgStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| QrgFail(QrgStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let ckpt = Checkpoint::read(Path::new(path))?;
        let (gen, _) = ckpt.restore()?;
        put(
            out,
            Box::into_raw(Box::new(QrgGenerator {
                gen,
                family: Some((ckpt.family, ckpt.task)),
            })),
        )
    })
}

/// Releases a generator; null is ignored.
///
/// # Safety
/// `gen` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qrg_generator_free(gen: *mut QrgGenerator) {
    if !gen.is_null() {
        drop(Box::from_raw(gen));
    }
}

/// Samples `n` states into `out` as `n × 32` values (16 real then 16
/// imaginary parts per state). `out_len` is the capacity in values.
///
/// # Safety
/// `gen` must be live; `out` must be valid for `out_len` writes.
#[no_mangle]
pub unsafe extern "C" fn qrg_generator_sample(
    gen: *const QrgGenerator,
    n: usize,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> QrgStatus {
    guard(|| {
        let g = gen.as_ref().ok_or_else(|| null("generator"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let need = n
            .checked_mul(32)
            .ok_or_else(|| QrgFail(QrgStatus::InvalidArgument, "n too large".into()))?;
        if out_len < need {
            return Err(QrgFail(
                QrgStatus::BufferTooSmall,
                format!("need {need} values, buffer holds {out_len}"),
            ));
        }
        let states = g.gen.sample(n, &mut Rng::seed_from_u64(seed))?;
        let dst = std::slice::from_raw_parts_mut(out, need);
        for (chunk, s) in dst.chunks_exact_mut(32).zip(&states) {
            chunk.copy_from_slice(&s.flatten());
        }
        Ok(())
    })
}

/// Family and task recorded in the generator's checkpoint; `InvalidArgument`
/// for generators built with [`qrg_generator_new`].
///
/// # Safety
/// `gen` must be live; `family` and `task` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qrg_generator_target(
    gen: *const QrgGenerator,
    family: *mut QrgFamily,
    task: *mut QrgTask,
) -> QrgStatus {
    guard(|| {
        let g = gen.as_ref().ok_or_else(|| null("generator"))?;
        let (f, t) = g
            .family
            .ok_or_else(|| QrgFail(QrgStatus::InvalidArgument, "generator has no recorded target".into()))?;
        put(
            family,
            match f {
                Family::WernerLike => QrgFamily::WernerLike,
                Family::BellDiagonal => QrgFamily::BellDiagonal,
            },
        )?;
        put(
            task,
            match t {
                Task::Teleportation => QrgTask::Teleportation,
                Task::LocalBroadcast => QrgTask::LocalBroadcast,
                Task::NonlocalBroadcast => QrgTask::NonlocalBroadcast,
            },
        )
    })
}
