//! C ABI for `rotaprec`.
//!
//! Channels and solutions are opaque handles created by `rp_*_new`/`rp_solve`
//! and released with the matching `*_free`. Matrices cross the boundary as
//! row-major `double` arrays. Every fallible call returns an [`RpStatus`];
//! the message of the most recent failure on the calling thread is available
//! from [`rp_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use rotaprec::{
    BracketMode, ChannelPair, Error, InitStrategy, Matrix, OracleConfig, PrecoderSolution,
    SolveConfig,
};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Unsupported = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Start from the GSVD precoder.
pub const RP_INIT_GSVD: i32 = 0;
/// Start from `V = I` with equal power.
pub const RP_INIT_IDENTITY: i32 = 1;
pub const RP_BRACKET_VERBATIM: i32 = 0;
pub const RP_BRACKET_DESCENT: i32 = 1;

/// Solver settings. Fill with `rp_solve_config_default` before changing fields.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct RpSolveConfig {
    pub eps1: f64,
    pub eps2: f64,
    pub max_iters: usize,
    /// `RP_INIT_GSVD` or `RP_INIT_IDENTITY`
    pub init: i32,
    /// `RP_BRACKET_VERBATIM` or `RP_BRACKET_DESCENT`
    pub bracket_mode: i32,
}

/// Opaque channel pair `(H, G)`.
pub struct RpChannel(ChannelPair);

/// Opaque solved precoder.
pub struct RpSolution(PrecoderSolution);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RpStatus {
    match e.root() {
        Error::Numerical { .. } | Error::FailureThreshold { .. } | Error::Solve { .. } => {
            RpStatus::Numerical
        }
        Error::Unsupported(_) => RpStatus::Unsupported,
        _ => RpStatus::InvalidArgument,
    }
}

fn fail(status: RpStatus, msg: impl Into<String>) -> RpStatus {
    set_error(&msg.into());
    status
}

fn lib_error(e: Error) -> RpStatus {
    fail(status_of(&e), e.to_string())
}

/// Run `f`, turning panics into `RpStatus::Panic`.
fn guard(f: impl FnOnce() -> RpStatus) -> RpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(RpStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

/// # Safety
/// `data` must be null or point to `rows * cols` readable doubles.
unsafe fn read_matrix(
    data: *const f64,
    rows: usize,
    cols: usize,
    name: &str,
) -> Result<Matrix, RpStatus> {
    if data.is_null() {
        return Err(fail(RpStatus::NullPointer, format!("{name} is null")));
    }
    let len = rows.checked_mul(cols).ok_or_else(|| {
        fail(
            RpStatus::InvalidArgument,
            format!("{name} dimensions overflow"),
        )
    })?;
    Ok(Matrix::from_row_slice(
        rows,
        cols,
        slice::from_raw_parts(data, len),
    ))
}

/// # Safety
/// `out` must be null or point to `len` writable doubles.
unsafe fn write_values(
    values: impl ExactSizeIterator<Item = f64>,
    out: *mut f64,
    len: usize,
) -> RpStatus {
    if out.is_null() {
        return fail(RpStatus::NullPointer, "output buffer is null");
    }
    let n = values.len();
    if len < n {
        return fail(
            RpStatus::BufferTooSmall,
            format!("buffer holds {len} values, {n} needed"),
        );
    }
    let dst = slice::from_raw_parts_mut(out, n);
    for (d, v) in dst.iter_mut().zip(values) {
        *d = v;
    }
    RpStatus::Ok
}

fn row_major(m: &Matrix) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)]);
        }
    }
    v
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a channel from row-major `H` (`nr × nt`) and `G` (`ne × nt`).
///
/// # Safety
/// `h` and `g` must point to `nr*nt` and `ne*nt` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rp_channel_new(
    h: *const f64,
    nr: usize,
    nt: usize,
    g: *const f64,
    ne: usize,
    out: *mut *mut RpChannel,
) -> RpStatus {
    guard(|| {
        if out.is_null() {
            return fail(RpStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let h = match read_matrix(h, nr, nt, "H") {
            Ok(m) => m,
            Err(s) => return s,
        };
        let g = match read_matrix(g, ne, nt, "G") {
            Ok(m) => m,
            Err(s) => return s,
        };
        match ChannelPair::new(h, g) {
            Ok(ch) => {
                *out = Box::into_raw(Box::new(RpChannel(ch)));
                RpStatus::Ok
            }
            Err(e) => lib_error(e),
        }
    })
}

/// Draw an i.i.d. standard normal channel pair from `seed`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rp_channel_draw(
    nt: usize,
    nr: usize,
    ne: usize,
    seed: u64,
    out: *mut *mut RpChannel,
) -> RpStatus {
    guard(|| {
        if out.is_null() {
            return fail(RpStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        match rotaprec::draw_channel(nt, nr, ne, seed) {
            Ok(ch) => {
                *out = Box::into_raw(Box::new(RpChannel(ch)));
                RpStatus::Ok
            }
            Err(e) => lib_error(e),
        }
    })
}

/// # Safety
/// `ch` must be a live channel handle; the out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn rp_channel_dims(
    ch: *const RpChannel,
    nt: *mut usize,
    nr: *mut usize,
    ne: *mut usize,
) -> RpStatus {
    guard(|| {
        let Some(ch) = ch.as_ref() else {
            return fail(RpStatus::NullPointer, "channel is null");
        };
        for (p, v) in [(nt, ch.0.nt()), (nr, ch.0.nr()), (ne, ch.0.ne())] {
            if !p.is_null() {
                *p = v;
            }
        }
        RpStatus::Ok
    })
}

/// Copy `H` row-major into `out` (at least `nr*nt` values).
///
/// # Safety
/// `ch` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rp_channel_copy_h(
    ch: *const RpChannel,
    out: *mut f64,
    len: usize,
) -> RpStatus {
    guard(|| match ch.as_ref() {
        Some(ch) => write_values(row_major(ch.0.h()).into_iter(), out, len),
        None => fail(RpStatus::NullPointer, "channel is null"),
    })
}

/// Copy `G` row-major into `out` (at least `ne*nt` values).
///
/// # Safety
/// `ch` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rp_channel_copy_g(
    ch: *const RpChannel,
    out: *mut f64,
    len: usize,
) -> RpStatus {
    guard(|| match ch.as_ref() {
        Some(ch) => write_values(row_major(ch.0.g()).into_iter(), out, len),
        None => fail(RpStatus::NullPointer, "channel is null"),
    })
}

/// # Safety
/// `ch` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rp_channel_free(ch: *mut RpChannel) {
    if !ch.is_null() {
        drop(Box::from_raw(ch));
    }
}

/// Secrecy rate of the row-major `nt × nt` covariance `q`.
///
/// # Safety
/// `ch` must be live, `q` must hold `nt*nt` doubles, `rate` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rp_secrecy_rate_q(
    ch: *const RpChannel,
    q: *const f64,
    nt: usize,
    rate: *mut f64,
) -> RpStatus {
    guard(|| {
        let Some(ch) = ch.as_ref() else {
            return fail(RpStatus::NullPointer, "channel is null");
        };
        if rate.is_null() {
            return fail(RpStatus::NullPointer, "rate is null");
        }
        let q = match read_matrix(q, nt, nt, "Q") {
            Ok(m) => m,
            Err(s) => return s,
        };
        match rotaprec::secrecy_rate_q(&ch.0, &q) {
            Ok(r) => {
                *rate = r;
                RpStatus::Ok
            }
            Err(e) => lib_error(e),
        }
    })
}

/// # Safety
/// `cfg` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rp_solve_config_default(cfg: *mut RpSolveConfig) -> RpStatus {
    guard(|| {
        if cfg.is_null() {
            return fail(RpStatus::NullPointer, "cfg is null");
        }
        let d = SolveConfig::new(1.0);
        *cfg = RpSolveConfig {
            eps1: d.eps1,
            eps2: d.eps2,
            max_iters: d.max_iters,
            init: RP_INIT_GSVD,
            bracket_mode: RP_BRACKET_VERBATIM,
        };
        RpStatus::Ok
    })
}

fn to_solve_config(pt: f64, c: Option<&RpSolveConfig>) -> Result<SolveConfig, RpStatus> {
    let mut cfg = SolveConfig::new(pt);
    if let Some(c) = c {
        cfg.eps1 = c.eps1;
        cfg.eps2 = c.eps2;
        cfg.max_iters = c.max_iters;
        cfg.init = match c.init {
            RP_INIT_GSVD => InitStrategy::Gsvd,
            RP_INIT_IDENTITY => InitStrategy::Identity,
            other => {
                return Err(fail(
                    RpStatus::InvalidArgument,
                    format!("unknown init {other}"),
                ))
            }
        };
        cfg.line_search.bracket_mode = match c.bracket_mode {
            RP_BRACKET_VERBATIM => BracketMode::Verbatim,
            RP_BRACKET_DESCENT => BracketMode::Descent,
            other => {
                return Err(fail(
                    RpStatus::InvalidArgument,
                    format!("unknown bracket mode {other}"),
                ))
            }
        };
    }
    Ok(cfg)
}

unsafe fn emit_solution(
    res: rotaprec::Result<PrecoderSolution>,
    out: *mut *mut RpSolution,
) -> RpStatus {
    match res {
        Ok(s) => {
            *out = Box::into_raw(Box::new(RpSolution(s)));
            RpStatus::Ok
        }
        Err(e) => lib_error(e),
    }
}

/// Run rotation-BFGS. `cfg` may be null for defaults.
///
/// # Safety
/// `ch` must be live, `cfg` null or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rp_solve(
    ch: *const RpChannel,
    pt: f64,
    cfg: *const RpSolveConfig,
    out: *mut *mut RpSolution,
) -> RpStatus {
    guard(|| {
        if out.is_null() {
            return fail(RpStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(ch) = ch.as_ref() else {
            return fail(RpStatus::NullPointer, "channel is null");
        };
        let cfg = match to_solve_config(pt, cfg.as_ref()) {
            Ok(c) => c,
            Err(s) => return s,
        };
        emit_solution(rotaprec::solve(&ch.0, &cfg).map(|(s, _)| s), out)
    })
}

/// GSVD precoder with optimal power allocation, without refinement.
///
/// # Safety
/// `ch` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rp_gsvd_baseline(
    ch: *const RpChannel,
    pt: f64,
    out: *mut *mut RpSolution,
) -> RpStatus {
    guard(|| {
        if out.is_null() {
            return fail(RpStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(ch) = ch.as_ref() else {
            return fail(RpStatus::NullPointer, "channel is null");
        };
        emit_solution(rotaprec::gsvd_baseline(&ch.0, pt), out)
    })
}

/// Brute-force reference rate for `nt ≤ 3`.
///
/// # Safety
/// `ch` must be live and `rate` writable.
#[no_mangle]
pub unsafe extern "C" fn rp_grid_oracle(
    ch: *const RpChannel,
    pt: f64,
    grid_points: usize,
    random_samples: usize,
    seed: u64,
    rate: *mut f64,
) -> RpStatus {
    guard(|| {
        let Some(ch) = ch.as_ref() else {
            return fail(RpStatus::NullPointer, "channel is null");
        };
        if rate.is_null() {
            return fail(RpStatus::NullPointer, "rate is null");
        }
        let cfg = OracleConfig {
            grid_points,
            random_samples,
            seed,
        };
        match rotaprec::grid_oracle(&ch.0, pt, &cfg) {
            Ok(r) => {
                *rate = r;
                RpStatus::Ok
            }
            Err(e) => lib_error(e),
        }
    })
}

/// Rate in bits/s/Hz, or NaN for a null handle.
///
/// # Safety
/// `sol` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn rp_solution_rate(sol: *const RpSolution) -> f64 {
    sol.as_ref().map_or(f64::NAN, |s| s.0.rate)
}

/// # Safety
/// `sol` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn rp_solution_nt(sol: *const RpSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.0.lambda.len())
}

/// # Safety
/// `sol` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn rp_solution_iterations(sol: *const RpSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.0.iterations)
}

/// # Safety
/// `sol` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn rp_solution_converged(sol: *const RpSolution) -> bool {
    sol.as_ref().is_some_and(|s| s.0.converged)
}

/// Copy `Q` row-major (`nt*nt` values).
///
/// # Safety
/// `sol` must be live and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rp_solution_copy_q(
    sol: *const RpSolution,
    out: *mut f64,
    len: usize,
) -> RpStatus {
    guard(|| match sol.as_ref() {
        Some(s) => write_values(row_major(&s.0.q).into_iter(), out, len),
        None => fail(RpStatus::NullPointer, "solution is null"),
    })
}

/// Copy `V` row-major (`nt*nt` values).
///
/// # Safety
/// `sol` must be live and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rp_solution_copy_v(
    sol: *const RpSolution,
    out: *mut f64,
    len: usize,
) -> RpStatus {
    guard(|| match sol.as_ref() {
        Some(s) => write_values(row_major(&s.0.v).into_iter(), out, len),
        None => fail(RpStatus::NullPointer, "solution is null"),
    })
}

/// Copy the `nt` eigenvalues.
///
/// # Safety
/// `sol` must be live and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rp_solution_copy_lambda(
    sol: *const RpSolution,
    out: *mut f64,
    len: usize,
) -> RpStatus {
    guard(|| match sol.as_ref() {
        Some(s) => write_values(s.0.lambda.iter().copied(), out, len),
        None => fail(RpStatus::NullPointer, "solution is null"),
    })
}

/// Copy the `nt(nt-1)/2` Givens angles in order `(0,1), (0,2), …`.
///
/// # Safety
/// `sol` must be live and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rp_solution_copy_theta(
    sol: *const RpSolution,
    out: *mut f64,
    len: usize,
) -> RpStatus {
    guard(|| match sol.as_ref() {
        Some(s) => write_values(s.0.theta.as_slice().iter().copied(), out, len),
        None => fail(RpStatus::NullPointer, "solution is null"),
    })
}

/// # Safety
/// `sol` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rp_solution_free(sol: *mut RpSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Map `n` free eigenvalues to `n + 1` feasible ones summing to `pt`.
///
/// # Safety
/// `lambda_tilde` must hold `n` doubles (may be null when `n = 0`) and
/// `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rp_rectify(
    lambda_tilde: *const f64,
    n: usize,
    pt: f64,
    out: *mut f64,
    out_len: usize,
) -> RpStatus {
    guard(|| {
        let input: &[f64] = if n == 0 {
            &[]
        } else if lambda_tilde.is_null() {
            return fail(RpStatus::NullPointer, "lambda_tilde is null");
        } else {
            slice::from_raw_parts(lambda_tilde, n)
        };
        if !(pt >= 0.0 && pt.is_finite()) {
            return fail(
                RpStatus::InvalidArgument,
                format!("Pt must be finite and ≥ 0, got {pt}"),
            );
        }
        write_values(rotaprec::rectify(input, pt).into_iter(), out, out_len)
    })
}
