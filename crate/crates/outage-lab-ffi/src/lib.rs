//! C ABI over the outage library: sessions, estimates, and conjecture tests.
//!
//! Every fallible entry point returns an [`OlStatus`] and writes its result
//! through a caller-provided out-pointer, touched only on success. A session
//! is an opaque handle carrying the quadrature tolerances; Monte Carlo entry
//! points are seeded directly and need no session. All calls are panic-safe
//! and reentrant. Detail beyond the status code is kept per thread and read
//! back with [`ol_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use outage_lab::mcsim::{mc_outage_direct, mc_outage_timo_reduced, McError};
use outage_lab::mimo_general::{
    mc_outage_special_q, theorem2_check, MimoError, PerturbationVerdict, SpecialQ,
};
use outage_lab::timo::{
    find_min_split, outage_timo, theorem1_check, total_first_derivative,
    total_second_derivative, ConditionStatus, TimoError,
};
use outage_lab::{
    ChannelSpec, EstimateMethod, OutageEstimate, PowerSplit, QuadratureSpec, RandomStream,
    SpecFunError,
};

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OlStatus {
    /// The call succeeded and the out-pointer holds the result.
    Ok = 0,
    /// A required pointer argument was null; nothing was written.
    NullPointer = 1,
    /// An argument failed validation; nothing was written.
    InvalidArgument = 2,
    /// A numerical procedure could not certify a result.
    Numerical = 3,
    /// An unexpected internal fault was contained; please report it.
    Internal = 4,
}

/// How an estimate was produced.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OlMethod {
    /// Adaptive quadrature with a hard error bound.
    Quadrature = 0,
    /// Monte Carlo over explicit channel matrices.
    McDirect = 1,
    /// Monte Carlo over the reduced two-antenna variables.
    McReduced = 2,
    /// Monte Carlo over the grouped power pattern reduction.
    McSpecial = 3,
}

/// Outcome of one sign condition in the interior-minimum test.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OlCondition {
    /// The condition holds beyond the tolerance.
    Met = 0,
    /// The condition fails beyond the tolerance.
    Failed = 1,
    /// The value sits inside the tolerance band.
    Inconclusive = 2,
}

/// Verdict of the paired perturbation test on a uniform power pattern.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OlPerturbation {
    /// Some perturbation lowers the outage probability.
    Rejected = 0,
    /// Every tested perturbation raises the outage probability.
    NotRejected = 1,
    /// At least one comparison is within noise.
    Inconclusive = 2,
}

/// A probability estimate with its uncertainty and sampling counters.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct OlEstimate {
    /// Estimated outage probability.
    pub value: f64,
    /// Hard quadrature error bound or Monte Carlo standard error.
    pub uncertainty: f64,
    /// Integrand evaluations or Monte Carlo draws behind the estimate.
    pub n_samples: u64,
    /// Draws discarded after a numerical failure (Monte Carlo only).
    pub n_eval_errors: u64,
    /// Which estimator produced the value.
    pub method: OlMethod,
}

/// A derivative of the transfer curve with its hard error bound.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct OlDerivative {
    /// Derivative value.
    pub value: f64,
    /// Hard error bound; zero for closed-form boundary values.
    pub err_bound: f64,
    /// Integrand evaluations spent.
    pub evaluations: u64,
}

/// Result of the two-sided slope test for a strictly interior minimizer.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct OlTheorem1 {
    /// First derivative of the transfer curve at full concentration.
    pub d1_at_zero: f64,
    /// Second derivative at full concentration.
    pub d2_at_zero: f64,
    /// Second derivative at the uniform split.
    pub d2_at_half: f64,
    /// Hard error bound on `d2_at_half`.
    pub d2_at_half_err: f64,
    /// Tolerance band used for all sign tests.
    pub tol: f64,
    /// Whether the curve initially descends from full concentration.
    pub zero_side: OlCondition,
    /// Whether the uniform split is a local maximum of the curve.
    pub center_side: OlCondition,
    /// Both sides met: an interior split beats both canonical candidates.
    pub counterexample_found: bool,
    /// At least one side could not be decided at this tolerance.
    pub inconclusive: bool,
}

/// Location and value of the best split found by the minimizer.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct OlMinSplit {
    /// Minimizing first power, in `[0, P/2]` by symmetry.
    pub q_star: f64,
    /// Outage probability at `q_star`.
    pub f_star: f64,
    /// Hard error bound on `f_star`.
    pub f_star_err: f64,
    /// Outage probability at full concentration.
    pub f_at_zero: f64,
    /// Outage probability at the uniform split.
    pub f_at_half: f64,
    /// Hard error bound on `f_at_half`.
    pub f_at_half_err: f64,
    /// Total integrand evaluations spent in the search.
    pub evaluations: u64,
}

/// A paired Monte Carlo difference; `present` is false when the direction
/// does not exist for the requested pattern.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct OlDelta {
    /// Whether this direction was tested.
    pub present: bool,
    /// Mean outage change caused by the perturbation.
    pub delta: f64,
    /// Standard error of the mean; named to dodge the C `stderr` macro.
    pub std_err: f64,
}

/// Result of the paired perturbation test around a uniform pattern.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct OlTheorem2 {
    /// Number of active antennas in the tested pattern.
    pub k: u32,
    /// Perturbation size that was applied.
    pub eps: f64,
    /// Paired draws requested.
    pub n_samples: u64,
    /// Draws discarded because a factorization failed.
    pub n_eval_errors: u64,
    /// Outage change when power moves to an idle antenna (absent for k = t).
    pub delta_prime: OlDelta,
    /// Outage change for a transfer between active antennas (absent for k = 1).
    pub delta_double_prime: OlDelta,
    /// Combined verdict at three standard errors.
    pub verdict: OlPerturbation,
}

/// Opaque evaluation session holding the quadrature tolerances.
pub struct OlSession {
    quad: QuadratureSpec,
}

thread_local! {
    /// Message for the most recent failure on this thread.
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

/// Internal failure payload: a status code plus its human-readable message.
struct Fail {
    status: OlStatus,
    message: String,
}

impl Fail {
    fn null(name: &str) -> Self {
        Fail {
            status: OlStatus::NullPointer,
            message: format!("{name} must not be null"),
        }
    }
}

impl From<SpecFunError> for Fail {
    fn from(e: SpecFunError) -> Self {
        let status = match e {
            SpecFunError::Domain(_) => OlStatus::InvalidArgument,
            _ => OlStatus::Numerical,
        };
        Fail {
            status,
            message: e.to_string(),
        }
    }
}

impl From<TimoError> for Fail {
    fn from(e: TimoError) -> Self {
        match e {
            TimoError::InvalidChannel(_) | TimoError::InvalidSplit(_) => Fail {
                status: OlStatus::InvalidArgument,
                message: e.to_string(),
            },
            TimoError::Quadrature(inner) => inner.into(),
        }
    }
}

impl From<McError> for Fail {
    fn from(e: McError) -> Self {
        let status = match e {
            McError::InvalidRequest(_) => OlStatus::InvalidArgument,
            McError::AllDrawsFailed(_) => OlStatus::Numerical,
        };
        Fail {
            status,
            message: e.to_string(),
        }
    }
}

impl From<MimoError> for Fail {
    fn from(e: MimoError) -> Self {
        let status = match e {
            MimoError::InvalidRequest(_) => OlStatus::InvalidArgument,
            MimoError::Numerical(_) => OlStatus::Numerical,
        };
        Fail {
            status,
            message: e.to_string(),
        }
    }
}

/// Records the failure message for this thread and returns its status.
fn fail(f: Fail) -> OlStatus {
    let text = CString::new(f.message)
        .unwrap_or_else(|_| CString::new("error message held an interior nul byte").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
    f.status
}

/// Runs a fallible body panic-safely and writes its value through `out`.
///
/// The out-pointer is written exactly once, and only on success.
unsafe fn run_into<T>(out: *mut T, body: impl FnOnce() -> Result<T, Fail>) -> OlStatus {
    if out.is_null() {
        return fail(Fail::null("the output pointer"));
    }
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(value)) => {
            unsafe { out.write(value) };
            OlStatus::Ok
        }
        Ok(Err(f)) => fail(f),
        Err(_) => fail(Fail {
            status: OlStatus::Internal,
            message: "a panic was contained at the language boundary".into(),
        }),
    }
}

/// Copies the tolerances out of a session handle.
unsafe fn session_quad(session: *const OlSession) -> Result<QuadratureSpec, Fail> {
    unsafe { session.as_ref() }
        .map(|s| s.quad)
        .ok_or_else(|| Fail::null("the session"))
}

impl From<EstimateMethod> for OlMethod {
    fn from(m: EstimateMethod) -> Self {
        match m {
            EstimateMethod::Quadrature => OlMethod::Quadrature,
            EstimateMethod::McDirect => OlMethod::McDirect,
            EstimateMethod::McReduced => OlMethod::McReduced,
            EstimateMethod::McSpecial => OlMethod::McSpecial,
        }
    }
}

impl From<OutageEstimate> for OlEstimate {
    fn from(e: OutageEstimate) -> Self {
        OlEstimate {
            value: e.p_hat,
            uncertainty: e.stderr,
            n_samples: e.n_samples,
            n_eval_errors: e.n_eval_errors,
            method: e.method.into(),
        }
    }
}

impl From<ConditionStatus> for OlCondition {
    fn from(c: ConditionStatus) -> Self {
        match c {
            ConditionStatus::Met => OlCondition::Met,
            ConditionStatus::Failed => OlCondition::Failed,
            ConditionStatus::Inconclusive => OlCondition::Inconclusive,
        }
    }
}

impl From<PerturbationVerdict> for OlPerturbation {
    fn from(v: PerturbationVerdict) -> Self {
        match v {
            PerturbationVerdict::Rejected => OlPerturbation::Rejected,
            PerturbationVerdict::NotRejected => OlPerturbation::NotRejected,
            PerturbationVerdict::Inconclusive => OlPerturbation::Inconclusive,
        }
    }
}

/// Returns the library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn ol_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Returns a static description of a status code; unknown codes included.
#[no_mangle]
pub extern "C" fn ol_status_message(status: i32) -> *const c_char {
    let text: &'static str = match status {
        0 => "ok\0",
        1 => "null pointer argument\0",
        2 => "invalid argument\0",
        3 => "numerical failure\0",
        4 => "internal error\0",
        _ => "unknown status code\0",
    };
    text.as_ptr().cast()
}

/// Returns the message of the most recent failure on the calling thread.
///
/// Null when no failure has occurred yet. The pointer stays valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ol_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |s| s.as_ptr())
    })
}

/// Creates a session with explicit quadrature tolerances.
///
/// Convergence is declared when the error bound drops below
/// `max(abs_tol, rel_tol * |value|)`; at least one tolerance must be
/// positive. The handle must be released with `ol_session_free`.
///
/// # Safety
///
/// `out_session` must be null (rejected with a status) or valid for a
/// pointer-sized write.
#[no_mangle]
pub unsafe extern "C" fn ol_session_new(
    abs_tol: f64,
    rel_tol: f64,
    max_subdivisions: u32,
    out_session: *mut *mut OlSession,
) -> OlStatus {
    unsafe {
        run_into(out_session, || {
            let quad = QuadratureSpec::new(abs_tol, rel_tol, max_subdivisions)?;
            Ok(Box::into_raw(Box::new(OlSession { quad })))
        })
    }
}

/// Creates a session with the library's default tolerances.
///
/// # Safety
///
/// `out_session` must be null (rejected with a status) or valid for a
/// pointer-sized write.
#[no_mangle]
pub unsafe extern "C" fn ol_session_default(out_session: *mut *mut OlSession) -> OlStatus {
    unsafe {
        run_into(out_session, || {
            Ok(Box::into_raw(Box::new(OlSession {
                quad: QuadratureSpec::default(),
            })))
        })
    }
}

/// Releases a session handle; null is accepted and ignored.
///
/// # Safety
///
/// `session` must be null or a handle returned by `ol_session_new` or
/// `ol_session_default` that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn ol_session_free(session: *mut OlSession) {
    if !session.is_null() {
        drop(unsafe { Box::from_raw(session) });
    }
}

/// Outage probability of the split `(q1, q2)` by adaptive quadrature.
///
/// The channel has two transmit and `r` receive antennas; the rate is in
/// nats and the power budget is `q1 + q2`. The estimate carries a hard
/// error bound.
///
/// # Safety
///
/// `session` must be null (rejected with a status) or a live session handle;
/// `out` must be null (rejected) or valid for a write of its pointee.
#[no_mangle]
pub unsafe extern "C" fn ol_outage(
    session: *const OlSession,
    r: u32,
    rate_nats: f64,
    q1: f64,
    q2: f64,
    out: *mut OlEstimate,
) -> OlStatus {
    unsafe {
        run_into(out, || {
            let quad = session_quad(session)?;
            let spec = ChannelSpec::timo(r, rate_nats, q1 + q2)?;
            let split = PowerSplit::new(q1, q2)?;
            Ok(outage_timo(&spec, &split, &quad)?.into())
        })
    }
}

/// Monte Carlo outage probability of `(q1, q2)` via the reduced variables.
///
/// Deterministic in `(seed, stream_id)`; the estimate carries the binomial
/// standard error.
///
/// # Safety
///
/// `out` must be null (rejected with a status) or valid for a write of its
/// pointee.
#[no_mangle]
pub unsafe extern "C" fn ol_outage_mc_reduced(
    r: u32,
    rate_nats: f64,
    q1: f64,
    q2: f64,
    n_samples: u64,
    seed: u64,
    stream_id: u64,
    out: *mut OlEstimate,
) -> OlStatus {
    unsafe {
        run_into(out, || {
            let spec = ChannelSpec::timo(r, rate_nats, q1 + q2)?;
            let split = PowerSplit::new(q1, q2)?;
            let mut stream = RandomStream::new(seed, stream_id);
            Ok(mc_outage_timo_reduced(&spec, &split, n_samples, &mut stream)?.into())
        })
    }
}

/// Monte Carlo outage probability over explicit channel matrices.
///
/// `powers` must hold exactly `t` nonnegative per-antenna powers; their sum
/// is the budget. Works for any supported antenna counts, not only `t = 2`.
///
/// # Safety
///
/// `powers` must be null (rejected with a status) or point to `n_powers`
/// readable doubles; `out` must be null (rejected) or valid for a write of
/// its pointee.
#[no_mangle]
pub unsafe extern "C" fn ol_outage_mc_direct(
    t: u32,
    r: u32,
    rate_nats: f64,
    powers: *const f64,
    n_powers: usize,
    n_samples: u64,
    seed: u64,
    stream_id: u64,
    out: *mut OlEstimate,
) -> OlStatus {
    unsafe {
        run_into(out, || {
            if powers.is_null() && n_powers > 0 {
                return Err(Fail::null("the powers array"));
            }
            let powers = if n_powers == 0 {
                &[][..]
            } else {
                std::slice::from_raw_parts(powers, n_powers)
            };
            let total: f64 = powers.iter().sum();
            let spec = ChannelSpec::new(t, r, rate_nats, total)?;
            let mut stream = RandomStream::new(seed, stream_id);
            Ok(mc_outage_direct(&spec, powers, n_samples, &mut stream)?.into())
        })
    }
}

/// Monte Carlo outage probability of a grouped power pattern.
///
/// The pattern puts `q0` on each of `k - 2` grouped antennas and `qa`, `qb`
/// on the two remaining active ones; `k = 2` requires `q0 = 0`. Estimated
/// through the eigenvalue reduction rather than explicit `t x t`
/// determinants.
///
/// # Safety
///
/// `out` must be null (rejected with a status) or valid for a write of its
/// pointee.
#[no_mangle]
pub unsafe extern "C" fn ol_outage_mc_special(
    t: u32,
    r: u32,
    rate_nats: f64,
    q0: f64,
    qa: f64,
    qb: f64,
    k: u32,
    n_samples: u64,
    seed: u64,
    stream_id: u64,
    out: *mut OlEstimate,
) -> OlStatus {
    unsafe {
        run_into(out, || {
            let sq = SpecialQ::new(q0, qa, qb, k)?;
            let spec = ChannelSpec::new(t, r, rate_nats, sq.total())?;
            let mut stream = RandomStream::new(seed, stream_id);
            Ok(mc_outage_special_q(&spec, &sq, n_samples, &mut stream)?.into())
        })
    }
}

/// First derivative of `q -> f(q, P - q)` at `q`, with a hard error bound.
///
/// # Safety
///
/// `session` must be null (rejected with a status) or a live session handle;
/// `out` must be null (rejected) or valid for a write of its pointee.
#[no_mangle]
pub unsafe extern "C" fn ol_transfer_first_derivative(
    session: *const OlSession,
    r: u32,
    rate_nats: f64,
    total_power: f64,
    q: f64,
    out: *mut OlDerivative,
) -> OlStatus {
    unsafe {
        run_into(out, || {
            let quad = session_quad(session)?;
            let spec = ChannelSpec::timo(r, rate_nats, total_power)?;
            let d = total_first_derivative(&spec, q, &quad)?;
            Ok(OlDerivative {
                value: d.value,
                err_bound: d.err_bound,
                evaluations: d.evaluations,
            })
        })
    }
}

/// Second derivative of `q -> f(q, P - q)` at `q`, with a hard error bound.
///
/// # Safety
///
/// `session` must be null (rejected with a status) or a live session handle;
/// `out` must be null (rejected) or valid for a write of its pointee.
#[no_mangle]
pub unsafe extern "C" fn ol_transfer_second_derivative(
    session: *const OlSession,
    r: u32,
    rate_nats: f64,
    total_power: f64,
    q: f64,
    out: *mut OlDerivative,
) -> OlStatus {
    unsafe {
        run_into(out, || {
            let quad = session_quad(session)?;
            let spec = ChannelSpec::timo(r, rate_nats, total_power)?;
            let d = total_second_derivative(&spec, q, &quad)?;
            Ok(OlDerivative {
                value: d.value,
                err_bound: d.err_bound,
                evaluations: d.evaluations,
            })
        })
    }
}

/// Two-sided slope test for a strictly interior optimal split.
///
/// Sign decisions use the band `[-sign_tol, sign_tol]`; values inside it are
/// reported as inconclusive rather than coerced to a verdict.
///
/// # Safety
///
/// `session` must be null (rejected with a status) or a live session handle;
/// `out` must be null (rejected) or valid for a write of its pointee.
#[no_mangle]
pub unsafe extern "C" fn ol_theorem1_check(
    session: *const OlSession,
    r: u32,
    rate_nats: f64,
    total_power: f64,
    sign_tol: f64,
    out: *mut OlTheorem1,
) -> OlStatus {
    unsafe {
        run_into(out, || {
            let quad = session_quad(session)?;
            let spec = ChannelSpec::timo(r, rate_nats, total_power)?;
            let t1 = theorem1_check(&spec, sign_tol, &quad)?;
            Ok(OlTheorem1 {
                d1_at_zero: t1.d1_at_zero,
                d2_at_zero: t1.d2_at_zero,
                d2_at_half: t1.d2_at_half,
                d2_at_half_err: t1.d2_at_half_err,
                tol: t1.tol,
                zero_side: t1.zero_side.into(),
                center_side: t1.center_side.into(),
                counterexample_found: t1.counterexample_found,
                inconclusive: t1.inconclusive,
            })
        })
    }
}

/// Minimizes the outage probability over splits `(q, P - q)`.
///
/// A coarse grid of `grid_points >= 3` samples on `[0, P/2]` locates the
/// best basin; golden-section refinement narrows it. All values come from
/// the quadrature estimator and carry hard bounds.
///
/// # Safety
///
/// `session` must be null (rejected with a status) or a live session handle;
/// `out` must be null (rejected) or valid for a write of its pointee.
#[no_mangle]
pub unsafe extern "C" fn ol_find_min_split(
    session: *const OlSession,
    r: u32,
    rate_nats: f64,
    total_power: f64,
    grid_points: u32,
    out: *mut OlMinSplit,
) -> OlStatus {
    unsafe {
        run_into(out, || {
            let quad = session_quad(session)?;
            let spec = ChannelSpec::timo(r, rate_nats, total_power)?;
            let m = find_min_split(&spec, grid_points, &quad)?;
            Ok(OlMinSplit {
                q_star: m.q_star,
                f_star: m.f_star,
                f_star_err: m.f_star_err,
                f_at_zero: m.f_at_zero,
                f_at_half: m.f_at_half,
                f_at_half_err: m.f_at_half_err,
                evaluations: m.evaluations,
            })
        })
    }
}

/// Paired Monte Carlo test of local optimality of the uniform `k` pattern.
///
/// Spreads `total_power` uniformly over `k` of `t` antennas and compares the
/// pattern against its `eps`-perturbations under common random numbers.
/// Deterministic in `(seed, stream_id)`.
///
/// # Safety
///
/// `out` must be null (rejected with a status) or valid for a write of its
/// pointee.
#[no_mangle]
pub unsafe extern "C" fn ol_theorem2_check(
    t: u32,
    r: u32,
    rate_nats: f64,
    total_power: f64,
    k: u32,
    eps: f64,
    n_samples: u64,
    seed: u64,
    stream_id: u64,
    out: *mut OlTheorem2,
) -> OlStatus {
    unsafe {
        run_into(out, || {
            let spec = ChannelSpec::new(t, r, rate_nats, total_power)?;
            let mut stream = RandomStream::new(seed, stream_id);
            let rep = theorem2_check(&spec, k, eps, n_samples, &mut stream)?;
            let pack = |d: Option<outage_lab::mimo_general::DeltaEstimate>| match d {
                Some(d) => OlDelta {
                    present: true,
                    delta: d.delta,
                    std_err: d.stderr,
                },
                None => OlDelta {
                    present: false,
                    delta: 0.0,
                    std_err: 0.0,
                },
            };
            Ok(OlTheorem2 {
                k: rep.k,
                eps: rep.eps,
                n_samples: rep.n_samples,
                n_eval_errors: rep.n_eval_errors,
                delta_prime: pack(rep.delta_prime),
                delta_double_prime: pack(rep.delta_double_prime),
                verdict: rep.verdict.into(),
            })
        })
    }
}
