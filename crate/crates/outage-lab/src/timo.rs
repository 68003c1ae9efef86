//! Outage probability and power-split derivatives for two transmit antennas.
//!
//! With two transmit antennas, a diagonal input covariance `diag(q1, q2)`, and
//! `r` receive antennas, the outage event `ln det(I + H diag(q) H*) < R`
//! depends on the channel only through three scalars: the two column norms
//! `S ~ Gamma(r, q1)` and `T ~ Gamma(r, q2)` and the squared angle factor
//! `rho` between the columns, whose density is `(r-1) rho^(r-2)` on (0, 1)
//! (for `r = 1` the columns are scalars and `rho` is the constant 0). Outage
//! is `1 + S + T + S T rho < exp(R)`.
//!
//! Everything here evaluates that reduced form and its derivatives with
//! deterministic adaptive quadrature, so every value carries a hard error
//! bound instead of Monte Carlo noise. The derivative operators follow the
//! power-transfer curve `q -> (q, P - q)`: its first and second derivatives
//! at the endpoint `q = 0` have closed forms, the symmetric point `q = P/2`
//! has derivative exactly zero by the split symmetry `f(a, b) = f(b, a)`, and
//! interior points combine three interior partials through the chain rule.
//!
//! [`theorem1_check`] packages the sign conditions under which the uniform
//! split fails to be optimal while full concentration is not optimal either,
//! which is exactly when some strictly interior split beats both canonical
//! candidates. [`find_min_split`] then locates that interior minimizer.

use thiserror::Error;

use crate::mcsim::OutageEstimate;
use crate::specfun::{self, Integral, QuadratureSpec, SpecFunError};

/// Default tolerance for the sign tests in [`theorem1_check`].
pub const DEFAULT_SLOPE_TOL: f64 = 1e-6;

/// Default number of coarse grid points for [`find_min_split`].
pub const DEFAULT_MIN_SPLIT_GRID: u32 = 33;

/// Errors from the two-antenna operators.
#[derive(Debug, Error)]
pub enum TimoError {
    /// The channel description itself is out of range.
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    /// The power split violates a precondition of the requested operator.
    #[error("invalid power split: {0}")]
    InvalidSplit(String),
    /// Adaptive quadrature could not certify the requested tolerance.
    #[error("quadrature failed: {0}")]
    Quadrature(#[from] SpecFunError),
}

/// A non-ergodic Gaussian channel: antenna counts, rate, and power budget.
///
/// `rate_nats` is the target rate in nats; `total_power` is the transmit
/// power budget split across the `t` transmit antennas. Entries of the
/// channel matrix are i.i.d. complex Gaussian with unit second moment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelSpec {
    t: u32,
    r: u32,
    rate_nats: f64,
    total_power: f64,
}

impl ChannelSpec {
    /// Validates and builds a channel description.
    pub fn new(t: u32, r: u32, rate_nats: f64, total_power: f64) -> Result<Self, TimoError> {
        if !(1..=8).contains(&t) || !(1..=8).contains(&r) {
            return Err(TimoError::InvalidChannel(format!(
                "antenna counts must lie in 1..=8, got t={t}, r={r}"
            )));
        }
        if !rate_nats.is_finite() || !(0.0..=600.0).contains(&rate_nats) || rate_nats == 0.0 {
            return Err(TimoError::InvalidChannel(format!(
                "rate must be positive, finite, and at most 600 nats, got {rate_nats}"
            )));
        }
        if !total_power.is_finite() || total_power <= 0.0 {
            return Err(TimoError::InvalidChannel(format!(
                "total power must be positive and finite, got {total_power}"
            )));
        }
        Ok(ChannelSpec {
            t,
            r,
            rate_nats,
            total_power,
        })
    }

    /// Shorthand for the two-transmit-antenna channel.
    pub fn timo(r: u32, rate_nats: f64, total_power: f64) -> Result<Self, TimoError> {
        ChannelSpec::new(2, r, rate_nats, total_power)
    }

    /// Number of transmit antennas.
    pub fn t(&self) -> u32 {
        self.t
    }

    /// Number of receive antennas.
    pub fn r(&self) -> u32 {
        self.r
    }

    /// Target rate in nats.
    pub fn rate_nats(&self) -> f64 {
        self.rate_nats
    }

    /// Transmit power budget.
    pub fn total_power(&self) -> f64 {
        self.total_power
    }

    /// Determinant value below which the channel is in outage, `exp(R)`.
    pub fn det_threshold(&self) -> f64 {
        self.rate_nats.exp()
    }

    /// Whether `total` is an acceptable sum of power entries for this budget.
    pub fn budget_matches(&self, total: f64) -> bool {
        (total - self.total_power).abs() <= 1e-9 * self.total_power.max(1.0)
    }

    /// The reduced outage threshold `u = exp(R) - 1`.
    pub(crate) fn u(&self) -> f64 {
        self.rate_nats.exp_m1()
    }

    fn require_two_transmit(&self) -> Result<(), TimoError> {
        if self.t != 2 {
            return Err(TimoError::InvalidChannel(format!(
                "this operator needs t = 2 transmit antennas, got t = {}",
                self.t
            )));
        }
        Ok(())
    }

    fn require_budget(&self, split: &PowerSplit) -> Result<(), TimoError> {
        if !self.budget_matches(split.q1 + split.q2) {
            return Err(TimoError::InvalidSplit(format!(
                "split ({}, {}) does not sum to the power budget {}",
                split.q1, split.q2, self.total_power
            )));
        }
        Ok(())
    }
}

/// A division of the power budget across the two transmit antennas.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerSplit {
    q1: f64,
    q2: f64,
}

impl PowerSplit {
    /// Validates and builds a split; entries must be finite and nonnegative.
    pub fn new(q1: f64, q2: f64) -> Result<Self, TimoError> {
        if !q1.is_finite() || !q2.is_finite() || q1 < 0.0 || q2 < 0.0 {
            return Err(TimoError::InvalidSplit(format!(
                "powers must be finite and nonnegative, got ({q1}, {q2})"
            )));
        }
        Ok(PowerSplit { q1, q2 })
    }

    /// The split `(q1, P - q1)` of the budget of `spec`.
    pub fn from_q1(spec: &ChannelSpec, q1: f64) -> Result<Self, TimoError> {
        let p = spec.total_power();
        if !q1.is_finite() || !(0.0..=p).contains(&q1) {
            return Err(TimoError::InvalidSplit(format!(
                "first power must lie in [0, {p}], got {q1}"
            )));
        }
        PowerSplit::new(q1, p - q1)
    }

    /// Power on the first antenna.
    pub fn q1(&self) -> f64 {
        self.q1
    }

    /// Power on the second antenna.
    pub fn q2(&self) -> f64 {
        self.q2
    }

    /// The mirrored split `(q2, q1)`.
    pub fn swapped(&self) -> Self {
        PowerSplit {
            q1: self.q2,
            q2: self.q1,
        }
    }
}

/// Gamma(r, scale) density at `s`, evaluated in log space.
fn gamma_density(r: u32, lg: f64, scale: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return if r == 1 { 1.0 / scale } else { 0.0 };
    }
    let rf = f64::from(r);
    ((rf - 1.0) * s.ln() - s / scale - lg - rf * scale.ln()).exp()
}

/// ln of `s^(r-1) w^r exp(-s/q1 - w/q2) / (Gamma(r)^2 q1^(r+p1) q2^(r+p2))`.
///
/// Returns negative infinity where the kernel vanishes (`w = 0`, or `s = 0`
/// with `r > 1`), so `exp` of the result is always the correct limit.
#[allow(clippy::too_many_arguments)]
fn log_kernel(r: u32, lg: f64, s: f64, w: f64, q1: f64, q2: f64, p1: i32, p2: i32) -> f64 {
    if w <= 0.0 || (s <= 0.0 && r > 1) {
        return f64::NEG_INFINITY;
    }
    let rf = f64::from(r);
    let mut ln = rf * w.ln() - s / q1 - w / q2 - 2.0 * lg
        - (rf + f64::from(p1)) * q1.ln()
        - (rf + f64::from(p2)) * q2.ln();
    if r > 1 {
        ln += (rf - 1.0) * s.ln();
    }
    ln
}

/// Initial breakpoints for the inner integral over the first column norm.
///
/// The integrand concentrates near the Gamma scale `r * q1` and, near `s = u`,
/// transitions where `(u - s) / (1 + rho s)` passes through a few multiples of
/// `q2`. On wide intervals plain bisection can miss either region entirely, so
/// both are seeded explicitly. Over the angle factors in [0, 1] the transition
/// layer's outer edge sits anywhere up to tail-cutoff multiples of
/// `q2 * (1 + u)` away from `u`, while Gauss-Kronrod abscissae come no closer
/// than ~0.4% of a segment's width to its ends; a layer stranded deep inside
/// one wide segment is then never sampled and the error estimate never sees
/// it. A geometric ladder keeps every segment near `u` comparable in width to
/// its distance from `u`, so the nodes land inside the layer at every scale.
fn split_knots(u: f64, q1: f64, q2: f64, r: u32) -> Vec<f64> {
    let rf = f64::from(r);
    let mut knots = Vec::with_capacity(20);
    for c in [0.25, 1.0, 4.0, 16.0] {
        knots.push(q1 * rf * c);
    }
    for frac in [1e-4, 1e-2, 0.1, 0.5] {
        knots.push(u * frac);
    }
    // Past this many multiples of q2 the second factor is 1 to within f64
    // noise for every angle factor, so the ladder may stop.
    let edge = (45.0 + rf + 8.0 * rf.sqrt()) * (1.0 + u);
    let mut c = rf;
    loop {
        knots.push(u - q2 * c);
        if c >= edge || q2 * c >= 0.5 * u {
            break;
        }
        c *= 4.0;
    }
    knots
}

/// Averages an inner integral over the angle-factor distribution.
///
/// For `r = 1` the distribution is a point mass at zero; otherwise the weight
/// `(r-1) rho^(r-2)` integrates to one over (0, 1), so the worst inner error
/// bound carries into the combined bound unscaled. Inner integrals run at a
/// tightened tolerance so they cannot dominate the outer error.
fn angle_average<F>(r: u32, quad: &QuadratureSpec, mut inner: F) -> Result<Integral, SpecFunError>
where
    F: FnMut(f64, &QuadratureSpec) -> Result<Integral, SpecFunError>,
{
    if r == 1 {
        return inner(0.0, quad);
    }
    let inner_spec = QuadratureSpec {
        abs_tol: quad.abs_tol * 0.1,
        rel_tol: quad.rel_tol * 0.1,
        max_subdivisions: quad.max_subdivisions,
    };
    let rf = f64::from(r);
    let weight_pow = r as i32 - 2;
    let mut inner_err_max = 0.0_f64;
    let mut inner_evals = 0_u64;
    let mut inner_incomplete = false;
    let mut hard_failure: Option<SpecFunError> = None;
    let outer = specfun::integrate_1d(
        |rho| {
            let weight = (rf - 1.0) * rho.powi(weight_pow);
            match inner(rho, &inner_spec) {
                Ok(i) => {
                    inner_err_max = inner_err_max.max(i.err_bound);
                    inner_evals += i.evaluations;
                    weight * i.value
                }
                Err(SpecFunError::NoConvergence {
                    value, err_bound, ..
                }) => {
                    inner_err_max = inner_err_max.max(err_bound);
                    inner_incomplete = true;
                    weight * value
                }
                Err(e) => {
                    if hard_failure.is_none() {
                        hard_failure = Some(e);
                    }
                    0.0
                }
            }
        },
        0.0,
        1.0,
        quad,
    );
    if let Some(e) = hard_failure {
        return Err(e);
    }
    match outer {
        Ok(i) => {
            let err_bound = i.err_bound + inner_err_max;
            if inner_incomplete {
                Err(SpecFunError::NoConvergence {
                    value: i.value,
                    err_bound,
                    subdivisions: quad.max_subdivisions,
                })
            } else {
                Ok(Integral {
                    value: i.value,
                    err_bound,
                    evaluations: i.evaluations + inner_evals,
                })
            }
        }
        Err(SpecFunError::NoConvergence {
            value,
            err_bound,
            subdivisions,
        }) => Err(SpecFunError::NoConvergence {
            value,
            err_bound: err_bound + inner_err_max,
            subdivisions,
        }),
        Err(e) => Err(e),
    }
}

/// Outage probability of the split `(q1, q2)` with a hard error bound.
///
/// Boundary splits (a zero power) reduce to the regularized gamma function in
/// closed form; interior splits run the two-level quadrature of the reduced
/// form. The estimate's `stderr` field holds the quadrature error bound.
pub fn outage_timo(
    spec: &ChannelSpec,
    split: &PowerSplit,
    quad: &QuadratureSpec,
) -> Result<OutageEstimate, TimoError> {
    spec.require_two_transmit()?;
    spec.require_budget(split)?;
    let u = spec.u();
    let r = spec.r();
    let (q1, q2) = (split.q1, split.q2);
    if q1 == 0.0 || q2 == 0.0 {
        let q = q1.max(q2);
        let value = if q == 0.0 {
            1.0
        } else {
            specfun::reg_lower_gamma_u32(r, u / q)
        };
        return Ok(OutageEstimate::from_quadrature(value, 1e-14, 0));
    }
    let lg = specfun::log_gamma(f64::from(r));
    let knots = split_knots(u, q1, q2, r);
    let integral = angle_average(r, quad, |rho, ispec| {
        specfun::integrate_1d_with_breakpoints(
            &mut |s: f64| {
                let w = ((u - s) / (1.0 + rho * s)).max(0.0);
                gamma_density(r, lg, q1, s) * specfun::reg_lower_gamma_u32(r, w / q2)
            },
            0.0,
            u,
            &knots,
            ispec,
        )
    })?;
    Ok(OutageEstimate::from_quadrature(
        integral.value,
        integral.err_bound,
        integral.evaluations,
    ))
}

/// Which interior partial derivative to integrate.
#[derive(Clone, Copy, Debug)]
enum PartialKind {
    FirstQ2,
    SecondQ2Q2,
    SecondQ1Q2,
}

/// Shared quadrature for the three interior partial derivatives.
fn interior_partial(
    spec: &ChannelSpec,
    split: &PowerSplit,
    quad: &QuadratureSpec,
    kind: PartialKind,
) -> Result<Integral, TimoError> {
    spec.require_two_transmit()?;
    spec.require_budget(split)?;
    let (q1, q2) = (split.q1, split.q2);
    if q1 <= 0.0 || q2 <= 0.0 {
        return Err(TimoError::InvalidSplit(format!(
            "interior partials need strictly positive powers, got ({q1}, {q2}); \
             boundary splits have closed forms in boundary_partials_first and \
             boundary_partials_second"
        )));
    }
    let u = spec.u();
    let r = spec.r();
    let rf = f64::from(r);
    let lg = specfun::log_gamma(rf);
    let knots = split_knots(u, q1, q2, r);
    let integral = angle_average(r, quad, |rho, ispec| {
        specfun::integrate_1d_with_breakpoints(
            &mut |s: f64| {
                let w = ((u - s) / (1.0 + rho * s)).max(0.0);
                match kind {
                    PartialKind::FirstQ2 => -log_kernel(r, lg, s, w, q1, q2, 0, 1).exp(),
                    PartialKind::SecondQ2Q2 => {
                        log_kernel(r, lg, s, w, q1, q2, 0, 2).exp() * (rf + 1.0 - w / q2)
                    }
                    PartialKind::SecondQ1Q2 => {
                        log_kernel(r, lg, s, w, q1, q2, 1, 1).exp() * (rf - s / q1)
                    }
                }
            },
            0.0,
            u,
            &knots,
            ispec,
        )
    })?;
    Ok(integral)
}

/// Partial derivative of the outage probability in the second power.
///
/// Requires a strictly interior split. The value is always nonpositive:
/// raising either power can only help the determinant.
pub fn partial_df_dq2(
    spec: &ChannelSpec,
    split: &PowerSplit,
    quad: &QuadratureSpec,
) -> Result<Integral, TimoError> {
    interior_partial(spec, split, quad, PartialKind::FirstQ2)
}

/// Second partial derivative of the outage probability in the second power.
pub fn partial_d2f_dq2dq2(
    spec: &ChannelSpec,
    split: &PowerSplit,
    quad: &QuadratureSpec,
) -> Result<Integral, TimoError> {
    interior_partial(spec, split, quad, PartialKind::SecondQ2Q2)
}

/// Mixed second partial derivative of the outage probability.
pub fn partial_d2f_dq1dq2(
    spec: &ChannelSpec,
    split: &PowerSplit,
    quad: &QuadratureSpec,
) -> Result<Integral, TimoError> {
    interior_partial(spec, split, quad, PartialKind::SecondQ1Q2)
}

/// First partials in the second power at the two boundary splits, closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryFirstPartials {
    /// d f / d q2 at the split (0, P).
    pub dq2_at_q1_zero: f64,
    /// d f / d q2 at the split (P, 0).
    pub dq2_at_q2_zero: f64,
}

/// Closed forms for the first partials at the boundary splits.
pub fn boundary_partials_first(spec: &ChannelSpec) -> Result<BoundaryFirstPartials, TimoError> {
    spec.require_two_transmit()?;
    let rf = f64::from(spec.r());
    let u = spec.u();
    let p = spec.total_power();
    let lg = specfun::log_gamma(rf);
    let dq2_at_q1_zero = -(rf * u.ln() - u / p - lg - (rf + 1.0) * p.ln()).exp();
    let dq2_at_q2_zero =
        -((rf - 1.0) * u.ln() - u / p - lg - rf * p.ln()).exp() * (rf + (rf - 1.0) * u);
    Ok(BoundaryFirstPartials {
        dq2_at_q1_zero,
        dq2_at_q2_zero,
    })
}

/// Second partials at the two boundary splits, closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySecondPartials {
    /// d2 f / d q2^2 at the split (0, P).
    pub d2q2_at_q1_zero: f64,
    /// d2 f / d q2^2 at the split (P, 0).
    pub d2q2_at_q2_zero: f64,
    /// d2 f / d q1 d q2 at the split (0, P).
    pub mixed_at_q1_zero: f64,
    /// d2 f / d q1 d q2 at the split (P, 0); equals the value at (0, P).
    pub mixed_at_q2_zero: f64,
}

/// Closed forms for the second partials at the boundary splits.
pub fn boundary_partials_second(spec: &ChannelSpec) -> Result<BoundarySecondPartials, TimoError> {
    spec.require_two_transmit()?;
    let rf = f64::from(spec.r());
    let u = spec.u();
    let p = spec.total_power();
    let lg = specfun::log_gamma(rf);
    let base = (rf * u.ln() - u / p - lg).exp();
    let d2q2_at_q1_zero = base / p.powf(rf + 2.0) * (rf + 1.0 - u / p);
    let poly = p * (rf - 1.0) * (1.0 / u + 1.0).powi(2)
        - 1.0 / u
        - 2.0 * (rf - 1.0) / rf
        - u * (rf - 1.0) / (rf + 1.0);
    let d2q2_at_q2_zero = base / p.powf(rf + 1.0) * rf * (rf + 1.0) * poly;
    let mixed = base / p.powf(rf + 2.0) * (rf * p / u - 1.0) * (rf + (rf - 1.0) * u);
    Ok(BoundarySecondPartials {
        d2q2_at_q1_zero,
        d2q2_at_q2_zero,
        mixed_at_q1_zero: mixed,
        mixed_at_q2_zero: mixed,
    })
}

fn closed_form(value: f64, scale: f64) -> Integral {
    Integral {
        value,
        err_bound: scale.abs() * 1e-14,
        evaluations: 0,
    }
}

/// First derivative of `q -> f(q, P - q)` at `q1`.
///
/// Endpoints use the boundary closed forms; the symmetric point returns
/// exactly zero, which the split symmetry forces; interior points evaluate
/// `df/dq1 - df/dq2` through the mirrored first partial.
pub fn total_first_derivative(
    spec: &ChannelSpec,
    q1: f64,
    quad: &QuadratureSpec,
) -> Result<Integral, TimoError> {
    spec.require_two_transmit()?;
    let p = spec.total_power();
    if !q1.is_finite() || !(0.0..=p).contains(&q1) {
        return Err(TimoError::InvalidSplit(format!(
            "transfer position must lie in [0, {p}], got {q1}"
        )));
    }
    if q1 == 0.5 * p {
        return Ok(Integral {
            value: 0.0,
            err_bound: 0.0,
            evaluations: 0,
        });
    }
    if q1 == 0.0 || q1 == p {
        let b = boundary_partials_first(spec)?;
        let v = b.dq2_at_q2_zero - b.dq2_at_q1_zero;
        let v = if q1 == 0.0 { v } else { -v };
        return Ok(closed_form(
            v,
            b.dq2_at_q2_zero.abs() + b.dq2_at_q1_zero.abs(),
        ));
    }
    let split = PowerSplit::new(q1, p - q1)?;
    let mirrored = interior_partial(spec, &split.swapped(), quad, PartialKind::FirstQ2)?;
    let straight = interior_partial(spec, &split, quad, PartialKind::FirstQ2)?;
    Ok(Integral {
        value: mirrored.value - straight.value,
        err_bound: mirrored.err_bound + straight.err_bound,
        evaluations: mirrored.evaluations + straight.evaluations,
    })
}

/// Second derivative of `q -> f(q, P - q)` at `q1`.
///
/// Endpoints use the boundary closed forms; interior points combine the pure
/// and mixed second partials through the chain rule,
/// `f11 + f22 - 2 f12` with `f11(q1, q2) = f22(q2, q1)`.
pub fn total_second_derivative(
    spec: &ChannelSpec,
    q1: f64,
    quad: &QuadratureSpec,
) -> Result<Integral, TimoError> {
    spec.require_two_transmit()?;
    let p = spec.total_power();
    if !q1.is_finite() || !(0.0..=p).contains(&q1) {
        return Err(TimoError::InvalidSplit(format!(
            "transfer position must lie in [0, {p}], got {q1}"
        )));
    }
    if q1 == 0.0 || q1 == p {
        let b = boundary_partials_second(spec)?;
        let v = b.d2q2_at_q2_zero + b.d2q2_at_q1_zero - 2.0 * b.mixed_at_q1_zero;
        return Ok(closed_form(
            v,
            b.d2q2_at_q2_zero.abs() + b.d2q2_at_q1_zero.abs() + 2.0 * b.mixed_at_q1_zero.abs(),
        ));
    }
    let split = PowerSplit::new(q1, p - q1)?;
    let straight = interior_partial(spec, &split, quad, PartialKind::SecondQ2Q2)?;
    let mirrored = if q1 == 0.5 * p {
        straight
    } else {
        interior_partial(spec, &split.swapped(), quad, PartialKind::SecondQ2Q2)?
    };
    let mixed = interior_partial(spec, &split, quad, PartialKind::SecondQ1Q2)?;
    Ok(Integral {
        value: straight.value + mirrored.value - 2.0 * mixed.value,
        err_bound: straight.err_bound + mirrored.err_bound + 2.0 * mixed.err_bound,
        evaluations: straight.evaluations + mirrored.evaluations + mixed.evaluations,
    })
}

/// Everything the derivative operators report along the transfer curve.
#[derive(Clone, Copy, Debug)]
pub struct DerivativeReport {
    /// First derivative at `q = 0` (closed form).
    pub d1_at_zero: f64,
    /// First derivative at `q = P/2`; exactly zero by symmetry.
    pub d1_at_half: f64,
    /// Second derivative at `q = 0` (closed form).
    pub d2_at_zero: f64,
    /// Second derivative at `q = P/2` (quadrature).
    pub d2_at_half: f64,
    /// Hard error bound on `d2_at_half`.
    pub d2_at_half_err: f64,
    /// Boundary first partials backing `d1_at_zero`.
    pub first: BoundaryFirstPartials,
    /// Boundary second partials backing `d2_at_zero`.
    pub second: BoundarySecondPartials,
}

/// Evaluates the full derivative report for a two-antenna channel.
pub fn derivative_report(
    spec: &ChannelSpec,
    quad: &QuadratureSpec,
) -> Result<DerivativeReport, TimoError> {
    let first = boundary_partials_first(spec)?;
    let second = boundary_partials_second(spec)?;
    let d2_half = total_second_derivative(spec, 0.5 * spec.total_power(), quad)?;
    Ok(DerivativeReport {
        d1_at_zero: first.dq2_at_q2_zero - first.dq2_at_q1_zero,
        d1_at_half: 0.0,
        d2_at_zero: second.d2q2_at_q2_zero + second.d2q2_at_q1_zero
            - 2.0 * second.mixed_at_q1_zero,
        d2_at_half: d2_half.value,
        d2_at_half_err: d2_half.err_bound,
        first,
        second,
    })
}

/// Outcome of one sign condition in [`theorem1_check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConditionStatus {
    /// The condition holds beyond the tolerance.
    Met,
    /// The condition fails beyond the tolerance.
    Failed,
    /// The value sits inside the tolerance band; no verdict either way.
    Inconclusive,
}

/// Result of the two-sided slope test for a strictly interior minimizer.
#[derive(Clone, Copy, Debug)]
pub struct Theorem1Report {
    /// First derivative of the transfer curve at `q = 0`.
    pub d1_at_zero: f64,
    /// Second derivative at `q = 0`.
    pub d2_at_zero: f64,
    /// Second derivative at the uniform split.
    pub d2_at_half: f64,
    /// Hard error bound on `d2_at_half`.
    pub d2_at_half_err: f64,
    /// Tolerance band used for all sign tests.
    pub tol: f64,
    /// Whether the transfer curve initially descends from full concentration.
    pub zero_side: ConditionStatus,
    /// Whether the uniform split is a local maximum of the transfer curve.
    pub center_side: ConditionStatus,
    /// Both sides met: some strictly interior split beats both candidates.
    pub counterexample_found: bool,
    /// At least one side could not be decided at this tolerance.
    pub inconclusive: bool,
}

/// Tests whether an interior split strictly beats both canonical candidates.
///
/// The zero side asks for descent away from full concentration: either the
/// first derivative at `q = 0` is negative, or it vanishes within `tol` and
/// the second derivative is negative. The center side asks the uniform split
/// to be a local maximum along the transfer curve. Values inside the `tol`
/// band are reported as inconclusive, never coerced to a verdict.
pub fn theorem1_check(
    spec: &ChannelSpec,
    tol: f64,
    quad: &QuadratureSpec,
) -> Result<Theorem1Report, TimoError> {
    spec.require_two_transmit()?;
    if !tol.is_finite() || tol <= 0.0 {
        return Err(TimoError::InvalidChannel(format!(
            "sign tolerance must be positive and finite, got {tol}"
        )));
    }
    let first = boundary_partials_first(spec)?;
    let second = boundary_partials_second(spec)?;
    let d1_at_zero = first.dq2_at_q2_zero - first.dq2_at_q1_zero;
    let d2_at_zero =
        second.d2q2_at_q2_zero + second.d2q2_at_q1_zero - 2.0 * second.mixed_at_q1_zero;
    let zero_side = if d1_at_zero <= -tol {
        ConditionStatus::Met
    } else if d1_at_zero >= tol {
        ConditionStatus::Failed
    } else if d2_at_zero <= -tol {
        ConditionStatus::Met
    } else if d2_at_zero >= tol {
        ConditionStatus::Failed
    } else {
        ConditionStatus::Inconclusive
    };
    let center = total_second_derivative(spec, 0.5 * spec.total_power(), quad)?;
    let center_side = if center.value + center.err_bound <= -tol {
        ConditionStatus::Met
    } else if center.value - center.err_bound >= tol {
        ConditionStatus::Failed
    } else {
        ConditionStatus::Inconclusive
    };
    let counterexample_found =
        zero_side == ConditionStatus::Met && center_side == ConditionStatus::Met;
    let inconclusive = !counterexample_found
        && zero_side != ConditionStatus::Failed
        && center_side != ConditionStatus::Failed;
    Ok(Theorem1Report {
        d1_at_zero,
        d2_at_zero,
        d2_at_half: center.value,
        d2_at_half_err: center.err_bound,
        tol,
        zero_side,
        center_side,
        counterexample_found,
        inconclusive,
    })
}

/// Location and value of the best split found by [`find_min_split`].
#[derive(Clone, Copy, Debug)]
pub struct MinSplitReport {
    /// Minimizing first power in `[0, P/2]`.
    pub q_star: f64,
    /// Outage probability at `q_star`.
    pub f_star: f64,
    /// Hard error bound on `f_star`.
    pub f_star_err: f64,
    /// Outage probability at full concentration, `(0, P)`.
    pub f_at_zero: f64,
    /// Outage probability at the uniform split.
    pub f_at_half: f64,
    /// Hard error bound on `f_at_half`.
    pub f_at_half_err: f64,
    /// Total integrand evaluations spent in the search.
    pub evaluations: u64,
}

/// Minimizes the outage probability over splits `(q, P - q)`, `q` in `[0, P/2]`.
///
/// By symmetry the half-interval covers all splits. A uniform coarse grid
/// locates the best basin; golden-section refinement narrows it until the
/// bracket is shorter than `P * 1e-4`. All candidate values come from the
/// quadrature estimator, so `f_star` carries a hard bound.
pub fn find_min_split(
    spec: &ChannelSpec,
    grid_points: u32,
    quad: &QuadratureSpec,
) -> Result<MinSplitReport, TimoError> {
    spec.require_two_transmit()?;
    if grid_points < 3 {
        return Err(TimoError::InvalidChannel(format!(
            "the coarse grid needs at least 3 points, got {grid_points}"
        )));
    }
    let p = spec.total_power();
    let half = 0.5 * p;
    let mut evaluations = 0_u64;
    let eval = |q: f64, evals: &mut u64| -> Result<(f64, f64), TimoError> {
        let split = PowerSplit::new(q, (p - q).max(0.0))?;
        let est = outage_timo(spec, &split, quad)?;
        *evals += est.n_samples;
        Ok((est.p_hat, est.stderr))
    };

    let n = grid_points as usize;
    let mut grid_q = Vec::with_capacity(n);
    let mut grid_f = Vec::with_capacity(n);
    for i in 0..n {
        let q = half * i as f64 / (n - 1) as f64;
        grid_q.push(q);
        grid_f.push(eval(q, &mut evaluations)?);
    }
    let f_at_zero = grid_f[0].0;
    let (f_at_half, f_at_half_err) = grid_f[n - 1];

    let mut best_i = 0;
    for i in 1..n {
        if grid_f[i].0 < grid_f[best_i].0 {
            best_i = i;
        }
    }
    let (mut best_q, (mut best_f, mut best_err)) = (grid_q[best_i], grid_f[best_i]);

    // Golden-section refinement inside the bracketing neighbors.
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let mut lo = grid_q[best_i.saturating_sub(1)];
    let mut hi = grid_q[(best_i + 1).min(n - 1)];
    let width_target = p * 1e-4;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = eval(x1, &mut evaluations)?;
    let mut f2 = eval(x2, &mut evaluations)?;
    loop {
        for (x, f) in [(x1, f1), (x2, f2)] {
            if f.0 < best_f {
                best_q = x;
                best_f = f.0;
                best_err = f.1;
            }
        }
        if hi - lo <= width_target {
            break;
        }
        if f1.0 <= f2.0 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = eval(x1, &mut evaluations)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = eval(x2, &mut evaluations)?;
        }
    }

    Ok(MinSplitReport {
        q_star: best_q,
        f_star: best_f,
        f_star_err: best_err,
        f_at_zero,
        f_at_half,
        f_at_half_err,
        evaluations,
    })
}
