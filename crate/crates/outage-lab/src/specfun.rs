//! Special functions and adaptive quadrature used by the outage computations.
//!
//! Provides:
//! - `log_gamma`: natural log of the gamma function (Lanczos approximation)
//! - `reg_lower_gamma`: the regularized lower incomplete gamma function P(a, x)
//! - `complex_multivariate_log_gamma`: ln of the complex multivariate gamma
//! - `integrate_1d` / `integrate_2d`: adaptive Gauss-Kronrod quadrature with an
//!   explicit error bound and a hard subdivision cap
//!
//! Integrands are expected to evaluate their exponential factors in log space;
//! the quadrature itself never takes logs of the integrand.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecFunError {
    /// Argument outside the documented domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The subdivision cap was reached before the requested tolerance.
    /// Carries the best value obtained so it is never silently discarded.
    #[error(
        "quadrature did not converge: value {value:.12e}, error bound {err_bound:.3e} \
         after {subdivisions} subdivisions"
    )]
    NoConvergence {
        value: f64,
        err_bound: f64,
        subdivisions: u32,
    },
}

// ---- gamma family ----

const LN_PI: f64 = 1.144_729_885_849_400_2;
const LN_2_SQRT_E_OVER_PI: f64 = 0.620_782_237_635_245_2;

/// Lanczos coefficients, Pugh's 11-term fit with r = 10.900511.
const GAMMA_DK: [f64; 11] = [
    2.485_740_891_387_535_5e-5,
    1.051_423_785_817_219_7,
    -3.456_870_972_220_162_5,
    4.512_277_094_668_948,
    -2.982_852_253_235_766_4,
    1.056_397_115_771_267,
    -1.954_287_731_916_458_7e-1,
    1.709_705_434_044_412e-2,
    -5.719_261_174_043_057e-4,
    4.633_994_733_599_057e-6,
    -2.719_949_084_886_077_2e-9,
];
const GAMMA_R: f64 = 10.900_511;

/// Natural log of the gamma function for x > 0.
///
/// Relative error is below 1e-13 on [1, 200].
pub fn log_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let s = GAMMA_DK
            .iter()
            .enumerate()
            .skip(1)
            .fold(GAMMA_DK[0], |s, (i, d)| s + d / (i as f64 - x));
        LN_PI
            - (std::f64::consts::PI * x).sin().ln()
            - s.ln()
            - LN_2_SQRT_E_OVER_PI
            - (0.5 - x) * ((0.5 - x + GAMMA_R) / std::f64::consts::E).ln()
    } else {
        let s = GAMMA_DK
            .iter()
            .enumerate()
            .skip(1)
            .fold(GAMMA_DK[0], |s, (i, d)| s + d / (x + i as f64 - 1.0));
        s.ln() + LN_2_SQRT_E_OVER_PI + (x - 0.5) * ((x - 0.5 + GAMMA_R) / std::f64::consts::E).ln()
    }
}

/// Regularized lower incomplete gamma function P(a, x) for a > 0, x >= 0.
///
/// Series expansion for x < a + 1, Lentz continued fraction for the upper
/// tail otherwise. Absolute error is below 1e-12 over the tested range.
pub fn reg_lower_gamma(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && a.is_finite(), "shape parameter must be positive");
    assert!(x >= 0.0, "argument must be nonnegative");
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        lower_series(a, x)
    } else {
        1.0 - upper_continued_fraction(a, x)
    }
}

fn lower_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut n = 1.0;
    while term.abs() > sum.abs() * 1e-17 && n < 1000.0 {
        term *= x / (a + n);
        sum += term;
        n += 1.0;
    }
    let ln = a * x.ln() - x - log_gamma(a);
    (sum.ln() + ln).exp()
}

fn upper_continued_fraction(a: f64, x: f64) -> f64 {
    // Modified Lentz on the standard continued fraction for Q(a, x).
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..1000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    let ln = a * x.ln() - x - log_gamma(a);
    (h.ln() + ln).exp()
}

/// Regularized lower incomplete gamma for integer shape, tuned for hot loops.
///
/// Matches `reg_lower_gamma(r as f64, x)` but avoids the general series and
/// continued fraction: away from zero the finite sum
/// `1 - exp(-x) * sum_{k<r} x^k / k!` is exact for integer shapes, and below
/// `x = 1` (where that subtraction would lose digits) a short rising series
/// takes over.
pub(crate) fn reg_lower_gamma_u32(r: u32, x: f64) -> f64 {
    debug_assert!(r >= 1, "shape must be a positive integer");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 705.0 {
        // exp(-x) underflow territory; the complement is below 1e-290.
        return 1.0;
    }
    if x < 1.0 {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut j = 1u32;
        while term > sum * 1e-17 && j < 200 {
            term *= x / f64::from(r + j);
            sum += term;
            j += 1;
        }
        let ln_lead = f64::from(r) * x.ln() - x - log_gamma(f64::from(r) + 1.0);
        return (ln_lead.exp() * sum).min(1.0);
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..r {
        term *= x / f64::from(k);
        sum += term;
    }
    (1.0 - (-x).exp() * sum).clamp(0.0, 1.0)
}

/// ln of the complex multivariate gamma function,
/// ln Gamma_m(n) = m(m-1)/2 * ln(pi) + sum_{i=1..m} ln Gamma(n - i + 1).
///
/// Requires n > m - 1 so every plain gamma argument stays positive.
pub fn complex_multivariate_log_gamma(m: u32, n: f64) -> Result<f64, SpecFunError> {
    if m == 0 {
        return Err(SpecFunError::Domain("order m must be positive".into()));
    }
    if n.is_nan() || n <= m as f64 - 1.0 {
        return Err(SpecFunError::Domain(format!(
            "complex multivariate gamma needs n > m - 1, got m={m}, n={n}"
        )));
    }
    let mut s = m as f64 * (m as f64 - 1.0) / 2.0 * LN_PI;
    for i in 1..=m {
        s += log_gamma(n - i as f64 + 1.0);
    }
    Ok(s)
}

// ---- adaptive quadrature ----

/// Tolerances and subdivision cap for adaptive quadrature.
///
/// Convergence is declared when the error bound drops below
/// `max(abs_tol, rel_tol * |value|)`; at least one tolerance must be positive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 2000,
        }
    }
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: u32) -> Result<Self, SpecFunError> {
        let invalid = |t: f64| t.is_nan() || t < 0.0;
        if invalid(abs_tol) || invalid(rel_tol) || (abs_tol == 0.0 && rel_tol == 0.0) {
            return Err(SpecFunError::Domain(
                "at least one quadrature tolerance must be positive".into(),
            ));
        }
        if max_subdivisions == 0 {
            return Err(SpecFunError::Domain(
                "max_subdivisions must be at least 1".into(),
            ));
        }
        Ok(QuadratureSpec {
            abs_tol,
            rel_tol,
            max_subdivisions,
        })
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// Value of an integral together with its error bound and evaluation count.
#[derive(Clone, Copy, Debug)]
pub struct Integral {
    pub value: f64,
    pub err_bound: f64,
    pub evaluations: u64,
}

/// 15-point Kronrod abscissae on [-1, 1], positive half.
///
/// Node and weight digits follow the published tables; the extra digits
/// beyond f64 round to the same values.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_33,
    0.949_107_912_342_758_524_526_189_684_047_85,
    0.864_864_423_359_769_072_789_712_788_640_93,
    0.741_531_185_599_394_439_863_864_773_280_79,
    0.586_087_235_467_691_130_294_144_838_258_73,
    0.405_845_151_377_397_166_906_606_412_076_96,
    0.207_784_955_007_898_467_600_689_403_773_24,
    0.0,
];
/// 7-point Gauss weights embedded in the Kronrod rule.
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_08,
    0.279_705_391_489_276_667_901_467_771_423_78,
    0.381_830_050_505_118_944_950_369_775_488_98,
    0.417_959_183_673_469_387_755_102_040_816_33,
];
/// 15-point Kronrod weights.
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_97,
    0.063_092_092_629_978_553_290_700_663_189_2,
    0.104_790_010_322_250_183_839_876_322_541_52,
    0.140_653_259_715_525_918_745_189_590_510_24,
    0.169_004_726_639_267_902_826_583_426_598_55,
    0.190_350_578_064_785_409_913_256_402_421_01,
    0.204_432_940_075_298_892_414_161_999_234_65,
    0.209_482_141_084_727_828_012_999_174_891_71,
];

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

/// One Gauss-7 / Kronrod-15 pass over [a, b]: (value, error bound).
fn qk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);

    let mut fv1 = [0.0_f64; 7];
    let mut fv2 = [0.0_f64; 7];
    let mut res_gauss = 0.0;
    let mut res_kronrod = f_center * WGK[7];
    let mut res_abs = res_kronrod.abs();

    for (j, &wg) in WG.iter().enumerate().take(3) {
        let jtw = 2 * j + 1;
        let x = half * XGK[jtw];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        res_gauss += wg * (f1 + f2);
        res_kronrod += WGK[jtw] * (f1 + f2);
        res_abs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    res_gauss += WG[3] * f_center;
    for j in 0..4 {
        let jtw = 2 * j;
        let x = half * XGK[jtw];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        res_kronrod += WGK[jtw] * (f1 + f2);
        res_abs += WGK[jtw] * (f1.abs() + f2.abs());
    }

    let mean = res_kronrod * 0.5;
    let mut res_asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }

    let err = (res_kronrod - res_gauss) * half;
    (
        res_kronrod * half,
        rescale_error(err, res_abs * half.abs(), res_asc * half.abs()),
    )
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

/// Adaptive quadrature of `f` over [lo, hi].
///
/// Bisects the segment with the largest error estimate until the summed bound
/// meets the tolerance. Returns `NoConvergence` (with the best value attached)
/// if `max_subdivisions` is exhausted first.
pub fn integrate_1d<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    spec: &QuadratureSpec,
) -> Result<Integral, SpecFunError> {
    integrate_1d_with_breakpoints(&mut f, lo, hi, &[], spec)
}

/// Same contract as `integrate_1d`, with caller-supplied initial breakpoints.
///
/// Breakpoints outside (lo, hi) are ignored. Used by integrands whose mass is
/// concentrated in a known, small part of a wide interval, which plain
/// bisection from one segment can miss entirely.
pub(crate) fn integrate_1d_with_breakpoints<F: FnMut(f64) -> f64>(
    f: &mut F,
    lo: f64,
    hi: f64,
    breakpoints: &[f64],
    spec: &QuadratureSpec,
) -> Result<Integral, SpecFunError> {
    if !lo.is_finite() || !hi.is_finite() {
        return Err(SpecFunError::Domain("integration limits must be finite".into()));
    }
    if lo == hi {
        return Ok(Integral {
            value: 0.0,
            err_bound: 0.0,
            evaluations: 0,
        });
    }
    if lo > hi {
        return Err(SpecFunError::Domain(
            "lower integration limit exceeds upper limit".into(),
        ));
    }

    let mut knots: Vec<f64> = Vec::with_capacity(breakpoints.len() + 2);
    knots.push(lo);
    for &x in breakpoints {
        if x > lo && x < hi {
            knots.push(x);
        }
    }
    knots.push(hi);
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup();

    let mut evals: u64 = 0;
    let mut segments: Vec<Segment> = Vec::with_capacity(knots.len() + 64);
    for w in knots.windows(2) {
        let (v, e) = qk15(f, w[0], w[1]);
        evals += 15;
        segments.push(Segment {
            a: w[0],
            b: w[1],
            value: v,
            err: e,
        });
    }

    let mut subdivisions = segments.len() as u32 - 1;
    loop {
        let total: f64 = segments.iter().map(|s| s.value).sum();
        let err: f64 = segments.iter().map(|s| s.err).sum();
        if err <= spec.target(total) {
            return Ok(Integral {
                value: total,
                err_bound: err,
                evaluations: evals,
            });
        }
        if subdivisions >= spec.max_subdivisions {
            return Err(SpecFunError::NoConvergence {
                value: total,
                err_bound: err,
                subdivisions,
            });
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.err.partial_cmp(&b.1.err).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let Segment { a, b, .. } = segments[worst];
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            // interval no longer splittable in f64; accept the current bound
            let total: f64 = segments.iter().map(|s| s.value).sum();
            let err: f64 = segments.iter().map(|s| s.err).sum();
            return Ok(Integral {
                value: total,
                err_bound: err,
                evaluations: evals,
            });
        }
        let (v1, e1) = qk15(f, a, mid);
        let (v2, e2) = qk15(f, mid, b);
        evals += 30;
        segments[worst] = Segment {
            a,
            b: mid,
            value: v1,
            err: e1,
        };
        segments.push(Segment {
            a: mid,
            b,
            value: v2,
            err: e2,
        });
        subdivisions += 1;
    }
}

/// Iterated adaptive quadrature of `f(x, y)` over a rectangle.
///
/// The outer x-integral applies `spec` directly; each inner y-integral runs
/// at a tolerance tightened by the outer width so inner errors cannot
/// dominate. The reported bound adds the worst inner bound (scaled by the
/// x-width) to the outer bound.
pub fn integrate_2d<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    x_range: (f64, f64),
    y_range: (f64, f64),
    spec: &QuadratureSpec,
) -> Result<Integral, SpecFunError> {
    let (x_lo, x_hi) = x_range;
    let (y_lo, y_hi) = y_range;
    let width = (x_hi - x_lo).abs().max(1.0);
    let inner_spec = QuadratureSpec {
        abs_tol: if spec.abs_tol > 0.0 {
            0.1 * spec.abs_tol / width
        } else {
            0.0
        },
        rel_tol: 0.1 * spec.rel_tol,
        max_subdivisions: spec.max_subdivisions,
    };

    let mut inner_err_max: f64 = 0.0;
    let mut inner_evals: u64 = 0;
    let mut inner_failure: Option<SpecFunError> = None;
    let outer = integrate_1d(
        |x| {
            match integrate_1d(|y| f(x, y), y_lo, y_hi, &inner_spec) {
                Ok(inner) => {
                    inner_err_max = inner_err_max.max(inner.err_bound);
                    inner_evals += inner.evaluations;
                    inner.value
                }
                Err(e) => {
                    if let SpecFunError::NoConvergence {
                        value, err_bound, ..
                    } = e
                    {
                        inner_err_max = inner_err_max.max(err_bound);
                        if inner_failure.is_none() {
                            inner_failure = Some(e);
                        }
                        value
                    } else {
                        if inner_failure.is_none() {
                            inner_failure = Some(e);
                        }
                        0.0
                    }
                }
            }
        },
        x_lo,
        x_hi,
        spec,
    )?;
    if let Some(e) = inner_failure {
        return Err(e);
    }
    Ok(Integral {
        value: outer.value,
        err_bound: outer.err_bound + inner_err_max * (x_hi - x_lo).abs(),
        evaluations: outer.evaluations + inner_evals,
    })
}
