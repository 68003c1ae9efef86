//! Operators for general antenna counts and grouped power patterns.
//!
//! This module covers what the two-antenna reduction cannot: power vectors
//! over `t` transmit antennas, the joint eigenvalue density of the channel
//! Gram matrix, a determinant reduction for covariances with one repeated
//! power group plus two free powers, and a paired Monte Carlo test of whether
//! the uniform pattern on `k` active antennas is locally optimal.
//!
//! The perturbation test compares, draw by draw on common channel samples,
//! the conditional outage probability of a pattern against two one-parameter
//! perturbations: moving power from an active antenna to an idle one, and
//! transferring power between two active antennas. Conditioning on everything
//! except the magnitude of the first perturbed column turns each indicator
//! into a smooth probability, which together with a symmetrized transfer pair
//! and two zero-mean control variates pulls the paired standard error far
//! below the quadratic-order signal the test must resolve.

use num_complex::Complex64;
use thiserror::Error;

use crate::herm;
use crate::mcsim::{sample_cn, EstimateMethod, OutageEstimate, RandomStream};
use crate::specfun;
use crate::timo::ChannelSpec;

/// Default perturbation size as a fraction of the per-antenna power.
pub const DEFAULT_EPS_FRACTION: f64 = 0.025;

/// Largest allowed perturbation as a fraction of the per-antenna power.
pub const MAX_EPS_FRACTION: f64 = 0.05;

/// Errors from the general-antenna operators.
#[derive(Debug, Error)]
pub enum MimoError {
    /// Inputs outside an operator's domain.
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    /// A numerical step failed beyond recovery.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// A power allocation across transmit antennas.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerVector {
    entries: Vec<f64>,
}

impl PowerVector {
    /// Validates and builds an allocation; entries must be finite and
    /// nonnegative.
    pub fn new(entries: Vec<f64>) -> Result<Self, MimoError> {
        if entries.is_empty() || entries.len() > 8 {
            return Err(MimoError::InvalidRequest(format!(
                "power vectors cover 1 to 8 antennas, got {}",
                entries.len()
            )));
        }
        if entries.iter().any(|q| !q.is_finite() || *q < 0.0) {
            return Err(MimoError::InvalidRequest(
                "power entries must be finite and nonnegative".into(),
            ));
        }
        Ok(PowerVector { entries })
    }

    /// Entries in antenna order.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Number of antennas covered.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Whether the vector is empty (never true for validated vectors).
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sum of all entries.
    pub fn total(&self) -> f64 {
        self.entries.iter().sum()
    }
}

/// The pattern with `total / k` on the first `k` antennas and zero elsewhere.
pub fn uniform_power_vector(k: u32, t: u32, total: f64) -> Result<PowerVector, MimoError> {
    if k == 0 || k > t || t > 8 {
        return Err(MimoError::InvalidRequest(format!(
            "need 1 <= k <= t <= 8, got k={k}, t={t}"
        )));
    }
    if !total.is_finite() || total <= 0.0 {
        return Err(MimoError::InvalidRequest(format!(
            "total power must be positive and finite, got {total}"
        )));
    }
    let share = total / f64::from(k);
    let mut entries = vec![0.0; t as usize];
    for e in entries.iter_mut().take(k as usize) {
        *e = share;
    }
    Ok(PowerVector { entries })
}

/// Number of leading active antennas if `base` is a uniform pattern.
fn uniform_pattern_order(base: &PowerVector) -> Result<usize, MimoError> {
    let k = base.entries.iter().filter(|q| **q > 0.0).count();
    if k == 0 {
        return Err(MimoError::InvalidRequest(
            "pattern has no active antennas".into(),
        ));
    }
    let share = base.entries[0];
    let uniform = base.entries[..k].iter().all(|q| *q == share)
        && base.entries[k..].iter().all(|q| *q == 0.0);
    if !uniform {
        return Err(MimoError::InvalidRequest(
            "pattern must put one common power on a leading block of antennas".into(),
        ));
    }
    Ok(k)
}

/// Transfer amount from `from` toward `to` that both sides represent exactly.
///
/// Iterates until the amount removed from the donor equals, bit for bit, the
/// amount gained by the recipient, so a perturbed pattern differs from its
/// base only in the two slots involved and their difference is one exact
/// float. Converges immediately for a zero recipient and within a couple of
/// rounds when donor and recipient share a binade (the uniform-pattern case).
fn exact_transfer(from: f64, to: f64, eps: f64) -> (f64, f64, f64) {
    let mut give = eps;
    for _ in 0..64 {
        let kept = from - give;
        let moved_out = from - kept;
        let gained = (to + moved_out) - to;
        if moved_out == give && gained == moved_out {
            return (kept, to + moved_out, moved_out);
        }
        give = if gained == moved_out { moved_out } else { gained };
    }
    let kept = from - give;
    let moved = from - kept;
    (kept, to + moved, moved)
}

fn check_eps(eps: f64, share: f64) -> Result<(), MimoError> {
    if !eps.is_finite() || eps < 0.0 || eps > MAX_EPS_FRACTION * share {
        return Err(MimoError::InvalidRequest(format!(
            "perturbation must lie in [0, {} * share], got {eps} with share {share}",
            MAX_EPS_FRACTION
        )));
    }
    Ok(())
}

/// Moves `eps` of power from the first active antenna to the first idle one.
///
/// `base` must be a uniform pattern with at least one idle antenna. The
/// transfer is exact in floating point: untouched entries are bit-identical
/// to `base` and the donor loses exactly what the recipient gains.
pub fn perturb_prime(base: &PowerVector, eps: f64) -> Result<PowerVector, MimoError> {
    let k = uniform_pattern_order(base)?;
    if k == base.len() {
        return Err(MimoError::InvalidRequest(
            "no idle antenna to receive power".into(),
        ));
    }
    check_eps(eps, base.entries[0])?;
    let (kept, gained, _) = exact_transfer(base.entries[0], 0.0, eps);
    let mut entries = base.entries.clone();
    entries[0] = kept;
    entries[k] = gained;
    Ok(PowerVector { entries })
}

/// Transfers `eps` of power from the first active antenna to the second.
///
/// `base` must be a uniform pattern with at least two active antennas. The
/// transfer is exact in floating point in the same sense as [`perturb_prime`].
pub fn perturb_double_prime(base: &PowerVector, eps: f64) -> Result<PowerVector, MimoError> {
    let k = uniform_pattern_order(base)?;
    if k < 2 {
        return Err(MimoError::InvalidRequest(
            "need two active antennas to transfer between".into(),
        ));
    }
    check_eps(eps, base.entries[0])?;
    let (kept, gained, _) = exact_transfer(base.entries[0], base.entries[1], eps);
    let mut entries = base.entries.clone();
    entries[0] = kept;
    entries[1] = gained;
    Ok(PowerVector { entries })
}

/// ln of the joint eigenvalue density of the channel Gram matrix.
///
/// For an `m x n` matrix (`n >= m`) of i.i.d. complex Gaussian entries with
/// second moment 2 per entry, the unordered eigenvalues of the Gram matrix
/// have joint density `exp` of this value on the positive quadrant; it
/// integrates to `m!` there and to one on the ordered simplex. Configurations
/// of measure zero (a zero eigenvalue with `n > m`, or a repeated eigenvalue)
/// return negative infinity rather than an error.
pub fn lemma1_log_density(lambdas: &[f64], n: u32) -> Result<f64, MimoError> {
    let m = lambdas.len();
    if m == 0 || m > 8 {
        return Err(MimoError::InvalidRequest(format!(
            "need 1 to 8 eigenvalues, got {m}"
        )));
    }
    if (n as usize) < m {
        return Err(MimoError::InvalidRequest(format!(
            "need n >= m, got n={n}, m={m}"
        )));
    }
    if lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(MimoError::InvalidRequest(
            "eigenvalues must be finite and nonnegative".into(),
        ));
    }
    let mf = m as f64;
    let nf = f64::from(n);
    let lg_n = specfun::complex_multivariate_log_gamma(m as u32, nf)
        .map_err(|e| MimoError::InvalidRequest(e.to_string()))?;
    let lg_m = specfun::complex_multivariate_log_gamma(m as u32, mf)
        .map_err(|e| MimoError::InvalidRequest(e.to_string()))?;
    let mut s = -(mf * nf) * std::f64::consts::LN_2 + mf * (mf - 1.0) * std::f64::consts::PI.ln()
        - lg_n
        - lg_m;
    for (i, &li) in lambdas.iter().enumerate() {
        s -= 0.5 * li;
        if n as usize > m {
            if li == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            s += (nf - mf) * li.ln();
        }
        for &lj in &lambdas[..i] {
            if li == lj {
                return Ok(f64::NEG_INFINITY);
            }
            s += 2.0 * (li - lj).abs().ln();
        }
    }
    Ok(s)
}

/// A covariance with one repeated power on a group plus two free powers.
///
/// Antennas `0..k-2` carry `q0` each, antennas `k-2` and `k-1` carry `qa` and
/// `qb`, and any remaining antennas are idle. For `k = 2` there is no group
/// and `q0` must be zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpecialQ {
    q0: f64,
    qa: f64,
    qb: f64,
    k: u32,
}

impl SpecialQ {
    /// Validates and builds the grouped power description.
    pub fn new(q0: f64, qa: f64, qb: f64, k: u32) -> Result<Self, MimoError> {
        if !(2..=8).contains(&k) {
            return Err(MimoError::InvalidRequest(format!(
                "need 2 <= k <= 8 occupied antennas, got {k}"
            )));
        }
        if !qa.is_finite() || !qb.is_finite() || qa <= 0.0 || qb <= 0.0 {
            return Err(MimoError::InvalidRequest(format!(
                "free powers must be positive and finite, got ({qa}, {qb})"
            )));
        }
        if k == 2 {
            if q0 != 0.0 {
                return Err(MimoError::InvalidRequest(
                    "k = 2 leaves no group antennas, so q0 must be zero".into(),
                ));
            }
        } else if !q0.is_finite() || q0 <= 0.0 {
            return Err(MimoError::InvalidRequest(format!(
                "group power must be positive and finite, got {q0}"
            )));
        }
        Ok(SpecialQ { q0, qa, qb, k })
    }

    /// Power on each antenna of the repeated group.
    pub fn q0(&self) -> f64 {
        self.q0
    }

    /// Power on the first free antenna.
    pub fn qa(&self) -> f64 {
        self.qa
    }

    /// Power on the second free antenna.
    pub fn qb(&self) -> f64 {
        self.qb
    }

    /// Number of antennas with positive power.
    pub fn k(&self) -> u32 {
        self.k
    }

    /// Sum of all powers.
    pub fn total(&self) -> f64 {
        f64::from(self.k - 2) * self.q0 + self.qa + self.qb
    }

    /// The allocation as a plain power vector over `t` antennas.
    pub fn to_power_vector(&self, t: u32) -> Result<PowerVector, MimoError> {
        if t < self.k || t > 8 {
            return Err(MimoError::InvalidRequest(format!(
                "need k <= t <= 8, got k={}, t={t}",
                self.k
            )));
        }
        let mut entries = vec![0.0; t as usize];
        for e in entries.iter_mut().take(self.k as usize - 2) {
            *e = self.q0;
        }
        entries[self.k as usize - 2] = self.qa;
        entries[self.k as usize - 1] = self.qb;
        PowerVector::new(entries)
    }
}

/// Channel statistics that determine the outage determinant for a [`SpecialQ`].
///
/// `lambda_prime` holds `1 + q0 * lambda_i` over the eigenvalues of the group
/// columns' Gram matrix; `m_a` and `m_b` are the free columns' energies in the
/// whitened basis, and `xi_ab_sq` the squared magnitude of their whitened
/// inner product, which Cauchy-Schwarz caps at `m_a * m_b`.
#[derive(Clone, Debug)]
pub struct EigenSample {
    /// Shifted eigenvalues `1 + q0 * lambda_i`, all at least one.
    pub lambda_prime: Vec<f64>,
    /// Whitened energy of the first free column.
    pub m_a: f64,
    /// Whitened energy of the second free column.
    pub m_b: f64,
    /// Squared whitened inner product of the free columns.
    pub xi_ab_sq: f64,
}

/// The outage determinant `det(I + H Q H*)` computed from an [`EigenSample`].
pub fn reduced_determinant(sample: &EigenSample, qa: f64, qb: f64) -> Result<f64, MimoError> {
    if !qa.is_finite() || !qb.is_finite() || qa < 0.0 || qb < 0.0 {
        return Err(MimoError::InvalidRequest(format!(
            "free powers must be finite and nonnegative, got ({qa}, {qb})"
        )));
    }
    if sample.lambda_prime.is_empty() || sample.lambda_prime.iter().any(|l| *l < 1.0 - 1e-9) {
        return Err(MimoError::InvalidRequest(
            "shifted eigenvalues must all be at least one".into(),
        ));
    }
    if sample.m_a.is_nan() || sample.m_a < 0.0 || sample.m_b.is_nan() || sample.m_b < 0.0 {
        return Err(MimoError::InvalidRequest(
            "whitened energies must be nonnegative".into(),
        ));
    }
    if sample.xi_ab_sq > sample.m_a * sample.m_b * (1.0 + 1e-9) + 1e-300 {
        return Err(MimoError::InvalidRequest(
            "inner product exceeds the Cauchy-Schwarz bound".into(),
        ));
    }
    let head: f64 = sample.lambda_prime.iter().product();
    let tail = (1.0 + qa * sample.m_a) * (1.0 + qb * sample.m_b) - qa * qb * sample.xi_ab_sq;
    Ok(head * tail)
}

/// Extracts the [`EigenSample`] of an explicit channel under a [`SpecialQ`].
///
/// Group columns are the first `k - 2` of `h`; the free columns follow. For
/// `k = 2` no eigendecomposition is needed and the whitened basis is the
/// standard one.
pub fn eigen_sample_from_channel(
    h: &nalgebra::DMatrix<Complex64>,
    sq: &SpecialQ,
) -> Result<EigenSample, MimoError> {
    let r = h.nrows();
    let k = sq.k as usize;
    if r == 0 || h.ncols() < k {
        return Err(MimoError::InvalidRequest(format!(
            "channel is {r} x {}, need at least {k} columns",
            h.ncols()
        )));
    }
    let ha = h.column(k - 2).into_owned();
    let hb = h.column(k - 1).into_owned();
    let (lambda_prime, ga, gb) = if k > 2 {
        let h1 = h.columns(0, k - 2);
        let gram = h1 * h1.adjoint();
        let eig = gram
            .try_symmetric_eigen(1e-13, 500)
            .ok_or_else(|| MimoError::Numerical("eigendecomposition did not converge".into()))?;
        let lambda_prime: Vec<f64> = eig
            .eigenvalues
            .iter()
            .map(|l| 1.0 + sq.q0 * l.max(0.0))
            .collect();
        let ga = eig.eigenvectors.adjoint() * &ha;
        let gb = eig.eigenvectors.adjoint() * &hb;
        (lambda_prime, ga, gb)
    } else {
        (vec![1.0; r], ha, hb)
    };
    let mut m_a = 0.0;
    let mut m_b = 0.0;
    let mut xi = Complex64::new(0.0, 0.0);
    for i in 0..r {
        m_a += ga[i].norm_sqr() / lambda_prime[i];
        m_b += gb[i].norm_sqr() / lambda_prime[i];
        xi += ga[i].conj() * gb[i] / lambda_prime[i];
    }
    Ok(EigenSample {
        lambda_prime,
        m_a,
        m_b,
        xi_ab_sq: xi.norm_sqr(),
    })
}

/// `det(I + H diag(q) H*)` for an explicit channel, via a full factorization.
///
/// Reference route for validating [`reduced_determinant`]; the determinant of
/// a Hermitian positive definite matrix is real, and the imaginary residue of
/// the complex factorization is discarded.
pub fn direct_determinant(
    h: &nalgebra::DMatrix<Complex64>,
    powers: &[f64],
) -> Result<f64, MimoError> {
    if powers.len() != h.ncols() {
        return Err(MimoError::InvalidRequest(format!(
            "got {} powers for {} columns",
            powers.len(),
            h.ncols()
        )));
    }
    if powers.iter().any(|q| !q.is_finite() || *q < 0.0) {
        return Err(MimoError::InvalidRequest(
            "powers must be finite and nonnegative".into(),
        ));
    }
    let r = h.nrows();
    let mut acc = nalgebra::DMatrix::<Complex64>::identity(r, r);
    for (j, &q) in powers.iter().enumerate() {
        if q == 0.0 {
            continue;
        }
        let col = h.column(j);
        acc += col * col.adjoint() * Complex64::new(q, 0.0);
    }
    Ok(acc.determinant().re)
}

/// Monte Carlo outage estimate for a [`SpecialQ`] through the reduction.
///
/// Per draw: the group columns (row-major, when present), then the two free
/// columns in order. The group Gram matrix is eigendecomposed, the free
/// columns are whitened against it, and the reduced determinant decides the
/// outage event. Draws whose eigendecomposition fails are counted in
/// `n_eval_errors`.
pub fn mc_outage_special_q(
    spec: &ChannelSpec,
    sq: &SpecialQ,
    n_samples: u64,
    stream: &mut RandomStream,
) -> Result<OutageEstimate, MimoError> {
    if sq.k > spec.t() {
        return Err(MimoError::InvalidRequest(format!(
            "pattern occupies {} antennas, channel has {}",
            sq.k,
            spec.t()
        )));
    }
    if !spec.budget_matches(sq.total()) {
        return Err(MimoError::InvalidRequest(format!(
            "pattern total {} does not match the budget {}",
            sq.total(),
            spec.total_power()
        )));
    }
    if n_samples == 0 {
        return Err(MimoError::InvalidRequest("need at least one draw".into()));
    }
    let r = spec.r() as usize;
    let k = sq.k as usize;
    let threshold = spec.det_threshold();
    let mut hits = 0u64;
    let mut eval_errors = 0u64;
    for _ in 0..n_samples {
        let h = crate::mcsim::sample_channel(r, k, stream);
        match eigen_sample_from_channel(&h, sq) {
            Ok(sample) => match reduced_determinant(&sample, sq.qa, sq.qb) {
                Ok(det) => {
                    if det < threshold {
                        hits += 1;
                    }
                }
                Err(_) => eval_errors += 1,
            },
            Err(_) => eval_errors += 1,
        }
    }
    OutageEstimate::from_hits(hits, n_samples, eval_errors, EstimateMethod::McSpecial)
        .map_err(|e| MimoError::Numerical(e.to_string()))
}

/// A paired Monte Carlo difference with its standard error.
#[derive(Clone, Copy, Debug)]
pub struct DeltaEstimate {
    /// Mean outage change caused by the perturbation.
    pub delta: f64,
    /// Standard error of the mean.
    pub stderr: f64,
}

impl DeltaEstimate {
    /// Whether the change is negative beyond three standard errors.
    pub fn significantly_negative(&self) -> bool {
        self.delta < -3.0 * self.stderr
    }

    /// Whether the change is positive beyond three standard errors.
    pub fn significantly_positive(&self) -> bool {
        self.delta > 3.0 * self.stderr
    }
}

/// Verdict of [`theorem2_check`] on local optimality of the uniform pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerturbationVerdict {
    /// Some perturbation lowers the outage probability: optimality rejected.
    Rejected,
    /// Every tested perturbation raises the outage probability.
    NotRejected,
    /// At least one comparison is within noise; no verdict either way.
    Inconclusive,
}

/// Result of the paired perturbation test around a uniform pattern.
#[derive(Clone, Debug)]
pub struct Theorem2Report {
    /// Number of active antennas in the tested pattern.
    pub k: u32,
    /// Perturbation size that was applied.
    pub eps: f64,
    /// Paired draws requested.
    pub n_samples: u64,
    /// Draws discarded because a factorization failed.
    pub n_eval_errors: u64,
    /// Outage change when power moves to an idle antenna (absent for k = t).
    pub delta_prime: Option<DeltaEstimate>,
    /// Outage change for a transfer between active antennas (absent for k = 1).
    pub delta_double_prime: Option<DeltaEstimate>,
    /// Combined verdict at three standard errors.
    pub verdict: PerturbationVerdict,
}

/// Per-configuration data for the conditional outage probability.
struct CondConfig {
    /// Power on the smoothed column (antenna 0); always positive here.
    q0: f64,
    /// `(column, power)` for every other active antenna.
    others: Vec<(usize, f64)>,
}

impl CondConfig {
    fn from_pattern(pattern: &PowerVector) -> Self {
        let entries = pattern.entries();
        CondConfig {
            q0: entries[0],
            others: entries
                .iter()
                .enumerate()
                .skip(1)
                .filter(|(_, q)| **q > 0.0)
                .map(|(j, q)| (j, *q))
                .collect(),
        }
    }
}

/// Conditional outage probability of one configuration on the current draw.
///
/// Conditions on all columns except the first and on the first column's
/// direction `d`; the remaining magnitude is Gamma(r, 1), so the indicator
/// integrates to a regularized gamma value. On return `a` holds the Cholesky
/// factor of `I + sum q_j h_j h_j*` and `rhs` holds its inverse applied to
/// `d`, which the control variates reuse. Returns `None` if the
/// factorization fails.
fn conditional_outage(
    cfg: &CondConfig,
    g: &[Complex64],
    d: &[Complex64],
    r: usize,
    rate: f64,
    a: &mut [Complex64],
    rhs: &mut [Complex64],
) -> Option<f64> {
    for i in 0..r {
        for j in 0..=i {
            let mut acc = if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            for &(col, q) in &cfg.others {
                acc += g[col * r + i] * g[col * r + j].conj() * q;
            }
            a[i * r + j] = acc;
            a[j * r + i] = acc.conj();
        }
    }
    let logdet = herm::cholesky_logdet(a, r)?;
    let y = (rate - logdet).exp_m1() / cfg.q0;
    rhs.copy_from_slice(d);
    herm::cholesky_solve(a, r, rhs);
    let mut c = 0.0;
    for i in 0..r {
        c += (d[i].conj() * rhs[i]).re;
    }
    if c.is_nan() || c <= 0.0 {
        return None;
    }
    if y <= 0.0 {
        return Some(0.0);
    }
    Some(specfun::reg_lower_gamma_u32(r as u32, y / c))
}

/// Paired Monte Carlo test of local optimality of the uniform `k` pattern.
///
/// Draws common channel columns and compares the conditional outage
/// probability of the uniform pattern against its perturbations: power moved
/// to the first idle antenna (when `k < t`) and a symmetrized transfer
/// between the first two active antennas (when `k >= 2`). The idle-direction
/// comparison is further adjusted by two control variates that are exactly
/// zero-mean given the active columns. `eps = 0` reproduces the base pattern
/// bit for bit and both differences are exactly zero.
pub fn theorem2_check(
    spec: &ChannelSpec,
    k: u32,
    eps: f64,
    n_samples: u64,
    stream: &mut RandomStream,
) -> Result<Theorem2Report, MimoError> {
    let t = spec.t();
    if k == 0 || k > t {
        return Err(MimoError::InvalidRequest(format!(
            "need 1 <= k <= t = {t}, got k = {k}"
        )));
    }
    if n_samples < 2 {
        return Err(MimoError::InvalidRequest(
            "need at least two paired draws".into(),
        ));
    }
    let base = uniform_power_vector(k, t, spec.total_power())?;
    let prime = if k < t {
        Some(perturb_prime(&base, eps)?)
    } else {
        check_eps(eps, base.entries[0])?;
        None
    };
    let dprime = if k >= 2 {
        Some(perturb_double_prime(&base, eps)?)
    } else {
        None
    };
    let dprime_swap = dprime.as_ref().map(|p| {
        let mut entries = p.entries.clone();
        entries.swap(0, 1);
        PowerVector { entries }
    });

    let base_cfg = CondConfig::from_pattern(&base);
    let prime_cfg = prime.as_ref().map(CondConfig::from_pattern);
    let dprime_cfg = dprime.as_ref().map(CondConfig::from_pattern);
    let dprime_swap_cfg = dprime_swap.as_ref().map(CondConfig::from_pattern);

    let r = spec.r() as usize;
    let rate = spec.rate_nats();
    // columns idle in every configuration are never drawn
    let cols = if prime.is_some() { k as usize + 1 } else { k as usize };

    let zero = Complex64::new(0.0, 0.0);
    let mut g = vec![zero; r * cols];
    let mut d = vec![zero; r];
    let mut a = vec![zero; r * r];
    let mut rhs = vec![zero; r];
    let mut w_base = vec![zero; r];
    let mut z = vec![zero; r];
    let mut trace_work = vec![zero; r];

    // transfer-pair accumulators (Welford)
    let mut dd_n = 0u64;
    let mut dd_mean = 0.0;
    let mut dd_m2 = 0.0;
    // idle-direction accumulators with two control variates (raw sums)
    let mut pr_n = 0u64;
    let mut s_d = 0.0;
    let mut s_dd = 0.0;
    let mut s_v1 = 0.0;
    let mut s_v2 = 0.0;
    let mut s_v11 = 0.0;
    let mut s_v22 = 0.0;
    let mut s_v12 = 0.0;
    let mut s_dv1 = 0.0;
    let mut s_dv2 = 0.0;

    let mut eval_errors = 0u64;
    'draws: for _ in 0..n_samples {
        for col in 0..cols {
            for row in 0..r {
                g[col * r + row] = sample_cn(stream);
            }
        }
        let norm2: f64 = g[..r].iter().map(|x| x.norm_sqr()).sum();
        if norm2.is_nan() || norm2 <= 0.0 {
            eval_errors += 1;
            continue;
        }
        let inv_norm = 1.0 / norm2.sqrt();
        for i in 0..r {
            d[i] = g[i] * inv_norm;
        }

        let Some(p_base) = conditional_outage(&base_cfg, &g, &d, r, rate, &mut a, &mut rhs)
        else {
            eval_errors += 1;
            continue;
        };

        if let Some(cfg) = &prime_cfg {
            // control variates against the base factorization:
            // V1 = h_l* B h_l - tr B and V2 = |(B d)* h_l|^2 - |B d|^2 with
            // B the base inverse and h_l the idle column; both are zero-mean
            // given the active columns.
            w_base.copy_from_slice(&rhs);
            let tr_b = herm::cholesky_inverse_trace(&a, r, &mut trace_work);
            let l = k as usize;
            z.copy_from_slice(&g[l * r..(l + 1) * r]);
            herm::cholesky_solve(&a, r, &mut z);
            let mut quad = 0.0;
            let mut wh = zero;
            let mut wnorm = 0.0;
            for i in 0..r {
                let hl = g[l * r + i];
                quad += (hl.conj() * z[i]).re;
                wh += w_base[i].conj() * hl;
                wnorm += w_base[i].norm_sqr();
            }
            let v1 = quad - tr_b;
            let v2 = wh.norm_sqr() - wnorm;
            let Some(p_prime) = conditional_outage(cfg, &g, &d, r, rate, &mut a, &mut rhs)
            else {
                eval_errors += 1;
                continue;
            };
            let dp = p_prime - p_base;
            pr_n += 1;
            s_d += dp;
            s_dd += dp * dp;
            s_v1 += v1;
            s_v2 += v2;
            s_v11 += v1 * v1;
            s_v22 += v2 * v2;
            s_v12 += v1 * v2;
            s_dv1 += dp * v1;
            s_dv2 += dp * v2;
        }

        if let (Some(cfg), Some(cfg_swap)) = (&dprime_cfg, &dprime_swap_cfg) {
            let mut pair = [0.0; 2];
            for (slot, c) in [cfg, cfg_swap].into_iter().enumerate() {
                match conditional_outage(c, &g, &d, r, rate, &mut a, &mut rhs) {
                    Some(p) => pair[slot] = p,
                    None => {
                        eval_errors += 1;
                        continue 'draws;
                    }
                }
            }
            let dd = 0.5 * (pair[0] + pair[1]) - p_base;
            dd_n += 1;
            let delta = dd - dd_mean;
            dd_mean += delta / dd_n as f64;
            dd_m2 += delta * (dd - dd_mean);
        }
    }

    let delta_double_prime = if dprime_cfg.is_some() {
        if dd_n < 2 {
            return Err(MimoError::Numerical(
                "too few successful paired draws".into(),
            ));
        }
        let var = dd_m2 / (dd_n - 1) as f64;
        Some(DeltaEstimate {
            delta: dd_mean,
            stderr: (var / dd_n as f64).sqrt(),
        })
    } else {
        None
    };

    let delta_prime = if prime_cfg.is_some() {
        if pr_n < 2 {
            return Err(MimoError::Numerical(
                "too few successful paired draws".into(),
            ));
        }
        let n = pr_n as f64;
        let mean_d = s_d / n;
        let mean_v1 = s_v1 / n;
        let mean_v2 = s_v2 / n;
        let c11 = (s_v11 - n * mean_v1 * mean_v1) / (n - 1.0);
        let c22 = (s_v22 - n * mean_v2 * mean_v2) / (n - 1.0);
        let c12 = (s_v12 - n * mean_v1 * mean_v2) / (n - 1.0);
        let cd1 = (s_dv1 - n * mean_d * mean_v1) / (n - 1.0);
        let cd2 = (s_dv2 - n * mean_d * mean_v2) / (n - 1.0);
        let cdd = (s_dd - n * mean_d * mean_d) / (n - 1.0);
        let det = c11 * c22 - c12 * c12;
        let (b1, b2) = if det.abs() > 1e-300 {
            ((cd1 * c22 - cd2 * c12) / det, (cd2 * c11 - cd1 * c12) / det)
        } else {
            (0.0, 0.0)
        };
        let delta = mean_d - b1 * mean_v1 - b2 * mean_v2;
        let var = (cdd - 2.0 * (b1 * cd1 + b2 * cd2)
            + b1 * b1 * c11
            + 2.0 * b1 * b2 * c12
            + b2 * b2 * c22)
            .max(0.0);
        Some(DeltaEstimate {
            delta,
            stderr: (var / n).sqrt(),
        })
    } else {
        None
    };

    let present: Vec<&DeltaEstimate> = [delta_prime.as_ref(), delta_double_prime.as_ref()]
        .into_iter()
        .flatten()
        .collect();
    let verdict = if present.iter().any(|e| e.significantly_negative()) {
        PerturbationVerdict::Rejected
    } else if !present.is_empty() && present.iter().all(|e| e.significantly_positive()) {
        PerturbationVerdict::NotRejected
    } else {
        PerturbationVerdict::Inconclusive
    };

    Ok(Theorem2Report {
        k,
        eps,
        n_samples,
        n_eval_errors: eval_errors,
        delta_prime,
        delta_double_prime,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcsim::mc_outage_direct;
    use crate::specfun::QuadratureSpec;
    use crate::timo::{outage_timo, PowerSplit};
    use nalgebra::DMatrix;

    fn counterexample_spec() -> ChannelSpec {
        ChannelSpec::timo(2, 3.0_f64.ln(), 0.5).unwrap()
    }

    #[test]
    fn power_vector_validation() {
        assert!(PowerVector::new(vec![]).is_err());
        assert!(PowerVector::new(vec![0.0; 9]).is_err());
        assert!(PowerVector::new(vec![1.0, -0.1]).is_err());
        assert!(PowerVector::new(vec![1.0, f64::NAN]).is_err());
        let v = PowerVector::new(vec![1.0, 0.5, 0.0]).unwrap();
        assert_eq!(v.total(), 1.5);
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn uniform_pattern_shape() {
        let v = uniform_power_vector(2, 4, 3.0).unwrap();
        assert_eq!(v.entries(), &[1.5, 1.5, 0.0, 0.0]);
        assert!(uniform_power_vector(0, 4, 3.0).is_err());
        assert!(uniform_power_vector(5, 4, 3.0).is_err());
        assert!(uniform_power_vector(2, 4, 0.0).is_err());
    }

    #[test]
    fn perturbations_transfer_exactly() {
        let base = uniform_power_vector(3, 5, 1.7).unwrap();
        let share = base.entries()[0];
        let eps = 0.031 * share;
        let p = perturb_prime(&base, eps).unwrap();
        let moved_out = share - p.entries()[0];
        assert_eq!(moved_out, p.entries()[3], "donor loss equals recipient gain");
        assert!((moved_out - eps).abs() <= 1e-16 * share);
        assert_eq!(p.entries()[1], share);
        assert_eq!(p.entries()[2], share);
        assert_eq!(p.entries()[4], 0.0);

        let q = perturb_double_prime(&base, eps).unwrap();
        let out = share - q.entries()[0];
        let gained = q.entries()[1] - share;
        assert_eq!(out, gained);
        assert_eq!(q.entries()[2], share);
        assert_eq!(q.entries()[3], 0.0);
    }

    #[test]
    fn perturbations_validate_inputs() {
        let base = uniform_power_vector(2, 2, 1.0).unwrap();
        assert!(perturb_prime(&base, 0.001).is_err(), "no idle antenna");
        assert!(perturb_double_prime(&base, 1.0).is_err(), "eps too large");
        let single = uniform_power_vector(1, 3, 1.0).unwrap();
        assert!(perturb_double_prime(&single, 0.001).is_err());
        let skewed = PowerVector::new(vec![0.7, 0.3, 0.0]).unwrap();
        assert!(perturb_prime(&skewed, 0.001).is_err(), "not uniform");
    }

    #[test]
    fn perturbation_with_zero_eps_is_identity() {
        let base = uniform_power_vector(2, 3, 0.5).unwrap();
        assert_eq!(perturb_prime(&base, 0.0).unwrap(), base);
        assert_eq!(perturb_double_prime(&base, 0.0).unwrap(), base);
    }

    #[test]
    fn log_density_single_eigenvalue_matches_chi_square() {
        // m = 1: the density is chi-square with 2n degrees of freedom.
        let got = lemma1_log_density(&[2.0], 2).unwrap();
        assert!((got - (-std::f64::consts::LN_2 - 1.0)).abs() < 1e-14);
        for (n, lam) in [(1u32, 0.5f64), (2, 3.0), (5, 7.5)] {
            let nf = f64::from(n);
            let want = (nf - 1.0) * lam.ln() - 0.5 * lam
                - nf * std::f64::consts::LN_2
                - crate::specfun::log_gamma(nf);
            let got = lemma1_log_density(&[lam], n).unwrap();
            assert!((got - want).abs() < 1e-12, "n={n} lam={lam}");
        }
    }

    #[test]
    fn log_density_integrates_to_m_factorial() {
        // m = n = 2 over the positive quadrant; the unordered density
        // integrates to 2! = 2.
        let spec = QuadratureSpec::new(1e-6, 1e-6, 4000).unwrap();
        let integral = crate::specfun::integrate_2d(
            |x, y| lemma1_log_density(&[x, y], 2).unwrap().exp(),
            (0.0, 40.0),
            (0.0, 40.0),
            &spec,
        )
        .unwrap();
        assert!(
            (integral.value - 2.0).abs() < 1e-4,
            "integral = {}",
            integral.value
        );
    }

    #[test]
    fn log_density_edge_configurations() {
        assert!(lemma1_log_density(&[], 2).is_err());
        assert!(lemma1_log_density(&[1.0, 2.0, 3.0], 2).is_err());
        assert!(lemma1_log_density(&[-1.0], 2).is_err());
        assert!(lemma1_log_density(&[f64::NAN], 2).is_err());
        assert_eq!(
            lemma1_log_density(&[1.0, 1.0], 2).unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(lemma1_log_density(&[0.0], 2).unwrap(), f64::NEG_INFINITY);
        assert!(lemma1_log_density(&[0.0], 1).unwrap().is_finite());
    }

    #[test]
    fn special_q_validation() {
        assert!(SpecialQ::new(0.0, 0.2, 0.3, 2).is_ok());
        assert!(SpecialQ::new(0.1, 0.2, 0.3, 2).is_err(), "q0 with k=2");
        assert!(SpecialQ::new(0.0, 0.2, 0.3, 3).is_err(), "missing q0");
        assert!(SpecialQ::new(0.1, 0.0, 0.3, 3).is_err(), "qa zero");
        assert!(SpecialQ::new(0.1, 0.2, 0.3, 1).is_err(), "k too small");
        let sq = SpecialQ::new(0.1, 0.2, 0.3, 4).unwrap();
        assert!((sq.total() - 0.7).abs() < 1e-15);
        assert_eq!(
            sq.to_power_vector(5).unwrap().entries(),
            &[0.1, 0.1, 0.2, 0.3, 0.0]
        );
    }

    #[test]
    fn reduced_determinant_matches_direct_factorization() {
        let cases = [
            (3u32, 2usize, SpecialQ::new(0.2, 0.3, 0.4, 3).unwrap()),
            (4, 3, SpecialQ::new(0.25, 0.35, 0.15, 4).unwrap()),
            (5, 3, SpecialQ::new(0.1, 0.5, 0.2, 5).unwrap()),
            (2, 2, SpecialQ::new(0.0, 0.6, 0.4, 2).unwrap()),
        ];
        let mut stream = RandomStream::new(77, 0);
        for (t, r, sq) in cases {
            let powers = sq.to_power_vector(t).unwrap();
            for _ in 0..20 {
                let h = crate::mcsim::sample_channel(r, t as usize, &mut stream);
                let sample = eigen_sample_from_channel(&h, &sq).unwrap();
                let reduced = reduced_determinant(&sample, sq.qa(), sq.qb()).unwrap();
                let direct = direct_determinant(&h, powers.entries()).unwrap();
                assert!(
                    (reduced - direct).abs() <= 1e-10 * direct.abs(),
                    "t={t} r={r}: reduced {reduced} vs direct {direct}"
                );
            }
        }
    }

    #[test]
    fn reduced_determinant_rejects_inconsistent_samples() {
        let sample = EigenSample {
            lambda_prime: vec![1.0, 1.0],
            m_a: 1.0,
            m_b: 1.0,
            xi_ab_sq: 1.5,
        };
        assert!(reduced_determinant(&sample, 0.5, 0.5).is_err());
        let bad_lambda = EigenSample {
            lambda_prime: vec![0.5],
            m_a: 1.0,
            m_b: 1.0,
            xi_ab_sq: 0.2,
        };
        assert!(reduced_determinant(&bad_lambda, 0.5, 0.5).is_err());
    }

    #[test]
    fn special_q_estimate_matches_quadrature_for_two_antennas() {
        let spec = counterexample_spec();
        let sq = SpecialQ::new(0.0, 0.2, 0.3, 2).unwrap();
        let want = outage_timo(
            &spec,
            &PowerSplit::new(0.2, 0.3).unwrap(),
            &QuadratureSpec::default(),
        )
        .unwrap()
        .p_hat;
        let mut stream = RandomStream::new(123, 0);
        let est = mc_outage_special_q(&spec, &sq, 200_000, &mut stream).unwrap();
        assert_eq!(est.n_eval_errors, 0);
        assert!(
            (est.p_hat - want).abs() < 3.0 * est.stderr,
            "special {} vs quadrature {want}",
            est.p_hat
        );
    }

    #[test]
    fn special_q_estimate_matches_direct_route_with_group() {
        let spec = ChannelSpec::new(4, 2, 1.2, 1.0).unwrap();
        let sq = SpecialQ::new(0.25, 0.3, 0.2, 4).unwrap();
        let mut stream = RandomStream::new(321, 0);
        let special = mc_outage_special_q(&spec, &sq, 120_000, &mut stream).unwrap();
        let powers = sq.to_power_vector(4).unwrap();
        let mut stream = RandomStream::new(321, 1);
        let direct = mc_outage_direct(&spec, powers.entries(), 120_000, &mut stream).unwrap();
        let sigma = special.stderr.hypot(direct.stderr);
        assert!(
            (special.p_hat - direct.p_hat).abs() < 3.0 * sigma,
            "special {} vs direct {}",
            special.p_hat,
            direct.p_hat
        );
    }

    #[test]
    fn theorem2_rejects_uniform_pair_at_counterexample_point() {
        let spec = counterexample_spec();
        let eps = DEFAULT_EPS_FRACTION * 0.25;
        let mut stream = RandomStream::new(20260825, 2);
        let report = theorem2_check(&spec, 2, eps, 400_000, &mut stream).unwrap();
        assert_eq!(report.verdict, PerturbationVerdict::Rejected);
        assert!(report.delta_prime.is_none(), "k = t has no idle antenna");
        let dd = report.delta_double_prime.unwrap();
        assert!(dd.significantly_negative(), "delta'' = {dd:?}");
    }

    #[test]
    fn theorem2_rejects_full_concentration_at_counterexample_point() {
        let spec = counterexample_spec();
        let eps = DEFAULT_EPS_FRACTION * 0.5;
        let mut stream = RandomStream::new(20260825, 3);
        let report = theorem2_check(&spec, 1, eps, 400_000, &mut stream).unwrap();
        assert_eq!(report.verdict, PerturbationVerdict::Rejected);
        assert!(report.delta_double_prime.is_none(), "k = 1 has one antenna");
        let dp = report.delta_prime.unwrap();
        assert!(dp.significantly_negative(), "delta' = {dp:?}");
    }

    #[test]
    fn theorem2_clears_uniform_pair_when_it_is_optimal() {
        let spec = ChannelSpec::timo(2, 4.0, 4.0).unwrap();
        let eps = DEFAULT_EPS_FRACTION * 2.0;
        let mut stream = RandomStream::new(20260825, 4);
        let report = theorem2_check(&spec, 2, eps, 400_000, &mut stream).unwrap();
        assert_eq!(report.verdict, PerturbationVerdict::NotRejected);
        assert!(report.delta_double_prime.unwrap().significantly_positive());
    }

    #[test]
    fn theorem2_pair_delta_matches_quadrature_difference() {
        let spec = counterexample_spec();
        let eps = DEFAULT_EPS_FRACTION * 0.25;
        let quad = QuadratureSpec::default();
        let f = |q1: f64, q2: f64| {
            outage_timo(&spec, &PowerSplit::new(q1, q2).unwrap(), &quad)
                .unwrap()
                .p_hat
        };
        let truth = f(0.25 - eps, 0.25 + eps) - f(0.25, 0.25);
        let mut stream = RandomStream::new(555, 0);
        let report = theorem2_check(&spec, 2, eps, 400_000, &mut stream).unwrap();
        let dd = report.delta_double_prime.unwrap();
        assert!(
            (dd.delta - truth).abs() < 4.0 * dd.stderr,
            "paired {} vs quadrature {truth}",
            dd.delta
        );
    }

    #[test]
    fn theorem2_idle_delta_matches_quadrature_difference() {
        let spec = counterexample_spec();
        let eps = DEFAULT_EPS_FRACTION * 0.5;
        let quad = QuadratureSpec::default();
        let f = |q1: f64, q2: f64| {
            outage_timo(&spec, &PowerSplit::new(q1, q2).unwrap(), &quad)
                .unwrap()
                .p_hat
        };
        let truth = f(0.5 - eps, eps) - f(0.5, 0.0);
        let mut stream = RandomStream::new(556, 0);
        let report = theorem2_check(&spec, 1, eps, 400_000, &mut stream).unwrap();
        let dp = report.delta_prime.unwrap();
        assert!(
            (dp.delta - truth).abs() < 4.0 * dp.stderr,
            "paired {} vs quadrature {truth}",
            dp.delta
        );
    }

    #[test]
    fn theorem2_zero_eps_gives_exactly_zero_deltas() {
        let spec = ChannelSpec::new(3, 2, 1.0, 1.0).unwrap();
        let mut stream = RandomStream::new(777, 0);
        let report = theorem2_check(&spec, 2, 0.0, 5_000, &mut stream).unwrap();
        let dp = report.delta_prime.unwrap();
        let dd = report.delta_double_prime.unwrap();
        assert_eq!(dp.delta, 0.0);
        assert_eq!(dp.stderr, 0.0);
        assert_eq!(dd.delta, 0.0);
        assert_eq!(dd.stderr, 0.0);
        assert_eq!(report.verdict, PerturbationVerdict::Inconclusive);
    }

    #[test]
    fn theorem2_is_deterministic_given_seed() {
        let spec = counterexample_spec();
        let eps = 0.005;
        let run = |seed| {
            let mut stream = RandomStream::new(seed, 9);
            let r = theorem2_check(&spec, 2, eps, 20_000, &mut stream).unwrap();
            r.delta_double_prime.unwrap().delta
        };
        assert_eq!(run(1).to_bits(), run(1).to_bits());
        assert_ne!(run(1).to_bits(), run(2).to_bits());
    }

    #[test]
    fn theorem2_validates_inputs() {
        let spec = counterexample_spec();
        let mut stream = RandomStream::new(0, 0);
        assert!(theorem2_check(&spec, 0, 0.001, 100, &mut stream).is_err());
        assert!(theorem2_check(&spec, 3, 0.001, 100, &mut stream).is_err());
        assert!(theorem2_check(&spec, 2, -0.001, 100, &mut stream).is_err());
        assert!(theorem2_check(&spec, 2, 1.0, 100, &mut stream).is_err());
        assert!(theorem2_check(&spec, 2, 0.001, 1, &mut stream).is_err());
    }

    #[test]
    fn eigen_sample_requires_enough_columns() {
        let sq = SpecialQ::new(0.1, 0.2, 0.3, 4).unwrap();
        let h = DMatrix::<Complex64>::zeros(2, 3);
        assert!(eigen_sample_from_channel(&h, &sq).is_err());
    }

    #[test]
    fn special_q_estimator_validates_inputs() {
        let spec = counterexample_spec();
        let mut stream = RandomStream::new(0, 0);
        let sq = SpecialQ::new(0.0, 0.2, 0.3, 2).unwrap();
        assert!(mc_outage_special_q(&spec, &sq, 0, &mut stream).is_err());
        let wrong_total = SpecialQ::new(0.0, 0.2, 0.2, 2).unwrap();
        assert!(mc_outage_special_q(&spec, &wrong_total, 100, &mut stream).is_err());
        let too_wide = SpecialQ::new(0.1, 0.2, 0.1, 3).unwrap();
        assert!(mc_outage_special_q(&spec, &too_wide, 100, &mut stream).is_err());
    }
}
