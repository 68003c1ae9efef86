//! Monte Carlo estimators for outage probabilities.
//!
//! All sampling flows through [`RandomStream`], a counter-based generator with
//! an explicit `(seed, stream_id)` identity, so every estimate is reproducible
//! from the numbers it reports. Two estimators cover the same quantity along
//! independent routes: [`mc_outage_direct`] draws the full channel matrix and
//! tests the log-determinant event, while [`mc_outage_timo_reduced`] samples
//! the three-variable reduction available for two transmit antennas. Agreement
//! between the two is a standing cross-check of the reduction; neither is ever
//! used to silently replace the other.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use thiserror::Error;

use crate::herm;
use crate::timo::{ChannelSpec, PowerSplit};

/// Identifier of the generator family behind [`RandomStream`].
pub const RNG_ALGORITHM: &str = "chacha12";

/// Errors from Monte Carlo estimators.
#[derive(Debug, Error)]
pub enum McError {
    /// Inputs outside an estimator's domain.
    #[error("invalid Monte Carlo request: {0}")]
    InvalidRequest(String),
    /// Every draw failed numerically; no estimate can be formed.
    #[error("all {0} draws failed numerically")]
    AllDrawsFailed(u64),
}

/// How an [`OutageEstimate`] was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimateMethod {
    /// Deterministic adaptive quadrature; the spread field is a hard bound.
    Quadrature,
    /// Monte Carlo on the full channel matrix.
    McDirect,
    /// Monte Carlo on the two-antenna reduced form.
    McReduced,
    /// Monte Carlo on the eigenvalue-conditioned form for grouped powers.
    McSpecial,
}

impl EstimateMethod {
    /// Stable lowercase token used in CSV output.
    pub fn token(self) -> &'static str {
        match self {
            EstimateMethod::Quadrature => "quadrature",
            EstimateMethod::McDirect => "mc_direct",
            EstimateMethod::McReduced => "mc_reduced",
            EstimateMethod::McSpecial => "mc_special",
        }
    }
}

/// An outage probability estimate together with its uncertainty.
#[derive(Clone, Copy, Debug)]
pub struct OutageEstimate {
    /// Estimated outage probability in [0, 1].
    pub p_hat: f64,
    /// One-sigma Wald standard error (Monte Carlo) or hard bound (quadrature).
    pub stderr: f64,
    /// Number of draws (Monte Carlo) or integrand evaluations (quadrature).
    pub n_samples: u64,
    /// Draws discarded because a factorization failed; reported, never hidden.
    pub n_eval_errors: u64,
    /// Which estimator produced the value.
    pub method: EstimateMethod,
}

impl OutageEstimate {
    pub(crate) fn from_quadrature(value: f64, err_bound: f64, evaluations: u64) -> Self {
        OutageEstimate {
            p_hat: value.clamp(0.0, 1.0),
            stderr: err_bound,
            n_samples: evaluations,
            n_eval_errors: 0,
            method: EstimateMethod::Quadrature,
        }
    }

    /// Builds a Wald estimate from a hit count over the successful draws.
    pub(crate) fn from_hits(
        hits: u64,
        n_samples: u64,
        n_eval_errors: u64,
        method: EstimateMethod,
    ) -> Result<Self, McError> {
        let effective = n_samples - n_eval_errors;
        if effective == 0 {
            return Err(McError::AllDrawsFailed(n_samples));
        }
        let nf = effective as f64;
        let p_hat = hits as f64 / nf;
        Ok(OutageEstimate {
            p_hat,
            stderr: (p_hat * (1.0 - p_hat) / nf).sqrt(),
            n_samples,
            n_eval_errors,
            method,
        })
    }
}

/// Seeded, stream-addressed randomness for every estimator in the crate.
///
/// Streams with the same `seed` and different `stream_id`s are statistically
/// independent, and the same pair always reproduces the same draw sequence.
/// The generator is ChaCha with 12 rounds; output metadata should report it
/// as [`RNG_ALGORITHM`].
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RandomStream {
    /// Creates the stream identified by `(seed, stream_id)`.
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RandomStream {
            seed,
            stream_id,
            rng,
        }
    }

    /// Seed this stream was created with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream identifier within the seed's family.
    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// One complex Gaussian entry with unit second moment (parts are N(0, 1/2)).
pub(crate) fn sample_cn(stream: &mut RandomStream) -> Complex64 {
    let re: f64 = StandardNormal.sample(stream);
    let im: f64 = StandardNormal.sample(stream);
    Complex64::new(
        re * std::f64::consts::FRAC_1_SQRT_2,
        im * std::f64::consts::FRAC_1_SQRT_2,
    )
}

/// Draws a `rows x cols` channel matrix with i.i.d. unit-variance complex
/// Gaussian entries.
///
/// Entries are drawn in row-major order, two normals per entry with the real
/// part first; this fixed order is what reproducibility tests pin down.
pub fn sample_channel(
    rows: usize,
    cols: usize,
    stream: &mut RandomStream,
) -> nalgebra::DMatrix<Complex64> {
    let mut h = nalgebra::DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            h[(i, j)] = sample_cn(stream);
        }
    }
    h
}

fn check_budget(spec: &ChannelSpec, total: f64) -> Result<(), McError> {
    if !spec.budget_matches(total) {
        return Err(McError::InvalidRequest(format!(
            "power entries sum to {total}, spec budget is {}",
            spec.total_power()
        )));
    }
    Ok(())
}

/// Monte Carlo outage estimate from the full channel matrix.
///
/// Each draw forms `A = I + H diag(q) H*` and tests `ln det A < R` through a
/// Cholesky factorization. Draws whose factorization fails are counted in
/// `n_eval_errors` and excluded from the frequency; they are never treated as
/// hits or misses.
pub fn mc_outage_direct(
    spec: &ChannelSpec,
    powers: &[f64],
    n_samples: u64,
    stream: &mut RandomStream,
) -> Result<OutageEstimate, McError> {
    let t = spec.t() as usize;
    let r = spec.r() as usize;
    if powers.len() != t {
        return Err(McError::InvalidRequest(format!(
            "expected {t} power entries, got {}",
            powers.len()
        )));
    }
    if powers.iter().any(|q| !q.is_finite() || *q < 0.0) {
        return Err(McError::InvalidRequest(
            "power entries must be finite and nonnegative".into(),
        ));
    }
    check_budget(spec, powers.iter().sum())?;
    if n_samples == 0 {
        return Err(McError::InvalidRequest("need at least one draw".into()));
    }

    let sqrt_q: Vec<f64> = powers.iter().map(|q| q.sqrt()).collect();
    let rate = spec.rate_nats();
    let mut b = vec![Complex64::new(0.0, 0.0); r * t];
    let mut a = vec![Complex64::new(0.0, 0.0); r * r];
    let mut hits = 0u64;
    let mut eval_errors = 0u64;
    for _ in 0..n_samples {
        // b = H diag(sqrt q); the scaling leaves the draw order untouched.
        for i in 0..r {
            for j in 0..t {
                b[i * t + j] = sample_cn(stream) * sqrt_q[j];
            }
        }
        herm::identity_plus_bbh(&b, r, t, &mut a);
        match herm::cholesky_logdet(&mut a, r) {
            Some(logdet) => {
                if logdet < rate {
                    hits += 1;
                }
            }
            None => eval_errors += 1,
        }
    }
    OutageEstimate::from_hits(hits, n_samples, eval_errors, EstimateMethod::McDirect)
}

/// Monte Carlo outage estimate from the two-antenna reduced form.
///
/// Per draw, in order: `S ~ Gamma(r, q1)`, `T ~ Gamma(r, q2)`, then the squared
/// angle factor `rho` (`U^(1/(r-1))` for r >= 2, the constant 0 for r = 1).
/// Outage is `1 + S + T + S T rho < exp(R)`. A zero-power column contributes
/// the constant 0 and skips its Gamma draw.
pub fn mc_outage_timo_reduced(
    spec: &ChannelSpec,
    split: &PowerSplit,
    n_samples: u64,
    stream: &mut RandomStream,
) -> Result<OutageEstimate, McError> {
    if spec.t() != 2 {
        return Err(McError::InvalidRequest(format!(
            "the reduced form needs t = 2, got t = {}",
            spec.t()
        )));
    }
    check_budget(spec, split.q1() + split.q2())?;
    if n_samples == 0 {
        return Err(McError::InvalidRequest("need at least one draw".into()));
    }

    let r = f64::from(spec.r());
    let threshold = spec.rate_nats().exp();
    let gamma1 = (split.q1() > 0.0).then(|| Gamma::new(r, split.q1()).expect("valid parameters"));
    let gamma2 = (split.q2() > 0.0).then(|| Gamma::new(r, split.q2()).expect("valid parameters"));
    let rho_exponent = if spec.r() >= 2 { 1.0 / (r - 1.0) } else { 0.0 };

    let mut hits = 0u64;
    for _ in 0..n_samples {
        let s = match &gamma1 {
            Some(g) => g.sample(stream),
            None => 0.0,
        };
        let t = match &gamma2 {
            Some(g) => g.sample(stream),
            None => 0.0,
        };
        let rho = if spec.r() >= 2 {
            stream.random::<f64>().powf(rho_exponent)
        } else {
            0.0
        };
        if 1.0 + s + t + s * t * rho < threshold {
            hits += 1;
        }
    }
    OutageEstimate::from_hits(hits, n_samples, 0, EstimateMethod::McReduced)
}
