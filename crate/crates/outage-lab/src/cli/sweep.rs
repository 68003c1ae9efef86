//! Deterministic parallel grid sweeps over rate and power.
//!
//! Each cell minimizes the outage probability over splits and classifies the
//! result. Cells are independent, carry a seed derived from their index, and
//! are assembled in grid order, so the output is byte-identical regardless of
//! the worker count.

use rayon::prelude::*;

use crate::specfun::QuadratureSpec;
use crate::timo::{find_min_split, ChannelSpec, MinSplitReport, TimoError};

/// Outage probabilities this close to one mark a cell as unusable.
pub const UNSTABLE_CUTOFF: f64 = 1e-6;

/// Safety factor between the quadrature error bound and a verdict margin.
pub const MARGIN_FACTOR: f64 = 10.0;

/// Classification of one grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// The minimum over splits is consistent with a canonical candidate.
    ConjectureHolds,
    /// An interior split beats both candidates beyond the decision margin.
    Counterexample,
    /// The comparison fell inside the decision margin.
    Inconclusive,
    /// Outage is indistinguishable from one at every split.
    NumericallyUnstable,
}

impl Verdict {
    /// Stable token used in CSV output.
    pub fn token(&self) -> &'static str {
        match self {
            Verdict::ConjectureHolds => "conjecture_holds",
            Verdict::Counterexample => "counterexample",
            Verdict::Inconclusive => "inconclusive",
            Verdict::NumericallyUnstable => "numerically_unstable",
        }
    }

    /// Parses a token produced by [`Verdict::token`].
    pub fn from_token(s: &str) -> Option<Verdict> {
        match s {
            "conjecture_holds" => Some(Verdict::ConjectureHolds),
            "counterexample" => Some(Verdict::Counterexample),
            "inconclusive" => Some(Verdict::Inconclusive),
            "numerically_unstable" => Some(Verdict::NumericallyUnstable),
            _ => None,
        }
    }
}

/// An inclusive arithmetic range `start:stop:step`.
///
/// Sweep ranges are expressed in multiples of the receiver count; expansion
/// applies the scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeSpec {
    /// First multiple.
    pub start: f64,
    /// Last multiple (included up to rounding slack).
    pub stop: f64,
    /// Positive increment between multiples.
    pub step: f64,
}

impl std::str::FromStr for RangeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected start:stop:step, got {s:?}"));
        }
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|e| format!("bad range component {p:?}: {e}"))
            })
            .collect::<Result<_, _>>()?;
        let spec = RangeSpec {
            start: nums[0],
            stop: nums[1],
            step: nums[2],
        };
        if !spec.start.is_finite() || !spec.stop.is_finite() || !spec.step.is_finite() {
            return Err(format!("range components must be finite, got {s:?}"));
        }
        if spec.step <= 0.0 {
            return Err(format!("range step must be positive, got {}", spec.step));
        }
        if spec.start > spec.stop {
            return Err(format!(
                "range start {} exceeds stop {}",
                spec.start, spec.stop
            ));
        }
        Ok(spec)
    }
}

impl RangeSpec {
    /// Grid values `(start + i * step) * scale`, inclusive of `stop` within
    /// rounding slack.
    pub fn values(&self, scale: f64) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| (self.start + i as f64 * self.step) * scale)
            .collect()
    }
}

/// One classified sweep cell.
#[derive(Clone, Debug)]
pub struct SweepCell {
    /// Target rate in nats.
    pub rate: f64,
    /// Total power.
    pub power: f64,
    /// Seed recorded for the cell (derived from the base seed and index).
    pub seed: u64,
    /// Minimization result; absent when the cell failed to converge.
    pub report: Option<MinSplitReport>,
    /// How much the interior minimum undercuts the best candidate.
    pub depth: f64,
    /// Decision margin the depth must clear for a counterexample verdict.
    pub margin: f64,
    /// Cell classification.
    pub verdict: Verdict,
}

/// Per-cell evaluation settings shared by a whole sweep.
#[derive(Clone, Debug)]
pub struct SweepContext {
    /// Receive antennas.
    pub r: u32,
    /// Split-grid resolution as a fraction of the power budget.
    pub q_step: f64,
    /// Quadrature control for every cell.
    pub quad: QuadratureSpec,
    /// Base seed; cell `i` records `seed + i`.
    pub seed: u64,
}

/// Classifies a minimization result into a verdict with explicit margins.
///
/// Returns the verdict, the depth `min(f_at_zero, f_at_half) - f_star`, and
/// the margin the depth is compared against. A counterexample additionally
/// requires the minimizer to sit at least half a grid step inside `(0, P/2)`.
pub fn classify(report: &MinSplitReport, power: f64, q_step: f64) -> (Verdict, f64, f64) {
    let depth = report.f_at_zero.min(report.f_at_half) - report.f_star;
    let margin = MARGIN_FACTOR
        * (report.f_star_err + report.f_at_half_err + report.f_at_zero.abs() * 1e-14);
    if report.f_star > 1.0 - UNSTABLE_CUTOFF {
        return (Verdict::NumericallyUnstable, depth, margin);
    }
    let guard = 0.5 * q_step * power;
    let interior = report.q_star >= guard && report.q_star <= 0.5 * power - guard;
    let verdict = if depth > margin {
        if interior {
            Verdict::Counterexample
        } else {
            Verdict::Inconclusive
        }
    } else {
        Verdict::ConjectureHolds
    };
    (verdict, depth, margin)
}

fn evaluate_cell(ctx: &SweepContext, rate: f64, power: f64, seed: u64) -> SweepCell {
    let grid_points = (0.5 / ctx.q_step).round().max(2.0) as u32 + 1;
    let outcome = ChannelSpec::timo(ctx.r, rate, power)
        .and_then(|spec| find_min_split(&spec, grid_points, &ctx.quad));
    match outcome {
        Ok(report) => {
            let (verdict, depth, margin) = classify(&report, power, ctx.q_step);
            SweepCell {
                rate,
                power,
                seed,
                report: Some(report),
                depth,
                margin,
                verdict,
            }
        }
        // parameter validity is checked before the sweep starts, so a failure
        // here is quadrature breakdown in an extreme corner of the grid
        Err(_) => SweepCell {
            rate,
            power,
            seed,
            report: None,
            depth: 0.0,
            margin: 0.0,
            verdict: Verdict::NumericallyUnstable,
        },
    }
}

/// Runs one sweep row (fixed rate, all powers) in parallel, in grid order.
pub fn run_rate_row(
    ctx: &SweepContext,
    rate: f64,
    powers: &[f64],
    first_index: u64,
) -> Vec<SweepCell> {
    powers
        .par_iter()
        .enumerate()
        .map(|(i, &power)| {
            let seed = ctx.seed.wrapping_add(first_index + i as u64);
            evaluate_cell(ctx, rate, power, seed)
        })
        .collect()
}

/// Validates the split resolution and that every grid point is a legal channel.
pub fn validate_grid(ctx: &SweepContext, rates: &[f64], powers: &[f64]) -> Result<(), TimoError> {
    if !ctx.q_step.is_finite() || ctx.q_step <= 0.0 || ctx.q_step > 0.5 {
        return Err(TimoError::InvalidChannel(format!(
            "q-step must lie in (0, 0.5], got {}",
            ctx.q_step
        )));
    }
    if rates.is_empty() || powers.is_empty() {
        return Err(TimoError::InvalidChannel("the sweep grid is empty".into()));
    }
    for &rate in rates {
        for &power in powers {
            ChannelSpec::timo(ctx.r, rate, power)?;
        }
    }
    Ok(())
}
