//! Stratified resampling and BCa intervals.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::corpus::Label;

use super::metrics::Outcome;
use super::EvalError;

pub const DEFAULT_REPLICATES: usize = 10_000;
pub const DEFAULT_LEVEL: f64 = 0.95;

/// Draws bootstrap index sets that keep each class at its original size.
///
/// Replicate `b` is drawn from a ChaCha8 generator seeded with the master
/// seed and positioned on stream `b`, so any replicate can be regenerated
/// alone and in any order.
#[derive(Debug, Clone)]
pub struct StratifiedResampler {
    positives: Vec<usize>,
    negatives: Vec<usize>,
    seed: u64,
}

impl StratifiedResampler {
    pub fn new(truths: &[Label], seed: u64) -> Result<StratifiedResampler, EvalError> {
        let (positives, negatives): (Vec<usize>, Vec<usize>) =
            (0..truths.len()).partition(|&i| truths[i].is_positive());
        if positives.is_empty() || negatives.is_empty() {
            return Err(EvalError::SingleClassInput {
                n_pos: positives.len(),
                n_neg: negatives.len(),
            });
        }
        Ok(StratifiedResampler {
            positives,
            negatives,
            seed,
        })
    }

    /// Indices into the original subject list: positives first, then negatives.
    pub fn draw(&self, b: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(b as u64);
        let mut out = Vec::with_capacity(self.positives.len() + self.negatives.len());
        for stratum in [&self.positives, &self.negatives] {
            out.extend((0..stratum.len()).map(|_| stratum[rng.gen_range(0..stratum.len())]));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: String,
    pub replicates: usize,
    pub seed: u64,
    pub z0: f64,
    pub acceleration: f64,
    /// Every replicate gave the same value; the interval is that point.
    pub degenerate: bool,
    /// The interval does not contain the point estimate.
    pub excludes_point: bool,
}

pub(crate) fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Nearest-rank quantile of an ascending slice: element `ceil(p * n) - 1`.
///
/// `p * n` within 1e-9 of an integer counts as that integer, so normal
/// CDF round-off cannot move the pick by a whole rank.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let idx = ((p * n as f64 - 1e-9).ceil() as isize - 1).clamp(0, n as isize - 1);
    sorted[idx as usize]
}

/// Jackknife acceleration from leave-one-out estimates.
pub fn acceleration(jackknife: &[f64]) -> f64 {
    if jackknife.len() < 2 {
        return 0.0;
    }
    let mean = jackknife.iter().sum::<f64>() / jackknife.len() as f64;
    let (mut s2, mut s3) = (0.0, 0.0);
    for &t in jackknife {
        let d = mean - t;
        s2 += d * d;
        s3 += d * d * d;
    }
    if s2 == 0.0 {
        0.0
    } else {
        s3 / (6.0 * s2.powf(1.5))
    }
}

fn adjusted_level(z0: f64, a: f64, z: f64) -> f64 {
    let n = std_normal();
    let num = z0 + z;
    let denom = 1.0 - a * num;
    if denom <= 0.0 {
        return if num > 0.0 { 1.0 } else { 0.0 };
    }
    n.cdf(z0 + num / denom)
}

/// BCa interval from a point estimate, its replicate distribution and its
/// leave-one-out estimates.
pub fn bca_from_parts(
    point: f64,
    replicate_stats: &[f64],
    jackknife: &[f64],
    level: f64,
    seed: u64,
) -> ConfidenceInterval {
    let b = replicate_stats.len();
    let mut sorted = replicate_stats.to_vec();
    sorted.sort_by(f64::total_cmp);
    let base = ConfidenceInterval {
        point,
        lower: point,
        upper: point,
        level,
        method: "BCa".into(),
        replicates: b,
        seed,
        z0: 0.0,
        acceleration: 0.0,
        degenerate: false,
        excludes_point: false,
    };
    if sorted.first() == sorted.last() {
        let v = sorted.first().copied().unwrap_or(point);
        return ConfidenceInterval {
            lower: v,
            upper: v,
            degenerate: true,
            excludes_point: v != point,
            ..base
        };
    }
    let normal = std_normal();
    let below = sorted.iter().filter(|&&t| t < point).count() as f64;
    let bf = b as f64;
    let frac = (below / bf).clamp(1.0 / (bf + 1.0), bf / (bf + 1.0));
    let z0 = normal.inverse_cdf(frac);
    let a = acceleration(jackknife);
    let alpha = (1.0 - level) / 2.0;
    let a1 = adjusted_level(z0, a, normal.inverse_cdf(alpha));
    let a2 = adjusted_level(z0, a, normal.inverse_cdf(1.0 - alpha));
    let lower = nearest_rank(&sorted, a1);
    let upper = nearest_rank(&sorted, a2);
    ConfidenceInterval {
        lower,
        upper,
        z0,
        acceleration: a,
        excludes_point: point < lower || point > upper,
        ..base
    }
}

/// Leave-one-subject-out estimates, skipping deletions that leave the
/// statistic undefined. Returns the estimates and how many were skipped.
pub fn jackknife<F>(outcomes: &[Outcome], statistic: F) -> (Vec<f64>, usize)
where
    F: Fn(&[Outcome]) -> Result<f64, EvalError> + Sync,
{
    let results: Vec<Option<f64>> = (0..outcomes.len())
        .into_par_iter()
        .map(|i| {
            let mut rest = outcomes.to_vec();
            rest.remove(i);
            statistic(&rest).ok()
        })
        .collect();
    let skipped = results.iter().filter(|r| r.is_none()).count();
    (results.into_iter().flatten().collect(), skipped)
}

/// Stratified BCa bootstrap interval for one statistic.
pub fn bca_interval<F>(
    statistic: F,
    outcomes: &[Outcome],
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<ConfidenceInterval, EvalError>
where
    F: Fn(&[Outcome]) -> Result<f64, EvalError> + Sync,
{
    if replicates == 0 {
        return Err(EvalError::InvalidSettings("replicates must be positive".into()));
    }
    let truths: Vec<Label> = outcomes.iter().map(|o| o.truth).collect();
    let resampler = StratifiedResampler::new(&truths, seed)?;
    let point = statistic(outcomes)?;
    let stats: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let sample: Vec<Outcome> = resampler.draw(b).into_iter().map(|i| outcomes[i]).collect();
            statistic(&sample)
        })
        .collect::<Result<_, _>>()?;
    let (jack, skipped) = jackknife(outcomes, &statistic);
    if skipped > 0 {
        log::warn!("jackknife skipped {skipped} undefined leave-one-out estimates; acceleration may be unstable");
    }
    Ok(bca_from_parts(point, &stats, &jack, level, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(pos: usize, neg: usize) -> Vec<Label> {
        let mut v = vec![Label::Parkinson; pos];
        v.extend(vec![Label::Control; neg]);
        v
    }

    #[test]
    fn strata_sizes_kept() {
        let truths = labels(23, 53);
        let r = StratifiedResampler::new(&truths, 0).unwrap();
        for b in 0..200 {
            let idx = r.draw(b);
            assert_eq!(idx.len(), 76);
            assert_eq!(idx.iter().filter(|&&i| truths[i].is_positive()).count(), 23);
        }
    }

    #[test]
    fn draws_are_reproducible_and_distinct() {
        let r = StratifiedResampler::new(&labels(10, 10), 7).unwrap();
        assert_eq!(r.draw(3), r.draw(3));
        assert_ne!(r.draw(3), r.draw(4));
        let other = StratifiedResampler::new(&labels(10, 10), 8).unwrap();
        assert_ne!(r.draw(3), other.draw(3));
    }

    #[test]
    fn single_class_rejected() {
        assert!(StratifiedResampler::new(&labels(3, 0), 0).is_err());
    }

    #[test]
    fn nearest_rank_convention() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 0.025), 1.0);
        assert_eq!(nearest_rank(&v, 0.5), 5.0);
        assert_eq!(nearest_rank(&v, 0.975), 10.0);
        assert_eq!(nearest_rank(&v, 0.0), 1.0);
        assert_eq!(nearest_rank(&v, 1.0), 10.0);
    }

    #[test]
    fn constant_statistic_is_degenerate() {
        let outcomes: Vec<Outcome> = labels(5, 5)
            .into_iter()
            .map(|t| Outcome {
                truth: t,
                pred: t,
                p_pos: 0.5,
            })
            .collect();
        let ci = bca_interval(|_| Ok(3.0), &outcomes, 500, 0.95, 0).unwrap();
        assert!(ci.degenerate);
        assert_eq!((ci.lower, ci.point, ci.upper), (3.0, 3.0, 3.0));
    }

    #[test]
    fn acceleration_of_symmetric_values_is_zero() {
        assert_eq!(acceleration(&[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(acceleration(&[2.0, 2.0]), 0.0);
        assert!(acceleration(&[0.0, 0.0, 0.0, 10.0]) < 0.0);
    }

    #[test]
    fn adjusted_levels_reduce_to_percentile() {
        let n = std_normal();
        assert!((adjusted_level(0.0, 0.0, n.inverse_cdf(0.025)) - 0.025).abs() < 1e-11);
        assert_eq!(adjusted_level(0.0, 1.0, 2.0), 1.0);
    }
}
