//! Cycle-to-cycle perturbation measures.
//!
//! With `T` the cycle periods (or peak amplitudes for shimmer) of one voiced
//! run and `mean` the mean over every cycle:
//!
//! - local:    mean |T[i] - T[i-1]| / mean
//! - absolute: mean |T[i] - T[i-1]| (seconds)
//! - k-point perturbation quotient (RAP = 3, PPQ5 = 5, APQ3/5/11):
//!   mean |T[i] - avg(T[i-h..=i+h])| / mean, with h = (k-1)/2 and only
//!   indices whose whole window lies inside the run
//! - DDP / DDA: mean |(T[i+1] - T[i]) - (T[i] - T[i-1])| / mean
//! - shimmer dB: mean |20 log10(A[i] / A[i-1])|
//!
//! Differences never straddle two runs; the measures pool terms across runs.

use super::FeatureError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Quantity {
    Periods,
    Amplitudes,
}

fn insufficient(q: Quantity, needed: usize) -> FeatureError {
    match q {
        Quantity::Periods => FeatureError::InsufficientPeriods { needed },
        Quantity::Amplitudes => FeatureError::InsufficientCycles { needed },
    }
}

fn pooled_mean(runs: &[&[f64]]) -> f64 {
    let n: usize = runs.iter().map(|r| r.len()).sum();
    runs.iter().flat_map(|r| r.iter()).sum::<f64>() / n as f64
}

fn check(runs: &[&[f64]], q: Quantity, needed: usize) -> Result<(), FeatureError> {
    if q == Quantity::Amplitudes && runs.iter().flat_map(|r| r.iter()).any(|&a| a.is_nan() || a <= 0.0) {
        return Err(FeatureError::NonpositiveAmplitude);
    }
    if runs.iter().any(|r| r.len() >= needed) {
        Ok(())
    } else {
        Err(insufficient(q, needed))
    }
}

fn mean_terms(terms: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = terms.fold((0.0, 0usize), |(s, n), t| (s + t, n + 1));
    sum / n as f64
}

fn consecutive_abs_diff(runs: &[&[f64]]) -> f64 {
    mean_terms(runs.iter().flat_map(|r| r.windows(2).map(|w| (w[1] - w[0]).abs())))
}

fn quotient(runs: &[&[f64]], k: usize) -> f64 {
    mean_terms(runs.iter().flat_map(|r| {
        r.windows(k).map(move |w| {
            let centre = w[k / 2];
            let avg = w.iter().sum::<f64>() / k as f64;
            (centre - avg).abs()
        })
    }))
}

fn second_difference(runs: &[&[f64]]) -> f64 {
    mean_terms(runs.iter().flat_map(|r| {
        r.windows(3).map(|w| ((w[2] - w[1]) - (w[1] - w[0])).abs())
    }))
}

pub(crate) fn jitter_local_runs(runs: &[&[f64]]) -> Result<f64, FeatureError> {
    check(runs, Quantity::Periods, 2)?;
    Ok(consecutive_abs_diff(runs) / pooled_mean(runs))
}

pub(crate) fn jitter_absolute_runs(runs: &[&[f64]]) -> Result<f64, FeatureError> {
    check(runs, Quantity::Periods, 2)?;
    Ok(consecutive_abs_diff(runs))
}

pub(crate) fn jitter_quotient_runs(runs: &[&[f64]], k: usize) -> Result<f64, FeatureError> {
    check(runs, Quantity::Periods, k)?;
    Ok(quotient(runs, k) / pooled_mean(runs))
}

pub(crate) fn jitter_ddp_runs(runs: &[&[f64]]) -> Result<f64, FeatureError> {
    check(runs, Quantity::Periods, 3)?;
    Ok(second_difference(runs) / pooled_mean(runs))
}

pub(crate) fn shimmer_local_runs(runs: &[&[f64]]) -> Result<f64, FeatureError> {
    check(runs, Quantity::Amplitudes, 2)?;
    Ok(consecutive_abs_diff(runs) / pooled_mean(runs))
}

pub(crate) fn shimmer_db_runs(runs: &[&[f64]]) -> Result<f64, FeatureError> {
    check(runs, Quantity::Amplitudes, 2)?;
    Ok(mean_terms(runs.iter().flat_map(|r| {
        r.windows(2).map(|w| (20.0 * (w[1] / w[0]).log10()).abs())
    })))
}

pub(crate) fn shimmer_quotient_runs(runs: &[&[f64]], k: usize) -> Result<f64, FeatureError> {
    check(runs, Quantity::Amplitudes, k)?;
    Ok(quotient(runs, k) / pooled_mean(runs))
}

pub(crate) fn shimmer_dda_runs(runs: &[&[f64]]) -> Result<f64, FeatureError> {
    check(runs, Quantity::Amplitudes, 3)?;
    Ok(second_difference(runs) / pooled_mean(runs))
}

/// Local jitter of a single sequence of cycle periods.
pub fn jitter_local(periods_s: &[f64]) -> Result<f64, FeatureError> {
    jitter_local_runs(&[periods_s])
}

/// Local shimmer of a single sequence of cycle peak amplitudes.
pub fn shimmer_local(peak_amplitudes: &[f64]) -> Result<f64, FeatureError> {
    shimmer_local_runs(&[peak_amplitudes])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_periods() {
        assert_eq!(jitter_local(&[0.010, 0.010, 0.010]).unwrap(), 0.0);
    }

    #[test]
    fn alternating_periods() {
        let j = jitter_local(&[0.010, 0.011, 0.010, 0.011]).unwrap();
        // (1 + 1 + 1) / 3 ms over a 10.5 ms mean
        assert!((j - 1.0 / 10.5).abs() < 1e-12, "{j}");
        assert!((j - 0.09524).abs() < 1e-5);
    }

    #[test]
    fn single_period() {
        assert_eq!(jitter_local(&[0.010]), Err(FeatureError::InsufficientPeriods { needed: 2 }));
    }

    #[test]
    fn shimmer_cases() {
        assert_eq!(shimmer_local(&[0.5, 0.5, 0.5]).unwrap(), 0.0);
        let s = shimmer_local(&[0.5, 0.6]).unwrap();
        assert!((s - 0.1 / 0.55).abs() < 1e-12);
        assert!((s - 0.18182).abs() < 1e-5);
        assert_eq!(shimmer_local(&[0.5, 0.0]), Err(FeatureError::NonpositiveAmplitude));
        assert_eq!(shimmer_local(&[0.5]), Err(FeatureError::InsufficientCycles { needed: 2 }));
    }

    #[test]
    fn quotients_by_hand() {
        let t = [1.0, 2.0, 3.0, 2.0, 1.0];
        let mean = 9.0 / 5.0;
        // RAP: centres 2 (avg 2), 3 (avg 7/3), 2 (avg 2)
        let rap = jitter_quotient_runs(&[&t], 3).unwrap();
        assert!((rap - (2.0 / 3.0) / 3.0 / mean).abs() < 1e-12);
        // PPQ5: single window, centre 3, avg 9/5
        let ppq = jitter_quotient_runs(&[&t], 5).unwrap();
        assert!((ppq - 1.2 / mean).abs() < 1e-12);
        // DDP: |1-1|, |-1-1|, |-1+1|
        let ddp = jitter_ddp_runs(&[&t]).unwrap();
        assert!((ddp - (2.0 / 3.0) / mean).abs() < 1e-12);
        assert!(shimmer_quotient_runs(&[&t], 11).is_err());
        let db = shimmer_db_runs(&[&[1.0, 10.0]]).unwrap();
        assert!((db - 20.0).abs() < 1e-12);
    }

    #[test]
    fn runs_do_not_straddle() {
        let a = [0.01, 0.01];
        let b = [0.02, 0.02];
        assert_eq!(jitter_local_runs(&[&a, &b]).unwrap(), 0.0);
    }

    #[test]
    fn scale_invariance() {
        let a = [0.4, 0.45, 0.38, 0.5, 0.41];
        let scaled: Vec<f64> = a.iter().map(|v| v * 0.3).collect();
        let s1 = shimmer_local(&a).unwrap();
        let s2 = shimmer_local(&scaled).unwrap();
        assert!((s1 - s2).abs() < 1e-12);
    }
}
