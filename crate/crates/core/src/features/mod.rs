//! Handcrafted acoustic features per segment.
//!
//! [`extract_features`] evaluates every entry of a [`FeatureRegistry`] in
//! registry order. Imputation rules keep the output total:
//!
//! - pitch-dependent features (jitter, shimmer, HNR, F0 statistics) are 0 on
//!   segments without voiced frames or with too few cycles for a measure;
//! - any other non-finite value becomes 0 and its index is recorded.
//!
//! Extraction fails only when more than half of the registry had to be
//! replaced because of non-finite intermediates.

mod descriptors;
pub mod perturbation;
pub mod pitch;
mod registry;
pub mod spectrum;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::SegmentAudio;

pub use perturbation::{jitter_local, shimmer_local};
pub use pitch::{track_pitch, CycleRun, PitchTrack};
pub use registry::{
    all_candidates, FeatureEntry, FeatureKind, FeatureRegistry, CANONICAL_LEN, CANONICAL_VERSION, V1_LISTING,
};
pub use spectrum::{mfcc_frames, mfcc_stats, PowerFrames};

pub const HNR_MIN_DB: f64 = -20.0;
pub const HNR_MAX_DB: f64 = 40.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("at least {needed} cycle periods required")]
    InsufficientPeriods { needed: usize },
    #[error("at least {needed} cycle amplitudes required")]
    InsufficientCycles { needed: usize },
    #[error("cycle peak amplitudes must be positive")]
    NonpositiveAmplitude,
    #[error("segment has no voiced frames")]
    NoVoicedFrames,
    #[error("segment of {samples} samples is shorter than one analysis frame ({needed})")]
    SegmentTooShort { samples: usize, needed: usize },
    #[error("{failed} of {total} features could not be computed")]
    ExtractionFailed { failed: usize, total: usize },
    #[error("invalid registry: {0}")]
    InvalidRegistry(String),
}

/// Position of a segment in the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentRef {
    pub dataset_id: String,
    pub subject_id: String,
    pub segment_index: usize,
}

impl SegmentRef {
    pub fn of(segment: &SegmentAudio) -> SegmentRef {
        SegmentRef {
            dataset_id: segment.recording.dataset_id.clone(),
            subject_id: segment.recording.subject_id.clone(),
            segment_index: segment.segment_index,
        }
    }
}

/// One segment's feature values, aligned with a registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub segment_ref: SegmentRef,
    pub registry_version: String,
    pub values: Vec<f64>,
    /// Registry indices whose value was imputed.
    #[serde(default)]
    pub imputed: Vec<usize>,
}

/// Mean harmonic-to-noise ratio over voiced frames, in dB.
///
/// Per frame, `10 log10(r / (1 - r))` with `r` the normalised
/// autocorrelation at the pitch lag, clamped to [-20, 40] dB.
/// The track already carries the per-frame correlations, so the segment is
/// only part of the signature for symmetry with the other extractors.
pub fn hnr_db(_segment: &SegmentAudio, track: &PitchTrack) -> Result<f64, FeatureError> {
    let per_frame = hnr_frames(track);
    if per_frame.is_empty() {
        return Err(FeatureError::NoVoicedFrames);
    }
    Ok(per_frame.iter().sum::<f64>() / per_frame.len() as f64)
}

fn hnr_from_r(r: f64) -> f64 {
    if r >= 1.0 {
        return HNR_MAX_DB;
    }
    if r <= 0.0 {
        return HNR_MIN_DB;
    }
    (10.0 * (r / (1.0 - r)).log10()).clamp(HNR_MIN_DB, HNR_MAX_DB)
}

fn hnr_frames(track: &PitchTrack) -> Vec<f64> {
    track
        .f0_hz
        .iter()
        .zip(&track.strength)
        .filter(|(f, _)| f.is_some())
        .map(|(_, &r)| hnr_from_r(r))
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Outcome of one extractor before imputation.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Measured {
    Value(f64),
    /// Pitch-dependent value unavailable (unvoiced or too few cycles).
    NoPitch,
}

/// Every candidate feature of one segment, computed once.
struct Measurements {
    values: HashMap<FeatureKind, Measured>,
}

impl Measurements {
    fn compute(segment: &SegmentAudio) -> Measurements {
        use FeatureKind::*;
        let x = &segment.samples;
        let rate = segment.sample_rate_hz;
        let mut values = HashMap::new();
        let mut put = |k: FeatureKind, v: f64| {
            values.insert(k, Measured::Value(v));
        };

        let power = PowerFrames::compute(x, rate);
        let cepstra = mfcc_frames(&power, spectrum::MFCC_COEFFS);
        for j in 0..spectrum::MFCC_COEFFS {
            let (m, s) = spectrum::mean_sd(cepstra.iter().map(|f| f[j]));
            put(MfccMean(j as u8 + 1), m);
            put(MfccSd(j as u8 + 1), s);
        }
        let shape = descriptors::spectral_stats(&power);
        for (k, v) in [
            SpectralCentroidMean,
            SpectralCentroidSd,
            SpectralBandwidthMean,
            SpectralBandwidthSd,
            SpectralRolloffMean,
            SpectralRolloffSd,
            SpectralFlatnessMean,
            SpectralFlatnessSd,
        ]
        .into_iter()
        .zip(shape)
        {
            put(k, v);
        }
        let (zcr, rms) = descriptors::zcr_rms_frames(x, rate);
        let (zm, zs) = spectrum::mean_sd(zcr.iter().copied());
        let (rm, rs) = spectrum::mean_sd(rms.iter().copied());
        put(ZcrMean, zm);
        put(ZcrSd, zs);
        put(RmsMean, rm);
        put(RmsSd, rs);
        for (b, v) in descriptors::log_mel_means(&power).into_iter().enumerate() {
            put(LogMelMean(b as u8 + 1), v);
        }
        let duration_s = segment.duration_s();
        let pauses = descriptors::pause_stats(&rms, rate, duration_s);
        put(PauseRate, pauses.pause_rate);
        put(MeanPauseDuration, pauses.mean_pause_s);
        put(SpeechPauseRatio, pauses.speech_pause_ratio);
        put(IntensityRange, pauses.intensity_range_db);
        let (fm, fs) = descriptors::spectral_flux(&power);
        put(SpectralFluxMean, fm);
        put(SpectralFluxSd, fs);

        let track = pitch::pitch_frames(x, rate).ok();
        let voiced_fraction = track.as_ref().map_or(0.0, |t| t.voiced_fraction());
        put(VoicedFraction, voiced_fraction);

        let voiced = track.filter(|t| t.f0_hz.iter().any(Option::is_some));
        let pitch_kinds = all_candidates().into_iter().filter(|k| k.pitch_dependent());
        match voiced {
            None => {
                for k in pitch_kinds {
                    values.insert(k, Measured::NoPitch);
                }
            }
            Some(t) => {
                let periods: Vec<&[f64]> = t.runs.iter().map(|r| r.periods_s.as_slice()).collect();
                let amps: Vec<&[f64]> = t.runs.iter().map(|r| r.amplitudes.as_slice()).collect();
                let f0 = t.voiced_f0();
                let (f0_mean, f0_sd) = spectrum::mean_sd(f0.iter().copied());
                let hnr = hnr_frames(&t);
                let (hnr_mean, hnr_sd) = spectrum::mean_sd(hnr.iter().copied());
                use perturbation as p;
                let measured = [
                    (JitterLocal, p::jitter_local_runs(&periods)),
                    (JitterAbsolute, p::jitter_absolute_runs(&periods)),
                    (JitterRap, p::jitter_quotient_runs(&periods, 3)),
                    (JitterPpq5, p::jitter_quotient_runs(&periods, 5)),
                    (JitterDdp, p::jitter_ddp_runs(&periods)),
                    (ShimmerLocal, p::shimmer_local_runs(&amps)),
                    (ShimmerDb, p::shimmer_db_runs(&amps)),
                    (ShimmerApq3, p::shimmer_quotient_runs(&amps, 3)),
                    (ShimmerApq5, p::shimmer_quotient_runs(&amps, 5)),
                    (ShimmerApq11, p::shimmer_quotient_runs(&amps, 11)),
                    (ShimmerDda, p::shimmer_dda_runs(&amps)),
                    (HnrMean, Ok(hnr_mean)),
                    (HnrSd, Ok(hnr_sd)),
                    (F0Mean, Ok(f0_mean)),
                    (F0Sd, Ok(f0_sd)),
                    (F0Min, Ok(f0.iter().copied().fold(f64::INFINITY, f64::min))),
                    (F0Max, Ok(f0.iter().copied().fold(f64::NEG_INFINITY, f64::max))),
                    (F0Median, Ok(median(f0))),
                ];
                for (k, r) in measured {
                    values.insert(k, r.map_or(Measured::NoPitch, Measured::Value));
                }
            }
        }
        Measurements { values }
    }
}

/// Compute a segment's feature vector in registry order.
pub fn extract_features(segment: &SegmentAudio, registry: &FeatureRegistry) -> Result<FeatureVector, FeatureError> {
    let m = Measurements::compute(segment);
    let mut values = Vec::with_capacity(registry.len());
    let mut imputed = Vec::new();
    let mut nonfinite = 0usize;
    for (i, e) in registry.entries().iter().enumerate() {
        let v = match m.values[&e.kind] {
            Measured::Value(v) if v.is_finite() => v,
            Measured::Value(_) => {
                nonfinite += 1;
                imputed.push(i);
                0.0
            }
            Measured::NoPitch => {
                imputed.push(i);
                0.0
            }
        };
        values.push(v);
    }
    if 2 * nonfinite > registry.len() {
        return Err(FeatureError::ExtractionFailed {
            failed: nonfinite,
            total: registry.len(),
        });
    }
    Ok(FeatureVector {
        segment_ref: SegmentRef::of(segment),
        registry_version: registry.version.clone(),
        values,
        imputed,
    })
}
