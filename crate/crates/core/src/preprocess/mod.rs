//! Standardised acoustic pipeline: noise attenuation at the native rate,
//! resampling to 16 kHz, then non-overlapping fixed-length segmentation.

mod denoise;
mod resample;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AudioBuffer, RecordingRef, MIN_RECORDING_SECONDS};

pub use denoise::denoise;
pub use resample::{output_len, resample, KAISER_BETA, TAPS_PER_PHASE};

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("recording is {duration_s:.3} s long; at least {MIN_RECORDING_SECONDS} s required")]
    RecordingTooShort { duration_s: f64 },
    #[error("segmentation expects {expected} Hz audio, got {actual} Hz")]
    WrongRate { expected: u32, actual: u32 },
    #[error("invalid preprocessing config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub target_rate_hz: u32,
    pub segment_seconds: f64,
    pub denoise_enabled: bool,
    pub denoise_reduction_db: f64,
    /// Fraction of quietest frames used for the noise profile, in (0, 1).
    pub noise_percentile: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_rate_hz: 16_000,
            segment_seconds: 10.0,
            denoise_enabled: true,
            denoise_reduction_db: 12.0,
            noise_percentile: 0.10,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        let bad = |m: &str| Err(PreprocessError::InvalidConfig(m.to_string()));
        if self.target_rate_hz == 0 {
            return bad("target_rate_hz must be positive");
        }
        if !(self.segment_seconds > 0.0 && self.segment_seconds.is_finite()) {
            return bad("segment_seconds must be positive");
        }
        if !(self.noise_percentile > 0.0 && self.noise_percentile < 1.0) {
            return bad("noise_percentile must lie in (0, 1)");
        }
        if !(self.denoise_reduction_db >= 0.0 && self.denoise_reduction_db.is_finite()) {
            return bad("denoise_reduction_db must be non-negative");
        }
        Ok(())
    }

    pub fn segment_len(&self) -> usize {
        (self.segment_seconds * self.target_rate_hz as f64).round() as usize
    }
}

/// One fixed-length window of a preprocessed recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentAudio {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
    pub recording: RecordingRef,
    pub segment_index: usize,
}

impl SegmentAudio {
    pub fn new(recording: RecordingRef, segment_index: usize, samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        SegmentAudio {
            samples,
            sample_rate_hz,
            recording,
            segment_index,
        }
    }

    /// Segment detached from any recording, for synthetic signals.
    pub fn anonymous(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        SegmentAudio::new(
            RecordingRef {
                dataset_id: String::new(),
                subject_id: String::new(),
            },
            0,
            samples,
            sample_rate_hz,
        )
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

/// Denoise at the native rate, then resample to the target rate.
pub fn standardize(audio: &AudioBuffer, cfg: &PreprocessConfig) -> AudioBuffer {
    resample(&denoise(audio, cfg), cfg.target_rate_hz)
}

/// Cut into consecutive disjoint windows of `segment_seconds`.
///
/// A trailing remainder shorter than one window is dropped. A recording
/// shorter than one window, but at least one second long, becomes a single
/// segment holding the whole recording.
pub fn segment(
    audio: &AudioBuffer,
    recording: &RecordingRef,
    cfg: &PreprocessConfig,
) -> Result<Vec<SegmentAudio>, PreprocessError> {
    if audio.sample_rate_hz != cfg.target_rate_hz {
        return Err(PreprocessError::WrongRate {
            expected: cfg.target_rate_hz,
            actual: audio.sample_rate_hz,
        });
    }
    let duration_s = audio.duration_s();
    if duration_s < MIN_RECORDING_SECONDS {
        return Err(PreprocessError::RecordingTooShort { duration_s });
    }
    let seg_len = cfg.segment_len();
    let rate = audio.sample_rate_hz;
    if audio.samples.len() < seg_len {
        return Ok(vec![SegmentAudio::new(recording.clone(), 0, audio.samples.clone(), rate)]);
    }
    Ok(audio
        .samples
        .chunks_exact(seg_len)
        .enumerate()
        .map(|(i, chunk)| SegmentAudio::new(recording.clone(), i, chunk.to_vec(), rate))
        .collect())
}
