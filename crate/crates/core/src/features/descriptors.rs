//! Frame-level spectral and temporal descriptors.

use super::spectrum::{
    apply_filterbank, frame_len, frame_starts, hop_len, mean_sd, mel_filterbank, PowerFrames, LOG_FLOOR,
    LOG_MEL_BANDS,
};

/// Frames more than this far below the loudest frame count as pause.
pub const PAUSE_DB_BELOW_MAX: f64 = 30.0;
/// Shortest run of quiet frames treated as a pause (150 ms at a 10 ms hop).
pub const MIN_PAUSE_FRAMES: usize = 15;
const ROLLOFF: f64 = 0.85;

#[derive(Debug, Clone, Copy, Default)]
pub struct SpectralShape {
    pub centroid: f64,
    pub bandwidth: f64,
    pub rolloff: f64,
    pub flatness: f64,
}

pub fn spectral_shape(power: &PowerFrames, frame: &[f64]) -> SpectralShape {
    let mag: Vec<f64> = frame.iter().map(|p| p.sqrt()).collect();
    let mag_sum: f64 = mag.iter().sum();
    let (centroid, bandwidth) = if mag_sum > 0.0 {
        let c = mag.iter().enumerate().map(|(k, m)| power.bin_hz(k) * m).sum::<f64>() / mag_sum;
        let bw = (mag
            .iter()
            .enumerate()
            .map(|(k, m)| m * (power.bin_hz(k) - c).powi(2))
            .sum::<f64>()
            / mag_sum)
            .sqrt();
        (c, bw)
    } else {
        (0.0, 0.0)
    };
    let total: f64 = frame.iter().sum();
    let rolloff = if total > 0.0 {
        let mut acc = 0.0;
        let mut k_hit = frame.len() - 1;
        for (k, p) in frame.iter().enumerate() {
            acc += p;
            if acc >= ROLLOFF * total {
                k_hit = k;
                break;
            }
        }
        power.bin_hz(k_hit)
    } else {
        0.0
    };
    let floored: Vec<f64> = frame.iter().map(|p| p.max(LOG_FLOOR)).collect();
    let n = floored.len() as f64;
    let geo = (floored.iter().map(|p| p.ln()).sum::<f64>() / n).exp();
    let arith = floored.iter().sum::<f64>() / n;
    SpectralShape {
        centroid,
        bandwidth,
        rolloff,
        flatness: geo / arith,
    }
}

/// Means and standard deviations of the four shape descriptors, in the order
/// centroid, bandwidth, rolloff, flatness (mean then sd for each).
pub fn spectral_stats(power: &PowerFrames) -> [f64; 8] {
    let shapes: Vec<SpectralShape> = power.frames.iter().map(|f| spectral_shape(power, f)).collect();
    let (cm, cs) = mean_sd(shapes.iter().map(|s| s.centroid));
    let (bm, bs) = mean_sd(shapes.iter().map(|s| s.bandwidth));
    let (rm, rs) = mean_sd(shapes.iter().map(|s| s.rolloff));
    let (fm, fs) = mean_sd(shapes.iter().map(|s| s.flatness));
    [cm, cs, bm, bs, rm, rs, fm, fs]
}

/// Per-frame zero-crossing rate and RMS over 25 ms / 10 ms frames.
pub fn zcr_rms_frames(samples: &[f64], rate: u32) -> (Vec<f64>, Vec<f64>) {
    let frame = frame_len(rate);
    let hop = hop_len(rate);
    frame_starts(samples.len(), frame, hop)
        .map(|s| {
            let x = &samples[s..s + frame];
            let crossings = x.windows(2).filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0)).count();
            let zcr = crossings as f64 / (frame - 1) as f64;
            let rms = (x.iter().map(|v| v * v).sum::<f64>() / frame as f64).sqrt();
            (zcr, rms)
        })
        .unzip()
}

/// Mean over frames of each mel band's energy in dB.
pub fn log_mel_means(power: &PowerFrames) -> Vec<f64> {
    let bank = mel_filterbank(LOG_MEL_BANDS, power.nfft, power.sample_rate_hz);
    let per_frame: Vec<Vec<f64>> = power
        .frames
        .iter()
        .map(|p| {
            apply_filterbank(&bank, p)
                .into_iter()
                .map(|e| 10.0 * e.max(LOG_FLOOR).log10())
                .collect()
        })
        .collect();
    (0..LOG_MEL_BANDS)
        .map(|b| mean_sd(per_frame.iter().map(|f| f[b])).0)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauseStats {
    pub pause_rate: f64,
    pub mean_pause_s: f64,
    /// Speech time over pause time; infinite when there is no pause.
    pub speech_pause_ratio: f64,
    pub intensity_range_db: f64,
}

/// Energy-threshold pause statistics from frame RMS values.
pub fn pause_stats(rms: &[f64], rate: u32, duration_s: f64) -> PauseStats {
    let hop_s = hop_len(rate) as f64 / rate as f64;
    let db: Vec<f64> = rms.iter().map(|r| 10.0 * (r * r).max(LOG_FLOOR).log10()).collect();
    let max_db = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_db = db.iter().copied().fold(f64::INFINITY, f64::min);
    let quiet: Vec<bool> = db.iter().map(|&d| d < max_db - PAUSE_DB_BELOW_MAX).collect();

    let mut pauses = Vec::new();
    let mut run = 0usize;
    for &q in quiet.iter().chain(std::iter::once(&false)) {
        if q {
            run += 1;
        } else {
            if run >= MIN_PAUSE_FRAMES {
                pauses.push(run);
            }
            run = 0;
        }
    }
    let pause_frames: usize = pauses.iter().sum();
    let speech_frames = rms.len() - pause_frames;
    PauseStats {
        pause_rate: pauses.len() as f64 / duration_s,
        mean_pause_s: if pauses.is_empty() {
            0.0
        } else {
            pause_frames as f64 * hop_s / pauses.len() as f64
        },
        speech_pause_ratio: speech_frames as f64 / pause_frames as f64,
        intensity_range_db: max_db - min_db,
    }
}

/// Mean and sd of the L2 distance between consecutive magnitude spectra.
pub fn spectral_flux(power: &PowerFrames) -> (f64, f64) {
    let mags: Vec<Vec<f64>> = power
        .frames
        .iter()
        .map(|f| f.iter().map(|p| p.sqrt()).collect())
        .collect();
    mean_sd(mags.windows(2).map(|w| {
        w[1].iter()
            .zip(&w[0])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }))
}
