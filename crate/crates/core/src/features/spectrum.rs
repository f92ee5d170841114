//! Short-time power spectra, mel filterbanks and MFCCs.
//!
//! Frames are 25 ms with a 10 ms hop, weighted by a symmetric Hann window
//! and zero-padded to the next power of two. The mel scale is the HTK one,
//! `2595 * log10(1 + f / 700)`. Filters are triangles evaluated at the exact
//! bin frequencies (no bin snapping), spanning 0 Hz to min(8 kHz, Nyquist).
//! Cepstra use an orthonormal type-II DCT of natural-log filterbank energies
//! floored at 1e-10, and coefficient 0 is discarded.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

pub const FRAME_SECONDS: f64 = 0.025;
pub const HOP_SECONDS: f64 = 0.010;
pub const MFCC_FILTERS: usize = 26;
pub const MFCC_COEFFS: usize = 13;
pub const LOG_MEL_BANDS: usize = 13;
pub const MEL_MAX_HZ: f64 = 8000.0;
pub const LOG_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

pub fn frame_len(rate: u32) -> usize {
    (FRAME_SECONDS * rate as f64).round() as usize
}

pub fn hop_len(rate: u32) -> usize {
    (HOP_SECONDS * rate as f64).round() as usize
}

/// Start offsets of full frames.
pub fn frame_starts(n_samples: usize, frame: usize, hop: usize) -> impl Iterator<Item = usize> {
    let count = if n_samples >= frame { (n_samples - frame) / hop + 1 } else { 0 };
    (0..count).map(move |j| j * hop)
}

pub fn hann_symmetric(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Power spectra (bins 0..=nfft/2) of every full frame.
#[derive(Debug, Clone)]
pub struct PowerFrames {
    pub frames: Vec<Vec<f64>>,
    pub nfft: usize,
    pub sample_rate_hz: u32,
}

impl PowerFrames {
    pub fn compute(samples: &[f64], sample_rate_hz: u32) -> PowerFrames {
        let frame = frame_len(sample_rate_hz);
        let hop = hop_len(sample_rate_hz);
        let nfft = frame.next_power_of_two();
        let window = hann_symmetric(frame);
        let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
        let frames = frame_starts(samples.len(), frame, hop)
            .map(|s| {
                let mut buf = vec![Complex::new(0.0, 0.0); nfft];
                for (i, (x, w)) in samples[s..s + frame].iter().zip(&window).enumerate() {
                    buf[i].re = x * w;
                }
                fft.process(&mut buf);
                buf[..=nfft / 2].iter().map(|c| c.norm_sqr()).collect()
            })
            .collect();
        PowerFrames {
            frames,
            nfft,
            sample_rate_hz,
        }
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate_hz as f64 / self.nfft as f64
    }

    pub fn n_bins(&self) -> usize {
        self.nfft / 2 + 1
    }
}

/// Triangular mel filterbank, one weight row per filter.
pub fn mel_filterbank(n_filters: usize, nfft: usize, sample_rate_hz: u32) -> Vec<Vec<f64>> {
    let f_max = MEL_MAX_HZ.min(sample_rate_hz as f64 / 2.0);
    let (m_lo, m_hi) = (hz_to_mel(0.0), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_filters + 1) as f64))
        .collect();
    let n_bins = nfft / 2 + 1;
    (0..n_filters)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * sample_rate_hz as f64 / nfft as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

pub fn apply_filterbank(bank: &[Vec<f64>], power: &[f64]) -> Vec<f64> {
    bank.iter()
        .map(|row| row.iter().zip(power).map(|(w, p)| w * p).sum())
        .collect()
}

/// Orthonormal DCT-II coefficients 1..=n_coeffs of `x`.
pub fn dct2_skip0(x: &[f64], n_coeffs: usize) -> Vec<f64> {
    let m = x.len() as f64;
    let scale = (2.0 / m).sqrt();
    (1..=n_coeffs)
        .map(|j| {
            scale
                * x.iter()
                    .enumerate()
                    .map(|(i, v)| v * (std::f64::consts::PI * j as f64 * (i as f64 + 0.5) / m).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Per-frame MFCCs (coefficients 1..=n_coeffs).
pub fn mfcc_frames(power: &PowerFrames, n_coeffs: usize) -> Vec<Vec<f64>> {
    let bank = mel_filterbank(MFCC_FILTERS, power.nfft, power.sample_rate_hz);
    power
        .frames
        .iter()
        .map(|p| {
            let log_e: Vec<f64> = apply_filterbank(&bank, p)
                .into_iter()
                .map(|e| e.max(LOG_FLOOR).ln())
                .collect();
            dct2_skip0(&log_e, n_coeffs)
        })
        .collect()
}

/// Mean and population standard deviation of a series. Empty input gives NaN.
pub fn mean_sd(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().collect();
    let n = v.len() as f64;
    // shifted by the first value so a constant series has exactly zero spread
    let origin = v.first().copied().unwrap_or(0.0);
    let shift = v.iter().map(|x| x - origin).sum::<f64>() / n;
    let var = v.iter().map(|x| (x - origin - shift).powi(2)).sum::<f64>() / n;
    (origin + shift, var.sqrt())
}

/// Per-coefficient (means, standard deviations) of MFCCs across frames.
pub fn mfcc_stats(samples: &[f64], sample_rate_hz: u32, n_coeffs: usize) -> (Vec<f64>, Vec<f64>) {
    let frames = mfcc_frames(&PowerFrames::compute(samples, sample_rate_hz), n_coeffs);
    (0..n_coeffs)
        .map(|j| mean_sd(frames.iter().map(|f| f[j])))
        .unzip()
}
