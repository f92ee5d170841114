//! Stationary spectral gating.
//!
//! The signal is analysed with 32 ms Hann frames at a 16 ms hop. A noise
//! profile (per-bin mean and standard deviation of the magnitude in dB) is
//! estimated from the quietest `noise_percentile` of frames and smoothed
//! with a running median across frequency, which keeps narrow stationary
//! partials out of the profile. Bins whose magnitude falls below
//! `mean + 1.5 * sd` are attenuated by `denoise_reduction_db`; the rest pass
//! unchanged. Frames are recombined by overlap-add normalised by the summed
//! analysis window, so a unity mask reproduces the input.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::PreprocessConfig;
use crate::corpus::AudioBuffer;

pub const FRAME_SECONDS: f64 = 0.032;
pub const THRESHOLD_SIGMAS: f64 = 1.5;
/// Width, in bins, of the running median applied to the noise profile.
const PROFILE_MEDIAN_BINS: usize = 11;
const MAG_FLOOR: f64 = 1e-12;

pub(crate) fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn running_median(x: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            median(&mut x[lo..hi].to_vec())
        })
        .collect()
}

pub fn denoise(audio: &AudioBuffer, cfg: &PreprocessConfig) -> AudioBuffer {
    if !cfg.denoise_enabled {
        return audio.clone();
    }
    let x = &audio.samples;
    let frame = ((FRAME_SECONDS * audio.sample_rate_hz as f64).round() as usize).max(4);
    let hop = frame / 2;
    let pad = frame / 2;

    let mut padded = vec![0.0; pad];
    padded.extend_from_slice(x);
    padded.resize(pad + x.len() + frame, 0.0);
    let n_frames = (padded.len() - frame) / hop + 1;

    let window = hann_periodic(frame);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(frame);
    let ifft = planner.plan_fft_inverse(frame);

    let spectra: Vec<Vec<Complex<f64>>> = (0..n_frames)
        .map(|j| {
            let s = j * hop;
            let mut buf: Vec<Complex<f64>> = padded[s..s + frame]
                .iter()
                .zip(&window)
                .map(|(v, w)| Complex::new(v * w, 0.0))
                .collect();
            fft.process(&mut buf);
            buf
        })
        .collect();

    // Noise statistics come from frames lying wholly inside the recording
    // when there are any; the zero padding would otherwise always win.
    let interior: Vec<usize> = (0..n_frames)
        .filter(|&j| j * hop >= pad && j * hop + frame <= pad + x.len())
        .collect();
    let candidates: Vec<usize> = if interior.is_empty() {
        (0..n_frames).collect()
    } else {
        interior
    };
    let energy = |j: usize| spectra[j].iter().map(|c| c.norm_sqr()).sum::<f64>();
    let mut ranked: Vec<(f64, usize)> = candidates.iter().map(|&j| (energy(j), j)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n_noise = ((cfg.noise_percentile * ranked.len() as f64).ceil() as usize).clamp(1, ranked.len());
    let noise_frames: Vec<usize> = ranked[..n_noise].iter().map(|&(_, j)| j).collect();

    let n_bins = frame / 2 + 1;
    let db = |c: Complex<f64>| 20.0 * c.norm().max(MAG_FLOOR).log10();
    let mut mean = vec![0.0; n_bins];
    let mut sd = vec![0.0; n_bins];
    for k in 0..n_bins {
        let vals: Vec<f64> = noise_frames.iter().map(|&j| db(spectra[j][k])).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64;
        mean[k] = m;
        sd[k] = var.sqrt();
    }
    let mean = running_median(&mean, PROFILE_MEDIAN_BINS);
    let sd = running_median(&sd, PROFILE_MEDIAN_BINS);
    let threshold: Vec<f64> = mean
        .iter()
        .zip(&sd)
        .map(|(m, s)| m + THRESHOLD_SIGMAS * s)
        .collect();
    let gain = 10f64.powf(-cfg.denoise_reduction_db / 20.0);

    let mut out = vec![0.0; padded.len()];
    let mut wsum = vec![0.0; padded.len()];
    for (j, spectrum) in spectra.into_iter().enumerate() {
        let mut buf = spectrum;
        for (k, c) in buf.iter_mut().enumerate() {
            let bin = k.min(frame - k);
            if db(*c) < threshold[bin] {
                *c *= gain;
            }
        }
        ifft.process(&mut buf);
        let s = j * hop;
        for i in 0..frame {
            out[s + i] += buf[i].re / frame as f64;
            wsum[s + i] += window[i];
        }
    }
    let samples = (0..x.len())
        .map(|i| {
            let w = wsum[pad + i];
            if w > 1e-9 {
                out[pad + i] / w
            } else {
                0.0
            }
        })
        .collect();
    AudioBuffer {
        samples,
        sample_rate_hz: audio.sample_rate_hz,
    }
}
