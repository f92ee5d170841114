//! Band-limited resampling with a Kaiser-windowed sinc kernel.

use crate::corpus::AudioBuffer;

/// Kaiser window shape parameter.
pub const KAISER_BETA: f64 = 12.0;
/// Kernel length measured in periods of the lower of the two rates.
pub const TAPS_PER_PHASE: usize = 64;
/// Cutoff as a fraction of the lower Nyquist frequency.
const CUTOFF: f64 = 0.9;

/// Zeroth-order modified Bessel function of the first kind (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Expected output length: `round(len * target / source)`.
pub fn output_len(input_len: usize, source_hz: u32, target_hz: u32) -> usize {
    let num = input_len as u128 * target_hz as u128;
    ((num + source_hz as u128 / 2) / source_hz as u128) as usize
}

/// Resample to `target_rate_hz`. Equal rates pass through bit-identically.
pub fn resample(audio: &AudioBuffer, target_rate_hz: u32) -> AudioBuffer {
    assert!(target_rate_hz > 0, "target rate must be positive");
    let source = audio.sample_rate_hz;
    if source == target_rate_hz {
        return audio.clone();
    }
    let input = &audio.samples;
    let n_out = output_len(input.len(), source, target_rate_hz).max(1);

    // Kernel coordinates are input samples. When downsampling the cutoff
    // drops below the input Nyquist and the kernel widens accordingly.
    let ratio = target_rate_hz as f64 / source as f64;
    let fc = CUTOFF * ratio.min(1.0);
    let half_width = TAPS_PER_PHASE as f64 / 2.0 / ratio.min(1.0);
    let i0_beta = bessel_i0(KAISER_BETA);
    let kernel = |d: f64| -> f64 {
        let x = d / half_width;
        if x.abs() >= 1.0 {
            return 0.0;
        }
        fc * sinc(fc * d) * bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / i0_beta
    };

    let step = source as f64 / target_rate_hz as f64;
    let reach = half_width.ceil() as i64;
    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out {
        let t = n as f64 * step;
        let centre = t.floor() as i64;
        let mut acc = 0.0;
        let mut norm = 0.0;
        for i in (centre - reach)..=(centre + reach + 1) {
            let w = kernel(t - i as f64);
            if w == 0.0 {
                continue;
            }
            norm += w;
            if i >= 0 && (i as usize) < input.len() {
                acc += w * input[i as usize];
            }
        }
        out.push(if norm != 0.0 { acc / norm } else { 0.0 });
    }
    AudioBuffer {
        samples: out,
        sample_rate_hz: target_rate_hz,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, rate: u32, seconds: f64, amp: f64) -> AudioBuffer {
        let n = (seconds * rate as f64).round() as usize;
        let s = (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / rate as f64).sin())
            .collect();
        AudioBuffer::new(s, rate).unwrap()
    }

    /// Amplitude of the DFT bin at `freq`, evaluated directly.
    fn dft_amplitude(x: &[f64], rate: u32, freq: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, &v) in x.iter().enumerate() {
            let ph = 2.0 * PI * freq * i as f64 / rate as f64;
            re += v * ph.cos();
            im -= v * ph.sin();
        }
        2.0 * (re * re + im * im).sqrt() / x.len() as f64
    }

    #[test]
    fn length_arithmetic() {
        let a = tone(440.0, 44100, 2.0, 0.3);
        let out = resample(&a, 16000);
        assert_eq!(out.samples.len(), 32000);
        assert_eq!(out.sample_rate_hz, 16000);
    }

    #[test]
    fn identity_at_target_rate() {
        let a = tone(300.0, 16000, 0.5, 0.3);
        let once = resample(&a, 16000);
        assert_eq!(once, a);
        assert_eq!(resample(&once, 16000), once);
    }

    #[test]
    fn one_khz_survives_48k_to_16k() {
        let a = tone(1000.0, 48000, 1.0, 0.5);
        let out = resample(&a, 16000);
        // skip the edges where the kernel is truncated
        let mid = &out.samples[800..15200];
        let amp = dft_amplitude(mid, 16000, 1000.0);
        assert!((amp - 0.5).abs() / 0.5 < 0.01, "amplitude {amp}");
        // dominant bin by a coarse scan
        let best = (1..80)
            .map(|k| k as f64 * 100.0)
            .max_by(|&f1, &f2| {
                dft_amplitude(mid, 16000, f1)
                    .partial_cmp(&dft_amplitude(mid, 16000, f2))
                    .unwrap()
            })
            .unwrap();
        assert_eq!(best, 1000.0);
    }

    #[test]
    fn rejects_content_above_new_nyquist() {
        // 12 kHz cannot exist at 16 kHz; it must be strongly attenuated, not aliased to 4 kHz
        let a = tone(12000.0, 48000, 0.5, 0.5);
        let out = resample(&a, 16000);
        let mid = &out.samples[800..7200];
        let rms = (mid.iter().map(|v| v * v).sum::<f64>() / mid.len() as f64).sqrt();
        assert!(rms < 1e-3, "rms {rms}");
    }

    #[test]
    fn upsampling_preserves_tone() {
        let a = tone(500.0, 8000, 1.0, 0.4);
        let out = resample(&a, 16000);
        assert_eq!(out.samples.len(), 16000);
        let amp = dft_amplitude(&out.samples[1000..15000], 16000, 500.0);
        assert!((amp - 0.4).abs() < 0.004, "amplitude {amp}");
    }

    #[test]
    fn bessel_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i0(12.0) - 18_948.925_349_296_3).abs() < 1e-7);
    }
}
