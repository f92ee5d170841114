//! Autocorrelation pitch tracking and glottal cycle marking.
//!
//! Each 40 ms frame (10 ms hop) is scored with the normalised
//! autocorrelation
//!
//! ```text
//! r(lag) = sum x[n] x[n+lag] / sqrt(sum x[n]^2 * sum x[n+lag]^2)
//! ```
//!
//! over the overlapping part of the frame, for lags covering 60-400 Hz. The
//! pitch lag is the first local maximum reaching 90% of the best score,
//! refined by parabolic interpolation, which avoids locking onto multiples of
//! the period. Frames whose refined peak stays below 0.45 are unvoiced.
//!
//! Inside each run of voiced frames, cycles are marked by walking positive
//! waveform peaks one local period apart (search window 0.75-1.25 periods).
//! Peak times and heights are parabolically interpolated; consecutive
//! peak-time differences give the cycle periods used by jitter, and the
//! heights feed shimmer.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::FeatureError;
use crate::preprocess::SegmentAudio;

pub const MIN_F0_HZ: f64 = 60.0;
pub const MAX_F0_HZ: f64 = 400.0;
pub const FRAME_SECONDS: f64 = 0.040;
pub const HOP_SECONDS: f64 = 0.010;
pub const VOICING_THRESHOLD: f64 = 0.45;
const FIRST_PEAK_RATIO: f64 = 0.9;

/// Cycle periods and peak heights for one uninterrupted voiced run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CycleRun {
    pub periods_s: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitchTrack {
    /// Per-frame F0; `None` for unvoiced frames.
    pub f0_hz: Vec<Option<f64>>,
    /// Per-frame normalised autocorrelation at the pitch lag (0 if unvoiced).
    pub strength: Vec<f64>,
    pub runs: Vec<CycleRun>,
}

impl PitchTrack {
    pub fn voiced_flags(&self) -> Vec<bool> {
        self.f0_hz.iter().map(Option::is_some).collect()
    }

    pub fn voiced_f0(&self) -> Vec<f64> {
        self.f0_hz.iter().flatten().copied().collect()
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.f0_hz.is_empty() {
            return 0.0;
        }
        self.voiced_f0().len() as f64 / self.f0_hz.len() as f64
    }

    /// All cycle periods, runs concatenated.
    pub fn periods_s(&self) -> Vec<f64> {
        self.runs.iter().flat_map(|r| r.periods_s.iter().copied()).collect()
    }
}

struct FramePitch {
    lag: f64,
    strength: f64,
}

fn parabolic(ym: f64, y0: f64, yp: f64) -> (f64, f64) {
    let denom = ym - 2.0 * y0 + yp;
    if denom.abs() < 1e-300 {
        return (0.0, y0);
    }
    let delta = (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5);
    (delta, y0 - 0.25 * (ym - yp) * delta)
}

struct LagScorer {
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    ifft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    nfft: usize,
}

impl LagScorer {
    fn new(frame: usize) -> Self {
        let nfft = (2 * frame).next_power_of_two();
        let mut planner = FftPlanner::new();
        LagScorer {
            fft: planner.plan_fft_forward(nfft),
            ifft: planner.plan_fft_inverse(nfft),
            nfft,
        }
    }

    /// Normalised autocorrelation for lags `0..=max_lag`.
    fn score(&self, x: &[f64], max_lag: usize) -> Vec<f64> {
        let n = x.len();
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        buf.resize(self.nfft, Complex::new(0.0, 0.0));
        self.fft.process(&mut buf);
        for c in buf.iter_mut() {
            *c = Complex::new(c.norm_sqr(), 0.0);
        }
        self.ifft.process(&mut buf);

        let mut prefix = vec![0.0; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] + x[i] * x[i];
        }
        let total = prefix[n];
        (0..=max_lag.min(n - 1))
            .map(|lag| {
                let num = buf[lag].re / self.nfft as f64;
                let e_head = prefix[n - lag];
                let e_tail = total - prefix[lag];
                let denom = (e_head * e_tail).sqrt();
                if denom <= 1e-12 * total.max(f64::MIN_POSITIVE) || denom == 0.0 {
                    0.0
                } else {
                    (num / denom).clamp(-1.0, 1.0)
                }
            })
            .collect()
    }
}

fn frame_pitch(r: &[f64], min_lag: usize, max_lag: usize) -> Option<FramePitch> {
    let best = (min_lag..=max_lag).map(|l| r[l]).fold(f64::NEG_INFINITY, f64::max);
    if best.is_nan() || best <= 0.0 {
        return None;
    }
    let is_peak = |l: usize| r[l] >= r[l - 1] && r[l] >= r[l + 1];
    let lag = (min_lag..=max_lag).find(|&l| is_peak(l) && r[l] >= FIRST_PEAK_RATIO * best)?;
    let (delta, peak) = parabolic(r[lag - 1], r[lag], r[lag + 1]);
    let strength = peak.min(1.0);
    if strength < VOICING_THRESHOLD {
        return None;
    }
    Some(FramePitch {
        lag: lag as f64 + delta,
        strength,
    })
}

/// Track F0 over a segment and mark glottal cycles.
pub fn track_pitch(segment: &SegmentAudio) -> Result<PitchTrack, FeatureError> {
    let track = pitch_frames(&segment.samples, segment.sample_rate_hz)?;
    if track.f0_hz.iter().all(Option::is_none) {
        return Err(FeatureError::NoVoicedFrames);
    }
    Ok(track)
}

/// Frame-level tracking without the voiced-frame requirement.
pub(crate) fn pitch_frames(samples: &[f64], rate: u32) -> Result<PitchTrack, FeatureError> {
    let frame = (FRAME_SECONDS * rate as f64).round() as usize;
    let hop = (HOP_SECONDS * rate as f64).round() as usize;
    if samples.len() < frame {
        return Err(FeatureError::SegmentTooShort {
            samples: samples.len(),
            needed: frame,
        });
    }
    let min_lag = (rate as f64 / MAX_F0_HZ).ceil() as usize;
    let max_lag = (rate as f64 / MIN_F0_HZ).floor() as usize;
    let scorer = LagScorer::new(frame);

    let n_frames = (samples.len() - frame) / hop + 1;
    let mut f0_hz = Vec::with_capacity(n_frames);
    let mut strength = Vec::with_capacity(n_frames);
    let mut lags = Vec::with_capacity(n_frames);
    for j in 0..n_frames {
        let x = &samples[j * hop..j * hop + frame];
        // one extra lag for the parabola's right neighbour
        let r = scorer.score(x, max_lag + 1);
        match frame_pitch(&r, min_lag.max(1), max_lag.min(r.len() - 2)) {
            Some(p) => {
                let f0 = rate as f64 / p.lag;
                if (MIN_F0_HZ..=MAX_F0_HZ).contains(&f0) {
                    f0_hz.push(Some(f0));
                    strength.push(p.strength);
                    lags.push(Some(p.lag));
                    continue;
                }
                f0_hz.push(None);
                strength.push(0.0);
                lags.push(None);
            }
            None => {
                f0_hz.push(None);
                strength.push(0.0);
                lags.push(None);
            }
        }
    }

    let runs = mark_cycles(samples, rate, &lags, frame, hop);
    Ok(PitchTrack {
        f0_hz,
        strength,
        runs,
    })
}

fn mark_cycles(samples: &[f64], rate: u32, lags: &[Option<f64>], frame: usize, hop: usize) -> Vec<CycleRun> {
    let mut runs = Vec::new();
    let mut j = 0;
    while j < lags.len() {
        if lags[j].is_none() {
            j += 1;
            continue;
        }
        let first = j;
        while j < lags.len() && lags[j].is_some() {
            j += 1;
        }
        let last = j - 1;
        let span_start = first * hop;
        let span_end = (last * hop + frame).min(samples.len());
        // local period: lag of the frame whose centre is closest
        let period_at = |pos: f64| -> f64 {
            let idx = ((pos - frame as f64 / 2.0) / hop as f64).round();
            let idx = (idx.max(first as f64) as usize).min(last);
            lags[idx].unwrap()
        };
        runs.extend(walk_cycles(samples, rate, span_start, span_end, period_at));
    }
    runs
}

fn refine_peak(x: &[f64], i: usize) -> (f64, f64) {
    if i == 0 || i + 1 >= x.len() {
        return (i as f64, x[i]);
    }
    let (d, h) = parabolic(x[i - 1], x[i], x[i + 1]);
    (i as f64 + d, h)
}

fn argmax(x: &[f64], lo: usize, hi: usize) -> usize {
    let mut best = lo;
    for i in lo..hi {
        if x[i] > x[best] {
            best = i;
        }
    }
    best
}

fn walk_cycles(
    x: &[f64],
    rate: u32,
    start: usize,
    end: usize,
    period_at: impl Fn(f64) -> f64,
) -> Vec<CycleRun> {
    let mut out = Vec::new();
    let mut current = CycleRun::default();
    let mut prev: Option<f64> = None;

    let t0 = period_at(start as f64);
    let first_hi = (start + t0.ceil() as usize).min(end);
    if first_hi <= start {
        return out;
    }
    let mut i = argmax(x, start, first_hi);
    loop {
        let (t, h) = refine_peak(x, i);
        if h > 0.0 {
            if let Some(p) = prev {
                current.periods_s.push((t - p) / rate as f64);
            }
            current.amplitudes.push(h);
            prev = Some(t);
        } else {
            // a non-positive peak breaks the chain
            if current.amplitudes.len() >= 2 {
                out.push(std::mem::take(&mut current));
            } else {
                current = CycleRun::default();
            }
            prev = None;
        }
        let period = period_at(t);
        let lo = (t + 0.75 * period).ceil() as usize;
        let hi = (t + 1.25 * period).floor() as usize + 1;
        if hi > end || lo >= hi {
            break;
        }
        i = argmax(x, lo, hi);
    }
    if current.amplitudes.len() >= 2 {
        out.push(current);
    }
    out
}
