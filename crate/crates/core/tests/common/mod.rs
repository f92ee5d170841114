//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use speechscreen::corpus::wav::encode_wav_pcm16;
use speechscreen::corpus::Label;

pub struct Subject {
    pub dataset_id: String,
    pub subject_id: String,
    pub label: Label,
}

/// A corpus of synthetic sustained vowels on disk.
pub struct SyntheticCorpus {
    pub dir: tempfile::TempDir,
    pub manifest: PathBuf,
    pub subjects: Vec<Subject>,
}

/// Harmonic-rich voiced tone with light noise, roughly like a sustained vowel.
pub fn voiced_tone(f0: f64, seconds: f64, rate: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = (seconds * rate as f64).round() as usize;
    let phase: f64 = rng.gen_range(0.0..2.0 * PI);
    (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            let mut x = 0.0;
            for h in 1..=8 {
                let hf = f0 * h as f64;
                if hf < rate as f64 / 2.0 {
                    x += (2.0 * PI * hf * t + phase * h as f64).sin() / h as f64;
                }
            }
            0.3 * x + 0.003 * rng.gen_range(-1.0..1.0)
        })
        .collect()
}

pub fn write_pcm16(path: &Path, samples: &[f64], rate: u32) {
    let frames: Vec<Vec<i16>> = samples
        .iter()
        .map(|&s| vec![(s.clamp(-1.0, 1.0) * 32767.0).round() as i16])
        .collect();
    std::fs::write(path, encode_wav_pcm16(&frames, rate)).unwrap();
}

fn manifest_text(subjects: &[Subject], label_of: impl Fn(usize, &Subject) -> Label) -> String {
    let mut text = String::from("dataset_id,subject_id,label,audio_path\n");
    for (i, s) in subjects.iter().enumerate() {
        text.push_str(&format!(
            "{},{},{},audio/{}_{}.wav\n",
            s.dataset_id,
            s.subject_id,
            label_of(i, s).digit(),
            s.dataset_id,
            s.subject_id
        ));
    }
    text
}

impl SyntheticCorpus {
    /// `datasets` lists (id, n_pos, n_neg). Every recording lasts `seconds`.
    pub fn generate(datasets: &[(&str, usize, usize)], seconds: f64, seed: u64) -> SyntheticCorpus {
        let rate = 16_000;
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("audio")).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut subjects = Vec::new();
        for &(ds, n_pos, n_neg) in datasets {
            for i in 0..n_pos + n_neg {
                let label = if i < n_pos { Label::Parkinson } else { Label::Control };
                let prefix = if label.is_positive() { "pd" } else { "hc" };
                let subject_id = format!("{prefix}{i:03}");
                let f0 = rng.gen_range(100.0..250.0);
                let samples = voiced_tone(f0, seconds, rate, &mut rng);
                write_pcm16(&dir.path().join(format!("audio/{ds}_{subject_id}.wav")), &samples, rate);
                subjects.push(Subject {
                    dataset_id: ds.to_string(),
                    subject_id,
                    label,
                });
            }
        }
        let manifest = dir.path().join("manifest.csv");
        std::fs::write(&manifest, manifest_text(&subjects, |_, s| s.label)).unwrap();
        SyntheticCorpus {
            dir,
            manifest,
            subjects,
        }
    }

    /// A manifest in the same directory carrying `labels` instead of the truth.
    pub fn answers_file(&self, name: &str, labels: &[Label]) -> PathBuf {
        let path = self.dir.path().join(name);
        std::fs::write(&path, manifest_text(&self.subjects, |i, _| labels[i])).unwrap();
        path
    }
}

/// Truth labels with the first `k_pos` positives and first `k_neg`
/// negatives flipped.
pub fn flip_first(subjects: &[Subject], k_pos: usize, k_neg: usize) -> Vec<Label> {
    let (mut seen_pos, mut seen_neg) = (0, 0);
    subjects
        .iter()
        .map(|s| {
            let seen = if s.label.is_positive() { &mut seen_pos } else { &mut seen_neg };
            let k = if s.label.is_positive() { k_pos } else { k_neg };
            *seen += 1;
            if *seen <= k {
                s.label.flipped()
            } else {
                s.label
            }
        })
        .collect()
}

/// Run the binary; returns (exit code, stdout, stderr).
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_speechscreen"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// MFCCs 1..=13 per frame straight from the definitions: Hann-windowed
/// 25 ms frames every 10 ms, a direct DFT at the next power of two, 26
/// triangular HTK-mel filters up to min(8 kHz, Nyquist), natural log
/// floored at 1e-10, orthonormal DCT-II.
pub fn mfcc_oracle(samples: &[f64], rate: u32) -> Vec<Vec<f64>> {
    let frame = (0.025 * rate as f64).round() as usize;
    let hop = (0.010 * rate as f64).round() as usize;
    let mut nfft = 1;
    while nfft < frame {
        nfft *= 2;
    }
    let cos_t: Vec<f64> = (0..nfft).map(|i| (2.0 * PI * i as f64 / nfft as f64).cos()).collect();
    let sin_t: Vec<f64> = (0..nfft).map(|i| (2.0 * PI * i as f64 / nfft as f64).sin()).collect();
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let inv_mel = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = mel(8000f64.min(rate as f64 / 2.0));
    let centres: Vec<f64> = (0..28).map(|i| inv_mel(top * i as f64 / 27.0)).collect();
    let mut frames = Vec::new();
    let mut start = 0;
    while start + frame <= samples.len() {
        let x: Vec<f64> = (0..frame)
            .map(|i| samples[start + i] * (0.5 - 0.5 * (2.0 * PI * i as f64 / (frame - 1) as f64).cos()))
            .collect();
        let power: Vec<f64> = (0..=nfft / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, v) in x.iter().enumerate() {
                    let idx = (k * n) % nfft;
                    re += v * cos_t[idx];
                    im -= v * sin_t[idx];
                }
                re * re + im * im
            })
            .collect();
        let log_e: Vec<f64> = (0..26)
            .map(|m| {
                let (a, b, c) = (centres[m], centres[m + 1], centres[m + 2]);
                let e: f64 = power
                    .iter()
                    .enumerate()
                    .map(|(k, p)| {
                        let f = k as f64 * rate as f64 / nfft as f64;
                        let w = if f > a && f <= b {
                            (f - a) / (b - a)
                        } else if f > b && f < c {
                            (c - f) / (c - b)
                        } else {
                            0.0
                        };
                        w * p
                    })
                    .sum();
                e.max(1e-10).ln()
            })
            .collect();
        frames.push(
            (1..=13)
                .map(|j| {
                    (2.0 / 26.0f64).sqrt()
                        * log_e
                            .iter()
                            .enumerate()
                            .map(|(i, v)| v * (PI * j as f64 * (2 * i + 1) as f64 / 52.0).cos())
                            .sum::<f64>()
                })
                .collect(),
        );
        start += hop;
    }
    frames
}

/// AUROC by counting every (positive, negative) pair; ties count one half.
pub fn auroc_pairs(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if !positive[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if positive[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    num / pairs
}

/// Percentile interval over replicate values: the k-th smallest value with
/// k the smallest integer such that k / n >= the tail probability.
/// Returns the sorted values and the two zero-based ranks.
pub fn percentile_interval(replicates: &[f64], level: f64) -> (Vec<f64>, usize, usize) {
    let mut v = replicates.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    let alpha = (1.0 - level) / 2.0;
    let rank = |p: f64| {
        let mut k = 1;
        while k < n && (k as f64) < p * n as f64 {
            k += 1;
        }
        k - 1
    };
    let (lo, hi) = (rank(alpha), rank(1.0 - alpha));
    (v, lo, hi)
}

/// Double-double arithmetic, enough for an exp-based reference value.
#[derive(Clone, Copy, Debug)]
pub struct Dd(pub f64, pub f64);

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd(s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd(s, b - (s - a))
}

impl Dd {
    pub fn from(a: f64) -> Dd {
        Dd(a, 0.0)
    }

    pub fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.0, o.0);
        let t = two_sum(self.1, o.1);
        let s = quick_two_sum(s.0, s.1 + t.0);
        quick_two_sum(s.0, s.1 + t.1)
    }

    pub fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p);
        quick_two_sum(p, e + self.0 * o.1 + self.1 * o.0)
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.0 / o.0;
        let r = self.add(o.mul(Dd::from(q1)).neg());
        let q2 = r.0 / o.0;
        let r = r.add(o.mul(Dd::from(q2)).neg());
        let q3 = r.0 / o.0;
        quick_two_sum(q1, q2).add(Dd::from(q3))
    }

    pub fn scale2(self, k: i32) -> Dd {
        let f = 2f64.powi(k);
        Dd(self.0 * f, self.1 * f)
    }

    pub fn exp(self) -> Dd {
        const LN2: Dd = Dd(std::f64::consts::LN_2, 2.319_046_813_846_299_6e-17);
        let k = (self.0 / LN2.0).round();
        let r = self.add(LN2.mul(Dd::from(k)).neg()).scale2(-10);
        let mut term = Dd::from(1.0);
        let mut sum = Dd::from(1.0);
        for i in 1..=20 {
            term = term.mul(r).div(Dd::from(i as f64));
            sum = sum.add(term);
        }
        for _ in 0..10 {
            sum = sum.mul(sum);
        }
        sum.scale2(k as i32)
    }
}

/// Probability of the larger of two log-probabilities after renormalising
/// over the pair, in double-double.
pub fn two_candidate_reference(logprob_0: f64, logprob_1: f64) -> f64 {
    let (hi, lo) = if logprob_1 >= logprob_0 {
        (logprob_1, logprob_0)
    } else {
        (logprob_0, logprob_1)
    };
    let d = two_sum(lo, -hi);
    let e = d.exp();
    Dd::from(1.0).div(Dd::from(1.0).add(e)).0
}
