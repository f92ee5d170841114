//! Minimal RIFF/WAVE reader and writer.
//!
//! Reads PCM 16-bit integer and IEEE 32-bit float data, including the
//! `WAVE_FORMAT_EXTENSIBLE` wrapper around those two encodings. Every
//! channel layout is accepted and downmixed to mono by the per-frame
//! arithmetic mean. Integer samples are scaled by 1/32768 so that -32768
//! maps to exactly -1.0.

use std::path::Path;

use super::{AudioBuffer, CorpusError};

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_IEEE_FLOAT: u16 = 0x0003;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SampleEncoding {
    Pcm16,
    Float32,
}

impl SampleEncoding {
    fn bytes_per_sample(self) -> usize {
        match self {
            SampleEncoding::Pcm16 => 2,
            SampleEncoding::Float32 => 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct FormatChunk {
    encoding: SampleEncoding,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
}

/// Decode a WAV file from disk into a mono buffer.
pub fn decode_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, CorpusError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_wav_bytes(&bytes)
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn corrupt(msg: impl Into<String>) -> CorpusError {
    CorpusError::CorruptFile(msg.into())
}

fn parse_fmt(body: &[u8]) -> Result<FormatChunk, CorpusError> {
    if body.len() < 16 {
        return Err(corrupt("fmt chunk shorter than 16 bytes"));
    }
    let mut tag = read_u16(body, 0);
    let channels = read_u16(body, 2);
    let sample_rate = read_u32(body, 4);
    let block_align = read_u16(body, 12);
    let bits = read_u16(body, 14);
    if tag == FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the subformat GUID,
        // whose first two bytes carry the real format tag.
        if body.len() < 40 {
            return Err(corrupt("extensible fmt chunk shorter than 40 bytes"));
        }
        tag = read_u16(body, 24);
    }
    let encoding = match (tag, bits) {
        (FORMAT_PCM, 16) => SampleEncoding::Pcm16,
        (FORMAT_IEEE_FLOAT, 32) => SampleEncoding::Float32,
        _ => {
            return Err(CorpusError::UnsupportedEncoding {
                format_tag: tag,
                bits_per_sample: bits,
            })
        }
    };
    if channels == 0 {
        return Err(corrupt("zero channels"));
    }
    if sample_rate == 0 {
        return Err(corrupt("zero sample rate"));
    }
    let expected_align = channels as usize * encoding.bytes_per_sample();
    if block_align as usize != expected_align {
        return Err(corrupt(format!(
            "block_align {block_align} does not match {channels} channel(s) of {bits}-bit samples"
        )));
    }
    Ok(FormatChunk {
        encoding,
        channels,
        sample_rate,
        block_align,
    })
}

/// Decode an in-memory WAV image. Never panics on malformed input.
pub fn decode_wav_bytes(bytes: &[u8]) -> Result<AudioBuffer, CorpusError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(corrupt("missing RIFF/WAVE header"));
    }

    let mut fmt: Option<FormatChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let declared = read_u32(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        // Streaming writers leave the size field at 0 or 0xFFFFFFFF; clamp to
        // what is actually present.
        let body_end = body_start.saturating_add(declared).min(bytes.len());
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => fmt = Some(parse_fmt(body)?),
            b"data" => {
                data = Some(body);
                if fmt.is_some() {
                    break;
                }
            }
            _ => {}
        }
        // chunks are word aligned
        let padded = declared.saturating_add(declared & 1);
        pos = body_start.saturating_add(padded);
    }

    let fmt = fmt.ok_or_else(|| corrupt("no fmt chunk"))?;
    let data = data.ok_or_else(|| corrupt("no data chunk"))?;

    let frame_bytes = fmt.block_align as usize;
    let n_frames = data.len() / frame_bytes;
    if n_frames == 0 {
        return Err(CorpusError::EmptyAudio);
    }
    let channels = fmt.channels as usize;
    let mut samples = Vec::with_capacity(n_frames);
    for frame in data.chunks_exact(frame_bytes) {
        let mut acc = 0.0f64;
        match fmt.encoding {
            SampleEncoding::Pcm16 => {
                for c in frame.chunks_exact(2) {
                    acc += i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0;
                }
            }
            SampleEncoding::Float32 => {
                for c in frame.chunks_exact(4) {
                    let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
                    if !v.is_finite() {
                        return Err(corrupt("non-finite float sample"));
                    }
                    acc += v.clamp(-1.0, 1.0);
                }
            }
        }
        samples.push(acc / channels as f64);
    }
    AudioBuffer::new(samples, fmt.sample_rate)
}

/// Encode a mono buffer as a 32-bit float WAV image.
pub fn encode_wav_f32(audio: &AudioBuffer) -> Vec<u8> {
    let data_len = audio.samples.len() * 4;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_IEEE_FLOAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&audio.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate_hz * 4).to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&32u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &audio.samples {
        out.extend_from_slice(&(s as f32).to_le_bytes());
    }
    out
}

/// Encode interleaved 16-bit PCM frames. Used to build fixtures.
pub fn encode_wav_pcm16(frames: &[Vec<i16>], sample_rate_hz: u32) -> Vec<u8> {
    let channels = frames.first().map_or(1, |f| f.len()).max(1);
    let data_len = frames.len() * channels * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&(channels as u16).to_le_bytes());
    out.extend_from_slice(&sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(sample_rate_hz * channels as u32 * 2).to_le_bytes());
    out.extend_from_slice(&((channels * 2) as u16).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for frame in frames {
        for &s in frame {
            out.extend_from_slice(&s.to_le_bytes());
        }
    }
    out
}

/// Write a mono buffer to disk as 32-bit float WAV.
pub fn write_wav_f32(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<(), CorpusError> {
    let path = path.as_ref();
    std::fs::write(path, encode_wav_f32(audio)).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}
