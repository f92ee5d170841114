#![no_main]

use libfuzzer_sys::fuzz_target;
use speechscreen::corpus::wav::decode_wav_bytes;

fuzz_target!(|data: &[u8]| {
    if let Ok(audio) = decode_wav_bytes(data) {
        assert!(audio.sample_rate_hz > 0);
        assert!(audio.samples.iter().all(|s| s.is_finite() && s.abs() <= 1.0));
    }
});
