//! Ordered feature registry.
//!
//! The canonical registry (version `v1`) holds 71 features. It is the first
//! 71 entries of a 76-entry candidate list; the documented listing ships as
//! `registry/v1.txt` next to the crate manifest and is checked against this
//! code by the test suite.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::spectrum::{LOG_MEL_BANDS, MFCC_COEFFS};
use super::FeatureError;

pub const CANONICAL_VERSION: &str = "v1";
pub const CANONICAL_LEN: usize = 71;
/// Documented listing of the canonical registry.
pub const V1_LISTING: &str = include_str!("../../registry/v1.txt");

/// What an extractor computes. Coefficient and band indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    MfccMean(u8),
    MfccSd(u8),
    JitterLocal,
    JitterAbsolute,
    JitterRap,
    JitterPpq5,
    JitterDdp,
    ShimmerLocal,
    ShimmerDb,
    ShimmerApq3,
    ShimmerApq5,
    ShimmerApq11,
    ShimmerDda,
    HnrMean,
    HnrSd,
    F0Mean,
    F0Sd,
    F0Min,
    F0Max,
    F0Median,
    SpectralCentroidMean,
    SpectralCentroidSd,
    SpectralBandwidthMean,
    SpectralBandwidthSd,
    SpectralRolloffMean,
    SpectralRolloffSd,
    SpectralFlatnessMean,
    SpectralFlatnessSd,
    ZcrMean,
    ZcrSd,
    RmsMean,
    RmsSd,
    LogMelMean(u8),
    VoicedFraction,
    PauseRate,
    MeanPauseDuration,
    SpeechPauseRatio,
    SpectralFluxMean,
    SpectralFluxSd,
    IntensityRange,
}

impl FeatureKind {
    /// Whether the value depends on a pitch track (zero on unvoiced segments).
    pub fn pitch_dependent(self) -> bool {
        use FeatureKind::*;
        matches!(
            self,
            JitterLocal
                | JitterAbsolute
                | JitterRap
                | JitterPpq5
                | JitterDdp
                | ShimmerLocal
                | ShimmerDb
                | ShimmerApq3
                | ShimmerApq5
                | ShimmerApq11
                | ShimmerDda
                | HnrMean
                | HnrSd
                | F0Mean
                | F0Sd
                | F0Min
                | F0Max
                | F0Median
        )
    }

    pub fn default_name(self) -> String {
        use FeatureKind::*;
        match self {
            MfccMean(i) => format!("mfcc_{i}_mean"),
            MfccSd(i) => format!("mfcc_{i}_sd"),
            JitterLocal => "jitter_local".into(),
            JitterAbsolute => "jitter_abs".into(),
            JitterRap => "jitter_rap".into(),
            JitterPpq5 => "jitter_ppq5".into(),
            JitterDdp => "jitter_ddp".into(),
            ShimmerLocal => "shimmer_local".into(),
            ShimmerDb => "shimmer_db".into(),
            ShimmerApq3 => "shimmer_apq3".into(),
            ShimmerApq5 => "shimmer_apq5".into(),
            ShimmerApq11 => "shimmer_apq11".into(),
            ShimmerDda => "shimmer_dda".into(),
            HnrMean => "hnr_mean".into(),
            HnrSd => "hnr_sd".into(),
            F0Mean => "f0_mean".into(),
            F0Sd => "f0_sd".into(),
            F0Min => "f0_min".into(),
            F0Max => "f0_max".into(),
            F0Median => "f0_median".into(),
            SpectralCentroidMean => "spectral_centroid_mean".into(),
            SpectralCentroidSd => "spectral_centroid_sd".into(),
            SpectralBandwidthMean => "spectral_bandwidth_mean".into(),
            SpectralBandwidthSd => "spectral_bandwidth_sd".into(),
            SpectralRolloffMean => "spectral_rolloff_mean".into(),
            SpectralRolloffSd => "spectral_rolloff_sd".into(),
            SpectralFlatnessMean => "spectral_flatness_mean".into(),
            SpectralFlatnessSd => "spectral_flatness_sd".into(),
            ZcrMean => "zcr_mean".into(),
            ZcrSd => "zcr_sd".into(),
            RmsMean => "rms_mean".into(),
            RmsSd => "rms_sd".into(),
            LogMelMean(i) => format!("logmel_{i}_mean"),
            VoicedFraction => "voiced_fraction".into(),
            PauseRate => "pause_rate".into(),
            MeanPauseDuration => "mean_pause_duration".into(),
            SpeechPauseRatio => "speech_pause_ratio".into(),
            SpectralFluxMean => "spectral_flux_mean".into(),
            SpectralFluxSd => "spectral_flux_sd".into(),
            IntensityRange => "intensity_range".into(),
        }
    }

    pub fn unit(self) -> &'static str {
        use FeatureKind::*;
        match self {
            MfccMean(_) | MfccSd(_) => "cepstral",
            JitterAbsolute | MeanPauseDuration => "s",
            JitterLocal | JitterRap | JitterPpq5 | JitterDdp | ShimmerLocal | ShimmerApq3
            | ShimmerApq5 | ShimmerApq11 | ShimmerDda | VoicedFraction | SpectralFlatnessMean
            | SpectralFlatnessSd | ZcrMean | ZcrSd | SpeechPauseRatio => "ratio",
            ShimmerDb | HnrMean | HnrSd | LogMelMean(_) | IntensityRange => "dB",
            F0Mean | F0Sd | F0Min | F0Max | F0Median | SpectralCentroidMean | SpectralCentroidSd
            | SpectralBandwidthMean | SpectralBandwidthSd | SpectralRolloffMean
            | SpectralRolloffSd => "Hz",
            RmsMean | RmsSd | SpectralFluxMean | SpectralFluxSd => "amplitude",
            PauseRate => "1/s",
        }
    }

    fn parse(id: &str) -> Option<FeatureKind> {
        use FeatureKind::*;
        let indexed = |prefix: &str, max: usize| -> Option<u8> {
            let rest = id.strip_prefix(prefix)?.strip_suffix(']')?;
            let i: u8 = rest.parse().ok()?;
            (1..=max as u8).contains(&i).then_some(i)
        };
        if let Some(i) = indexed("mfcc.mean[", MFCC_COEFFS) {
            return Some(MfccMean(i));
        }
        if let Some(i) = indexed("mfcc.sd[", MFCC_COEFFS) {
            return Some(MfccSd(i));
        }
        if let Some(i) = indexed("logmel.mean[", LOG_MEL_BANDS) {
            return Some(LogMelMean(i));
        }
        all_candidates()
            .into_iter()
            .find(|k| !matches!(k, MfccMean(_) | MfccSd(_) | LogMelMean(_)) && k.to_string() == id)
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use FeatureKind::*;
        let s = match self {
            MfccMean(i) => return write!(f, "mfcc.mean[{i}]"),
            MfccSd(i) => return write!(f, "mfcc.sd[{i}]"),
            LogMelMean(i) => return write!(f, "logmel.mean[{i}]"),
            JitterLocal => "jitter.local",
            JitterAbsolute => "jitter.absolute",
            JitterRap => "jitter.rap",
            JitterPpq5 => "jitter.ppq5",
            JitterDdp => "jitter.ddp",
            ShimmerLocal => "shimmer.local",
            ShimmerDb => "shimmer.db",
            ShimmerApq3 => "shimmer.apq3",
            ShimmerApq5 => "shimmer.apq5",
            ShimmerApq11 => "shimmer.apq11",
            ShimmerDda => "shimmer.dda",
            HnrMean => "hnr.mean",
            HnrSd => "hnr.sd",
            F0Mean => "f0.mean",
            F0Sd => "f0.sd",
            F0Min => "f0.min",
            F0Max => "f0.max",
            F0Median => "f0.median",
            SpectralCentroidMean => "spectral.centroid.mean",
            SpectralCentroidSd => "spectral.centroid.sd",
            SpectralBandwidthMean => "spectral.bandwidth.mean",
            SpectralBandwidthSd => "spectral.bandwidth.sd",
            SpectralRolloffMean => "spectral.rolloff85.mean",
            SpectralRolloffSd => "spectral.rolloff85.sd",
            SpectralFlatnessMean => "spectral.flatness.mean",
            SpectralFlatnessSd => "spectral.flatness.sd",
            ZcrMean => "zcr.mean",
            ZcrSd => "zcr.sd",
            RmsMean => "rms.mean",
            RmsSd => "rms.sd",
            VoicedFraction => "voicing.fraction",
            PauseRate => "pause.rate",
            MeanPauseDuration => "pause.mean_duration",
            SpeechPauseRatio => "pause.speech_ratio",
            SpectralFluxMean => "spectral.flux.mean",
            SpectralFluxSd => "spectral.flux.sd",
            IntensityRange => "intensity.range",
        };
        f.write_str(s)
    }
}

/// All 76 candidate features in documented order.
pub fn all_candidates() -> Vec<FeatureKind> {
    use FeatureKind::*;
    let mut v = Vec::with_capacity(76);
    v.extend((1..=MFCC_COEFFS as u8).map(MfccMean));
    v.extend((1..=MFCC_COEFFS as u8).map(MfccSd));
    v.extend([JitterLocal, JitterAbsolute, JitterRap, JitterPpq5, JitterDdp]);
    v.extend([ShimmerLocal, ShimmerDb, ShimmerApq3, ShimmerApq5, ShimmerApq11, ShimmerDda]);
    v.extend([HnrMean, HnrSd]);
    v.extend([F0Mean, F0Sd, F0Min, F0Max, F0Median]);
    v.extend([
        SpectralCentroidMean,
        SpectralCentroidSd,
        SpectralBandwidthMean,
        SpectralBandwidthSd,
        SpectralRolloffMean,
        SpectralRolloffSd,
        SpectralFlatnessMean,
        SpectralFlatnessSd,
    ]);
    v.extend([ZcrMean, ZcrSd, RmsMean, RmsSd]);
    v.extend((1..=LOG_MEL_BANDS as u8).map(LogMelMean));
    v.extend([
        VoicedFraction,
        PauseRate,
        MeanPauseDuration,
        SpeechPauseRatio,
        SpectralFluxMean,
        SpectralFluxSd,
        IntensityRange,
    ]);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub name: String,
    pub kind: FeatureKind,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRegistry {
    pub version: String,
    entries: Vec<FeatureEntry>,
}

impl FeatureRegistry {
    pub fn new(version: impl Into<String>, entries: Vec<FeatureEntry>) -> Result<Self, FeatureError> {
        let version = version.into();
        if entries.is_empty() {
            return Err(FeatureError::InvalidRegistry("registry has no entries".into()));
        }
        let mut names = HashSet::new();
        for e in &entries {
            if e.name.is_empty() || e.name.contains([':', ',', '\n', '\t']) {
                return Err(FeatureError::InvalidRegistry(format!("bad feature name {:?}", e.name)));
            }
            if !names.insert(e.name.as_str()) {
                return Err(FeatureError::InvalidRegistry(format!("duplicate feature name {:?}", e.name)));
            }
        }
        Ok(FeatureRegistry { version, entries })
    }

    /// Registry built from kinds with their default names and units.
    pub fn from_kinds(version: impl Into<String>, kinds: &[FeatureKind]) -> Result<Self, FeatureError> {
        let entries = kinds
            .iter()
            .map(|&kind| FeatureEntry {
                name: kind.default_name(),
                kind,
                unit: kind.unit().into(),
            })
            .collect();
        FeatureRegistry::new(version, entries)
    }

    /// The 71-entry registry `v1`.
    pub fn canonical() -> FeatureRegistry {
        FeatureRegistry::from_kinds(CANONICAL_VERSION, &all_candidates()[..CANONICAL_LEN])
            .expect("canonical registry is well formed")
    }

    pub fn by_version(version: &str) -> Result<FeatureRegistry, FeatureError> {
        match version {
            CANONICAL_VERSION => Ok(FeatureRegistry::canonical()),
            other => Err(FeatureError::InvalidRegistry(format!("unknown registry version {other:?}"))),
        }
    }

    pub fn entries(&self) -> &[FeatureEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    /// Tab-separated listing: a `# registry <version>` line, then
    /// `index<TAB>name<TAB>extractor<TAB>unit` per entry.
    pub fn to_listing(&self) -> String {
        let mut out = format!("# registry {}\n", self.version);
        for (i, e) in self.entries.iter().enumerate() {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", i + 1, e.name, e.kind, e.unit));
        }
        out
    }

    /// Parse a listing produced by [`FeatureRegistry::to_listing`].
    pub fn parse_listing(text: &str) -> Result<FeatureRegistry, FeatureError> {
        let bad = |m: String| FeatureError::InvalidRegistry(m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty listing".into()))?;
        let version = header
            .strip_prefix("# registry ")
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| bad(format!("bad header line {header:?}")))?;
        let mut entries = Vec::new();
        for (n, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(bad(format!("line {}: expected 4 tab-separated columns", n + 2)));
            }
            if cols[0].parse::<usize>().ok() != Some(n + 1) {
                return Err(bad(format!("line {}: index out of sequence", n + 2)));
            }
            let kind = FeatureKind::parse(cols[2])
                .ok_or_else(|| bad(format!("line {}: unknown extractor {:?}", n + 2, cols[2])))?;
            entries.push(FeatureEntry {
                name: cols[1].to_string(),
                kind,
                unit: cols[3].to_string(),
            });
        }
        FeatureRegistry::new(version, entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_has_71_unique_entries() {
        let r = FeatureRegistry::canonical();
        assert_eq!(r.len(), 71);
        assert_eq!(r.version, "v1");
        let names: HashSet<&str> = r.names().collect();
        assert_eq!(names.len(), 71);
        assert_eq!(all_candidates().len(), 76);
        let last = r.entries().last().unwrap();
        assert_eq!(last.kind, FeatureKind::PauseRate);
    }

    #[test]
    fn shipped_listing_matches_code() {
        assert_eq!(FeatureRegistry::canonical().to_listing(), V1_LISTING);
        assert_eq!(FeatureRegistry::parse_listing(V1_LISTING).unwrap(), FeatureRegistry::canonical());
    }

    #[test]
    fn every_candidate_round_trips_through_its_id() {
        for k in all_candidates() {
            assert_eq!(FeatureKind::parse(&k.to_string()), Some(k), "{k}");
        }
        assert_eq!(FeatureKind::parse("mfcc.mean[14]"), None);
        assert_eq!(FeatureKind::parse("nonsense"), None);
    }

    #[test]
    fn duplicates_rejected() {
        let e = FeatureEntry {
            name: "a".into(),
            kind: FeatureKind::JitterLocal,
            unit: "ratio".into(),
        };
        assert!(FeatureRegistry::new("x", vec![e.clone(), e]).is_err());
        assert!(FeatureRegistry::new("x", vec![]).is_err());
    }
}
