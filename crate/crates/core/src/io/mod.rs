//! Audio clips, WAV files, corpus manifests and synthetic corpora.

mod manifest;
mod resample;
pub(crate) use resample::resample_to_len;
mod synth;
mod wav;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use manifest::{build_manifest, ClassDirMap, CorpusManifest, ManifestEntry};
pub use resample::{resample, RESAMPLE_TAPS};
pub use synth::{synth_clips, synth_corpus, SynthConfig};
pub use wav::{load_wav, save_wav};

/// Canonical processing rate in Hz.
pub const CANONICAL_RATE: u32 = 16_000;

/// The three recording conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    #[serde(rename = "SM")]
    SpiritualMeditation,
    #[serde(rename = "M")]
    Music,
    #[serde(rename = "NS")]
    NormalSilence,
}

impl ClassLabel {
    /// Class index order used by classifiers: SM, M, NS.
    pub const ALL: [ClassLabel; 3] = [
        ClassLabel::SpiritualMeditation,
        ClassLabel::Music,
        ClassLabel::NormalSilence,
    ];

    /// Column order of the calmness tables: SM, NS, M.
    pub const REPORT_ORDER: [ClassLabel; 3] = [
        ClassLabel::SpiritualMeditation,
        ClassLabel::NormalSilence,
        ClassLabel::Music,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ClassLabel::SpiritualMeditation => "SM",
            ClassLabel::Music => "M",
            ClassLabel::NormalSilence => "NS",
        }
    }

    pub fn index(self) -> usize {
        match self {
            ClassLabel::SpiritualMeditation => 0,
            ClassLabel::Music => 1,
            ClassLabel::NormalSilence => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Characteristic tone of the class in Hz.
    pub fn characteristic_hz(self) -> f64 {
        match self {
            ClassLabel::SpiritualMeditation => 25.0,
            ClassLabel::Music => 20.0,
            ClassLabel::NormalSilence => 30.0,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "SM" | "SpiritualMeditation" | "Spiritual" => Ok(ClassLabel::SpiritualMeditation),
            "M" | "Music" => Ok(ClassLabel::Music),
            "NS" | "NormalSilence" | "Normal" | "Silence" => Ok(ClassLabel::NormalSilence),
            other => Err(Error::InvalidArgument(format!("unknown class label {other:?}"))),
        }
    }
}

/// A mono recording with its rate and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub rate: u32,
    pub label: Option<ClassLabel>,
    pub id: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, rate: u32) -> Self {
        AudioClip {
            samples,
            rate,
            label: None,
            id: String::new(),
        }
    }

    pub fn with_label(mut self, label: ClassLabel) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.rate)
    }

    /// Same metadata, new samples.
    pub fn map_samples(&self, samples: Vec<f64>) -> Self {
        AudioClip {
            samples,
            rate: self.rate,
            label: self.label,
            id: self.id.clone(),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if self.samples.is_empty() {
            return Err(Error::EmptyAudio(self.id.clone()));
        }
        if self.samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("audio samples"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_codes_round_trip() {
        for l in ClassLabel::ALL {
            assert_eq!(l.code().parse::<ClassLabel>().unwrap(), l);
            assert_eq!(ClassLabel::from_index(l.index()), Some(l));
            let json = serde_json::to_string(&l).unwrap();
            assert_eq!(json, format!("\"{}\"", l.code()));
        }
        assert!("Jazz".parse::<ClassLabel>().is_err());
    }
}
