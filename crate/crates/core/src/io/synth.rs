use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{save_wav, AudioClip, ClassDirMap, ClassLabel, CorpusManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Generator settings for the synthetic desk-scale corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_per_class: usize,
    pub duration_s: f64,
    pub rate: u32,
    pub seed: u64,
    /// Signal-to-noise ratio in dB; `None` means noiseless.
    pub snr_db: Option<f64>,
    /// Absolute noise standard deviation added on top of `snr_db`.
    pub noise_sigma: f64,
    /// Carrier tone per class as (SM, M, NS) in Hz.
    pub tones_hz: [f64; 3],
    /// Overall level per class as (SM, M, NS).
    pub class_gain: [f64; 3],
    pub envelope_mean: f64,
    pub envelope_floor: f64,
    pub max_envelope_components: usize,
    pub max_envelope_hz: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_per_class: 8,
            duration_s: 2.0,
            rate: super::CANONICAL_RATE,
            seed: 7,
            snr_db: Some(30.0),
            noise_sigma: 0.0,
            tones_hz: [25.0, 20.0, 30.0],
            // Music loudest, silence quietest.
            class_gain: [1.6, 2.4, 1.0],
            envelope_mean: 0.22,
            envelope_floor: 0.1,
            max_envelope_components: 3,
            max_envelope_hz: 2.0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 {
            return Err(Error::InvalidArgument("n_per_class must be >= 1".into()));
        }
        if !(self.duration_s > 0.0) || self.rate == 0 {
            return Err(Error::InvalidArgument("duration and rate must be positive".into()));
        }
        if !(self.envelope_floor > 0.0) || self.envelope_mean < self.envelope_floor {
            return Err(Error::InvalidArgument(
                "envelope mean must be at least the positive floor".into(),
            ));
        }
        let nyquist = f64::from(self.rate) / 2.0;
        if self.tones_hz.iter().any(|&f| !(f > 0.0) || f >= nyquist) {
            return Err(Error::InvalidArgument("class tones must lie in (0, rate/2)".into()));
        }
        Ok(())
    }
}

/// A slowly varying, strictly positive envelope for one clip.
///
/// Components use whole cycles over the clip so the clip wraps smoothly.
pub(crate) fn random_envelope(cfg: &SynthConfig, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let duration = n as f64 / f64::from(cfg.rate);
    let max_cycles = (cfg.max_envelope_hz * duration - 1e-9).floor().max(0.0) as u32;
    let n_comp = if cfg.max_envelope_components == 0 {
        0
    } else {
        rng.gen_range(1..=cfg.max_envelope_components)
    };
    let budget = (cfg.envelope_mean - cfg.envelope_floor) / cfg.max_envelope_components.max(1) as f64;
    let comps: Vec<(f64, f64, f64)> = (0..n_comp)
        .map(|_| {
            let amp = rng.gen_range(0.0..=budget);
            let cycles = if max_cycles >= 1 { rng.gen_range(1..=max_cycles) } else { 0 };
            let phase = rng.gen_range(0.0..2.0 * PI);
            (amp, f64::from(cycles) / duration, phase)
        })
        .collect();
    (0..n)
        .map(|i| {
            let t = i as f64 / f64::from(cfg.rate);
            cfg.envelope_mean
                + comps
                    .iter()
                    .map(|(a, f, p)| a * (2.0 * PI * f * t + p).cos())
                    .sum::<f64>()
        })
        .collect()
}

fn class_slot(label: ClassLabel) -> usize {
    label.index()
}

/// Generate the synthetic clips in memory: `gain * A(t) * cos(2 pi f_c t)` plus noise.
pub fn synth_clips(cfg: &SynthConfig) -> Result<Vec<AudioClip>> {
    cfg.validate()?;
    let n = (cfg.duration_s * f64::from(cfg.rate)).round() as usize;
    let dirs = ClassDirMap::default();
    let mut clips = Vec::with_capacity(3 * cfg.n_per_class);
    for label in ClassLabel::ALL {
        let slot = class_slot(label);
        for i in 0..cfg.n_per_class {
            let mut rng = rng::stream(cfg.seed, &[tag::SYNTH, slot as u64, i as u64]);
            let env = random_envelope(cfg, n, &mut rng);
            let f_c = cfg.tones_hz[slot];
            let gain = cfg.class_gain[slot];
            let mut x: Vec<f64> = env
                .iter()
                .enumerate()
                .map(|(k, a)| gain * a * (2.0 * PI * f_c * k as f64 / f64::from(cfg.rate)).cos())
                .collect();
            let signal_rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
            let mut sigma = cfg.noise_sigma;
            if let Some(snr) = cfg.snr_db {
                let s = signal_rms / 10f64.powf(snr / 20.0);
                sigma = (sigma * sigma + s * s).sqrt();
            }
            if sigma > 0.0 {
                let mut noise_rng = rng::stream(cfg.seed, &[tag::NOISE, slot as u64, i as u64]);
                for v in &mut x {
                    let z: f64 = StandardNormal.sample(&mut noise_rng);
                    *v += sigma * z;
                }
            }
            let id = format!("{}/{}_{i:03}", dirs.dir(label), label.code().to_lowercase());
            clips.push(
                AudioClip::new(x, cfg.rate)
                    .with_label(label)
                    .with_id(id),
            );
        }
    }
    Ok(clips)
}

/// Generate the synthetic corpus and write it under `dir` with a manifest.
pub fn synth_corpus(dir: &Path, cfg: &SynthConfig) -> Result<CorpusManifest> {
    let clips = synth_clips(cfg)?;
    let mut entries = Vec::with_capacity(clips.len());
    for clip in &clips {
        let rel = format!("{}.wav", clip.id);
        save_wav(clip, &dir.join(&rel))?;
        entries.push(ManifestEntry {
            path: rel,
            label: clip.label.expect("synth clips are labelled"),
            duration_s: clip.duration_s(),
            rate: clip.rate,
        });
    }
    let manifest = CorpusManifest::new(dir, entries);
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}
