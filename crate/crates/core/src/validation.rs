//! Envelope-based dataset validation.
//!
//! Each clip is compared against `A(t) cos(2 pi f_c t + phi)` where `A` is its
//! own analytic envelope and `f_c` the characteristic tone of its class.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dsp::{analytic_envelope, magnitude, next_pow2, ComplexSpectrum};
use crate::error::{Error, Result};
use crate::io::{resample, AudioClip, ClassLabel, CorpusManifest, CANONICAL_RATE};
use crate::parallel;

/// Fraction trimmed from each end before envelope statistics.
pub const EDGE_TRIM: f64 = 0.05;
const PHASE_GRID: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoreticalModel {
    /// Characteristic tone per class as (SM, M, NS) in Hz.
    pub tones_hz: [f64; 3],
    pub phase: f64,
    /// Pick the phase maximizing correlation over a 32-point grid instead of `phase`.
    pub phase_search: bool,
}

impl Default for TheoreticalModel {
    fn default() -> Self {
        TheoreticalModel {
            tones_hz: [25.0, 20.0, 30.0],
            phase: 0.0,
            phase_search: false,
        }
    }
}

impl TheoreticalModel {
    pub fn tone(&self, label: ClassLabel) -> f64 {
        self.tones_hz[label.index()]
    }
}

fn carrier(n: usize, rate: f64, f_c: f64, phase: f64) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| (2.0 * PI * f_c * i as f64 / rate + phase).cos())
}

/// `A(t) cos(2 pi f_c t + phase)` with `A` the analytic envelope of the clip.
pub fn reconstruct_theoretical(clip: &AudioClip, f_c: f64, phase: f64) -> Result<Vec<f64>> {
    let rate = f64::from(clip.rate);
    if !(f_c > 0.0) || f_c >= rate / 2.0 {
        return Err(Error::InvalidArgument(format!(
            "characteristic frequency {f_c} Hz outside (0, {})",
            rate / 2.0
        )));
    }
    let env = analytic_envelope(&clip.samples)?;
    Ok(env
        .iter()
        .zip(carrier(env.len(), rate, f_c, phase))
        .map(|(a, c)| a * c)
        .collect())
}

/// Phase on a 32-point grid that maximizes correlation with the clip.
pub fn best_phase(clip: &AudioClip, f_c: f64) -> Result<f64> {
    let env = analytic_envelope(&clip.samples)?;
    let rate = f64::from(clip.rate);
    let mut best = (0.0, f64::NEG_INFINITY);
    for k in 0..PHASE_GRID {
        let phase = 2.0 * PI * k as f64 / PHASE_GRID as f64;
        let corr: f64 = clip
            .samples
            .iter()
            .zip(&env)
            .zip(carrier(env.len(), rate, f_c, phase))
            .map(|((x, a), c)| x * a * c)
            .sum();
        if corr > best.1 {
            best = (phase, corr);
        }
    }
    Ok(best.0)
}

pub fn rmse(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument("rmse of empty sequences".into()));
    }
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / x.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeStats {
    pub env_mean: f64,
    pub env_std: f64,
    pub energy: f64,
}

pub(crate) fn interior(n: usize) -> std::ops::Range<usize> {
    let trim = (n as f64 * EDGE_TRIM).floor() as usize;
    if n > 2 * trim {
        trim..n - trim
    } else {
        0..n
    }
}

/// Interior envelope mean and population std, plus whole-clip energy `sum x^2`.
pub fn envelope_stats(clip: &AudioClip) -> Result<EnvelopeStats> {
    if clip.is_empty() {
        return Err(Error::EmptyAudio(clip.id.clone()));
    }
    let env = if clip.len() >= 8 {
        analytic_envelope(&clip.samples)?
    } else {
        clip.samples.iter().map(|x| x.abs()).collect()
    };
    let inner = &env[interior(env.len())];
    let n = inner.len() as f64;
    let mean = inner.iter().sum::<f64>() / n;
    let var = inner.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    Ok(EnvelopeStats {
        env_mean: mean,
        env_std: var.sqrt(),
        energy: clip.samples.iter().map(|x| x * x).sum(),
    })
}

fn padded_magnitude(x: &[f64], n_fft: usize) -> Vec<f64> {
    let mut re = x.to_vec();
    re.resize(n_fft, 0.0);
    let mut im = vec![0.0; n_fft];
    crate::dsp::fft_complex(&mut re, &mut im, false).expect("power-of-two length");
    magnitude(&ComplexSpectrum {
        re,
        im,
        input_len: x.len(),
    })
}

/// Frequency of the largest non-DC bin in the lower half of a magnitude spectrum.
pub fn spectral_peak_hz(mag: &[f64], rate: f64) -> f64 {
    let n = mag.len();
    if n < 4 {
        return 0.0;
    }
    let k = (1..=n / 2)
        .max_by(|&a, &b| mag[a].total_cmp(&mag[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    k as f64 * rate / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub id: String,
    pub label: ClassLabel,
    pub rmse: f64,
    pub env_mean: f64,
    pub env_std: f64,
    pub energy: f64,
    pub peak_hz: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub n: usize,
    pub rmse_mean: f64,
    pub env_mean: f64,
    pub env_std: f64,
    pub energy_mean: f64,
    /// Peak of the class-mean magnitude spectrum.
    pub peak_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub model: TheoreticalModel,
    pub per_clip: Vec<ValidationRecord>,
    pub per_class: BTreeMap<ClassLabel, ClassSummary>,
    pub empty_classes: Vec<ClassLabel>,
}

fn to_canonical(clip: &AudioClip) -> Result<AudioClip> {
    if clip.rate == CANONICAL_RATE {
        Ok(clip.clone())
    } else {
        resample(clip, CANONICAL_RATE)
    }
}

/// Validate one clip against the model for its class.
pub fn validate_clip(clip: &AudioClip, model: &TheoreticalModel) -> Result<ValidationRecord> {
    let label = clip
        .label
        .ok_or_else(|| Error::InvalidArgument(format!("clip {} has no label", clip.id)))?;
    let f_c = model.tone(label);
    let phase = if model.phase_search {
        best_phase(clip, f_c)?
    } else {
        model.phase
    };
    let theo = reconstruct_theoretical(clip, f_c, phase)?;
    let stats = envelope_stats(clip)?;
    let mag = padded_magnitude(&clip.samples, next_pow2(clip.len()));
    Ok(ValidationRecord {
        id: clip.id.clone(),
        label,
        rmse: rmse(&clip.samples, &theo)?,
        env_mean: stats.env_mean,
        env_std: stats.env_std,
        energy: stats.energy,
        peak_hz: spectral_peak_hz(&mag, f64::from(clip.rate)),
        phase,
    })
}

/// Validate in-memory clips (resampled to the canonical rate first).
pub fn validate_clips(
    clips: &[AudioClip],
    model: &TheoreticalModel,
    jobs: usize,
) -> Result<ValidationReport> {
    if clips.is_empty() {
        return Err(Error::InvalidArgument("nothing to validate".into()));
    }
    let canon: Vec<AudioClip> = parallel::map_ordered(clips, jobs, |c| {
        to_canonical(c).map_err(|e| e.for_clip(&c.id))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let per_clip: Vec<ValidationRecord> = parallel::map_ordered(&canon, jobs, |c| {
        validate_clip(c, model).map_err(|e| e.for_clip(&c.id))
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let mut per_class = BTreeMap::new();
    let mut empty_classes = Vec::new();
    for label in ClassLabel::ALL {
        let members: Vec<usize> = (0..per_clip.len())
            .filter(|&i| per_clip[i].label == label)
            .collect();
        if members.is_empty() {
            log::warn!("class {label} has no clips");
            empty_classes.push(label);
            continue;
        }
        let n = members.len() as f64;
        let mean_of = |f: fn(&ValidationRecord) -> f64| {
            members.iter().map(|&i| f(&per_clip[i])).sum::<f64>() / n
        };
        let n_fft = members
            .iter()
            .map(|&i| next_pow2(canon[i].len()))
            .max()
            .unwrap_or(1);
        let mut mean_mag = vec![0.0; n_fft];
        for &i in &members {
            for (acc, m) in mean_mag.iter_mut().zip(padded_magnitude(&canon[i].samples, n_fft)) {
                *acc += m / n;
            }
        }
        per_class.insert(
            label,
            ClassSummary {
                n: members.len(),
                rmse_mean: mean_of(|r| r.rmse),
                env_mean: mean_of(|r| r.env_mean),
                env_std: mean_of(|r| r.env_std),
                energy_mean: mean_of(|r| r.energy),
                peak_hz: spectral_peak_hz(&mean_mag, f64::from(CANONICAL_RATE)),
            },
        );
    }
    Ok(ValidationReport {
        model: *model,
        per_clip,
        per_class,
        empty_classes,
    })
}

/// Load every manifest entry and validate it.
pub fn validate_corpus(
    manifest: &CorpusManifest,
    model: &TheoreticalModel,
    jobs: usize,
) -> Result<ValidationReport> {
    if manifest.is_empty() {
        return Err(Error::EmptyCorpus(manifest.base.clone()));
    }
    let clips: Vec<AudioClip> = parallel::map_ordered(&manifest.entries, jobs, |e| manifest.load_clip(e))
        .into_iter()
        .collect::<Result<_>>()?;
    validate_clips(&clips, model, jobs)
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Per-clip rows followed by one `class:<label>` row per class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,label,rmse,env_mean,env_std,energy,peak_hz\n");
        for r in &self.per_clip {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.id, r.label, r.rmse, r.env_mean, r.env_std, r.energy, r.peak_hz
            ));
        }
        for (label, s) in &self.per_class {
            out.push_str(&format!(
                "class:{label},{label},{},{},{},{},{}\n",
                s.rmse_mean, s.env_mean, s.env_std, s.energy_mean, s.peak_hz
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tone(f: f64, n: usize) -> AudioClip {
        AudioClip::new(carrier(n, 16_000.0, f, 0.0).collect(), 16_000)
    }

    #[test]
    fn matched_tone_reconstructs() {
        let clip = tone(25.0, 16_000);
        let theo = reconstruct_theoretical(&clip, 25.0, 0.0).unwrap();
        let r = interior(clip.len());
        assert!(rmse(&clip.samples[r.clone()], &theo[r]).unwrap() < 1e-2);
    }

    #[test]
    fn zero_clip_and_mismatched_tone() {
        let zero = AudioClip::new(vec![0.0; 1000], 16_000);
        assert!(reconstruct_theoretical(&zero, 25.0, 0.0).unwrap().iter().all(|&v| v == 0.0));

        let clip = tone(25.0, 16_000);
        let theo = reconstruct_theoretical(&clip, 30.0, 0.0).unwrap();
        let mag = padded_magnitude(&theo, next_pow2(theo.len()));
        let peak = spectral_peak_hz(&mag, 16_000.0);
        assert!((peak - 30.0).abs() <= 16_000.0 / 16_384.0);
        assert!(reconstruct_theoretical(&clip, 9_000.0, 0.0).is_err());
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 5.0]).unwrap() - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn envelope_stat_examples() {
        let s = envelope_stats(&tone(100.0, 16_000)).unwrap();
        assert!((s.env_mean - 1.0).abs() < 1e-3);
        assert!(s.env_std < 1e-3);
        assert!((s.energy - 8000.0).abs() < 1e-6);
        let z = envelope_stats(&AudioClip::new(vec![0.0; 100], 16_000)).unwrap();
        assert_eq!((z.env_mean, z.env_std, z.energy), (0.0, 0.0, 0.0));
    }

    #[test]
    fn phase_search_finds_shift() {
        let samples: Vec<f64> = carrier(16_000, 16_000.0, 25.0, PI / 2.0).collect();
        let clip = AudioClip::new(samples, 16_000);
        let p = best_phase(&clip, 25.0).unwrap();
        assert!((p - PI / 2.0).abs() < 1e-9);
    }

    #[test]
    fn single_clip_corpus_aggregate() {
        let clip = tone(25.0, 8000)
            .with_label(ClassLabel::SpiritualMeditation)
            .with_id("a");
        let rep = validate_clips(&[clip], &TheoreticalModel::default(), 1).unwrap();
        let rec = &rep.per_clip[0];
        let cls = &rep.per_class[&ClassLabel::SpiritualMeditation];
        assert_eq!(cls.n, 1);
        assert_eq!(cls.rmse_mean, rec.rmse);
        assert_eq!(cls.env_mean, rec.env_mean);
        assert_eq!(cls.energy_mean, rec.energy);
        assert_eq!(cls.peak_hz, rec.peak_hz);
        assert_eq!(rep.empty_classes.len(), 2);
        assert!(rep.to_csv().lines().count() == 3);
    }

    #[test]
    fn constant_envelope_iff_zero_std() {
        let am: Vec<f64> = (0..16_000)
            .map(|i| {
                let t = i as f64 / 16_000.0;
                (1.0 + 0.3 * (2.0 * PI * 2.0 * t).cos()) * (2.0 * PI * 400.0 * t).cos()
            })
            .collect();
        assert!(envelope_stats(&AudioClip::new(am, 16_000)).unwrap().env_std > 0.1);
        assert!(envelope_stats(&tone(400.0, 16_000)).unwrap().env_std < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn rmse_scales_with_amplitude(alpha in 0.01f64..20.0, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..512).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let clip = AudioClip::new(x.clone(), 16_000);
            let scaled = AudioClip::new(x.iter().map(|v| v * alpha).collect(), 16_000);
            let a = rmse(&clip.samples, &reconstruct_theoretical(&clip, 25.0, 0.0).unwrap()).unwrap();
            let b = rmse(&scaled.samples, &reconstruct_theoretical(&scaled, 25.0, 0.0).unwrap()).unwrap();
            prop_assert!((b - alpha * a).abs() < 1e-9 * (1.0 + b));
        }

        #[test]
        fn rmse_symmetric(x in proptest::collection::vec(-1.0f64..1.0, 1..50)) {
            let y: Vec<f64> = x.iter().rev().copied().collect();
            prop_assert_eq!(rmse(&x, &y).unwrap(), rmse(&y, &x).unwrap());
        }
    }
}
