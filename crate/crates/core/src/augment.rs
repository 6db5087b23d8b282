//! Waveform augmentations and spectrogram masking.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::fft_complex;
use crate::error::{Error, Result};
use crate::features::TimeFreqGrid;
use crate::io::resample_to_len;
use crate::io::AudioClip;
use crate::rng::{self, tag};

/// Phase vocoder frame length.
pub const PV_WIN: usize = 1024;
/// Phase vocoder hop.
pub const PV_HOP: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Noise std as a fraction of max |x|.
    pub noise_sigma_rel: f64,
    /// Absolute noise std, added in quadrature to the relative one.
    pub noise_sigma_abs: f64,
    pub stretch_range: (f64, f64),
    /// Pitch shift drawn from U(-k, k) semitones.
    pub pitch_range_k: f64,
    pub freq_mask_max: usize,
    pub time_mask_max: usize,
    pub variants_per_clip: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            noise_sigma_rel: 0.01,
            noise_sigma_abs: 0.0,
            stretch_range: (0.8, 1.25),
            pitch_range_k: 2.0,
            freq_mask_max: 8,
            time_mask_max: 20,
            variants_per_clip: 5,
            seed: 7,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.stretch_range;
        let bad = |m: &str| Err(Error::InvalidArgument(format!("augment config: {m}")));
        if !(a > 0.0 && a <= b && b.is_finite()) {
            return bad("stretch range must satisfy 0 < a <= b");
        }
        if !(self.pitch_range_k >= 0.0 && self.pitch_range_k.is_finite()) {
            return bad("pitch range must be >= 0");
        }
        if !(self.noise_sigma_rel >= 0.0 && self.noise_sigma_abs >= 0.0) {
            return bad("noise sigma must be >= 0");
        }
        if self.variants_per_clip == 0 {
            return bad("variants_per_clip must be >= 1");
        }
        Ok(())
    }

    /// Identity transform: no noise, unit stretch, no pitch change.
    pub fn degenerate(&self) -> bool {
        self.noise_sigma_rel == 0.0
            && self.noise_sigma_abs == 0.0
            && self.stretch_range == (1.0, 1.0)
            && self.pitch_range_k == 0.0
    }
}

pub fn add_gaussian_noise(clip: &AudioClip, sigma: f64, seed: u64) -> Result<AudioClip> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sigma {sigma} must be >= 0")));
    }
    if sigma == 0.0 {
        return Ok(clip.clone());
    }
    let mut rng = rng::stream(seed, &[tag::NOISE]);
    let samples = clip
        .samples
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + sigma * z
        })
        .collect();
    Ok(clip.map_samples(samples))
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

fn wrap(p: f64) -> f64 {
    p - 2.0 * PI * ((p + PI) / (2.0 * PI)).floor()
}

/// Phase-vocoder stretch of a raw sequence. `rate > 1` shortens.
pub(crate) fn stretch_samples(x: &[f64], rate: f64, out_len: usize) -> Result<Vec<f64>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidArgument(format!("stretch rate {rate} must be > 0")));
    }
    if x.len() < PV_WIN {
        return Err(Error::TooShort {
            needed: PV_WIN,
            got: x.len(),
        });
    }
    let n_bins = PV_WIN / 2 + 1;
    let half = PV_WIN / 2;
    let win = hann(PV_WIN);
    // Centered frames over a zero-padded copy.
    let mut padded = vec![0.0; x.len() + PV_WIN];
    padded[half..half + x.len()].copy_from_slice(x);
    let n_frames = 1 + x.len() / PV_HOP;
    let mut mag = vec![vec![0.0; n_bins]; n_frames + 1];
    let mut phase = vec![vec![0.0; n_bins]; n_frames + 1];
    let mut re = vec![0.0; PV_WIN];
    let mut im = vec![0.0; PV_WIN];
    for f in 0..n_frames {
        let start = f * PV_HOP;
        for i in 0..PV_WIN {
            re[i] = padded.get(start + i).copied().unwrap_or(0.0) * win[i];
            im[i] = 0.0;
        }
        fft_complex(&mut re, &mut im, false)?;
        for k in 0..n_bins {
            mag[f][k] = re[k].hypot(im[k]);
            phase[f][k] = im[k].atan2(re[k]);
        }
    }
    let advance: Vec<f64> = (0..n_bins)
        .map(|k| 2.0 * PI * PV_HOP as f64 * k as f64 / PV_WIN as f64)
        .collect();

    let steps: Vec<f64> = (0..)
        .map(|i| i as f64 * rate)
        .take_while(|&t| t < n_frames as f64)
        .collect();
    let total = PV_WIN + PV_HOP * (steps.len().saturating_sub(1));
    let mut y = vec![0.0; total];
    let mut norm = vec![0.0; total];
    let mut acc: Vec<f64> = phase[0].clone();
    for (s, &t) in steps.iter().enumerate() {
        let f = t.floor() as usize;
        let alpha = t - f as f64;
        for k in 0..n_bins {
            let m = (1.0 - alpha) * mag[f][k] + alpha * mag[f + 1][k];
            re[k] = m * acc[k].cos();
            im[k] = m * acc[k].sin();
            if f + 1 < n_frames {
                let dp = wrap(phase[f + 1][k] - phase[f][k] - advance[k]);
                acc[k] += advance[k] + dp;
            } else {
                acc[k] += advance[k];
            }
        }
        for k in n_bins..PV_WIN {
            re[k] = re[PV_WIN - k];
            im[k] = -im[PV_WIN - k];
        }
        im[0] = 0.0;
        im[half] = 0.0;
        fft_complex(&mut re, &mut im, true)?;
        let start = s * PV_HOP;
        for i in 0..PV_WIN {
            y[start + i] += re[i] * win[i];
            norm[start + i] += win[i] * win[i];
        }
    }
    let floor = 1e-3 * norm.iter().copied().fold(0.0, f64::max);
    Ok((0..out_len)
        .map(|i| {
            let j = i + half;
            match (y.get(j), norm.get(j)) {
                (Some(v), Some(&w)) if w > floor => v / w,
                (Some(v), Some(_)) => v / floor,
                _ => 0.0,
            }
        })
        .collect())
}

/// Duration change without pitch change; output length is `round(N / rate)`.
pub fn time_stretch(clip: &AudioClip, rate: f64) -> Result<AudioClip> {
    let out_len = (clip.len() as f64 / rate).round() as usize;
    Ok(clip.map_samples(stretch_samples(&clip.samples, rate, out_len)?))
}

/// Scale every frequency by `2^(s/12)` while keeping the duration.
pub fn pitch_shift(clip: &AudioClip, semitones: f64) -> Result<AudioClip> {
    if !semitones.is_finite() {
        return Err(Error::InvalidArgument("semitones must be finite".into()));
    }
    if semitones == 0.0 {
        return Ok(clip.clone());
    }
    let factor = 2f64.powf(semitones / 12.0);
    let n = clip.len();
    let long_len = (n as f64 * factor).round() as usize;
    let stretched = stretch_samples(&clip.samples, 1.0 / factor, long_len)?;
    let out = resample_to_len(&stretched, long_len as f64, n as f64, n);
    Ok(clip.map_samples(out))
}

/// One frequency band and one time span set to the grid minimum.
pub fn spec_mask(grid: &TimeFreqGrid, f_max: usize, t_max: usize, seed: u64) -> Result<TimeFreqGrid> {
    if f_max > grid.rows || t_max > grid.cols {
        return Err(Error::InvalidArgument(format!(
            "mask extents ({f_max}, {t_max}) exceed grid ({}, {})",
            grid.rows, grid.cols
        )));
    }
    let mut out = grid.clone();
    if f_max == 0 && t_max == 0 {
        return Ok(out);
    }
    let floor = grid.min_value();
    let mut rng = rng::stream(seed, &[tag::MASK]);
    let fw = rng.gen_range(0..=f_max);
    let f0 = rng.gen_range(0..=grid.rows - fw);
    let tw = rng.gen_range(0..=t_max);
    let t0 = rng.gen_range(0..=grid.cols - tw);
    for r in f0..f0 + fw {
        for c in 0..grid.cols {
            out.set(r, c, floor);
        }
    }
    for r in 0..grid.rows {
        for c in t0..t0 + tw {
            out.set(r, c, floor);
        }
    }
    Ok(out)
}

/// Draw the parameters of one variant and apply noise, stretch and pitch.
pub fn augment_variant(clip: &AudioClip, cfg: &AugmentConfig, variant: u64) -> Result<AudioClip> {
    let base = [tag::AUGMENT, rng::hash_str(&clip.id), variant];
    let mut draw = rng::stream(cfg.seed, &base);
    let (a, b) = cfg.stretch_range;
    let r = if a < b { draw.gen_range(a..b) } else { a };
    let k = cfg.pitch_range_k;
    let s = if k > 0.0 { draw.gen_range(-k..k) } else { 0.0 };
    let noise_seed = rng::derive(cfg.seed, &[base[0], base[1], base[2], tag::NOISE]);

    let peak = clip.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sigma = (cfg.noise_sigma_rel * peak).hypot(cfg.noise_sigma_abs);
    let mut out = add_gaussian_noise(clip, sigma, noise_seed)?;
    if r != 1.0 {
        out = time_stretch(&out, r)?;
    }
    if s != 0.0 {
        out = pitch_shift(&out, s)?;
    }
    Ok(out)
}

/// `variants_per_clip` augmented copies, keyed by (seed, clip id, variant index).
pub fn augment_pipeline(clip: &AudioClip, cfg: &AugmentConfig) -> Result<Vec<AudioClip>> {
    cfg.validate()?;
    (0..cfg.variants_per_clip as u64)
        .map(|v| {
            let mut out = augment_variant(clip, cfg, v)?;
            out.id = format!("{}.aug{}", clip.id, v + 1);
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::GridDomain;
    use crate::dsp::{fft, magnitude};
    use crate::validation::spectral_peak_hz;
    use proptest::prelude::*;

    fn tone(hz: f64, n: usize) -> AudioClip {
        AudioClip::new(
            (0..n)
                .map(|i| (2.0 * PI * hz * i as f64 / 16_000.0).sin())
                .collect(),
            16_000,
        )
        .with_id("t")
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma) * (x - ma);
            sbb += (y - mb) * (y - mb);
        }
        sab / (saa * sbb).sqrt()
    }

    fn peak(clip: &AudioClip) -> (f64, f64) {
        let mag = magnitude(&fft(&clip.samples).unwrap());
        (spectral_peak_hz(&mag, 16_000.0), 16_000.0 / mag.len() as f64)
    }

    #[test]
    fn noise_statistics() {
        let clip = AudioClip::new(vec![0.25; 160_000], 16_000);
        let noisy = add_gaussian_noise(&clip, 0.1, 3).unwrap();
        let d: Vec<f64> = noisy.samples.iter().map(|v| v - 0.25).collect();
        let m = d.iter().sum::<f64>() / d.len() as f64;
        let sd = (d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / d.len() as f64).sqrt();
        assert!((0.099..=0.101).contains(&sd), "{sd}");
        assert_eq!(noisy, add_gaussian_noise(&clip, 0.1, 3).unwrap());
        assert_eq!(add_gaussian_noise(&clip, 0.0, 3).unwrap(), clip);
        assert!(add_gaussian_noise(&clip, -1.0, 3).is_err());
    }

    #[test]
    fn unit_stretch_is_near_identity() {
        let mut x = tone(440.0, 16_000);
        x.samples.iter_mut().enumerate().for_each(|(i, v)| *v += 0.5 * (i as f64 * 0.071).sin());
        let y = time_stretch(&x, 1.0).unwrap();
        assert!((y.len() as isize - x.len() as isize).abs() <= PV_HOP as isize);
        assert!(corr(&x.samples, &y.samples) > 0.99);
    }

    #[test]
    fn stretch_changes_length_not_pitch() {
        let x = tone(440.0, 32_000);
        let y = time_stretch(&x, 2.0).unwrap();
        assert_eq!(y.len(), 16_000);
        assert_eq!(y.rate, 16_000);
        let z = time_stretch(&x, 0.8).unwrap();
        assert_eq!(z.len(), 40_000);
        let (hz, bin) = peak(&z);
        assert!((hz - 440.0).abs() <= bin, "{hz}");
        assert!(time_stretch(&tone(440.0, 1000), 1.0).is_err());
    }

    #[test]
    fn reciprocal_stretches_round_trip() {
        let x = tone(330.0, 16_000);
        for r in [0.8, 1.25, 1.1] {
            let y = time_stretch(&time_stretch(&x, r).unwrap(), 1.0 / r).unwrap();
            assert!(corr(&x.samples, &y.samples) > 0.95, "r={r}");
        }
    }

    #[test]
    fn octave_shifts() {
        let up = pitch_shift(&tone(440.0, 16_000), 12.0).unwrap();
        let (hz, bin) = peak(&up);
        assert!((hz - 880.0).abs() <= bin, "{hz}");
        assert_eq!(up.len(), 16_000);
        let down = pitch_shift(&tone(880.0, 16_000), -12.0).unwrap();
        let (hz, bin) = peak(&down);
        assert!((hz - 440.0).abs() <= bin, "{hz}");
        let same = pitch_shift(&tone(440.0, 16_000), 0.0).unwrap();
        assert_eq!(peak(&same).0, peak(&tone(440.0, 16_000)).0);
    }

    fn grid() -> TimeFreqGrid {
        TimeFreqGrid {
            rows: 16,
            cols: 40,
            values: (0..640).map(|v| (v as f64 * 0.37).sin()).collect(),
            row_hz: vec![0.0; 16],
            hop_s: 0.01,
            domain: GridDomain::LogMel,
        }
    }

    #[test]
    fn zero_mask_is_identity() {
        assert_eq!(spec_mask(&grid(), 0, 0, 1).unwrap(), grid());
        assert!(spec_mask(&grid(), 17, 0, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn mask_touches_one_band_and_one_span(seed in any::<u64>(), f in 0usize..=16, t in 0usize..=40) {
            let g = grid();
            let m = spec_mask(&g, f, t, seed).unwrap();
            prop_assert_eq!(&m, &spec_mask(&g, f, t, seed).unwrap());
            let floor = g.min_value();
            let rows: Vec<usize> = (0..16).filter(|&r| (0..40).all(|c| m.get(r, c) == floor)).collect();
            let cols: Vec<usize> = (0..40).filter(|&c| (0..16).all(|r| m.get(r, c) == floor)).collect();
            for r in 0..16 {
                for c in 0..40 {
                    let v = m.get(r, c);
                    if v != g.get(r, c) {
                        prop_assert!(v == floor && (rows.contains(&r) || cols.contains(&c)));
                    }
                }
            }
            if t < 40 {
                prop_assert!(rows.len() <= f);
                prop_assert!(rows.windows(2).all(|w| w[1] == w[0] + 1));
            }
            if f < 16 {
                prop_assert!(cols.len() <= t);
                prop_assert!(cols.windows(2).all(|w| w[1] == w[0] + 1));
            }
        }
    }

    #[test]
    fn pipeline_variants() {
        let clip = tone(300.0, 8000);
        let cfg = AugmentConfig::default();
        let v = augment_pipeline(&clip, &cfg).unwrap();
        assert_eq!(v.len(), 5);
        for i in 0..5 {
            assert_eq!(v[i].rate, 16_000);
            assert_eq!(v[i].id, format!("t.aug{}", i + 1));
            for j in i + 1..5 {
                assert_ne!(v[i].samples, v[j].samples);
            }
        }
        assert_eq!(v, augment_pipeline(&clip, &cfg).unwrap());
        let other = augment_pipeline(&clip.clone().with_id("u"), &cfg).unwrap();
        assert_ne!(v[0].samples, other[0].samples);
    }

    #[test]
    fn degenerate_pipeline_copies() {
        let clip = tone(300.0, 8000);
        let cfg = AugmentConfig {
            noise_sigma_rel: 0.0,
            stretch_range: (1.0, 1.0),
            pitch_range_k: 0.0,
            ..AugmentConfig::default()
        };
        assert!(cfg.degenerate());
        for v in augment_pipeline(&clip, &cfg).unwrap() {
            assert_eq!(v.samples, clip.samples);
        }
        let bad = AugmentConfig {
            stretch_range: (1.2, 1.0),
            ..cfg
        };
        assert!(augment_pipeline(&clip, &bad).is_err());
    }
}
