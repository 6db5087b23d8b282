//! Log-mel spectrograms and the 25-dimensional clip descriptor.

mod grid;
mod spectral;
mod table;
mod temporal;
mod wavelet;

use serde::{Deserialize, Serialize};

pub use grid::{GridDomain, TimeFreqGrid};
pub use spectral::{log_mel_from_power, mel_spectrogram, mfcc13, MelExtractor, N_MFCC};
pub use table::{read_features_csv, write_features_csv, FeatureRow, FEATURE_NAMES};
pub use temporal::{rms, zcr};
pub use wavelet::{wavelet_stats, Wavelet, WAVELET_LEVELS};

use crate::dsp::Window;
use crate::error::{Error, Result};
use crate::io::{resample, AudioClip};

/// Number of entries in a clip descriptor.
pub const FEATURE_DIM: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    pub rate: u32,
    pub n_fft: usize,
    pub win_len: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_lo: f64,
    pub f_hi: f64,
    pub window: Window,
    /// Added before the natural log.
    pub log_eps: f64,
    pub wavelet: Wavelet,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            rate: crate::io::CANONICAL_RATE,
            n_fft: 512,
            win_len: 400,
            hop: 160,
            n_mels: 64,
            f_lo: 0.0,
            f_hi: 8000.0,
            window: Window::Hann,
            log_eps: 1e-10,
            wavelet: Wavelet::Haar,
        }
    }
}

/// `[MFCC_0..MFCC_12, ZCR, RMS, W1_mean, W1_std, .., W5_mean, W5_std]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector25(pub [f64; FEATURE_DIM]);

impl FeatureVector25 {
    pub fn mfcc(&self) -> &[f64] {
        &self.0[..N_MFCC]
    }

    pub fn zcr(&self) -> f64 {
        self.0[13]
    }

    pub fn rms(&self) -> f64 {
        self.0[14]
    }

    pub fn wavelet(&self) -> &[f64] {
        &self.0[15..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn at_rate(clip: &AudioClip, rate: u32) -> Result<std::borrow::Cow<'_, AudioClip>> {
    if clip.rate == rate {
        Ok(std::borrow::Cow::Borrowed(clip))
    } else {
        Ok(std::borrow::Cow::Owned(resample(clip, rate)?))
    }
}

/// Compute the 25-dimensional descriptor of a clip.
pub fn extract_features(clip: &AudioClip, extractor: &MelExtractor) -> Result<FeatureVector25> {
    let clip = at_rate(clip, extractor.params().rate)?;
    if clip.samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("clip samples"));
    }
    let mfcc = extractor.mfcc13(&clip.samples)?;
    let wav = wavelet_stats(&clip.samples, extractor.params().wavelet)?;
    let mut out = [0.0; FEATURE_DIM];
    out[..N_MFCC].copy_from_slice(&mfcc);
    out[13] = zcr(&clip.samples)?;
    out[14] = rms(&clip.samples)?;
    out[15..].copy_from_slice(&wav);
    Ok(FeatureVector25(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn noise_clip(n: usize, seed: u64) -> AudioClip {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        AudioClip::new((0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(), 16_000)
    }

    #[test]
    fn slots_match_sub_operations() {
        let ex = MelExtractor::new(FeatureParams::default()).unwrap();
        let clip = noise_clip(8000, 1);
        let f = extract_features(&clip, &ex).unwrap();
        assert_eq!(f.0.len(), 25);
        assert_eq!(f.mfcc(), &ex.mfcc13(&clip.samples).unwrap()[..]);
        assert_eq!(f.zcr(), zcr(&clip.samples).unwrap());
        assert_eq!(f.rms(), rms(&clip.samples).unwrap());
        assert_eq!(f.wavelet(), &wavelet_stats(&clip.samples, Wavelet::Haar).unwrap()[..]);
    }

    #[test]
    fn silence_descriptor() {
        let ex = MelExtractor::new(FeatureParams::default()).unwrap();
        let f = extract_features(&AudioClip::new(vec![0.0; 4000], 16_000), &ex).unwrap();
        assert_eq!(f.zcr(), 0.0);
        assert_eq!(f.rms(), 0.0);
        assert!(f.wavelet().iter().all(|&v| v == 0.0));
        assert!((f.0[0] - 64.0 * 1e-10f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn scale_behaviour() {
        let ex = MelExtractor::new(FeatureParams::default()).unwrap();
        let clip = noise_clip(6000, 2);
        let a = extract_features(&clip, &ex).unwrap();
        let scaled = clip.map_samples(clip.samples.iter().map(|v| v * 3.0).collect());
        let b = extract_features(&scaled, &ex).unwrap();
        assert!((b.rms() - 3.0 * a.rms()).abs() < 1e-12);
        assert_eq!(a.zcr(), b.zcr());
        assert_eq!(a, extract_features(&clip, &ex).unwrap());
    }

    #[test]
    fn resamples_foreign_rates() {
        let ex = MelExtractor::new(FeatureParams::default()).unwrap();
        let samples: Vec<f64> = (0..32_000)
            .map(|i| (2.0 * PI * 440.0 * i as f64 / 32_000.0).sin())
            .collect();
        let f = extract_features(&AudioClip::new(samples, 32_000), &ex).unwrap();
        assert!((f.rms() - 0.5f64.sqrt()).abs() < 1e-2);
        assert!(extract_features(&AudioClip::new(vec![0.0; 100], 16_000), &ex).is_err());
    }
}
