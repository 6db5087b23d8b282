use super::{FeatureParams, GridDomain, TimeFreqGrid};
use crate::dsp::{build_mel_filterbank, stft, DctTable, MelFilterbank, StftParams};
use crate::error::{Error, Result};
use crate::io::AudioClip;

pub const N_MFCC: usize = 13;

/// Log-compress a mel projection of one power column into `out`.
pub fn log_mel_from_power(fb: &MelFilterbank, power: &[f64], eps: f64, out: &mut [f64]) {
    fb.apply(power, out);
    for v in out.iter_mut() {
        *v = (*v + eps).ln();
    }
}

/// Filterbank and DCT basis built once for a parameter set.
#[derive(Debug, Clone)]
pub struct MelExtractor {
    params: FeatureParams,
    filterbank: MelFilterbank,
    dct: DctTable,
}

impl MelExtractor {
    pub fn new(params: FeatureParams) -> Result<Self> {
        if params.win_len == 0 || params.hop == 0 || params.n_fft < params.win_len {
            return Err(Error::InvalidArgument(format!(
                "invalid framing n_fft={} win={} hop={}",
                params.n_fft, params.win_len, params.hop
            )));
        }
        if !params.n_fft.is_power_of_two() {
            return Err(Error::InvalidArgument("n_fft must be a power of two".into()));
        }
        if params.n_mels < N_MFCC {
            return Err(Error::InvalidArgument(format!(
                "need at least {N_MFCC} mel bands for the cepstrum"
            )));
        }
        let filterbank = build_mel_filterbank(
            params.n_mels,
            params.n_fft,
            f64::from(params.rate),
            params.f_lo,
            params.f_hi,
        )?;
        Ok(MelExtractor {
            dct: DctTable::new(params.n_mels, N_MFCC),
            params,
            filterbank,
        })
    }

    pub fn params(&self) -> &FeatureParams {
        &self.params
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    fn stft_params(&self) -> StftParams {
        StftParams {
            n_fft: self.params.n_fft,
            win_len: self.params.win_len,
            hop: self.params.hop,
            window: self.params.window,
        }
    }

    /// Log-mel grid of shape `(n_mels, frames)`.
    pub fn log_mel(&self, x: &[f64]) -> Result<TimeFreqGrid> {
        let spec = stft(x, self.stft_params())?;
        let power = spec.power();
        let rows = self.params.n_mels;
        let cols = power.len();
        let mut values = vec![0.0; rows * cols];
        let mut col = vec![0.0; rows];
        for (c, p) in power.iter().enumerate() {
            log_mel_from_power(&self.filterbank, p, self.params.log_eps, &mut col);
            for (r, v) in col.iter().enumerate() {
                values[r * cols + c] = *v;
            }
        }
        Ok(TimeFreqGrid {
            rows,
            cols,
            values,
            row_hz: (0..rows).map(|m| self.filterbank.center_hz(m)).collect(),
            hop_s: self.params.hop as f64 / f64::from(self.params.rate),
            domain: GridDomain::LogMel,
        })
    }

    /// Frame-averaged DCT-II of the log-mel columns, coefficients 0..12.
    pub fn mfcc13(&self, x: &[f64]) -> Result<[f64; N_MFCC]> {
        let grid = self.log_mel(x)?;
        let mut acc = [0.0; N_MFCC];
        let mut coeffs = [0.0; N_MFCC];
        for c in 0..grid.cols {
            self.dct.apply(&grid.column(c), &mut coeffs);
            for (a, v) in acc.iter_mut().zip(&coeffs) {
                *a += v;
            }
        }
        let n = grid.cols as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }
}

pub fn mel_spectrogram(clip: &AudioClip, params: &FeatureParams) -> Result<TimeFreqGrid> {
    MelExtractor::new(*params)?.log_mel(&clip.samples)
}

pub fn mfcc13(clip: &AudioClip, params: &FeatureParams) -> Result<[f64; N_MFCC]> {
    MelExtractor::new(*params)?.mfcc13(&clip.samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::mel_scale;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn params() -> FeatureParams {
        FeatureParams::default()
    }

    #[test]
    fn default_shape() {
        let g = mel_spectrogram(&AudioClip::new(vec![0.1; 16_000], 16_000), &params()).unwrap();
        assert_eq!((g.rows, g.cols), (64, 98));
        assert_eq!(g.domain, GridDomain::LogMel);
    }

    #[test]
    fn silence_is_log_eps() {
        let g = mel_spectrogram(&AudioClip::new(vec![0.0; 4000], 16_000), &params()).unwrap();
        assert!(g.values.iter().all(|&v| v == 1e-10f64.ln()));
        let m = mfcc13(&AudioClip::new(vec![0.0; 4000], 16_000), &params()).unwrap();
        assert!((m[0] - 64.0 * 1e-10f64.ln()).abs() < 1e-9);
        assert!(m[1..].iter().all(|v| v.abs() < 1e-9));
        assert!(mel_spectrogram(&AudioClip::new(vec![0.0; 300], 16_000), &params()).is_err());
    }

    #[test]
    fn tone_lands_in_nearest_band() {
        let x: Vec<f64> = (0..16_000)
            .map(|i| (2.0 * PI * 1000.0 * i as f64 / 16_000.0).sin())
            .collect();
        let ex = MelExtractor::new(params()).unwrap();
        let g = ex.log_mel(&x).unwrap();
        let c = g.cols / 2;
        let argmax = (0..g.rows).max_by(|&a, &b| g.get(a, c).total_cmp(&g.get(b, c))).unwrap();
        let target = mel_scale(1000.0).unwrap();
        let nearest = (0..g.rows)
            .min_by(|&a, &b| {
                let da = (mel_scale(ex.filterbank().center_hz(a)).unwrap() - target).abs();
                let db = (mel_scale(ex.filterbank().center_hz(b)).unwrap() - target).abs();
                da.total_cmp(&db)
            })
            .unwrap();
        assert_eq!(argmax, nearest);
    }

    /// Independent route: direct DFT, hand-built triangles, double-loop DCT.
    fn mfcc_oracle(x: &[f64], p: &FeatureParams) -> Vec<f64> {
        let n_bins = p.n_fft / 2 + 1;
        let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
        let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
        let (mlo, mhi) = (mel(p.f_lo), mel(p.f_hi));
        let pts: Vec<f64> = (0..p.n_mels + 2)
            .map(|i| inv(mlo + (mhi - mlo) * i as f64 / (p.n_mels + 1) as f64))
            .collect();
        let mut tri = vec![vec![0.0; n_bins]; p.n_mels];
        for m in 0..p.n_mels {
            for k in 0..n_bins {
                let f = k as f64 * f64::from(p.rate) / p.n_fft as f64;
                let up = (f - pts[m]) / (pts[m + 1] - pts[m]);
                let down = (pts[m + 2] - f) / (pts[m + 2] - pts[m + 1]);
                tri[m][k] = up.min(down).max(0.0);
            }
            let peak = tri[m].iter().copied().fold(0.0, f64::max);
            tri[m].iter_mut().for_each(|w| *w /= peak);
        }
        let frames = 1 + (x.len() - p.win_len) / p.hop;
        let mut out = vec![0.0; 13];
        for f in 0..frames {
            let seg: Vec<f64> = (0..p.win_len)
                .map(|i| x[f * p.hop + i] * (0.5 - 0.5 * (2.0 * PI * i as f64 / p.win_len as f64).cos()))
                .collect();
            let power: Vec<f64> = (0..n_bins)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (i, v) in seg.iter().enumerate() {
                        let a = -2.0 * PI * ((k * i) % p.n_fft) as f64 / p.n_fft as f64;
                        re += v * a.cos();
                        im += v * a.sin();
                    }
                    re * re + im * im
                })
                .collect();
            let logmel: Vec<f64> = tri
                .iter()
                .map(|row| (row.iter().zip(&power).map(|(w, q)| w * q).sum::<f64>() + p.log_eps).ln())
                .collect();
            for (n, o) in out.iter_mut().enumerate() {
                let mut s = 0.0;
                for (m, v) in logmel.iter().enumerate() {
                    s += v * (PI / p.n_mels as f64 * (m as f64 + 0.5) * n as f64).cos();
                }
                *o += s / frames as f64;
            }
        }
        out
    }

    #[test]
    fn mfcc_matches_oracle_on_white_noise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let x: Vec<f64> = (0..2000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = mfcc13(&AudioClip::new(x.clone(), 16_000), &params()).unwrap();
        let want = mfcc_oracle(&x, &params());
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_columns_have_flat_cepstrum() {
        let ex = MelExtractor::new(params()).unwrap();
        let col = vec![-3.25; 64];
        let mut c = [0.0; 13];
        ex.dct.apply(&col, &mut c);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-9));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn log_mel_monotone_in_power(base in proptest::collection::vec(0.0f64..10.0, 257), extra in proptest::collection::vec(0.0f64..10.0, 257)) {
            let ex = MelExtractor::new(params()).unwrap();
            let more: Vec<f64> = base.iter().zip(&extra).map(|(a, b)| a + b).collect();
            let mut lo = vec![0.0; 64];
            let mut hi = vec![0.0; 64];
            log_mel_from_power(ex.filterbank(), &base, 1e-10, &mut lo);
            log_mel_from_power(ex.filterbank(), &more, 1e-10, &mut hi);
            for (a, b) in lo.iter().zip(&hi) {
                prop_assert!(b >= a);
            }
        }
    }
}
