use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::fft::{next_pow2, radix2, ComplexSpectrum};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// Periodic Hann.
    Hann,
    #[serde(alias = "rectangular")]
    Rect,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; len],
            Window::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftParams {
    pub n_fft: usize,
    pub win_len: usize,
    pub hop: usize,
    pub window: Window,
}

impl StftParams {
    /// `n_fft` defaults to the next power of two at or above `win_len`.
    pub fn new(win_len: usize, hop: usize, window: Window) -> Self {
        StftParams {
            n_fft: next_pow2(win_len),
            win_len,
            hop,
            window,
        }
    }

    pub fn frame_count(&self, n: usize) -> usize {
        if n < self.win_len || self.hop == 0 {
            0
        } else {
            1 + (n - self.win_len) / self.hop
        }
    }
}

/// Short-time spectra, one full-length FFT per frame. No normalization.
#[derive(Debug, Clone)]
pub struct Stft {
    pub params: StftParams,
    pub frames: Vec<ComplexSpectrum>,
}

impl Stft {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    /// One-sided power `|X|^2`, bins 0..=n_fft/2, laid out `[frame][bin]`.
    pub fn power(&self) -> Vec<Vec<f64>> {
        let bins = self.params.n_fft / 2 + 1;
        self.frames
            .iter()
            .map(|f| (0..bins).map(|k| f.re[k] * f.re[k] + f.im[k] * f.im[k]).collect())
            .collect()
    }
}

pub fn stft(x: &[f64], params: StftParams) -> Result<Stft> {
    if params.hop == 0 || params.win_len == 0 {
        return Err(Error::InvalidArgument("window and hop must be >= 1".into()));
    }
    if !params.n_fft.is_power_of_two() || params.n_fft < params.win_len {
        return Err(Error::InvalidArgument(format!(
            "n_fft {} must be a power of two >= win_len {}",
            params.n_fft, params.win_len
        )));
    }
    if x.len() < params.win_len {
        return Err(Error::TooShort {
            needed: params.win_len,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("stft input"));
    }
    let w = params.window.coefficients(params.win_len);
    let n_frames = params.frame_count(x.len());
    let frames = (0..n_frames)
        .map(|f| {
            let start = f * params.hop;
            let mut re = vec![0.0; params.n_fft];
            for (i, (r, wi)) in re.iter_mut().zip(&w).enumerate() {
                *r = x[start + i] * wi;
            }
            let mut im = vec![0.0; params.n_fft];
            radix2(&mut re, &mut im, false);
            ComplexSpectrum {
                re,
                im,
                input_len: params.win_len,
            }
        })
        .collect();
    Ok(Stft { params, frames })
}
