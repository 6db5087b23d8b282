use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WAVELET_LEVELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wavelet {
    Haar,
    /// Four-tap Daubechies with periodic extension.
    Db4,
}

/// One analysis step: (approximation, detail). Odd lengths repeat the last sample.
fn haar_step(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut padded;
    let x = if x.len() % 2 == 1 {
        padded = x.to_vec();
        padded.push(*x.last().expect("non-empty"));
        &padded[..]
    } else {
        x
    };
    x.chunks_exact(2)
        .map(|p| ((p[0] + p[1]) / SQRT_2, (p[0] - p[1]) / SQRT_2))
        .unzip()
}

fn db4_step(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let s3 = 3f64.sqrt();
    let d = 4.0 * SQRT_2;
    let h = [(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d];
    let g = [h[3], -h[2], h[1], -h[0]];
    let mut padded = x.to_vec();
    if padded.len() % 2 == 1 {
        padded.push(*x.last().expect("non-empty"));
    }
    let n = padded.len();
    (0..n / 2)
        .map(|k| {
            let mut a = 0.0;
            let mut dd = 0.0;
            for j in 0..4 {
                let v = padded[(2 * k + j) % n];
                a += h[j] * v;
                dd += g[j] * v;
            }
            (a, dd)
        })
        .unzip()
}

/// Mean and population std of the detail coefficients at levels 1..=5.
pub fn wavelet_stats(x: &[f64], wavelet: Wavelet) -> Result<[f64; 2 * WAVELET_LEVELS]> {
    let needed = 1 << WAVELET_LEVELS;
    if x.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: x.len(),
        });
    }
    let mut out = [0.0; 2 * WAVELET_LEVELS];
    let mut approx = x.to_vec();
    for level in 0..WAVELET_LEVELS {
        let (a, d) = match wavelet {
            Wavelet::Haar => haar_step(&approx),
            Wavelet::Db4 => db4_step(&approx),
        };
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        out[2 * level] = mean;
        out[2 * level + 1] = var.sqrt();
        approx = a;
    }
    Ok(out)
}
