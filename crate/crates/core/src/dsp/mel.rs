use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `m(f) = 2595 log10(1 + f/700)`.
pub fn mel_scale(f: f64) -> Result<f64> {
    if !(f >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative frequency {f}")));
    }
    Ok(2595.0 * (1.0 + f / 700.0).log10())
}

pub fn hz_from_mel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters over the one-sided FFT bins, each with peak 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    /// Row-major `n_mels x n_bins`.
    pub weights: Vec<f64>,
    /// `n_mels + 2` edge frequencies in Hz (lower edge, centers, upper edge).
    pub edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    pub fn center_hz(&self, m: usize) -> f64 {
        self.edges_hz[m + 1]
    }

    /// Apply to a one-sided power column.
    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        debug_assert_eq!(power.len(), self.n_bins);
        for (m, o) in out.iter_mut().enumerate().take(self.n_mels) {
            *o = self.row(m).iter().zip(power).map(|(w, p)| w * p).sum();
        }
    }
}

pub fn build_mel_filterbank(
    n_mels: usize,
    n_fft: usize,
    rate: f64,
    f_lo: f64,
    f_hi: f64,
) -> Result<MelFilterbank> {
    if n_mels < 2 {
        return Err(Error::InvalidArgument("need at least two mel bands".into()));
    }
    if !(f_lo >= 0.0 && f_lo < f_hi && f_hi <= rate / 2.0) {
        return Err(Error::InvalidArgument(format!(
            "mel band [{f_lo}, {f_hi}] invalid for rate {rate}"
        )));
    }
    if n_fft < 2 {
        return Err(Error::InvalidArgument("n_fft must be >= 2".into()));
    }
    let n_bins = n_fft / 2 + 1;
    let m_lo = mel_scale(f_lo)?;
    let m_hi = mel_scale(f_hi)?;
    let step = (m_hi - m_lo) / (n_mels + 1) as f64;
    let edges_hz: Vec<f64> = (0..n_mels + 2)
        .map(|i| hz_from_mel(m_lo + step * i as f64))
        .collect();
    let bin_hz = rate / n_fft as f64;
    let mut weights = vec![0.0; n_mels * n_bins];
    for m in 0..n_mels {
        let (lo, c, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        let row = &mut weights[m * n_bins..(m + 1) * n_bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            *w = if f > lo && f <= c {
                (f - lo) / (c - lo)
            } else if f > c && f < hi {
                (hi - f) / (hi - c)
            } else {
                0.0
            };
        }
        let peak = row.iter().copied().fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "mel band {m} ({lo:.1}-{hi:.1} Hz) covers no FFT bin; too many mels for n_fft {n_fft}"
            )));
        }
        row.iter_mut().for_each(|w| *w /= peak);
    }
    Ok(MelFilterbank {
        n_mels,
        n_bins,
        weights,
        edges_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_reference_points() {
        assert_eq!(mel_scale(0.0).unwrap(), 0.0);
        assert!((mel_scale(700.0).unwrap() - 2595.0 * 2f64.log10()).abs() < 1e-12);
        assert!((mel_scale(700.0).unwrap() - 781.172_838).abs() < 1e-5);
        assert!((mel_scale(1000.0).unwrap() - 1000.0).abs() < 0.05);
        assert!(mel_scale(-1.0).is_err());
        assert!((hz_from_mel(mel_scale(1234.5).unwrap()) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn rows_are_single_peaked_triangles() {
        let fb = build_mel_filterbank(64, 512, 16_000.0, 0.0, 8_000.0).unwrap();
        assert_eq!(fb.n_bins, 257);
        for m in 0..fb.n_mels {
            let row = fb.row(m);
            assert!(row.iter().all(|&w| w >= 0.0));
            let peak = row.iter().copied().fold(0.0, f64::max);
            assert!((peak - 1.0).abs() < 1e-12);
            let support: Vec<usize> = (0..row.len()).filter(|&k| row[k] > 0.0).collect();
            assert_eq!(support.last().unwrap() - support[0] + 1, support.len());
        }
        for m in 1..fb.n_mels {
            assert!(fb.center_hz(m) > fb.center_hz(m - 1));
        }
    }

    #[test]
    fn centers_equally_spaced_in_mel() {
        let fb = build_mel_filterbank(4, 512, 16_000.0, 0.0, 8_000.0).unwrap();
        let mels: Vec<f64> = fb.edges_hz.iter().map(|&f| mel_scale(f).unwrap()).collect();
        let step = mels[1] - mels[0];
        for w in mels.windows(2) {
            assert!((w[1] - w[0] - step).abs() < 1e-9);
        }
    }

    #[test]
    fn infeasible_spacing() {
        assert!(build_mel_filterbank(200, 64, 16_000.0, 0.0, 8_000.0).is_err());
        assert!(build_mel_filterbank(1, 512, 16_000.0, 0.0, 8_000.0).is_err());
        assert!(build_mel_filterbank(8, 512, 16_000.0, 100.0, 9_000.0).is_err());
    }
}
