use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex spectrum as parallel real/imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexSpectrum {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    /// Length of the input before zero padding.
    pub input_len: usize,
}

impl ComplexSpectrum {
    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    /// Transform length after zero padding.
    pub fn n_fft(&self) -> usize {
        self.re.len()
    }

    pub fn padded(&self) -> bool {
        self.input_len != self.re.len()
    }

    /// Frequency resolution `rate / N` in Hz.
    pub fn bin_hz(&self, rate: f64) -> f64 {
        rate / self.re.len() as f64
    }
}

pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// In-place iterative radix-2 transform. `re.len()` must be a power of two.
pub(crate) fn radix2(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    debug_assert_eq!(n, im.len());
    if n <= 1 {
        return;
    }
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let theta = sign * 2.0 * PI / len as f64;
        // Twiddles computed directly per index to avoid drift from recurrences.
        let tw: Vec<(f64, f64)> = (0..half)
            .map(|k| {
                let a = theta * k as f64;
                (a.cos(), a.sin())
            })
            .collect();
        for start in (0..n).step_by(len) {
            for (k, &(wr, wi)) in tw.iter().enumerate() {
                let a = start + k;
                let b = a + half;
                let tr = re[b] * wr - im[b] * wi;
                let ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
    if inverse {
        let scale = 1.0 / n as f64;
        re.iter_mut().for_each(|v| *v *= scale);
        im.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Forward FFT of a real sequence, zero-padded to the next power of two.
pub fn fft(x: &[f64]) -> Result<ComplexSpectrum> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("fft of an empty sequence".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fft input"));
    }
    let n = next_pow2(x.len());
    let mut re = x.to_vec();
    re.resize(n, 0.0);
    let mut im = vec![0.0; n];
    radix2(&mut re, &mut im, false);
    Ok(ComplexSpectrum {
        re,
        im,
        input_len: x.len(),
    })
}

/// Complex FFT (power-of-two length required).
pub fn fft_complex(re: &mut [f64], im: &mut [f64], inverse: bool) -> Result<()> {
    if re.len() != im.len() {
        return Err(Error::LengthMismatch {
            left: re.len(),
            right: im.len(),
        });
    }
    if !re.len().is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "length {} is not a power of two",
            re.len()
        )));
    }
    radix2(re, im, inverse);
    Ok(())
}

/// Inverse transform of a spectrum, returning the real part (unpadded length).
pub fn ifft(spec: &ComplexSpectrum) -> Vec<f64> {
    let mut re = spec.re.clone();
    let mut im = spec.im.clone();
    if re.len().is_power_of_two() {
        radix2(&mut re, &mut im, true);
    } else {
        let (r, _) = bluestein(&re, &im, true);
        re = r;
    }
    re.truncate(spec.input_len);
    re
}

/// Exact-length DFT for any N: radix-2 when N is a power of two, Bluestein otherwise.
pub fn dft_exact(re: &[f64], im: &[f64], inverse: bool) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(re.len(), im.len());
    if re.len().is_power_of_two() {
        let mut r = re.to_vec();
        let mut i = im.to_vec();
        radix2(&mut r, &mut i, inverse);
        (r, i)
    } else {
        bluestein(re, im, inverse)
    }
}

fn bluestein(re: &[f64], im: &[f64], inverse: bool) -> (Vec<f64>, Vec<f64>) {
    let n = re.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let m = next_pow2(2 * n - 1);
    let sign = if inverse { 1.0 } else { -1.0 };
    // w_k = exp(sign * i * pi * k^2 / n), with k^2 reduced mod 2n for accuracy.
    let chirp: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let k2 = ((k as u128 * k as u128) % (2 * n as u128)) as f64;
            let a = sign * PI * k2 / n as f64;
            (a.cos(), a.sin())
        })
        .collect();
    let mut ar = vec![0.0; m];
    let mut ai = vec![0.0; m];
    for k in 0..n {
        let (wr, wi) = chirp[k];
        ar[k] = re[k] * wr - im[k] * wi;
        ai[k] = re[k] * wi + im[k] * wr;
    }
    let mut br = vec![0.0; m];
    let mut bi = vec![0.0; m];
    br[0] = chirp[0].0;
    bi[0] = -chirp[0].1;
    for k in 1..n {
        let (wr, wi) = chirp[k];
        br[k] = wr;
        bi[k] = -wi;
        br[m - k] = wr;
        bi[m - k] = -wi;
    }
    radix2(&mut ar, &mut ai, false);
    radix2(&mut br, &mut bi, false);
    for k in 0..m {
        let r = ar[k] * br[k] - ai[k] * bi[k];
        let i = ar[k] * bi[k] + ai[k] * br[k];
        ar[k] = r;
        ai[k] = i;
    }
    radix2(&mut ar, &mut ai, true);
    let scale = if inverse { 1.0 / n as f64 } else { 1.0 };
    let mut out_r = Vec::with_capacity(n);
    let mut out_i = Vec::with_capacity(n);
    for k in 0..n {
        let (wr, wi) = chirp[k];
        out_r.push((ar[k] * wr - ai[k] * wi) * scale);
        out_i.push((ar[k] * wi + ai[k] * wr) * scale);
    }
    (out_r, out_i)
}

/// Element-wise modulus of a spectrum.
pub fn magnitude(spec: &ComplexSpectrum) -> Vec<f64> {
    spec.re
        .iter()
        .zip(&spec.im)
        .map(|(r, i)| r.hypot(*i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// O(N^2) reference transform.
    fn direct_dft(x: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        for k in 0..n {
            for (t, &v) in x.iter().enumerate() {
                let a = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                re[k] += v * a.cos();
                im[k] += v * a.sin();
            }
        }
        (re, im)
    }

    #[test]
    fn dc_and_impulse() {
        let s = fft(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        let m = magnitude(&s);
        assert!((m[0] - 4.0).abs() < 1e-12);
        assert!(m[1..].iter().all(|v| v.abs() < 1e-12));
        let s = fft(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(magnitude(&s).iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(!s.padded());
    }

    #[test]
    fn matches_direct_dft_all_lengths() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for len in 1..=128usize {
            let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = fft(&x).unwrap();
            assert_eq!(s.n_fft(), next_pow2(len));
            let (dr, di) = direct_dft(&x, s.n_fft());
            for k in 0..s.n_fft() {
                assert!((s.re[k] - dr[k]).abs() < 1e-9);
                assert!((s.im[k] - di[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bluestein_matches_direct() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for len in [3usize, 5, 7, 12, 100, 127, 1000] {
            let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (r, i) = dft_exact(&x, &vec![0.0; len], false);
            let (dr, di) = direct_dft(&x, len);
            for k in 0..len {
                assert!((r[k] - dr[k]).abs() < 1e-9, "len {len} bin {k}");
                assert!((i[k] - di[k]).abs() < 1e-9);
            }
            let (back, _) = dft_exact(&r, &i, true);
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fft(&[]).is_err());
        assert!(fft(&[1.0, f64::NAN]).is_err());
        let mut a = vec![0.0; 3];
        let mut b = vec![0.0; 3];
        assert!(fft_complex(&mut a, &mut b, false).is_err());
    }

    #[test]
    fn magnitude_formula() {
        let s = ComplexSpectrum {
            re: vec![3.0, 0.0],
            im: vec![4.0, 0.0],
            input_len: 2,
        };
        assert_eq!(magnitude(&s), vec![5.0, 0.0]);
    }

    proptest! {
        #[test]
        fn magnitude_matches_per_element(re in proptest::collection::vec(-1e3f64..1e3, 1..64)) {
            let im: Vec<f64> = re.iter().map(|v| v * 0.5 - 1.0).collect();
            let s = ComplexSpectrum { re: re.clone(), im: im.clone(), input_len: re.len() };
            for (m, (r, i)) in magnitude(&s).iter().zip(re.iter().zip(&im)) {
                prop_assert!((m - (r * r + i * i).sqrt()).abs() <= 1e-9 * m.max(1.0));
            }
        }

        #[test]
        fn ifft_inverts(x in proptest::collection::vec(-1.0f64..1.0, 1..200)) {
            let s = fft(&x).unwrap();
            let back = ifft(&s);
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
