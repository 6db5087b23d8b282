use super::fft::dft_exact;
use crate::error::{Error, Result};

/// Minimum length accepted by the envelope routines.
pub const MIN_ENVELOPE_LEN: usize = 8;

/// Analytic signal `x + i H[x]` via the exact-length DFT.
///
/// Negative frequencies are zeroed and positive ones doubled; DC and (for even
/// lengths) Nyquist are kept as is.
pub fn analytic_signal(x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() < MIN_ENVELOPE_LEN {
        return Err(Error::TooShort {
            needed: MIN_ENVELOPE_LEN,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("envelope input"));
    }
    let n = x.len();
    let (mut re, mut im) = dft_exact(x, &vec![0.0; n], false);
    let half = n / 2;
    for k in 1..n {
        let gain = if k < half || (n % 2 == 1 && k == half) {
            2.0
        } else if n % 2 == 0 && k == half {
            1.0
        } else {
            0.0
        };
        re[k] *= gain;
        im[k] *= gain;
    }
    let (_, h) = dft_exact(&re, &im, true);
    Ok((x.to_vec(), h))
}

/// Instantaneous amplitude `sqrt(x^2 + H[x]^2)`.
pub fn analytic_envelope(x: &[f64]) -> Result<Vec<f64>> {
    let (re, h) = analytic_signal(x)?;
    Ok(re.iter().zip(&h).map(|(a, b)| a.hypot(*b)).collect())
}
