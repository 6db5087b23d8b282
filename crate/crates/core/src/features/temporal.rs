use crate::error::{Error, Result};

/// Fraction of adjacent sample pairs whose product is strictly negative.
pub fn zcr(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: x.len(),
        });
    }
    let crossings = x.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
    Ok(crossings as f64 / (x.len() - 1) as f64)
}

pub fn rms(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    Ok((x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt())
}
