use std::f64::consts::PI;

use super::AudioClip;
use crate::error::{Error, Result};

/// Kernel length of the windowed-sinc interpolator.
pub const RESAMPLE_TAPS: usize = 64;
const KAISER_BETA: f64 = 8.0;

/// Zeroth-order modified Bessel function of the first kind (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Band-limited resampling of a sequence from `from` Hz to `to` Hz.
pub(crate) fn resample_samples(x: &[f64], from: f64, to: f64) -> Vec<f64> {
    let out_len = ((x.len() as f64) * to / from).round() as usize;
    resample_to_len(x, from, to, out_len)
}

pub(crate) fn resample_to_len(x: &[f64], from: f64, to: f64, out_len: usize) -> Vec<f64> {
    let half = (RESAMPLE_TAPS / 2) as isize;
    // Cutoff in cycles per input sample.
    let cutoff = 0.5 * from.min(to) / from;
    let i0_beta = bessel_i0(KAISER_BETA);
    let step = from / to;
    (0..out_len)
        .map(|n| {
            let pos = n as f64 * step;
            let base = pos.floor() as isize;
            let mut acc = 0.0;
            for k in (base - half + 1)..=(base + half) {
                if k < 0 || k as usize >= x.len() {
                    continue;
                }
                let d = pos - k as f64;
                let u = d / half as f64;
                if u.abs() > 1.0 {
                    continue;
                }
                let w = bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / i0_beta;
                acc += x[k as usize] * 2.0 * cutoff * sinc(2.0 * cutoff * d) * w;
            }
            acc
        })
        .collect()
}

/// Windowed-sinc resampling (64-tap Kaiser, beta 8, cutoff at the lower Nyquist).
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target rate must be positive".into()));
    }
    if clip.rate == 0 {
        return Err(Error::InvalidArgument("source rate must be positive".into()));
    }
    if target_rate == clip.rate {
        return Ok(clip.clone());
    }
    let samples = resample_samples(&clip.samples, f64::from(clip.rate), f64::from(target_rate));
    let mut out = clip.map_samples(samples);
    out.rate = target_rate;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{fft, magnitude};

    fn tone(freq: f64, rate: u32, n: usize) -> AudioClip {
        let samples = (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / f64::from(rate)).cos())
            .collect();
        AudioClip::new(samples, rate)
    }

    fn peak_hz(clip: &AudioClip) -> (f64, f64) {
        let spec = fft(&clip.samples).unwrap();
        let mag = magnitude(&spec);
        let half = mag.len() / 2;
        let (k, _) = mag[1..half]
            .iter()
            .enumerate()
            .fold((0, 0.0), |best, (i, &m)| if m > best.1 { (i + 1, m) } else { best });
        (k as f64 * spec.bin_hz(f64::from(clip.rate)), spec.bin_hz(f64::from(clip.rate)))
    }

    #[test]
    fn identity_rate() {
        let c = tone(100.0, 16_000, 500);
        assert_eq!(resample(&c, 16_000).unwrap(), c);
    }

    #[test]
    fn downsample_keeps_tone() {
        let c = tone(1000.0, 48_000, 48_000);
        let r = resample(&c, 16_000).unwrap();
        assert_eq!(r.rate, 16_000);
        assert_eq!(r.len(), 16_000);
        let (hz, bin) = peak_hz(&r);
        assert!((hz - 1000.0).abs() <= bin, "peak at {hz}");
    }

    #[test]
    fn length_follows_ratio() {
        for n in [1001usize, 32_000, 12_345] {
            let c = tone(50.0, 32_000, n);
            let r = resample(&c, 16_000).unwrap();
            let expect = (n as f64 / 2.0).round() as i64;
            assert!((r.len() as i64 - expect).abs() <= 1);
        }
    }

    #[test]
    fn upsampled_interior_matches_tone() {
        let c = tone(440.0, 8_000, 8_000);
        let r = resample(&c, 16_000).unwrap();
        let expect = tone(440.0, 16_000, 16_000);
        let err = r.samples[400..15_600]
            .iter()
            .zip(&expect.samples[400..15_600])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-2, "max err {err}");
        assert!(resample(&c, 0).is_err());
    }

    #[test]
    fn bessel_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        // I0(1) and I0(8) from tables.
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i0(8.0) - 427.564_115_721_804_7).abs() < 1e-9);
    }
}
