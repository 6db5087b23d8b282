//! Spectral primitives shared by validation, augmentation and features.

mod dct;
mod fft;
mod hilbert;
mod mel;
mod stft;

pub use dct::{dct2, dct2_coeffs, DctTable};
pub use fft::{dft_exact, fft, fft_complex, ifft, magnitude, next_pow2, ComplexSpectrum};
pub use hilbert::{analytic_envelope, analytic_signal};
pub use mel::{build_mel_filterbank, hz_from_mel, mel_scale, MelFilterbank};
pub use stft::{stft, Stft, StftParams, Window};
