use std::f64::consts::PI;

/// Un-normalized DCT-II: `c_n = sum_m x(m) cos(pi/M (m + 0.5) n)` for n in 0..M.
pub fn dct2(x: &[f64]) -> Vec<f64> {
    dct2_coeffs(x, x.len())
}

/// First `k` coefficients of the un-normalized DCT-II.
pub fn dct2_coeffs(x: &[f64], k: usize) -> Vec<f64> {
    let m = x.len() as f64;
    (0..k)
        .map(|n| {
            x.iter()
                .enumerate()
                .map(|(i, v)| v * (PI / m * (i as f64 + 0.5) * n as f64).cos())
                .sum()
        })
        .collect()
}

/// Precomputed cosine basis for repeated truncated DCT-II of fixed length.
#[derive(Debug, Clone)]
pub struct DctTable {
    len: usize,
    basis: Vec<f64>,
    n_coeffs: usize,
}

impl DctTable {
    pub fn new(len: usize, n_coeffs: usize) -> Self {
        let m = len as f64;
        let mut basis = Vec::with_capacity(len * n_coeffs);
        for n in 0..n_coeffs {
            for i in 0..len {
                basis.push((PI / m * (i as f64 + 0.5) * n as f64).cos());
            }
        }
        DctTable {
            len,
            basis,
            n_coeffs,
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.len);
        for (n, o) in out.iter_mut().enumerate().take(self.n_coeffs) {
            let row = &self.basis[n * self.len..(n + 1) * self.len];
            *o = row.iter().zip(x).map(|(b, v)| b * v).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn oracle(x: &[f64]) -> Vec<f64> {
        let m = x.len();
        let mut out = vec![0.0; m];
        for (n, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for (i, &v) in x.iter().enumerate() {
                s += v * (PI * (2 * i + 1) as f64 * n as f64 / (2 * m) as f64).cos();
            }
            *o = s;
        }
        out
    }

    #[test]
    fn constant_input() {
        let c = dct2(&[0.7; 16]);
        assert!((c[0] - 16.0 * 0.7).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn single_basis_vector() {
        let m = 20;
        let x: Vec<f64> = (0..m)
            .map(|i| (PI / m as f64 * (i as f64 + 0.5) * 3.0).cos())
            .collect();
        let c = dct2(&x);
        for (n, v) in c.iter().enumerate() {
            let expect = if n == 3 { m as f64 / 2.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-10, "coef {n} = {v}");
        }
    }

    #[test]
    fn table_matches_direct() {
        let x: Vec<f64> = (0..64).map(|i| ((i * 37 % 11) as f64).sin()).collect();
        let t = DctTable::new(64, 13);
        let mut out = [0.0; 13];
        t.apply(&x, &mut out);
        let d = dct2_coeffs(&x, 13);
        for (a, b) in out.iter().zip(&d) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn matches_double_loop(x in proptest::collection::vec(-10.0f64..10.0, 1..80)) {
            for (a, b) in dct2(&x).iter().zip(oracle(&x)) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn linear(x in proptest::collection::vec(-5.0f64..5.0, 16), y in proptest::collection::vec(-5.0f64..5.0, 16), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let z: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = dct2(&z);
            let dx = dct2(&x);
            let dy = dct2(&y);
            for i in 0..16 {
                prop_assert!((lhs[i] - (a * dx[i] + b * dy[i])).abs() < 1e-10);
            }
        }
    }
}
