use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))` with fan_in the product of the trailing dims.
    KaimingUniform,
    Uniform(f64),
    Const(f64),
}

pub fn seeded_init(shape: &[usize], scheme: Init, seed: u64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = match scheme {
        Init::Const(c) => vec![c; n],
        Init::Uniform(r) => {
            let mut s = rng::stream(seed, &[tag::INIT]);
            (0..n).map(|_| if r > 0.0 { s.gen_range(-r..r) } else { 0.0 }).collect()
        }
        Init::KaimingUniform => {
            let fan_in: usize = shape.iter().skip(1).product::<usize>().max(1);
            let bound = (6.0 / fan_in as f64).sqrt();
            let mut s = rng::stream(seed, &[tag::INIT]);
            (0..n).map(|_| s.gen_range(-bound..bound)).collect()
        }
    };
    Tensor {
        shape: shape.to_vec(),
        data,
    }
}

/// Per-tensor seed so adding a tensor never shifts the draws of another.
pub fn param_seed(seed: u64, name: &str) -> u64 {
    rng::derive(seed, &[tag::INIT, rng::hash_str(name)])
}
