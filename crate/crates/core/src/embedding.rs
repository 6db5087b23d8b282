//! Embedding-space diagnostics: class centroids, distances, compactness and exact t-SNE.

use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoder::Embedding;
use crate::error::{Error, Result};
use crate::io::ClassLabel;
use crate::rng::{self, tag};

pub const SEPARABILITY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGeometry {
    pub classes: Vec<ClassLabel>,
    pub counts: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// `D_ij = |c_i - c_j|^2`.
    pub inter_sq: Vec<Vec<f64>>,
    /// `sqrt(D_ij)`.
    pub inter: Vec<Vec<f64>>,
    /// Mean over members of `|f(x) - c_k|^2`.
    pub intra_sq: Vec<f64>,
    /// Mean over members of `|f(x) - c_k|`.
    pub intra: Vec<f64>,
    /// Toolkit-defined: `sqrt(D_ij) / (sqrt(intra_sq_i) + sqrt(intra_sq_j) + eps)`.
    pub separability: Vec<Vec<f64>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Centroids and distance summaries for the three classes.
pub fn class_geometry(embeddings: &[Embedding]) -> Result<ClassGeometry> {
    let dim = embeddings.first().map_or(0, |e| e.vector.len());
    if embeddings.iter().any(|e| e.vector.len() != dim) {
        return Err(Error::InvalidArgument(
            "embeddings have mixed dimensions".into(),
        ));
    }
    let classes = ClassLabel::ALL.to_vec();
    let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); classes.len()];
    for e in embeddings {
        let l = e
            .label
            .ok_or_else(|| Error::InvalidArgument(format!("embedding {} has no label", e.id)))?;
        members[l.index()].push(&e.vector);
    }
    if let Some(k) = members.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass(classes[k].code().to_string()));
    }
    let centroids: Vec<Vec<f64>> = members
        .iter()
        .map(|m| {
            let mut c = vec![0.0; dim];
            for v in m {
                c.iter_mut().zip(*v).for_each(|(a, b)| *a += b);
            }
            c.iter_mut().for_each(|a| *a /= m.len() as f64);
            c
        })
        .collect();
    let k = classes.len();
    let inter_sq: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        sq_dist(&centroids[i], &centroids[j])
                    }
                })
                .collect()
        })
        .collect();
    let inter = inter_sq
        .iter()
        .map(|r| r.iter().map(|v| v.sqrt()).collect())
        .collect();
    let intra_sq: Vec<f64> = members
        .iter()
        .zip(&centroids)
        .map(|(m, c)| m.iter().map(|v| sq_dist(v, c)).sum::<f64>() / m.len() as f64)
        .collect();
    let intra = members
        .iter()
        .zip(&centroids)
        .map(|(m, c)| m.iter().map(|v| sq_dist(v, c).sqrt()).sum::<f64>() / m.len() as f64)
        .collect();
    let mut g = ClassGeometry {
        classes,
        counts: members.iter().map(Vec::len).collect(),
        centroids,
        inter_sq,
        inter,
        intra_sq,
        intra,
        separability: Vec::new(),
    };
    g.separability = separability(&g);
    Ok(g)
}

pub fn separability(g: &ClassGeometry) -> Vec<Vec<f64>> {
    let k = g.classes.len();
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    g.inter_sq[i][j].sqrt()
                        / (g.intra_sq[i].sqrt() + g.intra_sq[j].sqrt() + SEPARABILITY_EPS)
                })
                .collect()
        })
        .collect()
}

impl ClassGeometry {
    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("geometry serializes");
        v["separability_definition"] = serde_json::json!(
            "toolkit-defined: sqrt(D_ij) / (sqrt(intra_sq_i) + sqrt(intra_sq_j) + 1e-12)"
        );
        serde_json::to_string_pretty(&v).expect("json")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    /// `None` picks `max(n / (4 * exaggeration), 50)`.
    pub learning_rate: Option<f64>,
    pub iterations: usize,
    /// Multiplier on P before the momentum switch; 1 disables it.
    pub early_exaggeration: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            learning_rate: None,
            iterations: 1000,
            early_exaggeration: 12.0,
            seed: 7,
        }
    }
}

const MOMENTUM_SWITCH: usize = 250;
const ENTROPY_TOL: f64 = 1e-5;

/// Symmetric affinities `p_ij = (p_j|i + p_i|j) / 2n` with per-point bandwidths
/// matched to `perplexity` by bisection on the precision.
pub fn gaussian_affinities(x: &[Vec<f64>], perplexity: f64) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 5 {
        return Err(Error::InvalidArgument(format!(
            "t-SNE needs at least 5 points, got {n}"
        )));
    }
    if !(perplexity > 0.0 && perplexity < n as f64) {
        return Err(Error::InvalidArgument(format!(
            "perplexity {perplexity} infeasible for {n} points"
        )));
    }
    let target = perplexity.ln();
    let mut cond = vec![0.0; n * n];
    for i in 0..n {
        let d: Vec<f64> = (0..n).map(|j| sq_dist(&x[i], &x[j])).collect();
        let dmin = (0..n)
            .filter(|&j| j != i)
            .map(|j| d[j])
            .fold(f64::INFINITY, f64::min);
        let (mut lo, mut hi, mut beta) = (0.0, f64::INFINITY, 1.0);
        let mut row = vec![0.0; n];
        for _ in 0..200 {
            let mut sum = 0.0;
            for j in 0..n {
                // Shifted by the nearest distance for numerical range; cancels on normalization.
                row[j] = if j == i {
                    0.0
                } else {
                    (-(d[j] - dmin) * beta).exp()
                };
                sum += row[j];
            }
            let mut h = 0.0;
            for j in 0..n {
                row[j] /= sum;
                if row[j] > 0.0 {
                    h -= row[j] * row[j].ln();
                }
            }
            let diff = h - target;
            if diff.abs() < ENTROPY_TOL {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() {
                    (beta + hi) / 2.0
                } else {
                    beta * 2.0
                };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        cond[i * n..(i + 1) * n].copy_from_slice(&row);
    }
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-300);
        }
        p[i * n + i] = 0.0;
    }
    Ok(p)
}

/// Normalized Student-t similarities of low-dimensional points.
pub fn student_t_affinities(y: &[[f64; 2]]) -> Vec<f64> {
    let n = y.len();
    let mut q = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2);
                q[i * n + j] = 1.0 / (1.0 + d);
                z += q[i * n + j];
            }
        }
    }
    q.iter_mut().for_each(|v| *v /= z);
    q
}

/// `KL(P || Q)` over off-diagonal pairs.
pub fn tsne_kl(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let q = student_t_affinities(y);
    p.iter()
        .zip(&q)
        .filter(|(pv, _)| **pv > 0.0)
        .map(|(pv, qv)| pv * (pv / qv.max(1e-300)).ln())
        .sum()
}

/// `dC/dy_i = 4 sum_j (p_ij - q_ij)(y_i - y_j)(1 + |y_i - y_j|^2)^-1`.
pub fn tsne_gradient(p: &[f64], y: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = y.len();
    let q = student_t_affinities(y);
    let mut grad = vec![[0.0; 2]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let w = 1.0 / (1.0 + dx * dx + dy * dy);
            let m = 4.0 * (p[i * n + j] - q[i * n + j]) * w;
            grad[i][0] += m * dx;
            grad[i][1] += m * dy;
        }
    }
    grad
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneResult {
    pub points: Vec<[f64; 2]>,
    /// KL divergence before the first update and after each iteration.
    pub kl_history: Vec<f64>,
}

/// Gradient descent with momentum 0.5, switching to 0.8 at iteration 250,
/// with P exaggerated until the switch and per-coordinate adaptive gains.
/// The history records the true KL.
pub fn tsne_from_affinities(
    p: &[f64],
    init: Vec<[f64; 2]>,
    cfg: &TsneConfig,
) -> Result<TsneResult> {
    let n = init.len();
    if p.len() != n * n {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: n * n,
        });
    }
    let mut y = init;
    let mut vel = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0_f64; 2]; n];
    let lr = cfg
        .learning_rate
        .unwrap_or_else(|| (n as f64 / (4.0 * cfg.early_exaggeration.max(1.0))).max(50.0));
    let mut kl_history = Vec::with_capacity(cfg.iterations + 1);
    kl_history.push(tsne_kl(p, &y));
    let exaggerated: Vec<f64> = p.iter().map(|v| v * cfg.early_exaggeration).collect();
    for it in 0..cfg.iterations {
        let early = it < MOMENTUM_SWITCH;
        let mom = if early { 0.5 } else { 0.8 };
        let grad = tsne_gradient(if early { &exaggerated } else { p }, &y);
        for i in 0..n {
            for k in 0..2 {
                // Grow the step where the gradient keeps its direction.
                gains[i][k] = if (grad[i][k] > 0.0) != (vel[i][k] > 0.0) {
                    gains[i][k] + 0.2
                } else {
                    (gains[i][k] * 0.8).max(0.01)
                };
                vel[i][k] = mom * vel[i][k] - lr * gains[i][k] * grad[i][k];
                y[i][k] += vel[i][k];
            }
        }
        let kl = tsne_kl(p, &y);
        if !kl.is_finite() {
            return Err(Error::NonFinite("t-SNE objective"));
        }
        kl_history.push(kl);
    }
    Ok(TsneResult {
        points: y,
        kl_history,
    })
}

pub fn tsne(x: &[Vec<f64>], cfg: &TsneConfig) -> Result<TsneResult> {
    let p = gaussian_affinities(x, cfg.perplexity)?;
    let mut r = rng::stream(cfg.seed, &[tag::TSNE]);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let init = (0..x.len())
        .map(|_| [normal.sample(&mut r), normal.sample(&mut r)])
        .collect();
    tsne_from_affinities(&p, init, cfg)
}

pub fn write_tsne_csv(path: &Path, embeddings: &[Embedding], points: &[[f64; 2]]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::malformed("csv", e))?;
    w.write_record(["id", "label", "x", "y"])
        .map_err(|e| Error::malformed("csv", e))?;
    for (e, p) in embeddings.iter().zip(points) {
        let label = e.label.map_or(String::new(), |l| l.code().to_string());
        w.write_record([
            e.id.clone(),
            label,
            format!("{:e}", p[0]),
            format!("{:e}", p[1]),
        ])
        .map_err(|e| Error::malformed("csv", e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
