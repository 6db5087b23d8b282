use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    MatMul(Var, Var),
    Linear(Var, Var),
    Conv2d {
        x: Var,
        w: Var,
        spec: Conv2dSpec,
        cols: Vec<f64>,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Gap(Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    SoftmaxCe {
        logits: Var,
        probs: Vec<f64>,
        targets: Vec<usize>,
    },
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    LogPairDist {
        x: Var,
        eps: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    track: bool,
}

/// Reverse-mode tape. Nodes are appended in evaluation order, so the
/// node list is already topologically sorted.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.shape.clone(),
        right: b.shape.clone(),
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax of a `[n, k]` buffer.
pub fn softmax_rows(logits: &[f64], k: usize) -> Vec<f64> {
    let mut out = logits.to_vec();
    for row in out.chunks_mut(k) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

fn conv_out(h: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    (h + 2 * pad).checked_sub(k).map(|d| d / stride + 1)
}

#[allow(clippy::too_many_arguments)]
fn im2col(x: &[f64], c: usize, h: usize, w: usize, kh: usize, kw: usize, s: usize, p: usize, ho: usize, wo: usize, out: &mut [f64]) {
    let hw = ho * wo;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for i in 0..kh {
            for j in 0..kw {
                let row = &mut out[((ci * kh + i) * kw + j) * hw..][..hw];
                for oh in 0..ho {
                    let ih = (oh * s + i) as isize - p as isize;
                    let dst = &mut row[oh * wo..(oh + 1) * wo];
                    if ih < 0 || ih as usize >= h {
                        dst.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &plane[ih as usize * w..(ih as usize + 1) * w];
                    for (ow, d) in dst.iter_mut().enumerate() {
                        let iw = (ow * s + j) as isize - p as isize;
                        *d = if iw < 0 || iw as usize >= w { 0.0 } else { src[iw as usize] };
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im(cols: &[f64], c: usize, h: usize, w: usize, kh: usize, kw: usize, s: usize, p: usize, ho: usize, wo: usize, dx: &mut [f64]) {
    let hw = ho * wo;
    for ci in 0..c {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for i in 0..kh {
            for j in 0..kw {
                let row = &cols[((ci * kh + i) * kw + j) * hw..][..hw];
                for oh in 0..ho {
                    let ih = (oh * s + i) as isize - p as isize;
                    if ih < 0 || ih as usize >= h {
                        continue;
                    }
                    for ow in 0..wo {
                        let iw = (ow * s + j) as isize - p as isize;
                        if iw >= 0 && (iw as usize) < w {
                            plane[ih as usize * w + iw as usize] += row[oh * wo + ow];
                        }
                    }
                }
            }
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, track: bool) -> Var {
        self.nodes.push(Node { value, op, track });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].track)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Constant input; never receives a gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Free leaf that receives a gradient.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        self.push(p.value.clone(), Op::Param(id), p.trainable)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn zip(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape != tb.shape {
            return Err(mismatch(name, ta, tb));
        }
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| f(*x, *y)).collect();
        let out = Tensor {
            shape: ta.shape.clone(),
            data,
        };
        let track = self.tracked(&[a, b]);
        Ok(self.push(out, op, track))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a);
        let out = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|v| v * c).collect(),
        };
        let track = self.tracked(&[a]);
        self.push(out, Op::Scale(a, c), track)
    }

    /// `x[n, f] + b[f]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        if tx.shape.len() != 2 || tb.shape != [tx.shape[1]] {
            return Err(mismatch("add_bias", tx, tb));
        }
        let f = tx.shape[1];
        let mut out = tx.clone();
        for row in out.data.chunks_mut(f) {
            row.iter_mut().zip(&tb.data).for_each(|(v, b)| *v += b);
        }
        let track = self.tracked(&[x, b]);
        Ok(self.push(out, Op::AddBias(x, b), track))
    }

    /// `a[m, k] * b[k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape.len() != 2 || tb.shape.len() != 2 || ta.shape[1] != tb.shape[0] {
            return Err(mismatch("matmul", ta, tb));
        }
        let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
        let mut data = vec![0.0; m * n];
        gemm(m, k, n, &ta.data, false, &tb.data, false, &mut data, 0.0);
        let track = self.tracked(&[a, b]);
        Ok(self.push(Tensor { shape: vec![m, n], data }, Op::MatMul(a, b), track))
    }

    /// `x[n, in] * w[out, in]^T`.
    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        if tx.shape.len() != 2 || tw.shape.len() != 2 || tx.shape[1] != tw.shape[1] {
            return Err(mismatch("linear", tx, tw));
        }
        let (n, i, o) = (tx.shape[0], tx.shape[1], tw.shape[0]);
        let mut data = vec![0.0; n * o];
        gemm(n, i, o, &tx.data, false, &tw.data, true, &mut data, 0.0);
        let track = self.tracked(&[x, w]);
        Ok(self.push(Tensor { shape: vec![n, o], data }, Op::Linear(x, w), track))
    }

    /// Bias-free 2-D convolution of `x[n, c, h, w]` with `w[o, c, kh, kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, spec: Conv2dSpec) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        if tx.shape.len() != 4 || tw.shape.len() != 4 || tx.shape[1] != tw.shape[1] || spec.stride == 0 {
            return Err(mismatch("conv2d", tx, tw));
        }
        let [n, c, h, wd] = [tx.shape[0], tx.shape[1], tx.shape[2], tx.shape[3]];
        let [o, _, kh, kw] = [tw.shape[0], tw.shape[1], tw.shape[2], tw.shape[3]];
        let (Some(ho), Some(wo)) = (
            conv_out(h, kh, spec.stride, spec.pad),
            conv_out(wd, kw, spec.stride, spec.pad),
        ) else {
            return Err(mismatch("conv2d", tx, tw));
        };
        let ckk = c * kh * kw;
        let hw = ho * wo;
        let mut cols = vec![0.0; n * ckk * hw];
        let mut data = vec![0.0; n * o * hw];
        for s in 0..n {
            let col = &mut cols[s * ckk * hw..(s + 1) * ckk * hw];
            im2col(&tx.data[s * c * h * wd..(s + 1) * c * h * wd], c, h, wd, kh, kw, spec.stride, spec.pad, ho, wo, col);
            gemm(o, ckk, hw, &tw.data, false, col, false, &mut data[s * o * hw..(s + 1) * o * hw], 0.0);
        }
        let track = self.tracked(&[x, w]);
        let out = Tensor {
            shape: vec![n, o, ho, wo],
            data,
        };
        Ok(self.push(out, Op::Conv2d { x, w, spec, cols }, track))
    }

    /// Max pooling with `-inf` padding.
    pub fn max_pool2d(&mut self, x: Var, k: usize, stride: usize, pad: usize) -> Result<Var> {
        let tx = self.value(x);
        if tx.shape.len() != 4 || stride == 0 || k == 0 {
            return Err(Error::InvalidArgument(format!("max_pool2d on shape {:?}", tx.shape)));
        }
        let [n, c, h, w] = [tx.shape[0], tx.shape[1], tx.shape[2], tx.shape[3]];
        let (Some(ho), Some(wo)) = (conv_out(h, k, stride, pad), conv_out(w, k, stride, pad)) else {
            return Err(Error::InvalidArgument(format!("pool window {k} exceeds {h}x{w}")));
        };
        let mut data = vec![f64::NEG_INFINITY; n * c * ho * wo];
        let mut argmax = vec![0usize; data.len()];
        for plane in 0..n * c {
            let base = plane * h * w;
            for oh in 0..ho {
                for ow in 0..wo {
                    let o = plane * ho * wo + oh * wo + ow;
                    for i in 0..k {
                        let ih = (oh * stride + i) as isize - pad as isize;
                        if ih < 0 || ih as usize >= h {
                            continue;
                        }
                        for j in 0..k {
                            let iw = (ow * stride + j) as isize - pad as isize;
                            if iw < 0 || iw as usize >= w {
                                continue;
                            }
                            let idx = base + ih as usize * w + iw as usize;
                            if tx.data[idx] > data[o] {
                                data[o] = tx.data[idx];
                                argmax[o] = idx;
                            }
                        }
                    }
                }
            }
        }
        let track = self.tracked(&[x]);
        let out = Tensor {
            shape: vec![n, c, ho, wo],
            data,
        };
        Ok(self.push(out, Op::MaxPool { x, argmax }, track))
    }

    /// Mean over all trailing dimensions after the channel axis: `[n, c, ..] -> [n, c]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.shape.len() < 3 {
            return Err(Error::InvalidArgument(format!("global_avg_pool on shape {:?}", tx.shape)));
        }
        let (n, c) = (tx.shape[0], tx.shape[1]);
        let s: usize = tx.shape[2..].iter().product();
        let data = tx
            .data
            .chunks(s)
            .map(|p| p.iter().sum::<f64>() / s as f64)
            .collect();
        let track = self.tracked(&[x]);
        Ok(self.push(Tensor { shape: vec![n, c], data }, Op::Gap(x), track))
    }

    /// Per-channel normalization over batch and spatial axes of `[n, c, ..]`.
    /// With `running = Some((mean, var))` the frozen statistics are used;
    /// otherwise batch statistics are used and returned as `(mean, biased var)`.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: Option<(&[f64], &[f64])>,
        eps: f64,
    ) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let (tx, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        if tx.shape.len() < 2 || tg.shape != [tx.shape[1]] || tb.shape != tg.shape {
            return Err(mismatch("batch_norm", tx, tg));
        }
        let (n, c) = (tx.shape[0], tx.shape[1]);
        let s: usize = tx.shape[2..].iter().product();
        let count = (n * s) as f64;
        let (mean, var) = match running {
            Some((m, v)) => {
                if m.len() != c || v.len() != c {
                    return Err(Error::LengthMismatch { left: m.len(), right: c });
                }
                (m.to_vec(), v.to_vec())
            }
            None => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for b in 0..n {
                    for ch in 0..c {
                        mean[ch] += tx.data[(b * c + ch) * s..][..s].iter().sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= count);
                for b in 0..n {
                    for ch in 0..c {
                        let m = mean[ch];
                        var[ch] += tx.data[(b * c + ch) * s..][..s]
                            .iter()
                            .map(|v| (v - m) * (v - m))
                            .sum::<f64>();
                    }
                }
                var.iter_mut().for_each(|v| *v /= count);
                (mean, var)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = vec![0.0; tx.data.len()];
        let mut data = vec![0.0; tx.data.len()];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * s;
                for i in off..off + s {
                    xhat[i] = (tx.data[i] - mean[ch]) * inv_std[ch];
                    data[i] = tg.data[ch] * xhat[i] + tb.data[ch];
                }
            }
        }
        let out = Tensor {
            shape: tx.shape.clone(),
            data,
        };
        let track = self.tracked(&[x, gamma, beta]);
        let train = running.is_none();
        let v = self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            },
            track,
        );
        Ok((v, mean, var))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x);
        let out = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|v| f(*v)).collect(),
        };
        let track = self.tracked(&[x]);
        self.push(out, op, track)
    }

    /// Subgradient 0 at the kink.
    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    /// Concatenate `[n, f_i]` matrices along columns.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.value(*parts.first().ok_or_else(|| Error::InvalidArgument("empty concat".into()))?);
        let n = first.shape[0];
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let t = self.value(*p);
            if t.shape.len() != 2 || t.shape[0] != n {
                return Err(mismatch("concat", first, t));
            }
            widths.push(t.shape[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; n * total];
        let mut off = 0;
        for (p, w) in parts.iter().zip(&widths) {
            let t = self.value(*p);
            for r in 0..n {
                data[r * total + off..r * total + off + w].copy_from_slice(&t.data[r * w..(r + 1) * w]);
            }
            off += w;
        }
        let track = self.tracked(parts);
        Ok(self.push(Tensor { shape: vec![n, total], data }, Op::Concat(parts.to_vec()), track))
    }

    /// Columns `start..start + len` of an `[n, f]` matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        if t.shape.len() != 2 || start + len > t.shape[1] {
            return Err(Error::InvalidArgument(format!(
                "slice {start}..{} of shape {:?}",
                start + len,
                t.shape
            )));
        }
        let (n, f) = (t.shape[0], t.shape[1]);
        let mut data = Vec::with_capacity(n * len);
        for r in 0..n {
            data.extend_from_slice(&t.data[r * f + start..r * f + start + len]);
        }
        let track = self.tracked(&[x]);
        Ok(self.push(Tensor { shape: vec![n, len], data }, Op::SliceCols { x, start }, track))
    }

    /// Inverted dropout; the identity when `train` is false.
    pub fn dropout(&mut self, x: Var, p: f64, train: bool, rng: &mut impl Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout probability {p} not in [0, 1)")));
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let t = self.value(x);
        let mask: Vec<f64> = (0..t.data.len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let out = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().zip(&mask).map(|(v, m)| v * m).collect(),
        };
        let track = self.tracked(&[x]);
        Ok(self.push(out, Op::Dropout { x, mask }, track))
    }

    /// Mean cross-entropy of row-wise softmax against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        if t.shape.len() != 2 || t.shape[0] != targets.len() {
            return Err(Error::ShapeMismatch {
                op: "softmax_cross_entropy",
                left: t.shape.clone(),
                right: vec![targets.len()],
            });
        }
        let k = t.shape[1];
        if let Some(bad) = targets.iter().find(|&&c| c >= k) {
            return Err(Error::InvalidArgument(format!("target class {bad} >= {k}")));
        }
        let probs = softmax_rows(&t.data, k);
        let n = targets.len() as f64;
        let loss = targets
            .iter()
            .enumerate()
            .map(|(r, &c)| {
                let row = &t.data[r * k..(r + 1) * k];
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                lse - row[c]
            })
            .sum::<f64>()
            / n;
        let track = self.tracked(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits,
                probs,
                targets: targets.to_vec(),
            },
            track,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum();
        let track = self.tracked(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), track)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data.iter().sum::<f64>() / t.data.len().max(1) as f64;
        let track = self.tracked(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), track)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        let track = self.tracked(&[x]);
        Ok(self.push(t, Op::Reshape(x), track))
    }

    /// `-(1/P) sum_{i<j} 0.5 ln(|x_i - x_j|^2 + eps)` over the rows of `[n, d]`.
    pub fn neg_mean_log_pair_dist(&mut self, x: Var, eps: f64) -> Result<Var> {
        let t = self.value(x);
        if t.shape.len() != 2 || t.shape[0] < 2 {
            return Err(Error::InvalidArgument(format!("pairwise distance on shape {:?}", t.shape)));
        }
        let n = t.shape[0];
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let d2: f64 = t.row(i).iter().zip(t.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                s += 0.5 * (d2 + eps).ln();
            }
        }
        let pairs = (n * (n - 1) / 2) as f64;
        let track = self.tracked(&[x]);
        Ok(self.push(Tensor::scalar(-s / pairs), Op::LogPairDist { x, eps }, track))
    }

    fn acc(&mut self, v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].track {
            return;
        }
        let n = self.nodes[v.0].value.data.len();
        let g = self.grads[v.0].get_or_insert_with(|| vec![0.0; n]);
        f(g);
    }

    /// Populate gradients of the scalar `loss` with respect to every tracked node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).data.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar, got shape {:?}",
                self.value(loss).shape
            )));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].track {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("gradient"));
            }
            self.backward_node(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn backward_node(&mut self, i: usize, g: &[f64]) {
        // The op is moved out so its saved buffers can be read while
        // gradients of earlier nodes are written.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf | Op::Param(_) => {}
            Op::Add(a, b) => {
                self.acc(*a, |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g));
                self.acc(*b, |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g));
            }
            Op::Sub(a, b) => {
                self.acc(*a, |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g));
                self.acc(*b, |d| d.iter_mut().zip(g).for_each(|(d, g)| *d -= g));
            }
            Op::Mul(a, b) => {
                let va = self.value(*a).data.clone();
                let vb = self.value(*b).data.clone();
                self.acc(*a, |d| {
                    for ((d, g), y) in d.iter_mut().zip(g).zip(&vb) {
                        *d += g * y;
                    }
                });
                self.acc(*b, |d| {
                    for ((d, g), x) in d.iter_mut().zip(g).zip(&va) {
                        *d += g * x;
                    }
                });
            }
            Op::Scale(a, c) => self.acc(*a, |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g * c)),
            Op::AddBias(x, b) => {
                let f = self.value(*b).data.len();
                self.acc(*x, |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g));
                self.acc(*b, |d| {
                    for row in g.chunks(f) {
                        d.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (m, k) = (self.value(*a).shape[0], self.value(*a).shape[1]);
                let n = self.value(*b).shape[1];
                let va = self.value(*a).data.clone();
                let vb = self.value(*b).data.clone();
                self.acc(*a, |d| gemm(m, n, k, g, false, &vb, true, d, 1.0));
                self.acc(*b, |d| gemm(k, m, n, &va, true, g, false, d, 1.0));
            }
            Op::Linear(x, w) => {
                let (n, i_dim) = (self.value(*x).shape[0], self.value(*x).shape[1]);
                let o = self.value(*w).shape[0];
                let vx = self.value(*x).data.clone();
                let vw = self.value(*w).data.clone();
                self.acc(*x, |d| gemm(n, o, i_dim, g, false, &vw, false, d, 1.0));
                self.acc(*w, |d| gemm(o, n, i_dim, g, true, &vx, false, d, 1.0));
            }
            Op::Conv2d { x, w, spec, cols } => {
                let xs = self.value(*x).shape.clone();
                let ws = self.value(*w).shape.clone();
                let os = self.nodes[i].value.shape.clone();
                let [n, c, h, wd] = [xs[0], xs[1], xs[2], xs[3]];
                let [o, _, kh, kw] = [ws[0], ws[1], ws[2], ws[3]];
                let (ho, wo) = (os[2], os[3]);
                let (ckk, hw) = (c * kh * kw, ho * wo);
                self.acc(*w, |d| {
                    for s in 0..n {
                        gemm(o, hw, ckk, &g[s * o * hw..][..o * hw], false, &cols[s * ckk * hw..][..ckk * hw], true, d, 1.0);
                    }
                });
                if self.nodes[x.0].track {
                    let vw = self.value(*w).data.clone();
                    let mut dcol = vec![0.0; ckk * hw];
                    self.acc(*x, |d| {
                        for s in 0..n {
                            gemm(ckk, o, hw, &vw, true, &g[s * o * hw..][..o * hw], false, &mut dcol, 0.0);
                            col2im(&dcol, c, h, wd, kh, kw, spec.stride, spec.pad, ho, wo, &mut d[s * c * h * wd..][..c * h * wd]);
                        }
                    });
                }
            }
            Op::MaxPool { x, argmax } => self.acc(*x, |d| {
                for (g, &idx) in g.iter().zip(argmax) {
                    d[idx] += g;
                }
            }),
            Op::Gap(x) => {
                let xs = &self.value(*x).shape;
                let s: usize = xs[2..].iter().product();
                self.acc(*x, |d| {
                    for (chunk, g) in d.chunks_mut(s).zip(g) {
                        chunk.iter_mut().for_each(|v| *v += g / s as f64);
                    }
                });
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let xs = self.value(*x).shape.clone();
                let (n, c) = (xs[0], xs[1]);
                let s: usize = xs[2..].iter().product();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * s;
                        for k in off..off + s {
                            dgamma[ch] += g[k] * xhat[k];
                            dbeta[ch] += g[k];
                        }
                    }
                }
                let gam = self.value(*gamma).data.clone();
                let m = (n * s) as f64;
                self.acc(*x, |d| {
                    for b in 0..n {
                        for ch in 0..c {
                            let off = (b * c + ch) * s;
                            let scale = gam[ch] * inv_std[ch];
                            for k in off..off + s {
                                d[k] += if *train {
                                    scale / m * (m * g[k] - dbeta[ch] - xhat[k] * dgamma[ch])
                                } else {
                                    scale * g[k]
                                };
                            }
                        }
                    }
                });
                self.acc(*gamma, |d| d.iter_mut().zip(&dgamma).for_each(|(d, v)| *d += v));
                self.acc(*beta, |d| d.iter_mut().zip(&dbeta).for_each(|(d, v)| *d += v));
            }
            Op::Relu(x) => {
                let y = self.nodes[i].value.data.clone();
                self.acc(*x, |d| {
                    for ((d, g), y) in d.iter_mut().zip(g).zip(&y) {
                        if *y > 0.0 {
                            *d += g;
                        }
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = self.nodes[i].value.data.clone();
                self.acc(*x, |d| {
                    for ((d, g), y) in d.iter_mut().zip(g).zip(&y) {
                        *d += g * y * (1.0 - y);
                    }
                });
            }
            Op::Tanh(x) => {
                let y = self.nodes[i].value.data.clone();
                self.acc(*x, |d| {
                    for ((d, g), y) in d.iter_mut().zip(g).zip(&y) {
                        *d += g * (1.0 - y * y);
                    }
                });
            }
            Op::Concat(parts) => {
                let total = self.nodes[i].value.shape[1];
                let n = self.nodes[i].value.shape[0];
                let mut off = 0;
                for p in parts {
                    let w = self.value(*p).shape[1];
                    self.acc(*p, |d| {
                        for r in 0..n {
                            for (dv, gv) in d[r * w..(r + 1) * w].iter_mut().zip(&g[r * total + off..]) {
                                *dv += gv;
                            }
                        }
                    });
                    off += w;
                }
            }
            Op::SliceCols { x, start } => {
                let f = self.value(*x).shape[1];
                let len = self.nodes[i].value.shape[1];
                self.acc(*x, |d| {
                    for (r, row) in g.chunks(len).enumerate() {
                        for (dv, gv) in d[r * f + start..r * f + start + len].iter_mut().zip(row) {
                            *dv += gv;
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => self.acc(*x, |d| {
                for ((d, g), m) in d.iter_mut().zip(g).zip(mask) {
                    *d += g * m;
                }
            }),
            Op::SoftmaxCe { logits, probs, targets } => {
                let k = self.value(*logits).shape[1];
                let scale = g[0] / targets.len() as f64;
                self.acc(*logits, |d| {
                    for (r, &c) in targets.iter().enumerate() {
                        for j in 0..k {
                            let y = if j == c { 1.0 } else { 0.0 };
                            d[r * k + j] += scale * (probs[r * k + j] - y);
                        }
                    }
                });
            }
            Op::Sum(x) => self.acc(*x, |d| d.iter_mut().for_each(|v| *v += g[0])),
            Op::Mean(x) => {
                let n = self.value(*x).data.len() as f64;
                self.acc(*x, |d| d.iter_mut().for_each(|v| *v += g[0] / n));
            }
            Op::Reshape(x) => self.acc(*x, |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += g)),
            Op::LogPairDist { x, eps } => {
                let t = self.value(*x).clone();
                let (n, dim) = (t.shape[0], t.shape[1]);
                let pairs = (n * (n - 1) / 2) as f64;
                self.acc(*x, |d| {
                    for a in 0..n {
                        for b in a + 1..n {
                            let diff: Vec<f64> = t.row(a).iter().zip(t.row(b)).map(|(p, q)| p - q).collect();
                            let d2: f64 = diff.iter().map(|v| v * v).sum();
                            let coef = -g[0] / pairs / (d2 + eps);
                            for (k, df) in diff.iter().enumerate() {
                                d[a * dim + k] += coef * df;
                                d[b * dim + k] -= coef * df;
                            }
                        }
                    }
                });
            }
        }
        self.nodes[i].op = op;
    }

    /// Add the gradients of every parameter node into the store.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for (node, g) in self.nodes.iter().zip(&self.grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                store
                    .get_mut(*id)
                    .grad
                    .iter_mut()
                    .zip(g)
                    .for_each(|(d, v)| *d += v);
            }
        }
    }
}
