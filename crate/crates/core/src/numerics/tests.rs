use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Values bounded away from zero and from each other, for kinked ops.
fn spread_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut t = rand_tensor(shape, seed);
    let n = t.len();
    for (i, v) in t.data.iter_mut().enumerate() {
        let sign = if *v < 0.0 { -1.0 } else { 1.0 };
        *v = sign * (0.05 + i as f64 / n as f64);
    }
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = r.gen_range(0..=i);
        t.data.swap(i, j);
    }
    t
}

/// Weighted sum so every output element carries a distinct gradient.
fn weighted(g: &mut Graph, y: Var) -> Result<Var, crate::Error> {
    let t = g.value(y).clone();
    let w: Vec<f64> = (0..t.len()).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
    let wv = g.input(Tensor::new(&t.shape, w).unwrap());
    let p = g.mul(y, wv)?;
    Ok(g.sum(p))
}

fn direct_conv(x: &Tensor, w: &Tensor, s: usize, p: usize) -> Tensor {
    let [n, c, h, wd] = [x.shape[0], x.shape[1], x.shape[2], x.shape[3]];
    let [o, _, kh, kw] = [w.shape[0], w.shape[1], w.shape[2], w.shape[3]];
    let ho = (h + 2 * p - kh) / s + 1;
    let wo = (wd + 2 * p - kw) / s + 1;
    let mut out = Tensor::zeros(&[n, o, ho, wo]);
    for b in 0..n {
        for oc in 0..o {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = 0.0;
                    for ic in 0..c {
                        for u in 0..kh {
                            for v in 0..kw {
                                let (y, z) = ((i * s + u) as isize - p as isize, (j * s + v) as isize - p as isize);
                                if y >= 0 && z >= 0 && (y as usize) < h && (z as usize) < wd {
                                    acc += x.data[((b * c + ic) * h + y as usize) * wd + z as usize]
                                        * w.data[((oc * c + ic) * kh + u) * kw + v];
                                }
                            }
                        }
                    }
                    out.data[((b * o + oc) * ho + i) * wo + j] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn relu_and_gap_examples() {
    let mut g = Graph::new();
    let x = g.input(Tensor::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap());
    let y = g.relu(x);
    assert_eq!(g.value(y).data, vec![0.0, 0.0, 2.0]);
    let c = g.input(Tensor::full(&[2, 3, 4, 5], 1.75));
    let p = g.global_avg_pool(c).unwrap();
    assert_eq!(g.value(p).shape, vec![2, 3]);
    assert!(g.value(p).data.iter().all(|&v| v == 1.75));
}

#[test]
fn conv_of_ones() {
    let mut g = Graph::new();
    let x = g.input(Tensor::full(&[1, 1, 5, 5], 1.0));
    let w = g.input(Tensor::full(&[1, 1, 3, 3], 1.0));
    let y = g.conv2d(x, w, Conv2dSpec { stride: 1, pad: 0 }).unwrap();
    assert_eq!(g.value(y).shape, vec![1, 1, 3, 3]);
    assert!(g.value(y).data.iter().all(|&v| v == 9.0));
}

#[test]
fn conv_matches_direct_sum() {
    for (s, p) in [(1, 0), (1, 1), (2, 3), (2, 1)] {
        let xt = rand_tensor(&[2, 3, 9, 8], 1);
        let wt = rand_tensor(&[4, 3, 3, 3], 2);
        let mut g = Graph::new();
        let x = g.input(xt.clone());
        let w = g.input(wt.clone());
        let y = g.conv2d(x, w, Conv2dSpec { stride: s, pad: p }).unwrap();
        let want = direct_conv(&xt, &wt, s, p);
        assert_eq!(g.value(y).shape, want.shape);
        for (a, b) in g.value(y).data.iter().zip(&want.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn max_pool_matches_direct() {
    let xt = rand_tensor(&[1, 2, 7, 6], 3);
    let mut g = Graph::new();
    let x = g.input(xt.clone());
    let y = g.max_pool2d(x, 3, 2, 1).unwrap();
    assert_eq!(g.value(y).shape, vec![1, 2, 4, 3]);
    for c in 0..2 {
        for i in 0..4 {
            for j in 0..3 {
                let mut m = f64::NEG_INFINITY;
                for u in 0..3 {
                    for v in 0..3 {
                        let (a, b) = ((2 * i + u) as isize - 1, (2 * j + v) as isize - 1);
                        if a >= 0 && b >= 0 && a < 7 && b < 6 {
                            m = m.max(xt.data[(c * 7 + a as usize) * 6 + b as usize]);
                        }
                    }
                }
                assert_eq!(g.value(y).data[(c * 4 + i) * 3 + j], m);
            }
        }
    }
}

#[test]
fn shape_errors_report_both_shapes() {
    let mut g = Graph::new();
    let a = g.input(Tensor::zeros(&[4, 3]));
    let b = g.input(Tensor::zeros(&[4, 5]));
    match g.matmul(a, b) {
        Err(crate::Error::ShapeMismatch { left, right, .. }) => {
            assert_eq!(left, vec![4, 3]);
            assert_eq!(right, vec![4, 5]);
        }
        other => panic!("{other:?}"),
    }
    assert!(g.add(a, b).is_err());
    let mut r = ChaCha8Rng::seed_from_u64(0);
    assert!(g.dropout(a, 1.0, true, &mut r).is_err());
}

#[test]
fn matmul_gradient() {
    let err = grad_check(&[rand_tensor(&[4, 3], 1), rand_tensor(&[3, 5], 2)], |g, v| {
        let y = g.matmul(v[0], v[1])?;
        weighted(g, y)
    })
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn relu_gradient_away_from_kink() {
    let x = spread_tensor(&[5, 4], 3);
    assert!(x.data.iter().all(|v| v.abs() >= 1e-3));
    let err = grad_check(&[x], |g, v| {
        let y = g.relu(v[0]);
        weighted(g, y)
    })
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn elementwise_gradients() {
    let ins = [rand_tensor(&[3, 4], 4), rand_tensor(&[3, 4], 5), rand_tensor(&[4], 6)];
    let err = grad_check(&ins, |g, v| {
        let s = g.sigmoid(v[0]);
        let t = g.tanh(v[1]);
        let m = g.mul(s, t)?;
        let d = g.sub(m, v[0])?;
        let e = g.scale(d, 1.7);
        let b = g.add_bias(e, v[2])?;
        let q = g.mul(b, b)?;
        let y = g.mean(q);
        let z = g.reshape(b, &[12])?;
        let w = weighted(g, z)?;
        g.add(y, w)
    })
    .unwrap();
    assert!(err < 1e-5, "{err}");
}

#[test]
fn linear_concat_slice_gradients() {
    let ins = [rand_tensor(&[3, 4], 7), rand_tensor(&[5, 4], 8), rand_tensor(&[3, 2], 9)];
    let err = grad_check(&ins, |g, v| {
        let y = g.linear(v[0], v[1])?;
        let c = g.concat(&[y, v[2], y])?;
        let s = g.slice_cols(c, 3, 6)?;
        weighted(g, s)
    })
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn conv_pool_gap_gradients() {
    let ins = [rand_tensor(&[2, 2, 7, 6], 10), rand_tensor(&[3, 2, 3, 3], 11)];
    let err = grad_check(&ins, |g, v| {
        let y = g.conv2d(v[0], v[1], Conv2dSpec { stride: 2, pad: 1 })?;
        let p = g.max_pool2d(y, 2, 1, 0)?;
        let q = g.global_avg_pool(p)?;
        weighted(g, q)
    })
    .unwrap();
    assert!(err < 1e-5, "{err}");
}

#[test]
fn batch_norm_gradients() {
    let ins = [rand_tensor(&[3, 2, 2, 3], 12), rand_tensor(&[2], 13), rand_tensor(&[2], 14)];
    let err = grad_check(&ins, |g, v| {
        let (y, _, _) = g.batch_norm(v[0], v[1], v[2], None, 1e-5)?;
        weighted(g, y)
    })
    .unwrap();
    assert!(err < 1e-5, "{err}");
    let err = grad_check(&ins, |g, v| {
        let (y, _, _) = g.batch_norm(v[0], v[1], v[2], Some((&[0.1, -0.2], &[0.5, 2.0])), 1e-5)?;
        weighted(g, y)
    })
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn batch_norm_train_normalizes() {
    let mut g = Graph::new();
    let mut xt = rand_tensor(&[8, 3, 4, 4], 15);
    xt.data.iter_mut().enumerate().for_each(|(i, v)| *v = *v * 5.0 + (i % 7) as f64);
    let x = g.input(xt);
    let one = g.input(Tensor::full(&[3], 1.0));
    let zero = g.input(Tensor::zeros(&[3]));
    let (y, mean, var) = g.batch_norm(x, one, zero, None, 1e-5).unwrap();
    assert_eq!(mean.len(), 3);
    assert!(var.iter().all(|v| *v > 0.0));
    let t = g.value(y);
    for c in 0..3 {
        let vals: Vec<f64> = (0..8).flat_map(|b| t.data[(b * 3 + c) * 16..][..16].to_vec()).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
        assert!(m.abs() < 1e-3 && (v - 1.0).abs() < 1e-3, "{m} {v}");
    }
}

#[test]
fn batch_norm_eval_uses_frozen_stats() {
    let mut g = Graph::new();
    let x = g.input(Tensor::new(&[2, 1, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let gam = g.input(Tensor::full(&[1], 2.0));
    let bet = g.input(Tensor::full(&[1], 0.5));
    let (y, _, _) = g.batch_norm(x, gam, bet, Some((&[1.0], &[4.0])), 0.0).unwrap();
    assert_eq!(g.value(y).data, vec![0.5, 1.5, 2.5, 3.5]);
}

#[test]
fn softmax_and_cross_entropy() {
    let logits = rand_tensor(&[4, 3], 16);
    let p = softmax_rows(&logits.data, 3);
    for row in p.chunks(3) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let mut g = Graph::new();
    let l = g.input(Tensor::new(&[1, 3], vec![1000.0, 0.0, -3.0]).unwrap());
    let ce = g.softmax_cross_entropy(l, &[0]).unwrap();
    assert_eq!(g.value(ce).item(), 0.0);
    let err = grad_check(&[logits], |g, v| g.softmax_cross_entropy(v[0], &[0, 2, 1, 2])).unwrap();
    assert!(err < 1e-6, "{err}");
    let mut g = Graph::new();
    let l = g.input(Tensor::zeros(&[2, 3]));
    assert!(g.softmax_cross_entropy(l, &[0, 3]).is_err());
}

#[test]
fn dropout_modes() {
    let mut g = Graph::new();
    let x = g.input(Tensor::full(&[100_000], 2.0));
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let same = g.dropout(x, 0.3, false, &mut r).unwrap();
    assert_eq!(same, x);
    let y = g.dropout(x, 0.3, true, &mut r).unwrap();
    let mean = g.value(y).data.iter().sum::<f64>() / 100_000.0;
    assert!((mean / 2.0 - 1.0).abs() < 0.02, "{mean}");
    let err = grad_check(&[rand_tensor(&[6, 5], 17)], |g, v| {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let y = g.dropout(v[0], 0.4, true, &mut r)?;
        weighted(g, y)
    })
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn pair_distance_gradient() {
    let err = grad_check(&[rand_tensor(&[5, 3], 18)], |g, v| g.neg_mean_log_pair_dist(v[0], 1e-9)).unwrap();
    assert!(err < 1e-5, "{err}");
}

fn lstm_inputs(n: usize, input: usize, hidden: usize, seed: u64) -> Vec<Tensor> {
    vec![
        rand_tensor(&[4 * hidden, input], seed),
        rand_tensor(&[4 * hidden, hidden], seed + 1),
        rand_tensor(&[4 * hidden], seed + 2),
        rand_tensor(&[n, input], seed + 3),
        rand_tensor(&[n, hidden], seed + 4),
        rand_tensor(&[n, hidden], seed + 5),
    ]
}

#[test]
fn lstm_zero_weights_give_zero_state() {
    let mut g = Graph::new();
    let w = LstmWeights {
        w_ih: g.input(Tensor::zeros(&[8, 3])),
        w_hh: g.input(Tensor::zeros(&[8, 2])),
        bias: g.input(Tensor::zeros(&[8])),
    };
    let x = g.input(rand_tensor(&[4, 3], 1));
    let h = g.input(Tensor::zeros(&[4, 2]));
    let c = g.input(Tensor::zeros(&[4, 2]));
    let (h1, c1) = lstm_cell(&mut g, x, h, c, &w).unwrap();
    assert!(g.value(h1).data.iter().all(|&v| v == 0.0));
    assert!(g.value(c1).data.iter().all(|&v| v == 0.0));
}

#[test]
fn lstm_saturated_forget_gate_keeps_cell() {
    let hidden = 3;
    let mut g = Graph::new();
    let mut b = Tensor::zeros(&[4 * hidden]);
    b.data[hidden..2 * hidden].iter_mut().for_each(|v| *v = 50.0);
    // Input gate closed as well so nothing is written.
    b.data[..hidden].iter_mut().for_each(|v| *v = -50.0);
    let w = LstmWeights {
        w_ih: g.input(Tensor::zeros(&[4 * hidden, 2])),
        w_hh: g.input(rand_tensor(&[4 * hidden, hidden], 2)),
        bias: g.input(b),
    };
    let ct = rand_tensor(&[5, hidden], 3);
    let x = g.input(rand_tensor(&[5, 2], 4));
    let h = g.input(Tensor::zeros(&[5, hidden]));
    let c = g.input(ct.clone());
    let (_, c1) = lstm_cell(&mut g, x, h, c, &w).unwrap();
    for (a, b) in g.value(c1).data.iter().zip(&ct.data) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn lstm_unrolled_gradient() {
    let ins = lstm_inputs(2, 3, 4, 20);
    let err = grad_check(&ins, |g, v| {
        let w = LstmWeights {
            w_ih: v[0],
            w_hh: v[1],
            bias: v[2],
        };
        let (mut h, mut c) = (v[4], v[5]);
        for step in 0..3 {
            let x = if step == 1 { g.scale(v[3], -0.5) } else { v[3] };
            (h, c) = lstm_cell(g, x, h, c, &w)?;
        }
        let hc = g.concat(&[h, c])?;
        weighted(g, hc)
    })
    .unwrap();
    assert!(err < 1e-5, "{err}");
}

#[test]
fn store_gradients_reach_params() {
    let mut store = ParamStore::new();
    let w = store.add("w", rand_tensor(&[3, 2], 30));
    let b = store.add("b", rand_tensor(&[3], 31));
    store.add_buffer("buf", Tensor::zeros(&[2]));
    let x = rand_tensor(&[4, 2], 32);
    let f = |s: &ParamStore| -> Result<(Graph, Var), crate::Error> {
        let mut g = Graph::new();
        let xi = g.input(x.clone());
        let wv = g.param(s, w);
        let bv = g.param(s, b);
        let y = g.linear(xi, wv)?;
        let y = g.add_bias(y, bv)?;
        let y = g.tanh(y);
        let l = weighted(&mut g, y)?;
        Ok((g, l))
    };
    let err = grad_check_store(&store, 100, 1, f).unwrap();
    assert!(err < 1e-6, "{err}");
    assert_eq!(store.count_trainable(), 9);
}
