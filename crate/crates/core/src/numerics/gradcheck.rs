use rand::seq::index::sample;

use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng;

pub const FD_STEP: f64 = 1e-5;
/// Successive steps tried when two estimates disagree.
const FD_SHRINK: [f64; 4] = [FD_STEP, 1e-6, 1e-7, 1e-8];
/// Relative agreement that marks two step sizes as converged.
const FD_AGREE: f64 = 1e-6;

/// Central difference that shrinks the step until two successive estimates
/// agree, so a ReLU or max-pool kink inside the first step does not count
/// as a gradient error. `at(d)` evaluates the loss at `x + d`.
fn central_difference(mut at: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let mut prev: Option<f64> = None;
    for h in FD_SHRINK {
        let est = (at(h)? - at(-h)?) / (2.0 * h);
        if let Some(p) = prev {
            if rel_err(p, est) < FD_AGREE {
                return Ok(p);
            }
        }
        prev = Some(est);
    }
    Ok(prev.expect("non-empty step list"))
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / 1f64.max(a.abs()).max(n.abs())
}

fn scalar(g: &Graph, v: Var) -> Result<f64> {
    let x = g.value(v).item();
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite("loss"))
    }
}

/// Max relative error between analytic and central-difference gradients
/// of `f` with respect to every element of every input.
pub fn grad_check<F>(inputs: &[Tensor], f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| g.grad(*v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();
    let eval = |ins: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ins.iter().map(|t| g.leaf(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        scalar(&g, out)
    };
    let mut worst = 0.0f64;
    let mut ins = inputs.to_vec();
    for k in 0..ins.len() {
        for i in 0..ins[k].len() {
            let orig = ins[k].data[i];
            let num = central_difference(|d| {
                ins[k].data[i] = orig + d;
                eval(&ins)
            });
            ins[k].data[i] = orig;
            let num = num?;
            let a = analytic[k][i];
            if !a.is_finite() {
                return Err(Error::NonFinite("analytic gradient"));
            }
            worst = worst.max(rel_err(a, num));
        }
    }
    Ok(worst)
}

/// Same check against trainable tensors of a store, on at most `max_coords`
/// randomly chosen coordinates per tensor.
pub fn grad_check_store<F>(store: &ParamStore, max_coords: usize, seed: u64, f: F) -> Result<f64>
where
    F: Fn(&ParamStore) -> Result<(Graph, Var)>,
{
    let mut analytic = store.clone();
    analytic.zero_grad();
    let (mut g, out) = f(&analytic)?;
    g.backward(out)?;
    g.accumulate_param_grads(&mut analytic);
    let mut work = store.clone();
    let mut worst = 0.0f64;
    let mut r = rng::stream(seed, &[rng::tag::SAMPLER]);
    let ids: Vec<_> = (0..store.len())
        .map(super::params::ParamId)
        .filter(|id| store.get(*id).trainable)
        .collect();
    for id in ids {
        let n = store.get(id).value.len();
        let coords = sample(&mut r, n, n.min(max_coords));
        for i in coords {
            let orig = work.get(id).value.data[i];
            let num = central_difference(|d| {
                work.get_mut(id).value.data[i] = orig + d;
                let (g, v) = f(&work)?;
                scalar(&g, v)
            });
            work.get_mut(id).value.data[i] = orig;
            let num = num?;
            worst = worst.max(rel_err(analytic.get(id).grad[i], num));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn kink_inside_first_step_is_not_an_error() {
        // relu(x + 3e-6) at x = 0: a 1e-5 central difference straddles the kink.
        let x = Tensor::new(&[1], vec![0.0]).unwrap();
        let err = grad_check(&[x], |g, v| {
            let c = g.input(Tensor::new(&[1], vec![3e-6]).unwrap());
            let s = g.add(v[0], c)?;
            let r = g.relu(s);
            Ok(g.sum(r))
        })
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn wrong_gradient_is_still_reported() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::new(&[3], vec![0.3, -1.2, 2.0]).unwrap());
        // The first call (used for the analytic pass) scales by 2, later calls by 3.
        let calls = Cell::new(0);
        let err = grad_check_store(&store, 3, 1, |s| {
            let k = if calls.get() == 0 { 2.0 } else { 3.0 };
            calls.set(calls.get() + 1);
            let mut g = Graph::new();
            let v = g.param(s, w);
            let q = g.mul(v, v)?;
            let y = g.scale(q, k);
            let out = g.sum(y);
            Ok((g, out))
        })
        .unwrap();
        assert!(err > 0.3, "{err}");
    }
}
