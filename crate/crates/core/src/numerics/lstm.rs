use super::graph::{Graph, Var};
use crate::error::{Error, Result};

/// Gate layout along the `4h` axis: input, forget, candidate, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights {
    /// `[4h, in]`
    pub w_ih: Var,
    /// `[4h, h]`
    pub w_hh: Var,
    /// `[4h]`
    pub bias: Var,
}

/// One step on a batch: `x[n, in]`, `h_prev[n, h]`, `c_prev[n, h]`.
pub fn lstm_cell(g: &mut Graph, x: Var, h_prev: Var, c_prev: Var, w: &LstmWeights) -> Result<(Var, Var)> {
    let hidden = g.value(h_prev).shape[1];
    if g.value(w.w_hh).shape != [4 * hidden, hidden] {
        return Err(Error::ShapeMismatch {
            op: "lstm_cell",
            left: g.value(w.w_hh).shape.clone(),
            right: vec![4 * hidden, hidden],
        });
    }
    let a = g.linear(x, w.w_ih)?;
    let b = g.linear(h_prev, w.w_hh)?;
    let pre = g.add(a, b)?;
    let pre = g.add_bias(pre, w.bias)?;
    let i = g.slice_cols(pre, 0, hidden)?;
    let f = g.slice_cols(pre, hidden, hidden)?;
    let c = g.slice_cols(pre, 2 * hidden, hidden)?;
    let o = g.slice_cols(pre, 3 * hidden, hidden)?;
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let cand = g.tanh(c);
    let o = g.sigmoid(o);
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c_t = g.add(keep, write)?;
    let squashed = g.tanh(c_t);
    let h_t = g.mul(o, squashed)?;
    Ok((h_t, c_t))
}
