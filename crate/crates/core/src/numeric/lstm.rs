use crate::error::Result;

use super::graph::{Graph, Var};

/// Graph handles of one LSTM layer, gates ordered input, forget, candidate, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    /// `(hidden, input)` weights applied to the layer input.
    pub w: [Var; 4],
    /// `(hidden, hidden)` recurrent weights.
    pub u: [Var; 4],
    /// `(hidden)` biases.
    pub b: [Var; 4],
}

/// One LSTM step on `(1, input)` / `(1, hidden)` rows, returning `(hidden, cell)`.
pub fn lstm_cell(g: &mut Graph, x: Var, h: Var, c: Var, p: &LstmParams) -> Result<(Var, Var)> {
    let mut pre = [x; 4];
    for k in 0..4 {
        let a = g.linear(x, p.w[k], Some(p.b[k]))?;
        let r = g.linear(h, p.u[k], None)?;
        pre[k] = g.add(a, r)?;
    }
    let i = g.sigmoid(pre[0]);
    let f = g.sigmoid(pre[1]);
    let cand = g.tanh(pre[2]);
    let o = g.sigmoid(pre[3]);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next);
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}
