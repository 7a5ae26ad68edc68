use super::params::{Bound, Init, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Affine layer `x·W + b` with `W: (in, out)`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Dense {
    pub(crate) fn new(store: &mut ParamStore, init: &mut Init, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let weight = store.insert(format!("{name}.weight"), init.xavier(fan_in, fan_out));
        let bias = store.insert(format!("{name}.bias"), Tensor::zeros(&[fan_out]));
        Dense { weight, bias, fan_in, fan_out }
    }

    /// Applies the layer to the last axis of `x`.
    pub fn apply(&self, g: &mut Graph, bound: &Bound, x: Var) -> Result<Var> {
        let h = g.matmul(x, bound.var(self.weight))?;
        g.add(h, bound.var(self.bias))
    }
}

/// Stack of dense layers with ReLU between consecutive layers and none after the last.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub(crate) fn new(store: &mut ParamStore, init: &mut Init, name: &str, widths: &[usize]) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(store, init, &format!("{name}.{i}"), w[0], w[1]))
            .collect();
        Mlp { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }

    pub fn apply(&self, g: &mut Graph, bound: &Bound, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(g, bound, h)?;
            if i + 1 < self.layers.len() {
                h = g.relu(h);
            }
        }
        Ok(h)
    }
}

/// Standard sinusoidal table: `PE[p, 2i] = sin(p / 10000^(2i/D))`,
/// `PE[p, 2i+1] = cos(p / 10000^(2i/D))`.
pub fn positional_table(n_tokens: usize, token_dim: usize) -> Tensor {
    let mut data = Vec::with_capacity(n_tokens * token_dim);
    for pos in 0..n_tokens {
        for j in 0..token_dim {
            let pair = (j / 2 * 2) as f64;
            let angle = pos as f64 / 10000f64.powf(pair / token_dim as f64);
            data.push(if j % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::new(&[n_tokens, token_dim], data).expect("sized above")
}

/// Reshapes `(b, d)` features into `(b, n_tokens, token_dim)` tokens and adds
/// the positional table.
pub fn tokenize(g: &mut Graph, feat: Var, positional: Var) -> Result<Var> {
    let pshape = g.shape(positional).to_vec();
    let fshape = g.shape(feat).to_vec();
    if pshape.len() != 2 || fshape.len() != 2 {
        return Err(Error::shape("tokenize", format!("features {fshape:?}, positional {pshape:?}")));
    }
    let (n, td) = (pshape[0], pshape[1]);
    if fshape[1] != n * td {
        return Err(Error::Config(format!(
            "feature width {} cannot be split into {n} tokens of width {td}",
            fshape[1]
        )));
    }
    let tokens = g.reshape(feat, &[fshape[0], n, td])?;
    g.add(tokens, positional)
}

/// Inverse reshape of [`tokenize`], without removing the positional table.
pub fn detokenize(g: &mut Graph, tokens: Var) -> Result<Var> {
    let s = g.shape(tokens).to_vec();
    if s.len() != 3 {
        return Err(Error::shape("detokenize", format!("expected (b, n, d), got {s:?}")));
    }
    g.reshape(tokens, &[s[0], s[1] * s[2]])
}
