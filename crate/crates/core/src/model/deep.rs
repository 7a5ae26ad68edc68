//! Deep feature extraction over fused tokens: a self-attention encoder block
//! and an FNet (Fourier mixing) block run side by side and are merged.

use serde::{Deserialize, Serialize};

use super::layers::{Dense, Mlp};
use super::params::{Bound, Init, ParamId, ParamStore};
use super::variant::DeepMode;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// How the two parallel branch outputs are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MergeMode {
    /// Elementwise sum, then layer norm.
    #[default]
    Sum,
    /// Feature-axis concatenation, dense projection back to token width, then layer norm.
    ConcatProject,
}

#[derive(Debug, Clone)]
pub struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl Norm {
    fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Norm {
            gain: store.insert(format!("{name}.gain"), Tensor::full(&[width], 1.0)),
            bias: store.insert(format!("{name}.bias"), Tensor::zeros(&[width])),
        }
    }

    fn apply(&self, g: &mut Graph, bound: &Bound, x: Var, eps: f64) -> Result<Var> {
        let axis = g.shape(x).len() - 1;
        g.layer_norm(x, axis, bound.var(self.gain), bound.var(self.bias), eps)
    }
}

#[derive(Debug, Clone)]
pub struct AttentionBlock {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub out: Dense,
    pub heads: usize,
    pub norm1: Norm,
    pub ffn: Mlp,
    pub norm2: Norm,
}

#[derive(Debug, Clone)]
pub struct FourierBlock {
    pub norm1: Norm,
    pub ffn: Mlp,
    pub norm2: Norm,
}

#[derive(Debug, Clone)]
pub struct DeepExtractParams {
    pub mode: DeepMode,
    pub attention: Option<AttentionBlock>,
    pub fourier: Option<FourierBlock>,
    pub merge: MergeMode,
    pub merge_proj: Option<Dense>,
    pub merge_norm: Option<Norm>,
    pub eps: f64,
}

impl DeepExtractParams {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        store: &mut ParamStore,
        init: &mut Init,
        mode: DeepMode,
        token_dim: usize,
        heads: usize,
        ffn_hidden: usize,
        merge: MergeMode,
        eps: f64,
    ) -> Self {
        let use_attn = matches!(mode, DeepMode::Parallel | DeepMode::AttentionOnly);
        let use_fourier = matches!(mode, DeepMode::Parallel | DeepMode::FourierOnly);
        let attention = use_attn.then(|| AttentionBlock {
            w_q: store.insert("deep.attn.w_q", init.xavier(token_dim, token_dim)),
            w_k: store.insert("deep.attn.w_k", init.xavier(token_dim, token_dim)),
            w_v: store.insert("deep.attn.w_v", init.xavier(token_dim, token_dim)),
            out: Dense::new(store, init, "deep.attn.out", token_dim, token_dim),
            heads,
            norm1: Norm::new(store, "deep.attn.norm1", token_dim),
            ffn: Mlp::new(store, init, "deep.attn.ffn", &[token_dim, ffn_hidden, token_dim]),
            norm2: Norm::new(store, "deep.attn.norm2", token_dim),
        });
        let fourier = use_fourier.then(|| FourierBlock {
            norm1: Norm::new(store, "deep.fourier.norm1", token_dim),
            ffn: Mlp::new(store, init, "deep.fourier.ffn", &[token_dim, ffn_hidden, token_dim]),
            norm2: Norm::new(store, "deep.fourier.norm2", token_dim),
        });
        let parallel = mode == DeepMode::Parallel;
        let merge_proj = (parallel && merge == MergeMode::ConcatProject)
            .then(|| Dense::new(store, init, "deep.merge.proj", 2 * token_dim, token_dim));
        let merge_norm = parallel.then(|| Norm::new(store, "deep.merge.norm", token_dim));
        DeepExtractParams { mode, attention, fourier, merge, merge_proj, merge_norm, eps }
    }
}

/// Multi-head self-attention over `(b, T, D)` tokens, heads splitting `D`.
fn self_attention(g: &mut Graph, bound: &Bound, blk: &AttentionBlock, x: Var) -> Result<Var> {
    let s = g.shape(x).to_vec();
    let (b, t, d) = (s[0], s[1], s[2]);
    let h = blk.heads;
    let dh = d / h;
    let mut qkv = [blk.w_q, blk.w_k, blk.w_v].map(|w| (w, x));
    for (w, out) in qkv.iter_mut() {
        let y = g.matmul(x, bound.var(*w))?;
        *out = if h == 1 {
            y
        } else {
            let split = g.reshape(y, &[b, t, h, dh])?;
            g.transpose(split, 1, 2)?
        };
    }
    let (mixed, _) = super::fusion::attend(g, qkv[0].1, qkv[1].1, qkv[2].1)?;
    let merged = if h == 1 {
        mixed
    } else {
        let back = g.transpose(mixed, 1, 2)?;
        g.reshape(back, &[b, t, d])?
    };
    blk.out.apply(g, bound, merged)
}

fn attention_branch(g: &mut Graph, bound: &Bound, blk: &AttentionBlock, x: Var, eps: f64) -> Result<Var> {
    let a = self_attention(g, bound, blk, x)?;
    let r1 = g.add(x, a)?;
    let n1 = blk.norm1.apply(g, bound, r1, eps)?;
    let f = blk.ffn.apply(g, bound, n1)?;
    let r2 = g.add(n1, f)?;
    blk.norm2.apply(g, bound, r2, eps)
}

fn fourier_branch(g: &mut Graph, bound: &Bound, blk: &FourierBlock, x: Var, eps: f64) -> Result<Var> {
    let mixed = g.fourier_mix(x)?;
    let r1 = g.add(x, mixed)?;
    let n1 = blk.norm1.apply(g, bound, r1, eps)?;
    let f = blk.ffn.apply(g, bound, n1)?;
    let r2 = g.add(n1, f)?;
    blk.norm2.apply(g, bound, r2, eps)
}

/// Runs the configured branches on `(b, T, D)` tokens; output has the same shape.
pub fn deep_extract(g: &mut Graph, bound: &Bound, p: &DeepExtractParams, x: Var) -> Result<Var> {
    if g.shape(x).len() != 3 {
        return Err(Error::shape("deep_extract", format!("expected (b, T, D) tokens, got {:?}", g.shape(x))));
    }
    let missing = |what: &str| Error::Config(format!("deep-extract mode {:?} is missing its {what} parameters", p.mode));
    match p.mode {
        DeepMode::None => Ok(x),
        DeepMode::AttentionOnly => {
            let blk = p.attention.as_ref().ok_or_else(|| missing("attention"))?;
            attention_branch(g, bound, blk, x, p.eps)
        }
        DeepMode::FourierOnly => {
            let blk = p.fourier.as_ref().ok_or_else(|| missing("fourier"))?;
            fourier_branch(g, bound, blk, x, p.eps)
        }
        DeepMode::Parallel => {
            let ab = p.attention.as_ref().ok_or_else(|| missing("attention"))?;
            let fb = p.fourier.as_ref().ok_or_else(|| missing("fourier"))?;
            let a = attention_branch(g, bound, ab, x, p.eps)?;
            let f = fourier_branch(g, bound, fb, x, p.eps)?;
            let merged = match (p.merge, &p.merge_proj) {
                (MergeMode::Sum, _) => g.add(a, f)?,
                (MergeMode::ConcatProject, Some(proj)) => {
                    let cat = g.concat(&[a, f], 2)?;
                    proj.apply(g, bound, cat)?
                }
                (MergeMode::ConcatProject, None) => return Err(missing("merge projection")),
            };
            let norm = p.merge_norm.as_ref().ok_or_else(|| missing("merge norm"))?;
            norm.apply(g, bound, merged, p.eps)
        }
    }
}
