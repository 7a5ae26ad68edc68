//! Cross-modal cross-attention fusion.
//!
//! Every stream arrives as `(b, n_tokens, token_dim)` tokens. Projections act
//! on the flattened `d = n_tokens·token_dim` feature vector with a `d×d`
//! matrix (row-vector convention, `Q = x·W`), and attention runs over tokens
//! with scores scaled by `1/√token_dim`.

use super::params::{Bound, Init, ParamId, ParamStore};
use super::variant::{FusionMode, Modality, ModalitySet};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Var};

/// Token streams per modality, indexed by [`Modality::index`].
pub type Streams = [Option<Var>; 4];

/// Query/key/value projections for one cross-attention direction.
#[derive(Debug, Clone)]
pub struct CrossWeights {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
}

impl CrossWeights {
    fn new(store: &mut ParamStore, init: &mut Init, d: usize, query: Modality, kv: Modality) -> Self {
        let mut w = |kind: char, m: Modality| {
            store.insert(format!("fusion.w_{kind}{}", m.code().to_ascii_lowercase()), init.xavier(d, d))
        };
        CrossWeights { w_q: w('q', query), w_k: w('k', kv), w_v: w('v', kv) }
    }

    fn bind(&self, bound: &Bound) -> [Var; 3] {
        [self.w_q, self.w_k, self.w_v].map(|w| bound.var(w))
    }
}

/// Projection matrices for cross-modal attention, allocated only for the
/// numerical/imaging pairs a variant activates.
///
/// `cm` queries MRI from clinical tokens and `gp` queries PET from genetic
/// tokens. `mc` and `pg` hold the reverse directions used by symmetric
/// fusion only.
#[derive(Debug, Clone)]
pub struct FusionParams {
    pub cm: Option<CrossWeights>,
    pub gp: Option<CrossWeights>,
    pub mc: Option<CrossWeights>,
    pub pg: Option<CrossWeights>,
}

impl FusionParams {
    pub(crate) fn new(store: &mut ParamStore, init: &mut Init, d: usize, mode: FusionMode, mods: ModalitySet) -> Self {
        use Modality::{Clinical, Genetic, Mri, Pet};
        let has = |a: Modality, b: Modality| mods.contains(a) && mods.contains(b);
        let cm = has(Clinical, Mri).then(|| CrossWeights::new(store, init, d, Clinical, Mri));
        let gp = has(Genetic, Pet).then(|| CrossWeights::new(store, init, d, Genetic, Pet));
        let sym = mode == FusionMode::Symmetric;
        let mc = (sym && cm.is_some()).then(|| CrossWeights::new(store, init, d, Mri, Clinical));
        let pg = (sym && gp.is_some()).then(|| CrossWeights::new(store, init, d, Pet, Genetic));
        FusionParams { cm, gp, mc, pg }
    }
}

/// Result of a fusion block: the fused token tensor plus every attention
/// matrix it computed.
#[derive(Debug, Clone)]
pub struct Fused {
    pub tokens: Var,
    pub attention: Vec<Var>,
}

/// Applies a `d×d` projection to each sample's flattened tokens.
pub fn project(g: &mut Graph, tokens: Var, weight: Var) -> Result<Var> {
    let s = g.shape(tokens).to_vec();
    let flat = g.reshape(tokens, &[s[0], s[1] * s[2]])?;
    let y = g.matmul(flat, weight)?;
    g.reshape(y, &s)
}

/// Scaled dot-product attention `softmax(Q·Kᵀ/√d_k)·V` over `(.., n, d_k)`
/// tokens. Returns the attended values and the row-stochastic weights.
pub fn attend(g: &mut Graph, q: Var, k: Var, v: Var) -> Result<(Var, Var)> {
    let rank = g.shape(q).len();
    let dk = g.shape(q)[rank - 1];
    let kt = g.transpose(k, rank - 2, rank - 1)?;
    let scores = g.matmul(q, kt)?;
    let scaled = g.scale(scores, 1.0 / (dk as f64).sqrt());
    let weights = g.softmax(scaled, rank - 1)?;
    let out = g.matmul(weights, v)?;
    Ok((out, weights))
}

/// One cross-attention direction: queries from `query_src`, keys and values
/// from `kv_src`.
pub fn cross_attend(
    g: &mut Graph,
    query_src: Var,
    kv_src: Var,
    w_q: Var,
    w_k: Var,
    w_v: Var,
) -> Result<(Var, Var)> {
    let q = project(g, query_src, w_q)?;
    let k = project(g, kv_src, w_k)?;
    let v = project(g, kv_src, w_v)?;
    attend(g, q, k, v)
}

fn stream(streams: &Streams, m: Modality) -> Option<Var> {
    streams[m.index()]
}

fn require_all(streams: &Streams, what: &str) -> Result<[Var; 4]> {
    let mut out = Vec::with_capacity(4);
    for m in Modality::ALL {
        out.push(stream(streams, m).ok_or_else(|| {
            Error::Variant(format!(
                "{what} fusion needs all four modalities but {m} is missing; use a two-modality \
                 variant (CM or GP) or fusion mode none"
            ))
        })?);
    }
    Ok([out[0], out[1], out[2], out[3]])
}

/// Complete numerical/imaging pairs present in `streams`, as
/// (numerical modality, numerical tokens, imaging tokens, forward weights).
fn present_pairs<'p>(streams: &Streams, p: &'p FusionParams) -> Result<Vec<(Modality, Var, Var, &'p CrossWeights)>> {
    let mut pairs = Vec::new();
    for (num, img, ws) in [(Modality::Clinical, Modality::Mri, &p.cm), (Modality::Genetic, Modality::Pet, &p.gp)] {
        match (stream(streams, num), stream(streams, img)) {
            (Some(n), Some(i)) => {
                let ws = ws
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("no fusion weights for the {num}/{img} pair")))?;
                pairs.push((num, n, i, ws));
            }
            (None, None) => {}
            (Some(_), None) | (None, Some(_)) => {
                return Err(Error::Variant(format!(
                    "cross-modal fusion pairs {num} with {img} but only one of them is present; \
                     use a two-modality variant (CM or GP) or fusion mode none"
                )))
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::Variant(
            "cross-modal fusion needs at least one numerical/imaging pair; use fusion mode none".into(),
        ));
    }
    Ok(pairs)
}

/// `concat(F_mc, C, F_pg, G)` along the token axis, where
/// `F_mc = softmax(Q_c K_mᵀ/√d_k) V_m` and `F_pg` likewise from G and P.
/// A lone complete pair yields just `[F, numerical]`.
pub fn fuse_asymmetric(g: &mut Graph, bound: &Bound, p: &FusionParams, streams: &Streams) -> Result<Fused> {
    let mut parts = Vec::new();
    let mut attention = Vec::new();
    for (_, num, img, ws) in present_pairs(streams, p)? {
        let [wq, wk, wv] = ws.bind(bound);
        let (f, a) = cross_attend(g, num, img, wq, wk, wv)?;
        parts.extend([f, num]);
        attention.push(a);
    }
    Ok(Fused { tokens: g.concat(&parts, 1)?, attention })
}

/// Both directions per pair: `[F_mc, F_cm, F_pg, F_gp]`. The raw numerical
/// streams are dropped so the token count matches asymmetric fusion.
pub fn fuse_symmetric(g: &mut Graph, bound: &Bound, p: &FusionParams, streams: &Streams) -> Result<Fused> {
    let mut parts = Vec::new();
    let mut attention = Vec::new();
    for (num_mod, num, img, ws) in present_pairs(streams, p)? {
        let [wq, wk, wv] = ws.bind(bound);
        let (fwd, a1) = cross_attend(g, num, img, wq, wk, wv)?;
        let rev = match num_mod {
            Modality::Clinical => &p.mc,
            _ => &p.pg,
        }
        .as_ref()
        .ok_or_else(|| Error::Config("symmetric fusion requires reverse-direction weights".into()))?;
        let [rq, rk, rv] = rev.bind(bound);
        let (back, a2) = cross_attend(g, img, num, rq, rk, rv)?;
        parts.extend([fwd, back]);
        attention.extend([a1, a2]);
    }
    Ok(Fused { tokens: g.concat(&parts, 1)?, attention })
}

/// MRI and PET tokens are concatenated into one key/value sequence of
/// `2·n_tokens`, queried by the concatenated clinical+genetic tokens. Output
/// `[F, C, G]`.
pub fn fuse_mcad(g: &mut Graph, bound: &Bound, p: &FusionParams, streams: &Streams) -> Result<Fused> {
    let [c, gen, m, pet] = require_all(streams, "concat-imaging-then-cross")?;
    let missing = || Error::Config("concat-imaging-then-cross fusion needs weights for both pairs".into());
    let [wqc, wkm, wvm] = p.cm.as_ref().ok_or_else(missing)?.bind(bound);
    let [wqg, wkp, wvp] = p.gp.as_ref().ok_or_else(missing)?.bind(bound);
    let qc = project(g, c, wqc)?;
    let qg = project(g, gen, wqg)?;
    let km = project(g, m, wkm)?;
    let kp = project(g, pet, wkp)?;
    let vm = project(g, m, wvm)?;
    let vp = project(g, pet, wvp)?;
    let q = g.concat(&[qc, qg], 1)?;
    let k = g.concat(&[km, kp], 1)?;
    let v = g.concat(&[vm, vp], 1)?;
    let (f, a) = attend(g, q, k, v)?;
    Ok(Fused { tokens: g.concat(&[f, c, gen], 1)?, attention: vec![a] })
}

/// Fusion mode `none`: present streams concatenated in C, G, M, P order.
pub fn fuse_none(g: &mut Graph, streams: &Streams) -> Result<Fused> {
    let parts: Vec<Var> = streams.iter().flatten().copied().collect();
    if parts.is_empty() {
        return Err(Error::Variant("no active modality streams".into()));
    }
    Ok(Fused { tokens: g.concat(&parts, 1)?, attention: Vec::new() })
}

/// Fused token count for `active` modality streams of `n_tokens` each.
pub fn fused_token_count(mode: FusionMode, active: usize, n_tokens: usize) -> usize {
    match mode {
        FusionMode::None | FusionMode::Asymmetric | FusionMode::Symmetric => active * n_tokens,
        FusionMode::ConcatImagingThenCross => 4 * n_tokens,
    }
}
