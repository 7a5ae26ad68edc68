//! The ACMCA network.
//!
//! Per-modality dense encoders project each input to `feature_dim`, the
//! features are split into `n_tokens` tokens with sinusoidal positions, the
//! fusion block combines the streams, the deep extractor mixes tokens, and a
//! four-layer MLP produces class logits.
//!
//! Asymmetric fusion emits four token streams `[F_mc, C, F_pg, G]`, so the
//! fused tensor is `(b, 4·n_tokens, token_dim)`, i.e. `(b, 40, 10)` with the
//! defaults. (A three-channel `(b, 3, 100)` reading of the fused shape is
//! not consistent with a four-argument concatenation.)

mod checkpoint;
mod deep;
mod fusion;
mod layers;
mod params;
mod variant;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use deep::{deep_extract, DeepExtractParams, MergeMode};
pub use fusion::{
    attend, cross_attend, fuse_asymmetric, fuse_mcad, fuse_none, fuse_symmetric, fused_token_count, project,
    CrossWeights, FusionParams, Fused, Streams,
};
pub use layers::{detokenize, positional_table, tokenize, Dense, Mlp};
pub use params::{Bound, ParamId, ParamStore};
pub use variant::{DeepMode, FusionMode, Modality, ModalitySet, VariantSpec};

use serde::{Deserialize, Serialize};

use crate::data::ModalBatch;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};
use params::Init;

pub const N_CLASSES: usize = 3;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub n_tokens: usize,
    pub encoder_layers: usize,
    pub encoder_hidden: usize,
    pub heads: usize,
    /// Hidden width of the deep-extractor feed-forward nets; `4·token_dim` when unset.
    pub ffn_hidden: Option<usize>,
    pub merge: MergeMode,
    pub classifier_hidden: Vec<usize>,
    pub layer_norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_dim: 100,
            n_tokens: 10,
            encoder_layers: 2,
            encoder_hidden: 256,
            heads: 1,
            ffn_hidden: None,
            merge: MergeMode::Sum,
            classifier_hidden: vec![256, 128, 64],
            layer_norm_eps: 1e-12,
        }
    }
}

impl ModelConfig {
    /// Default configuration with a square token layout for `feature_dim`
    /// (`√d` tokens of width `√d`).
    pub fn with_feature_dim(feature_dim: usize) -> Result<Self> {
        Ok(ModelConfig { feature_dim, n_tokens: square_layout(feature_dim)?, ..Default::default() })
    }

    pub fn token_dim(&self) -> usize {
        self.feature_dim / self.n_tokens.max(1)
    }

    pub fn ffn_width(&self) -> usize {
        self.ffn_hidden.unwrap_or(4 * self.token_dim())
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.n_tokens == 0 || !self.feature_dim.is_multiple_of(self.n_tokens) {
            return Err(Error::Config(format!(
                "feature_dim {} must be a positive multiple of n_tokens {}",
                self.feature_dim, self.n_tokens
            )));
        }
        if self.heads == 0 || !self.token_dim().is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "token width {} is not divisible by {} attention heads",
                self.token_dim(),
                self.heads
            )));
        }
        if self.encoder_layers == 0 || self.encoder_hidden == 0 || self.ffn_width() == 0 {
            return Err(Error::Config("encoder depth and hidden widths must be positive".into()));
        }
        if self.classifier_hidden.contains(&0) {
            return Err(Error::Config("classifier hidden widths must be positive".into()));
        }
        if self.layer_norm_eps.is_nan() || self.layer_norm_eps <= 0.0 {
            return Err(Error::Config("layer_norm_eps must be positive".into()));
        }
        Ok(())
    }
}

/// Token count for the square layout of `d`, or a configuration error listing
/// the valid feature dimensions.
pub fn square_layout(d: usize) -> Result<usize> {
    let r = (d as f64).sqrt().round() as usize;
    if r >= 2 && r * r == d {
        return Ok(r);
    }
    let valid: Vec<String> = (2..=20).map(|k| (k * k).to_string()).collect();
    Err(Error::Config(format!(
        "feature dimension {d} has no square token layout; valid values are perfect squares: {}",
        valid.join(", ")
    )))
}

/// Raw input widths per modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputWidths {
    pub clinical: usize,
    pub genetic: usize,
    pub mri: usize,
    pub pet: usize,
}

impl InputWidths {
    pub fn get(&self, m: Modality) -> usize {
        match m {
            Modality::Clinical => self.clinical,
            Modality::Genetic => self.genetic,
            Modality::Mri => self.mri,
            Modality::Pet => self.pet,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub modality: Modality,
    pub mlp: Mlp,
}

#[derive(Debug, Clone)]
pub struct ClassifierParams {
    pub mlp: Mlp,
}

/// Handles produced by one forward pass.
#[derive(Debug)]
pub struct Forward {
    pub logits: Var,
    pub fused: Var,
    pub attention: Vec<Var>,
    pub bound: Bound,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    inputs: InputWidths,
    variant: VariantSpec,
    params: ParamStore,
    encoders: Vec<EncoderParams>,
    fusion: Option<FusionParams>,
    deep: DeepExtractParams,
    classifier: ClassifierParams,
    positional: Tensor,
}

impl Model {
    /// Builds a model with Glorot-uniform weights drawn from `seed`. Only
    /// the blocks `variant` activates get parameters.
    pub fn new(config: ModelConfig, inputs: InputWidths, variant: VariantSpec, seed: u64) -> Result<Self> {
        config.validate()?;
        variant.validate()?;
        let mut params = ParamStore::default();
        let mut init = Init::new(seed);
        let d = config.feature_dim;
        let encoders = variant
            .modalities
            .iter()
            .map(|m| {
                let mut widths = vec![inputs.get(m)];
                widths.extend(std::iter::repeat_n(config.encoder_hidden, config.encoder_layers - 1));
                widths.push(d);
                if widths[0] == 0 {
                    return Err(Error::Config(format!("{m} input width must be positive")));
                }
                let mlp = Mlp::new(&mut params, &mut init, &format!("encoder.{}", m.name()), &widths);
                Ok(EncoderParams { modality: m, mlp })
            })
            .collect::<Result<Vec<_>>>()?;
        let fusion = (variant.fusion != FusionMode::None)
            .then(|| FusionParams::new(&mut params, &mut init, d, variant.fusion, variant.modalities));
        let td = config.token_dim();
        let deep = DeepExtractParams::new(
            &mut params,
            &mut init,
            variant.deep,
            td,
            config.heads,
            config.ffn_width(),
            config.merge,
            config.layer_norm_eps,
        );
        let tokens = fused_token_count(variant.fusion, variant.modalities.len(), config.n_tokens);
        let mut widths = vec![tokens * td];
        widths.extend(&config.classifier_hidden);
        widths.push(N_CLASSES);
        let classifier = ClassifierParams { mlp: Mlp::new(&mut params, &mut init, "classifier", &widths) };
        let positional = positional_table(config.n_tokens, td);
        Ok(Model { config, inputs, variant, params, encoders, fusion, deep, classifier, positional })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn inputs(&self) -> InputWidths {
        self.inputs
    }

    pub fn variant(&self) -> &VariantSpec {
        &self.variant
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn fusion_params(&self) -> Option<&FusionParams> {
        self.fusion.as_ref()
    }

    pub fn deep_params(&self) -> &DeepExtractParams {
        &self.deep
    }

    pub fn positional(&self) -> &Tensor {
        &self.positional
    }

    /// Encodes every active modality to `(b, feature_dim)`.
    pub fn encode(&self, g: &mut Graph, bound: &Bound, batch: &ModalBatch) -> Result<[Option<Var>; 4]> {
        let mut out = [None; 4];
        for enc in &self.encoders {
            let m = enc.modality;
            let x = batch.modality(m);
            let want = enc.mlp.input_width();
            if x.shape().len() != 2 || x.shape()[1] != want {
                return Err(Error::Config(format!(
                    "{m} input has width {} but the {m} encoder expects {want}",
                    x.shape().get(1).copied().unwrap_or(0)
                )));
            }
            let xv = g.constant(x.clone());
            out[m.index()] = Some(enc.mlp.apply(g, bound, xv)?);
        }
        Ok(out)
    }

    /// Tokenizes encoded features and applies the variant's fusion block.
    pub fn fuse(&self, g: &mut Graph, bound: &Bound, features: &[Option<Var>; 4]) -> Result<Fused> {
        let pos = g.constant(self.positional.clone());
        let mut streams: Streams = [None; 4];
        for (slot, f) in streams.iter_mut().zip(features) {
            if let Some(f) = f {
                *slot = Some(tokenize(g, *f, pos)?);
            }
        }
        let fp = || {
            self.fusion
                .as_ref()
                .ok_or_else(|| Error::Config("fusion parameters missing for cross-modal variant".into()))
        };
        match self.variant.fusion {
            FusionMode::None => fuse_none(g, &streams),
            FusionMode::Asymmetric => fuse_asymmetric(g, bound, fp()?, &streams),
            FusionMode::Symmetric => fuse_symmetric(g, bound, fp()?, &streams),
            FusionMode::ConcatImagingThenCross => fuse_mcad(g, bound, fp()?, &streams),
        }
    }

    /// Flattens tokens and runs the classifier head, yielding `(b, 3)` logits.
    pub fn classify(&self, g: &mut Graph, bound: &Bound, tokens: Var) -> Result<Var> {
        let s = g.shape(tokens).to_vec();
        let b = s[0];
        let width: usize = s[1..].iter().product();
        let want = self.classifier.mlp.input_width();
        if width != want {
            return Err(Error::Config(format!(
                "classifier expects {want} flattened features but received {width} ({s:?})"
            )));
        }
        let flat = g.reshape(tokens, &[b, width])?;
        self.classifier.mlp.apply(g, bound, flat)
    }

    /// encode → tokenize → fuse → deep extract → classify.
    pub fn forward(&self, g: &mut Graph, batch: &ModalBatch) -> Result<Forward> {
        let bound = self.params.bind(g);
        let features = self.encode(g, &bound, batch)?;
        let fused = self.fuse(g, &bound, &features)?;
        let deep = deep_extract(g, &bound, &self.deep, fused.tokens)?;
        let logits = self.classify(g, &bound, deep)?;
        Ok(Forward { logits, fused: fused.tokens, attention: fused.attention, bound })
    }

    /// Logits as a plain `(b, 3)` tensor.
    pub fn predict_logits(&self, batch: &ModalBatch) -> Result<Tensor> {
        let mut g = Graph::new();
        let f = self.forward(&mut g, batch)?;
        Ok(g.value(f.logits).clone())
    }

    /// Softmax class posteriors, one row per sample.
    pub fn predict_proba(&self, batch: &ModalBatch) -> Result<Vec<[f64; N_CLASSES]>> {
        let logits = self.predict_logits(batch)?;
        Ok(logits
            .data()
            .chunks(N_CLASSES)
            .map(|row| {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
                let s: f64 = e.iter().sum();
                [e[0] / s, e[1] / s, e[2] / s]
            })
            .collect())
    }

    /// Mean cross-entropy of the batch; gradients are added into the
    /// parameters' accumulators. Returns the loss and the logits.
    pub fn loss_and_grad(&mut self, batch: &ModalBatch) -> Result<(f64, Tensor)> {
        let mut g = Graph::new();
        let f = self.forward(&mut g, batch)?;
        let loss = g.cross_entropy(f.logits, &batch.labels)?;
        g.backward(loss)?;
        self.params.accumulate_grads(&g, &f.bound)?;
        Ok((g.value(loss).data()[0], g.value(f.logits).clone()))
    }
}
