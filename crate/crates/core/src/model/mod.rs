//! Recommender, transfer unit, and attacker: parameters, forward passes,
//! and the three losses of the adversarial objective.
//!
//! The target-domain scorer is an attention-pooled user encoder feeding a
//! sigmoid MLP. At each transfer layer the source network's representation
//! of the same user, mapped through a translation matrix, is mixed into
//! the target pre-activation; the concatenation of those mapped vectors is
//! the transferred representation the attacker observes.

mod forward;
mod loss;

pub use forward::{
    encode_user, score, score_candidates, transferred_users, AttackerVars, ForwardTrace,
    RecommenderVars,
};
pub use loss::{
    attacker_loss, attacker_loss_from_labels, attacker_predict, privnet_loss, recommender_loss,
    PrivnetLoss,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{embedding_uniform, glorot_uniform, zeros};
use crate::rng::{stream_rng, PURPOSE_INIT};
use crate::Tensor;

/// Architecture hyperparameters plus the dataset dimensions they bind to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Item embedding width d.
    pub embed_dim: usize,
    /// Hidden width of every MLP.
    pub hidden: usize,
    /// History window w.
    pub window: usize,
    /// Number of translation matrices (1 mixes the hidden input,
    /// 2 additionally mixes the output input).
    pub transfer_layers: usize,
    /// When false, the translation matrices are pinned to zero and
    /// excluded from training: the no-transfer baseline.
    pub transfer_enabled: bool,
    pub n_source_items: usize,
    pub n_target_items: usize,
    /// Class count per private attribute, in attribute order.
    pub attribute_classes: Vec<u32>,
}

impl ModelConfig {
    /// Table-2 scale: d=80, hidden 64, window 10, one transfer layer.
    pub fn standard(
        n_source_items: usize,
        n_target_items: usize,
        attribute_classes: Vec<u32>,
    ) -> Self {
        ModelConfig {
            embed_dim: 80,
            hidden: 64,
            window: 10,
            transfer_layers: 1,
            transfer_enabled: true,
            n_source_items,
            n_target_items,
            attribute_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden == 0 || self.window == 0 {
            return Err(Error::config("model dimensions must be positive"));
        }
        if !(1..=2).contains(&self.transfer_layers) {
            return Err(Error::config(format!(
                "{} transfer layers unsupported; the MLP has 2 mixable layers",
                self.transfer_layers
            )));
        }
        if self.n_source_items == 0 || self.n_target_items == 0 {
            return Err(Error::config("empty item vocabulary"));
        }
        if self.attribute_classes.iter().any(|&c| c == 0) {
            return Err(Error::config("attribute with zero classes"));
        }
        Ok(())
    }

    /// Width of the layer-1 representation [x_u, x_i].
    pub fn concat_width(&self) -> usize {
        2 * self.embed_dim
    }

    /// Width of the transferred representation seen by the attacker.
    pub fn trans_width(&self) -> usize {
        match self.transfer_layers {
            1 => self.concat_width(),
            _ => self.concat_width() + self.hidden,
        }
    }

    /// Per-transfer-layer matrix side: layer 1 maps concat width,
    /// layer 2 maps hidden width.
    pub fn transfer_widths(&self) -> Vec<usize> {
        (0..self.transfer_layers)
            .map(|l| if l == 0 { self.concat_width() } else { self.hidden })
            .collect()
    }
}

/// One input -> hidden -> output block with sigmoid hidden activation.
/// Weight matrices are stored as right-multipliers of row vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl Mlp {
    fn init<R: Rng>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        Mlp {
            w1: glorot_uniform(input, hidden, rng),
            b1: zeros(hidden),
            w2: glorot_uniform(hidden, output, rng),
            b2: zeros(output),
        }
    }

    fn named(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.w1"), self.w1.clone()));
        out.push((format!("{prefix}.b1"), self.b1.clone()));
        out.push((format!("{prefix}.w2"), self.w2.clone()));
        out.push((format!("{prefix}.b2"), self.b2.clone()));
    }

    fn named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((format!("{prefix}.w1"), &mut self.w1));
        out.push((format!("{prefix}.b1"), &mut self.b1));
        out.push((format!("{prefix}.w2"), &mut self.w2));
        out.push((format!("{prefix}.b2"), &mut self.b2));
    }

    fn tensors(&self) -> [&Tensor; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

/// All parameters of the two scoring networks and the transfer unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommenderParams {
    pub item_emb_source: Tensor,
    pub item_emb_target: Tensor,
    pub mlp_source: Mlp,
    pub mlp_target: Mlp,
    /// Translation matrices H, one per transfer layer.
    pub h: Vec<Tensor>,
    /// Target mixing matrices W_T, aligned with `h`.
    pub w_t: Vec<Tensor>,
}

impl RecommenderParams {
    /// Glorot-uniform weights, unit-RMS embedding rows, zero biases.
    /// Translation matrices start at zero either way: the transfer path
    /// grows from nothing instead of injecting per-user noise into an
    /// untrained tower, and a transfer-enabled model is bit-identical at
    /// init to its transfer-disabled twin (where H stays frozen at zero).
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, PURPOSE_INIT, 0);
        let d = config.embed_dim;
        let item_emb_source = embedding_uniform(config.n_source_items, d, &mut rng);
        let item_emb_target = embedding_uniform(config.n_target_items, d, &mut rng);
        let mlp_source = Mlp::init(config.concat_width(), config.hidden, 1, &mut rng);
        let mlp_target = Mlp::init(config.concat_width(), config.hidden, 1, &mut rng);
        let mut h = Vec::new();
        let mut w_t = Vec::new();
        for width in config.transfer_widths() {
            h.push(Tensor::zeros(vec![width, width]));
            w_t.push(glorot_uniform(width, width, &mut rng));
        }
        Ok(RecommenderParams {
            item_emb_source,
            item_emb_target,
            mlp_source,
            mlp_target,
            h,
            w_t,
        })
    }

    /// Stable (name, tensor) listing; the checkpoint serialization order.
    pub fn named(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![
            ("item_emb.source".to_string(), self.item_emb_source.clone()),
            ("item_emb.target".to_string(), self.item_emb_target.clone()),
        ];
        self.mlp_source.named("mlp.source", &mut out);
        self.mlp_target.named("mlp.target", &mut out);
        for (l, t) in self.h.iter().enumerate() {
            out.push((format!("transfer.h{}", l + 1), t.clone()));
        }
        for (l, t) in self.w_t.iter().enumerate() {
            out.push((format!("transfer.w_t{}", l + 1), t.clone()));
        }
        out
    }

    /// As [`named`](Self::named) but with mutable references, for
    /// checkpoint restore.
    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = vec![
            ("item_emb.source".to_string(), &mut self.item_emb_source),
            ("item_emb.target".to_string(), &mut self.item_emb_target),
        ];
        self.mlp_source.named_mut("mlp.source", &mut out);
        self.mlp_target.named_mut("mlp.target", &mut out);
        for (l, t) in self.h.iter_mut().enumerate() {
            out.push((format!("transfer.h{}", l + 1), t));
        }
        for (l, t) in self.w_t.iter_mut().enumerate() {
            out.push((format!("transfer.w_t{}", l + 1), t));
        }
        out
    }

    /// Tensors updated by training. Honors the no-transfer pin: with
    /// transfer disabled the translation matrices are excluded.
    pub fn trainable(&self, config: &ModelConfig) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = vec![&self.item_emb_source, &self.item_emb_target];
        out.extend(self.mlp_source.tensors());
        out.extend(self.mlp_target.tensors());
        out.extend(self.w_t.iter());
        if config.transfer_enabled {
            out.extend(self.h.iter());
        }
        out
    }

    pub fn trainable_mut(&mut self, config: &ModelConfig) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> =
            vec![&mut self.item_emb_source, &mut self.item_emb_target];
        out.extend(self.mlp_source.tensors_mut());
        out.extend(self.mlp_target.tensors_mut());
        out.extend(self.w_t.iter_mut());
        if config.transfer_enabled {
            out.extend(self.h.iter_mut());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }
}

/// One MLP head per private attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackerParams {
    pub heads: Vec<Mlp>,
}

impl AttackerParams {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, PURPOSE_INIT, 1);
        let heads = config
            .attribute_classes
            .iter()
            .map(|&c| Mlp::init(config.trans_width(), config.hidden, c as usize, &mut rng))
            .collect();
        Ok(AttackerParams { heads })
    }

    pub fn named(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (p, head) in self.heads.iter().enumerate() {
            head.named(&format!("attacker.{p}"), &mut out);
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (p, head) in self.heads.iter_mut().enumerate() {
            head.named_mut(&format!("attacker.{p}"), &mut out);
        }
        out
    }

    pub fn trainable(&self) -> Vec<&Tensor> {
        self.heads.iter().flat_map(|h| h.tensors()).collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        self.heads.iter_mut().flat_map(|h| h.tensors_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Element counts of a trainable listing, the shape key for Adam state.
pub fn tensor_sizes(tensors: &[&Tensor]) -> Vec<usize> {
    tensors.iter().map(|t| t.len()).collect()
}
