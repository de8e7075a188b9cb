//! Alternating adversarial training: per target batch, the attacker
//! takes one clipped Adam step on the frozen transferred representations,
//! then the recommender takes one clipped Adam step on the joint loss.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{
    generate_ranking_examples, Dataset, InteractionLog, PrivateAttributeTable, RankingExample,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_ranking, weighted_prf, DEFAULT_K, VALID_HOLDOUT};
use crate::model::{
    attacker_loss, privnet_loss, tensor_sizes, transferred_users, AttackerParams, AttackerVars,
    ModelConfig, RecommenderParams, RecommenderVars,
};
use crate::nn::{clip_global_norm, AdamConfig};
use crate::rng::{stream_rng, PURPOSE_BATCH};
use crate::{AdamState, Real, Tape, Tensor};

/// Optimization hyperparameters. The defaults are the published
/// training setup: Adam at 5e-4, batch 128, clip norm 5, one negative
/// per positive, at most 50 epochs with patience 5, adversary weight 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: Real,
    pub batch_size: usize,
    pub learning_rate: Real,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: Real,
    pub negative_ratio: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1.0,
            batch_size: 128,
            learning_rate: 5e-4,
            max_epochs: 50,
            patience: 5,
            clip_norm: 5.0,
            negative_ratio: 1,
            seed: 17,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::config(format!(
                "adversary weight must be a non-negative float, got {}",
                self.lambda
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("epoch budget must be positive"));
        }
        if self.patience == 0 {
            return Err(Error::config("early-stopping patience must be positive"));
        }
        if self.clip_norm <= 0.0 {
            return Err(Error::config(format!(
                "clip norm must be positive, got {}",
                self.clip_norm
            )));
        }
        if self.negative_ratio == 0 {
            return Err(Error::config("negative sampling ratio must be positive"));
        }
        Ok(())
    }
}

/// Mutable optimization state carried across epochs.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub epoch: usize,
    pub best_hr: Real,
    pub best_epoch: usize,
    pub recommender_adam: AdamState,
    pub attacker_adam: AdamState,
}

impl TrainState {
    pub fn new(
        model: &ModelConfig,
        params: &RecommenderParams,
        attacker: &AttackerParams,
        config: &TrainConfig,
    ) -> Self {
        let adam = AdamConfig { lr: config.learning_rate, ..AdamConfig::default() };
        TrainState {
            epoch: 0,
            best_hr: Real::NEG_INFINITY,
            best_epoch: 0,
            recommender_adam: AdamState::new(adam, &tensor_sizes(&params.trainable(model))),
            attacker_adam: AdamState::new(adam, &tensor_sizes(&attacker.trainable())),
        }
    }
}

/// Per-batch losses of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Joint-NLL component per recommender step.
    pub batch_recommender: Vec<Real>,
    /// Attacker cross entropy per attacker step; empty when λ = 0.
    pub batch_attacker: Vec<Real>,
}

impl EpochStats {
    pub fn recommender_mean(&self) -> Real {
        mean(&self.batch_recommender)
    }

    pub fn attacker_mean(&self) -> Option<Real> {
        if self.batch_attacker.is_empty() {
            None
        } else {
            Some(mean(&self.batch_attacker))
        }
    }
}

fn mean(v: &[Real]) -> Real {
    v.iter().sum::<Real>() / v.len() as Real
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub recommender_loss: Real,
    /// Absent when λ = 0 (the attacker never trains).
    pub attacker_loss: Option<Real>,
    pub valid_hr: Real,
    pub valid_ndcg: Real,
    pub valid_mrr: Real,
    /// Weighted F1 of the training-time attacker on the privacy
    /// validation users, one entry per attribute.
    pub attacker_valid_f1: Vec<Real>,
}

/// History CSV: one row per epoch, one trailing column per attribute.
pub fn history_to_csv(history: &[HistoryRow], attribute_names: &[String]) -> String {
    let mut out = String::from("epoch,recommender_loss,attacker_loss,valid_hr10,valid_ndcg10,valid_mrr");
    for name in attribute_names {
        out.push_str(&format!(",valid_attacker_f1_{name}"));
    }
    out.push('\n');
    for row in history {
        let attacker = row.attacker_loss.map_or(String::new(), |v| format!("{v}"));
        out.push_str(&format!(
            "{},{},{attacker},{},{},{}",
            row.epoch, row.recommender_loss, row.valid_hr, row.valid_ndcg, row.valid_mrr
        ));
        for f1 in &row.attacker_valid_f1 {
            out.push_str(&format!(",{f1}"));
        }
        out.push('\n');
    }
    out
}

/// Clips the gradient group in place, then applies one Adam update.
fn adam_apply(
    adam: &mut AdamState,
    tensors: Vec<&mut Tensor>,
    mut grads: Vec<Vec<Real>>,
    clip: Real,
) -> Result<()> {
    let mut grad_refs: Vec<&mut [Real]> = grads.iter_mut().map(|g| g.as_mut_slice()).collect();
    clip_global_norm(&mut grad_refs, clip);
    let grad_slices: Vec<&[Real]> = grads.iter().map(|g| g.as_slice()).collect();
    let mut param_slices: Vec<&mut [Real]> =
        tensors.into_iter().map(|t| t.data_mut()).collect();
    adam.step(&mut param_slices, &grad_slices)
}

/// Algorithm step 3: one clipped Adam update of the attacker on the
/// privacy batch, with the recommender frozen (the representations are
/// computed outside any tape).
pub(crate) fn attacker_step(
    params: &RecommenderParams,
    attacker: &mut AttackerParams,
    adam: &mut AdamState,
    model: &ModelConfig,
    source: &InteractionLog,
    table: &PrivateAttributeTable,
    users: &[u32],
    clip: Real,
) -> Result<Real> {
    let x = transferred_users(params, model, source, users)?;
    let mut tape = Tape::new();
    let x_var = tape.leaf(&x);
    let vars = AttackerVars::load(&mut tape, attacker);
    let loss = attacker_loss(&mut tape, &vars, x_var, users, table)?;
    let value = tape.scalar_value(loss)?;
    let grads = tape.backward(loss)?;
    let grad_vecs: Vec<Vec<Real>> =
        vars.trainable().iter().map(|&v| grads.get(v).to_vec()).collect();
    adam_apply(adam, attacker.trainable_mut(), grad_vecs, clip)?;
    Ok(value)
}

/// Algorithm step 4: one clipped Adam update of the recommender on the
/// joint loss, with the attacker frozen.
#[allow(clippy::too_many_arguments)]
pub(crate) fn recommender_step(
    params: &mut RecommenderParams,
    attacker: &AttackerParams,
    adam: &mut AdamState,
    model: &ModelConfig,
    target_batch: &[RankingExample],
    source_batch: &[RankingExample],
    privacy_users: &[u32],
    table: &PrivateAttributeTable,
    source: &InteractionLog,
    lambda: Real,
    clip: Real,
) -> Result<Real> {
    let mut tape = Tape::new();
    let vars = RecommenderVars::load(&mut tape, params);
    let joint = privnet_loss(
        &mut tape, &vars, attacker, model, target_batch, source_batch, privacy_users, table,
        source, lambda,
    )?;
    let value = tape.scalar_value(joint.recommender)?;
    let grads = tape.backward(joint.loss)?;
    let grad_vecs: Vec<Vec<Real>> = vars
        .trainable(model)
        .iter()
        .map(|&v| grads.get(v).to_vec())
        .collect();
    adam_apply(adam, params.trainable_mut(model), grad_vecs, clip)?;
    Ok(value)
}

fn cyclic_batch<T: Clone>(items: &[T], pos: &mut usize, n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(items[*pos].clone());
        *pos = (*pos + 1) % items.len();
    }
    out
}

/// Salt decorrelating source-domain negative draws from target-domain
/// draws within the same epoch.
const SOURCE_NEG_SALT: u64 = 0x5352435f4e4547;

/// One pass over the target training batches (one epoch of
/// Algorithm 1). Advances `state.epoch`.
pub fn train_epoch(
    params: &mut RecommenderParams,
    attacker: &mut AttackerParams,
    state: &mut TrainState,
    data: &Dataset,
    model: &ModelConfig,
    config: &TrainConfig,
) -> Result<EpochStats> {
    config.validate()?;
    state.epoch += 1;
    let epoch = state.epoch;
    let adversarial = config.lambda > 0.0;
    let privacy_pool = &data.privacy_split.train;
    if adversarial && privacy_pool.is_empty() {
        return Err(Error::config(
            "adversarial training needs public users for the privacy batches",
        ));
    }

    // fresh negatives every epoch
    let epoch_seed = config.seed.wrapping_add(epoch as u64);
    let mut target_examples = generate_ranking_examples(
        &data.target_train,
        model.window,
        config.negative_ratio,
        epoch_seed,
    )?
    .examples;
    let source_examples = generate_ranking_examples(
        &data.source,
        model.window,
        config.negative_ratio,
        epoch_seed ^ SOURCE_NEG_SALT,
    )?
    .examples;
    if target_examples.is_empty() || source_examples.is_empty() {
        return Err(Error::data("a domain produced no training examples"));
    }

    let mut rng = stream_rng(config.seed, PURPOSE_BATCH, epoch as u64);
    target_examples.shuffle(&mut rng);
    let mut source_order: Vec<usize> = (0..source_examples.len()).collect();
    source_order.shuffle(&mut rng);
    let mut privacy_order = privacy_pool.clone();
    privacy_order.shuffle(&mut rng);

    let mut stats = EpochStats {
        epoch,
        batch_recommender: Vec::new(),
        batch_attacker: Vec::new(),
    };
    let (mut source_pos, mut privacy_pos) = (0, 0);
    for target_batch in target_examples.chunks(config.batch_size) {
        let source_idx = cyclic_batch(&source_order, &mut source_pos, target_batch.len());
        let source_batch: Vec<RankingExample> =
            source_idx.into_iter().map(|i| source_examples[i].clone()).collect();
        let privacy_batch = if adversarial {
            cyclic_batch(
                &privacy_order,
                &mut privacy_pos,
                config.batch_size.min(privacy_order.len()),
            )
        } else {
            Vec::new()
        };

        if adversarial {
            let attacker_ce = attacker_step(
                params,
                attacker,
                &mut state.attacker_adam,
                model,
                &data.source,
                &data.attributes,
                &privacy_batch,
                config.clip_norm,
            )?;
            stats.batch_attacker.push(attacker_ce);
        }
        let rec_loss = recommender_step(
            params,
            attacker,
            &mut state.recommender_adam,
            model,
            target_batch,
            &source_batch,
            &privacy_batch,
            &data.attributes,
            &data.source,
            config.lambda,
            config.clip_norm,
        )?;
        stats.batch_recommender.push(rec_loss);
    }
    Ok(stats)
}

/// Tracks the best validation metric and decides when to stop.
pub(crate) struct EarlyStopper {
    best: Real,
    best_epoch: usize,
    patience: usize,
}

impl EarlyStopper {
    pub(crate) fn new(patience: usize) -> Self {
        EarlyStopper { best: Real::NEG_INFINITY, best_epoch: 0, patience }
    }

    /// Records an epoch's metric; returns (improved, stop now).
    pub(crate) fn observe(&mut self, epoch: usize, value: Real) -> (bool, bool) {
        let improved = value > self.best;
        if improved {
            self.best = value;
            self.best_epoch = epoch;
        }
        (improved, epoch - self.best_epoch >= self.patience)
    }
}

/// Weighted F1 of the current attacker against each attribute, over the
/// given users.
pub fn attacker_f1(
    params: &RecommenderParams,
    attacker: &AttackerParams,
    model: &ModelConfig,
    source: &InteractionLog,
    table: &PrivateAttributeTable,
    users: &[u32],
) -> Result<Vec<Real>> {
    crate::eval::attack_confusions(params, attacker, model, source, table, users)?
        .iter()
        .map(|confusion| weighted_prf(confusion).map(|(_, _, f1)| f1))
        .collect()
}

/// A finished training run: the best-validation checkpoint and the full
/// per-epoch history.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: RecommenderParams,
    pub attacker: AttackerParams,
    pub history: Vec<HistoryRow>,
    pub state: TrainState,
}

/// Trains for up to `max_epochs` epochs, early-stopping on validation
/// HR@10 and returning the parameters from the best epoch.
pub fn fit(data: &Dataset, model: &ModelConfig, config: &TrainConfig) -> Result<FitResult> {
    config.validate()?;
    model.validate()?;
    let mut params = RecommenderParams::init(model, config.seed)?;
    let mut attacker = AttackerParams::init(model, config.seed)?;
    let mut state = TrainState::new(model, &params, &attacker, config);
    let mut stopper = EarlyStopper::new(config.patience);
    let mut history = Vec::new();
    let mut best: Option<(RecommenderParams, AttackerParams)> = None;

    for _ in 0..config.max_epochs {
        let stats = train_epoch(&mut params, &mut attacker, &mut state, data, model, config)?;
        let (_, metrics) = evaluate_ranking(
            &params,
            model,
            &data.target,
            &data.source,
            &data.ranking_valid,
            VALID_HOLDOUT,
            DEFAULT_K,
        )?;
        let f1 = attacker_f1(
            &params,
            &attacker,
            model,
            &data.source,
            &data.attributes,
            &data.privacy_split.valid,
        )?;
        history.push(HistoryRow {
            epoch: state.epoch,
            recommender_loss: stats.recommender_mean(),
            attacker_loss: stats.attacker_mean(),
            valid_hr: metrics.hr,
            valid_ndcg: metrics.ndcg,
            valid_mrr: metrics.mrr,
            attacker_valid_f1: f1,
        });
        let (improved, stop) = stopper.observe(state.epoch, metrics.hr);
        if improved {
            state.best_hr = metrics.hr;
            state.best_epoch = state.epoch;
            best = Some((params.clone(), attacker.clone()));
        }
        if stop {
            break;
        }
    }
    let (params, attacker) = best.ok_or_else(|| Error::contract("no epoch ran"))?;
    Ok(FitResult { params, attacker, history, state })
}
