//! Test-time attribute inference: a fresh attacker is trained on the
//! public users' frozen transferred representations and evaluated on the
//! private test users. Training sees only materialized train/valid
//! labels, so the test labels cannot leak into it.

use rand::seq::SliceRandom;

use crate::data::{InteractionLog, PrivateAttributeTable, PublicSplit};
use crate::error::{Error, Result};
use crate::model::{
    attacker_loss_from_labels, attacker_predict, tensor_sizes, transferred_users, AttackerParams,
    AttackerVars, ModelConfig, RecommenderParams,
};
use crate::nn::AdamConfig;
use crate::rng::{stream_rng, PURPOSE_ATTACK};
use crate::train::{EarlyStopper, TrainConfig};
use crate::{AdamState, Real, Tape, Tensor};

use super::{AttributeReport, PrivacyResult};

/// Index of the largest value, lowest index on ties.
fn argmax(values: &[Real]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-attribute labels for `users`, indexed `[attribute][user]`.
fn materialize_labels(table: &PrivateAttributeTable, users: &[u32]) -> Vec<Vec<usize>> {
    (0..table.attributes.len())
        .map(|p| users.iter().map(|&u| table.label(u, p) as usize).collect())
        .collect()
}

fn gather_rows(x: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let cols = x.cols();
    let mut data = Vec::with_capacity(idx.len() * cols);
    for &i in idx {
        data.extend_from_slice(x.row(i));
    }
    Tensor::new(vec![idx.len(), cols], data)
}

/// Mean cross entropy of the attacker over representation rows, averaged
/// across attributes; the validation criterion for early stopping.
pub fn attack_cross_entropy(
    attacker: &AttackerParams,
    x: &Tensor,
    labels: &[Vec<usize>],
) -> Result<Real> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::contract("cross entropy over no representations"));
    }
    let mut total = 0.0;
    for i in 0..n {
        let probs = attacker_predict(attacker, x.row(i))?;
        for (p, attr_probs) in probs.iter().enumerate() {
            total += -attr_probs[labels[p][i]].ln();
        }
    }
    Ok(total / (n * labels.len()) as Real)
}

/// Per-attribute confusion matrices of the current attacker over `users`,
/// indexed `[attribute][true_class][predicted_class]`.
pub fn attack_confusions(
    params: &RecommenderParams,
    attacker: &AttackerParams,
    model: &ModelConfig,
    source: &InteractionLog,
    table: &PrivateAttributeTable,
    users: &[u32],
) -> Result<Vec<Vec<Vec<usize>>>> {
    if users.is_empty() {
        return Err(Error::contract("attribute inference over no users"));
    }
    let x = transferred_users(params, model, source, users)?;
    let mut confusions: Vec<Vec<Vec<usize>>> = model
        .attribute_classes
        .iter()
        .map(|&c| vec![vec![0usize; c as usize]; c as usize])
        .collect();
    for (i, &u) in users.iter().enumerate() {
        let probs = attacker_predict(attacker, x.row(i))?;
        for (p, attr_probs) in probs.iter().enumerate() {
            let truth = table.label(u, p) as usize;
            confusions[p][truth][argmax(attr_probs)] += 1;
        }
    }
    Ok(confusions)
}

/// Trains a fresh attacker on the public users' frozen representations
/// and reports its precision/recall/F1 on the private test users.
///
/// The recommender is never updated. Optimization reuses the training
/// hyperparameters (batch size, learning rate, clip norm, epoch budget)
/// and early-stops on the public validation users' cross entropy,
/// returning the report of the best validation snapshot.
pub fn test_time_attack(
    params: &RecommenderParams,
    model: &ModelConfig,
    source: &InteractionLog,
    table: &PrivateAttributeTable,
    split: &PublicSplit,
    config: &TrainConfig,
    seed: u64,
) -> Result<PrivacyResult> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::contract("attack has no public training users"));
    }
    if split.valid.is_empty() {
        return Err(Error::contract("attack has no public validation users"));
    }
    if split.test.is_empty() {
        return Err(Error::contract("attack has no private test users"));
    }

    // Everything training touches is materialized here; the test users'
    // labels are only read after training, for the final confusions.
    let x_train = transferred_users(params, model, source, &split.train)?;
    let labels_train = materialize_labels(table, &split.train);
    let x_valid = transferred_users(params, model, source, &split.valid)?;
    let labels_valid = materialize_labels(table, &split.valid);

    let mut attacker = AttackerParams::init(model, seed)?;
    let adam_config = AdamConfig { lr: config.learning_rate, ..AdamConfig::default() };
    let mut adam = AdamState::new(adam_config, &tensor_sizes(&attacker.trainable()));
    let mut stopper = EarlyStopper::new(config.patience);
    let mut best: Option<AttackerParams> = None;

    for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..split.train.len()).collect();
        order.shuffle(&mut stream_rng(seed, PURPOSE_ATTACK, epoch as u64));
        for batch_idx in order.chunks(config.batch_size) {
            let x_batch = gather_rows(&x_train, batch_idx)?;
            let batch_labels: Vec<Vec<usize>> = labels_train
                .iter()
                .map(|per_user| batch_idx.iter().map(|&i| per_user[i]).collect())
                .collect();
            let mut tape = Tape::new();
            let x_var = tape.leaf(&x_batch);
            let vars = AttackerVars::load(&mut tape, &attacker);
            let loss = attacker_loss_from_labels(&mut tape, &vars, x_var, &batch_labels)?;
            let grads = tape.backward(loss)?;
            let mut grad_vecs: Vec<Vec<Real>> =
                vars.trainable().iter().map(|&v| grads.get(v).to_vec()).collect();
            let mut grad_refs: Vec<&mut [Real]> =
                grad_vecs.iter_mut().map(|g| g.as_mut_slice()).collect();
            crate::nn::clip_global_norm(&mut grad_refs, config.clip_norm);
            let grad_slices: Vec<&[Real]> = grad_vecs.iter().map(|g| g.as_slice()).collect();
            let mut param_slices: Vec<&mut [Real]> = attacker
                .trainable_mut()
                .into_iter()
                .map(|t| t.data_mut())
                .collect();
            adam.step(&mut param_slices, &grad_slices)?;
        }
        let valid_ce = attack_cross_entropy(&attacker, &x_valid, &labels_valid)?;
        let (improved, stop) = stopper.observe(epoch, -valid_ce);
        if improved {
            best = Some(attacker.clone());
        }
        if stop {
            break;
        }
    }
    let attacker = best.ok_or_else(|| Error::contract("attack ran no epochs"))?;

    let confusions = attack_confusions(params, &attacker, model, source, table, &split.test)?;
    let attributes = table
        .attributes
        .iter()
        .zip(confusions)
        .map(|(attr, confusion)| AttributeReport::from_confusion(attr.name.clone(), confusion))
        .collect::<Result<Vec<_>>>()?;
    Ok(PrivacyResult { attributes })
}
