use crate::data::{InteractionLog, PrivateAttributeTable, RankingExample};
use crate::error::{Error, Result};
use crate::nn::Var;
use crate::{Real, Tape};

use super::forward::{
    attacker_head_logits, dense, sigmoid_vec, source_batch_logits, target_batch_logits,
    transferred_batch, AttackerVars, RecommenderVars,
};
use super::{AttackerParams, ModelConfig};

fn labels_of(batch: &[RankingExample]) -> Vec<Real> {
    batch.iter().map(|ex| ex.label as Real).collect()
}

/// Joint negative log likelihood over paired batches: mean binary cross
/// entropy of the target scores plus mean binary cross entropy of the
/// source scores. Returns the transferred representations of the target
/// batch alongside the loss.
fn joint_nll(
    tape: &mut Tape,
    vars: &RecommenderVars,
    config: &ModelConfig,
    target_batch: &[RankingExample],
    source_batch: &[RankingExample],
    source: &InteractionLog,
) -> Result<(Var, Var)> {
    let (target_logits, x_trans) =
        target_batch_logits(tape, vars, config, target_batch, source)?;
    let source_logits = source_batch_logits(tape, vars, config, source_batch)?;
    let target_bce = tape.bce_logits(target_logits, &labels_of(target_batch))?;
    let source_bce = tape.bce_logits(source_logits, &labels_of(source_batch))?;
    let target_mean = tape.mean_all(target_bce);
    let source_mean = tape.mean_all(source_bce);
    let loss = tape.add(target_mean, source_mean)?;
    Ok((loss, x_trans))
}

/// Recommendation objective: joint NLL over one target batch and one
/// source batch.
pub fn recommender_loss(
    tape: &mut Tape,
    vars: &RecommenderVars,
    config: &ModelConfig,
    target_batch: &[RankingExample],
    source_batch: &[RankingExample],
    source: &InteractionLog,
) -> Result<Var> {
    joint_nll(tape, vars, config, target_batch, source_batch, source).map(|(loss, _)| loss)
}

fn attribute_labels(
    table: &PrivateAttributeTable,
    attribute: usize,
    users: &[u32],
) -> Result<Vec<usize>> {
    users
        .iter()
        .map(|&u| {
            table
                .values
                .get(u as usize)
                .and_then(|row| row.get(attribute))
                .map(|&v| v as usize)
                .ok_or_else(|| {
                    Error::data(format!("user {u} has no label for attribute {attribute}"))
                })
        })
        .collect()
}

/// Multitask attacker objective over pre-gathered labels: cross entropy
/// per attribute head, averaged over heads.
pub fn attacker_loss_from_labels(
    tape: &mut Tape,
    vars: &AttackerVars,
    x_trans: Var,
    labels: &[Vec<usize>],
) -> Result<Var> {
    if vars.heads.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} attacker heads for {} labeled attributes",
            vars.heads.len(),
            labels.len()
        )));
    }
    let mut total: Option<Var> = None;
    for (p, attr_labels) in labels.iter().enumerate() {
        let logits = attacker_head_logits(tape, vars, p, x_trans)?;
        let ce = tape.ce_logits(logits, attr_labels)?;
        let mean = tape.mean_all(ce);
        total = Some(match total {
            None => mean,
            Some(t) => tape.add(t, mean)?,
        });
    }
    let total = total.ok_or_else(|| Error::contract("no attribute heads"))?;
    Ok(tape.affine(total, 1.0 / labels.len() as Real, 0.0))
}

/// [`attacker_loss_from_labels`] with labels looked up from the table.
pub fn attacker_loss(
    tape: &mut Tape,
    vars: &AttackerVars,
    x_trans: Var,
    users: &[u32],
    table: &PrivateAttributeTable,
) -> Result<Var> {
    if vars.heads.len() != table.attributes.len() {
        return Err(Error::contract(format!(
            "{} attacker heads for {} attributes",
            vars.heads.len(),
            table.attributes.len()
        )));
    }
    let labels = (0..table.attributes.len())
        .map(|p| attribute_labels(table, p, users))
        .collect::<Result<Vec<_>>>()?;
    attacker_loss_from_labels(tape, vars, x_trans, &labels)
}

/// Per-attribute class probabilities for one transferred representation.
pub fn attacker_predict(attacker: &AttackerParams, x_trans: &[Real]) -> Result<Vec<Vec<Real>>> {
    attacker
        .heads
        .iter()
        .map(|head| {
            let expected = head.w1.shape()[0];
            if x_trans.len() != expected {
                return Err(Error::Dimension {
                    op: "attacker_predict",
                    lhs: vec![x_trans.len()],
                    rhs: vec![expected],
                });
            }
            let mut hidden = dense(x_trans, &head.w1, Some(&head.b1));
            sigmoid_vec(&mut hidden);
            let mut probs = dense(&hidden, &head.w2, Some(&head.b2));
            let max = probs.iter().fold(Real::NEG_INFINITY, |m, &v| m.max(v));
            let mut norm = 0.0;
            for p in probs.iter_mut() {
                *p = (*p - max).exp();
                norm += *p;
            }
            for p in probs.iter_mut() {
                *p /= norm;
            }
            Ok(probs)
        })
        .collect()
}

/// Privacy-aware objective and the graph handles needed to train on it.
///
/// The attacker parameters are loaded as frozen constants: gradients of
/// `loss` reach them on the tape but this loss never releases them,
/// matching the protocol where each side optimizes only its own
/// parameters.
#[derive(Debug, Clone)]
pub struct PrivnetLoss {
    pub loss: Var,
    pub recommender: Var,
    /// Attacker cross entropy on the privacy batch; absent when λ = 0.
    pub adversary: Option<Var>,
    /// Transferred representations of the privacy batch; absent when λ = 0.
    pub x_trans: Option<Var>,
}

impl PrivnetLoss {
    /// Gradients with respect to the attacker are never available from
    /// the joint loss.
    pub fn attacker_grads(&self) -> Result<Vec<Var>> {
        Err(Error::contract(
            "attacker parameters are frozen inside the joint loss",
        ))
    }
}

/// Joint loss `L(θ) − λ L(Θ)` with the attacker treated as a constant.
///
/// The adversary term is evaluated on the privacy batch's transferred
/// representations, so its gradient flows through the transfer unit
/// into the recommender.
#[allow(clippy::too_many_arguments)]
pub fn privnet_loss(
    tape: &mut Tape,
    vars: &RecommenderVars,
    attacker: &AttackerParams,
    config: &ModelConfig,
    target_batch: &[RankingExample],
    source_batch: &[RankingExample],
    privacy_users: &[u32],
    table: &PrivateAttributeTable,
    source: &InteractionLog,
    lambda: Real,
) -> Result<PrivnetLoss> {
    if lambda < 0.0 {
        return Err(Error::contract(format!("negative adversary weight {lambda}")));
    }
    let (recommender, _) =
        joint_nll(tape, vars, config, target_batch, source_batch, source)?;
    if lambda == 0.0 {
        return Ok(PrivnetLoss {
            loss: recommender,
            recommender,
            adversary: None,
            x_trans: None,
        });
    }
    let x_trans = transferred_batch(tape, vars, config, privacy_users, source)?;
    let frozen = AttackerVars::load(tape, attacker);
    let adversary = attacker_loss(tape, &frozen, x_trans, privacy_users, table)?;
    let penalty = tape.affine(adversary, -lambda, 0.0);
    let loss = tape.add(recommender, penalty)?;
    Ok(PrivnetLoss {
        loss,
        recommender,
        adversary: Some(adversary),
        x_trans: Some(x_trans),
    })
}
