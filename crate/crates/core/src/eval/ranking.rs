use crate::data::{Event, InteractionLog, TestInstance};
use crate::error::{Error, Result};
use crate::model::{score_candidates, ModelConfig, RecommenderParams};

use super::metrics::{rank_metrics, rank_of, RankMetrics, RankingResult};

/// Trailing target events hidden while scoring the test positive. The
/// validation positive stays visible in test histories.
pub const TEST_HOLDOUT: usize = 1;
/// Trailing target events hidden while scoring the validation positive.
pub const VALID_HOLDOUT: usize = 2;

/// The most recent `window` events after hiding the `holdout` newest.
pub(crate) fn scoring_history(seq: &[Event], holdout: usize, window: usize) -> &[Event] {
    let visible = &seq[..seq.len().saturating_sub(holdout)];
    &visible[visible.len().saturating_sub(window)..]
}

/// Ranks each instance's positive against its negatives with frozen
/// parameters, then reduces to HR@K, NDCG@K, MRR and AUC.
pub fn evaluate_ranking(
    params: &RecommenderParams,
    config: &ModelConfig,
    target: &InteractionLog,
    source: &InteractionLog,
    instances: &[TestInstance],
    holdout: usize,
    k: usize,
) -> Result<(RankingResult, RankMetrics)> {
    if instances.is_empty() {
        return Err(Error::contract("ranking evaluation over no instances"));
    }
    let n_candidates = instances[0].negatives.len() + 1;
    let mut ranks = Vec::with_capacity(instances.len());
    for inst in instances {
        if inst.negatives.len() + 1 != n_candidates {
            return Err(Error::contract(format!(
                "user {} has {} candidates where {n_candidates} were expected",
                inst.user,
                inst.negatives.len() + 1
            )));
        }
        let seq = target.sequence(inst.user);
        if seq.len() <= holdout {
            return Err(Error::contract(format!(
                "user {} has only {} target events with {holdout} held out",
                inst.user,
                seq.len()
            )));
        }
        let history: Vec<u32> = scoring_history(seq, holdout, config.window)
            .iter()
            .map(|e| e.item)
            .collect();
        let window: Vec<u32> =
            source.recent(inst.user, config.window).iter().map(|e| e.item).collect();
        let mut candidates = inst.negatives.clone();
        candidates.push(inst.positive);
        let scores = score_candidates(params, config, &history, &candidates, &window)?;
        let (positive, negatives) = scores.split_last().expect("non-empty candidates");
        ranks.push(rank_of(*positive, negatives));
    }
    let result = RankingResult { ranks, k, n_candidates };
    let metrics = rank_metrics(&result)?;
    Ok((result, metrics))
}
