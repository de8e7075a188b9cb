use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, PURPOSE_LOO_NEG, PURPOSE_PUBLIC_SPLIT, PURPOSE_RANKING_NEG};

use super::{InteractionLog, PrivateAttributeTable, RankingExample};

/// Output of [`generate_ranking_examples`].
#[derive(Debug, Clone)]
pub struct GeneratedExamples {
    pub examples: Vec<RankingExample>,
    /// Users with fewer than 2 interactions, who cannot emit a positive.
    pub skipped_users: usize,
}

/// Sliding-window positives plus sampled negatives for one domain.
///
/// A user sequence `[i_1..i_l]` emits the positive `(window before i_c, i_c)`
/// for every `c >= 2`, windows truncated to the most recent `w` items. Each
/// positive is followed by `neg_ratio` negatives sharing its window, with
/// candidates drawn uniformly from items absent from the user's entire
/// sequence (resampling across examples is independent).
pub fn generate_ranking_examples(
    log: &InteractionLog,
    window: usize,
    neg_ratio: usize,
    seed: u64,
) -> Result<GeneratedExamples> {
    if window == 0 {
        return Err(Error::config("history window must be positive"));
    }
    let mut examples = Vec::new();
    let mut skipped = 0usize;
    for user in 0..log.user_count() as u32 {
        let seq = log.sequence(user);
        if seq.len() < 2 {
            skipped += 1;
            continue;
        }
        if neg_ratio > 0 && seq.len() == log.vocab_size as usize {
            return Err(Error::data(format!(
                "user {user} interacted with every item; cannot sample negatives"
            )));
        }
        let mask = log.item_mask(user);
        let mut rng = stream_rng(seed, PURPOSE_RANKING_NEG, user as u64);
        for c in 1..seq.len() {
            let start = c.saturating_sub(window);
            let history: Vec<u32> = seq[start..c].iter().map(|e| e.item).collect();
            examples.push(RankingExample {
                user,
                history: history.clone(),
                candidate: seq[c].item,
                label: 1,
                domain: log.domain,
            });
            for _ in 0..neg_ratio {
                let candidate = loop {
                    let item = rng.gen_range(0..log.vocab_size);
                    if !mask[item as usize] {
                        break item;
                    }
                };
                examples.push(RankingExample {
                    user,
                    history: history.clone(),
                    candidate,
                    label: 0,
                    domain: log.domain,
                });
            }
        }
    }
    Ok(GeneratedExamples { examples, skipped_users: skipped })
}

/// One held-out ranking instance: the positive is scored against the
/// negatives, ties counted against the positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestInstance {
    pub user: u32,
    pub positive: u32,
    pub negatives: Vec<u32>,
}

/// Output of [`leave_one_out_split`].
#[derive(Debug, Clone, PartialEq)]
pub struct LeaveOneOut {
    pub train: InteractionLog,
    pub test: Vec<TestInstance>,
}

/// Holds out each user's latest interaction as the test positive and
/// samples `n_negatives` distinct non-interacted items against it.
///
/// The returned train log is the input minus exactly the test positives.
pub fn leave_one_out_split(
    log: &InteractionLog,
    n_negatives: usize,
    seed: u64,
) -> Result<LeaveOneOut> {
    let mut train = InteractionLog {
        domain: log.domain,
        vocab_size: log.vocab_size,
        histories: Vec::with_capacity(log.user_count()),
    };
    let mut test = Vec::with_capacity(log.user_count());
    for user in 0..log.user_count() as u32 {
        let seq = log.sequence(user);
        if seq.len() < 2 {
            return Err(Error::data(format!(
                "user {user} has {} interactions; leave-one-out needs at least 2",
                seq.len()
            )));
        }
        let (held_out, rest) = seq.split_last().expect("length checked");
        let mask = log.item_mask(user);
        let available = log.vocab_size as usize - seq.len();
        if available < n_negatives {
            return Err(Error::data(format!(
                "user {user}: only {available} non-interacted items, need {n_negatives} negatives"
            )));
        }
        let mut pool: Vec<u32> = (0..log.vocab_size).filter(|&i| !mask[i as usize]).collect();
        let mut rng = stream_rng(seed, PURPOSE_LOO_NEG, user as u64);
        // partial Fisher-Yates: the first n_negatives slots become the sample
        for k in 0..n_negatives {
            let j = rng.gen_range(k..pool.len());
            pool.swap(k, j);
        }
        pool.truncate(n_negatives);
        train.histories.push(rest.to_vec());
        test.push(TestInstance {
            user,
            positive: held_out.item,
            negatives: pool,
        });
    }
    Ok(LeaveOneOut { train, test })
}

/// Partition of users into the attacker's labeled pools.
///
/// `train` and `valid` together are the public users (attribute labels
/// disclosed); `test` users keep theirs private and are only ever used
/// for final attack evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicSplit {
    pub train: Vec<u32>,
    pub valid: Vec<u32>,
    pub test: Vec<u32>,
}

/// Uniformly samples `fraction` of users as public (floored, at least one),
/// carves `valid_within_train` of them for privacy validation, and flags
/// the public users in the table.
pub fn split_public_users(
    table: &mut PrivateAttributeTable,
    fraction: f64,
    valid_within_train: f64,
    seed: u64,
) -> Result<PublicSplit> {
    if !(0.0..1.0).contains(&fraction) || fraction == 0.0 {
        return Err(Error::config(format!(
            "public-user fraction {fraction} outside (0, 1)"
        )));
    }
    let m = table.user_count();
    let mut order: Vec<u32> = (0..m as u32).collect();
    let mut rng = stream_rng(seed, PURPOSE_PUBLIC_SPLIT, 0);
    for k in (1..order.len()).rev() {
        let j = rng.gen_range(0..=k);
        order.swap(k, j);
    }
    let n_public = (fraction * m as f64).floor().max(1.0) as usize;
    if n_public >= m {
        return Err(Error::config(format!(
            "public fraction {fraction} leaves no private test users among {m}"
        )));
    }
    let n_valid = ((n_public as f64 * valid_within_train).floor() as usize)
        .max(1)
        .min(n_public - 1);
    let mut train: Vec<u32> = order[..n_public - n_valid].to_vec();
    let mut valid: Vec<u32> = order[n_public - n_valid..n_public].to_vec();
    let mut test: Vec<u32> = order[n_public..].to_vec();
    train.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();
    for flag in table.public.iter_mut() {
        *flag = false;
    }
    for &u in train.iter().chain(&valid) {
        table.public[u as usize] = true;
    }
    Ok(PublicSplit { train, valid, test })
}
