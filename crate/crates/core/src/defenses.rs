//! Baseline privacy strategies applied as source-data transforms, with
//! the recommender itself left unchanged: randomized response on the
//! interaction matrix and dummy-item injection. The adversarial strategy
//! is the training loop's own and needs no transform.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Event, InteractionLog};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, PURPOSE_BLURME, PURPOSE_LDP};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefenseStrategy {
    /// Gradient-based privacy via the λ-weighted adversary in the loss.
    Adversarial,
    /// Randomized response: interactions dropped and replaced at random.
    LdpNoise,
    /// Dummy items mixed into each user's history.
    Blurme,
    None,
}

impl DefenseStrategy {
    pub fn name(self) -> &'static str {
        match self {
            DefenseStrategy::Adversarial => "adversarial",
            DefenseStrategy::LdpNoise => "ldp_noise",
            DefenseStrategy::Blurme => "blurme",
            DefenseStrategy::None => "none",
        }
    }
}

/// Which privacy strategy to run and its knobs. The defaults are the
/// published comparison settings: 10% noise, 5 dummy items.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefenseConfig {
    pub strategy: DefenseStrategy,
    /// Drop probability for randomized response, in [0, 1].
    pub noise: Real,
    /// Dummy items injected per user.
    pub dummies: usize,
    pub seed: u64,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        DefenseConfig {
            strategy: DefenseStrategy::Adversarial,
            noise: 0.10,
            dummies: 5,
            seed: 17,
        }
    }
}

impl DefenseConfig {
    /// `lambda` is the adversary weight the training run will use; the
    /// adversarial strategy is meaningless without it.
    pub fn validate(&self, lambda: Real) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::config(format!(
                "noise level {} outside [0, 1]",
                self.noise
            )));
        }
        if self.strategy == DefenseStrategy::Adversarial && lambda <= 0.0 {
            return Err(Error::config(
                "adversarial strategy needs a positive adversary weight",
            ));
        }
        Ok(())
    }

    /// Transforms the source log according to the strategy. Adversarial
    /// and none leave the data untouched; their protection (or lack of
    /// it) lives in the training loss.
    pub fn apply(&self, source: &InteractionLog) -> Result<InteractionLog> {
        match self.strategy {
            DefenseStrategy::Adversarial | DefenseStrategy::None => Ok(source.clone()),
            DefenseStrategy::LdpNoise => apply_ldp(source, self.noise, self.seed),
            DefenseStrategy::Blurme => apply_blurme(source, self.dummies, self.seed),
        }
    }
}

/// Draws the next of `k` distinct uniform picks from `pool[taken..]`.
fn draw_distinct(pool: &mut [u32], taken: usize, rng: &mut impl Rng) -> u32 {
    let idx = rng.gen_range(taken..pool.len());
    pool.swap(taken, idx);
    pool[taken]
}

fn non_interacted(log: &InteractionLog, user: u32) -> Vec<u32> {
    let mask = log.item_mask(user);
    (0..log.vocab_size).filter(|&i| !mask[i as usize]).collect()
}

/// Randomized response on each user's interaction set: every event is
/// independently dropped with probability `noise` and replaced by a
/// distinct uniformly random non-interacted item in the same sequence
/// position, with the same timestamp. Interaction counts are preserved.
pub fn apply_ldp(log: &InteractionLog, noise: Real, seed: u64) -> Result<InteractionLog> {
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::config(format!("noise level {noise} outside [0, 1]")));
    }
    let histories = log
        .histories
        .par_iter()
        .enumerate()
        .map(|(user, seq)| {
            let mut rng = stream_rng(seed, PURPOSE_LDP, user as u64);
            let dropped: Vec<bool> = seq.iter().map(|_| rng.gen::<f64>() < noise).collect();
            let k = dropped.iter().filter(|&&d| d).count();
            let mut pool = non_interacted(log, user as u32);
            if pool.len() < k {
                return Err(Error::data(format!(
                    "user {user}: only {} non-interacted items to replace {k} dropped events",
                    pool.len()
                )));
            }
            let mut taken = 0;
            Ok(seq
                .iter()
                .zip(&dropped)
                .map(|(ev, &drop)| {
                    if drop {
                        let item = draw_distinct(&mut pool, taken, &mut rng);
                        taken += 1;
                        Event { item, timestamp: ev.timestamp }
                    } else {
                        *ev
                    }
                })
                .collect())
        })
        .collect::<Result<Vec<Vec<Event>>>>()?;
    Ok(InteractionLog { domain: log.domain, vocab_size: log.vocab_size, histories })
}

/// Injects `dummies` distinct non-interacted items per user at uniformly
/// random positions; the original events survive untouched, in order.
/// Each dummy takes the timestamp of the event it lands in front of.
pub fn apply_blurme(log: &InteractionLog, dummies: usize, seed: u64) -> Result<InteractionLog> {
    let histories = log
        .histories
        .par_iter()
        .enumerate()
        .map(|(user, seq)| {
            let mut pool = non_interacted(log, user as u32);
            if pool.len() < dummies {
                return Err(Error::data(format!(
                    "user {user}: only {} non-interacted items for {dummies} dummies",
                    pool.len()
                )));
            }
            let mut rng = stream_rng(seed, PURPOSE_BLURME, user as u64);
            let mut out = seq.to_vec();
            for taken in 0..dummies {
                let item = draw_distinct(&mut pool, taken, &mut rng);
                let pos = rng.gen_range(0..=out.len());
                let timestamp = if pos < out.len() {
                    out[pos].timestamp
                } else {
                    out.last().map_or(0, |ev| ev.timestamp)
                };
                out.insert(pos, Event { item, timestamp });
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<Event>>>>()?;
    Ok(InteractionLog { domain: log.domain, vocab_size: log.vocab_size, histories })
}
