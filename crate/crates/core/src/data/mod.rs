//! Interaction logs, private attributes, splits, and example generation.

mod container;
mod movielens;
mod sampling;
mod synthetic;

pub use container::{
    prepare_dataset, read_container, write_container, Dataset, DatasetSummary, DATA_MAGIC,
};
pub use movielens::load_movielens;
pub use sampling::{
    generate_ranking_examples, leave_one_out_split, split_public_users, GeneratedExamples,
    LeaveOneOut, PublicSplit, TestInstance,
};
pub use synthetic::{generate_synthetic, SyntheticConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which of the two item catalogs an event or example belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Source,
    Target,
}

/// One implicit-feedback interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub item: u32,
    pub timestamp: i64,
}

/// Per-user chronological interaction sequences for one domain.
///
/// Users are dense ids `0..user_count()` shared across domains; item ids
/// are dense within the domain. Sequences are sorted by timestamp with
/// ties keeping original record order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionLog {
    pub domain: Domain,
    pub vocab_size: u32,
    pub histories: Vec<Vec<Event>>,
}

impl InteractionLog {
    pub fn user_count(&self) -> usize {
        self.histories.len()
    }

    pub fn event_count(&self) -> usize {
        self.histories.iter().map(Vec::len).sum()
    }

    pub fn sequence(&self, user: u32) -> &[Event] {
        &self.histories[user as usize]
    }

    /// The most recent `window` events of a user, oldest first.
    pub fn recent(&self, user: u32, window: usize) -> &[Event] {
        let seq = self.sequence(user);
        &seq[seq.len().saturating_sub(window)..]
    }

    /// Per-item interaction mask for one user.
    pub fn item_mask(&self, user: u32) -> Vec<bool> {
        let mut mask = vec![false; self.vocab_size as usize];
        for ev in self.sequence(user) {
            mask[ev.item as usize] = true;
        }
        mask
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 {
            return Err(Error::data("interaction log with empty vocabulary"));
        }
        for (user, seq) in self.histories.iter().enumerate() {
            let mut seen = vec![false; self.vocab_size as usize];
            let mut prev_ts = i64::MIN;
            for ev in seq {
                if ev.item >= self.vocab_size {
                    return Err(Error::data(format!(
                        "user {user}: item {} outside vocabulary of {}",
                        ev.item, self.vocab_size
                    )));
                }
                if ev.timestamp < prev_ts {
                    return Err(Error::data(format!(
                        "user {user}: events not in timestamp order"
                    )));
                }
                prev_ts = ev.timestamp;
                if seen[ev.item as usize] {
                    return Err(Error::data(format!(
                        "user {user}: duplicate interaction with item {}",
                        ev.item
                    )));
                }
                seen[ev.item as usize] = true;
            }
        }
        Ok(())
    }
}

/// Name and class count of one private attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDescriptor {
    pub name: String,
    pub classes: u32,
}

/// Private attribute labels for every user, plus the public-user flags
/// granting the attacker access to a user's labels during training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivateAttributeTable {
    pub attributes: Vec<AttributeDescriptor>,
    /// `values[user][attribute]`
    pub values: Vec<Vec<u32>>,
    pub public: Vec<bool>,
}

impl PrivateAttributeTable {
    pub fn user_count(&self) -> usize {
        self.values.len()
    }

    pub fn label(&self, user: u32, attribute: usize) -> u32 {
        self.values[user as usize][attribute]
    }

    pub fn is_public(&self, user: u32) -> bool {
        self.public[user as usize]
    }

    pub fn validate(&self) -> Result<()> {
        for (i, a) in self.attributes.iter().enumerate() {
            if a.classes == 0 {
                return Err(Error::data(format!("attribute {:?} has zero classes", a.name)));
            }
            if self.attributes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::data(format!("duplicate attribute name {:?}", a.name)));
            }
        }
        if self.public.len() != self.values.len() {
            return Err(Error::data(format!(
                "{} value rows but {} public flags",
                self.values.len(),
                self.public.len()
            )));
        }
        for (user, row) in self.values.iter().enumerate() {
            if row.len() != self.attributes.len() {
                return Err(Error::data(format!(
                    "user {user}: {} labels for {} attributes",
                    row.len(),
                    self.attributes.len()
                )));
            }
            for (p, (&v, a)) in row.iter().zip(&self.attributes).enumerate() {
                if v >= a.classes {
                    return Err(Error::data(format!(
                        "user {user}: label {v} for attribute {p} with {} classes",
                        a.classes
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One (history window, candidate, label) training instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingExample {
    pub user: u32,
    pub history: Vec<u32>,
    pub candidate: u32,
    pub label: u8,
    pub domain: Domain,
}

/// One labeled attribute-inference instance for the attacker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivacyExample {
    pub user: u32,
    pub attribute: usize,
    pub label: u32,
}

/// Split ratios and the public-user fraction governing all partitions.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
    pub public_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.7,
            valid: 0.1,
            test: 0.2,
            public_fraction: 0.8,
            seed: 17,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train <= 0.0 || self.valid <= 0.0 || self.test <= 0.0 {
            return Err(Error::config("split ratios must be positive"));
        }
        if ((self.train + self.valid + self.test) - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "split ratios {}:{}:{} do not sum to 1",
                self.train, self.valid, self.test
            )));
        }
        if self.public_fraction <= 0.0 || self.public_fraction >= 1.0 {
            return Err(Error::config(format!(
                "public-user fraction {} outside (0, 1)",
                self.public_fraction
            )));
        }
        Ok(())
    }

    /// Share of public users held out for privacy validation; 7:1 train:valid
    /// within the public set under the default ratios.
    pub fn valid_within_train(&self) -> f64 {
        self.valid / (self.train + self.valid)
    }
}
