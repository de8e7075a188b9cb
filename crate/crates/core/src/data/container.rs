use std::fmt;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::sampling::{leave_one_out_split, split_public_users, PublicSplit, TestInstance};
use super::{InteractionLog, PrivateAttributeTable, SplitSpec};

/// Magic first line of the on-disk dataset container.
pub const DATA_MAGIC: &str = "PRIVNET-DATA-1";

/// A fully split dataset, ready for training and evaluation.
///
/// `target` is the complete log; `target_train` has the test and
/// validation positives removed. Writing and re-reading a dataset is
/// byte-exact, and the same inputs and seed always produce the same
/// container bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub seed: u64,
    pub source: InteractionLog,
    pub target: InteractionLog,
    pub target_train: InteractionLog,
    pub ranking_valid: Vec<TestInstance>,
    pub ranking_test: Vec<TestInstance>,
    pub attributes: PrivateAttributeTable,
    pub privacy_split: PublicSplit,
}

/// Minimum target-domain events per user: one each for the test and
/// validation carves plus at least one training event to score with.
const MIN_TARGET_EVENTS: usize = 3;

/// Filters users to those supportable by the protocol, carves the
/// ranking test and validation positives, and splits public users.
///
/// Users need at least 3 target events and 1 source event; the rest are
/// dropped and all ids re-indexed densely. Validation reuses the
/// leave-one-out rule on the train log, so the validation positive is
/// each user's second-latest target interaction.
pub fn prepare_dataset(
    source: InteractionLog,
    target: InteractionLog,
    attributes: PrivateAttributeTable,
    spec: &SplitSpec,
    n_test_negatives: usize,
) -> Result<Dataset> {
    spec.validate()?;
    if source.user_count() != target.user_count()
        || source.user_count() != attributes.user_count()
    {
        return Err(Error::data(format!(
            "user counts disagree: {} source, {} target, {} attribute rows",
            source.user_count(),
            target.user_count(),
            attributes.user_count()
        )));
    }

    let keep: Vec<u32> = (0..target.user_count() as u32)
        .filter(|&u| {
            target.sequence(u).len() >= MIN_TARGET_EVENTS && !source.sequence(u).is_empty()
        })
        .collect();
    if keep.len() < 2 {
        return Err(Error::data(format!(
            "only {} users have >= {MIN_TARGET_EVENTS} target events and a source history",
            keep.len()
        )));
    }

    let filter_log = |log: &InteractionLog| InteractionLog {
        domain: log.domain,
        vocab_size: log.vocab_size,
        histories: keep.iter().map(|&u| log.sequence(u).to_vec()).collect(),
    };
    let source = filter_log(&source);
    let target = filter_log(&target);
    let mut attributes = PrivateAttributeTable {
        attributes: attributes.attributes.clone(),
        values: keep.iter().map(|&u| attributes.values[u as usize].clone()).collect(),
        public: vec![false; keep.len()],
    };

    let test_split = leave_one_out_split(&target, n_test_negatives, spec.seed)?;
    let valid_split =
        leave_one_out_split(&test_split.train, n_test_negatives, spec.seed.wrapping_add(1))?;
    let privacy_split = split_public_users(
        &mut attributes,
        spec.public_fraction,
        spec.valid_within_train(),
        spec.seed,
    )?;

    Ok(Dataset {
        seed: spec.seed,
        source,
        target,
        target_train: valid_split.train,
        ranking_valid: valid_split.test,
        ranking_test: test_split.test,
        attributes,
        privacy_split,
    })
}

impl Dataset {
    pub fn user_count(&self) -> usize {
        self.target.user_count()
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.target.validate()?;
        self.target_train.validate()?;
        self.attributes.validate()?;
        let m = self.user_count();
        if self.source.user_count() != m
            || self.target_train.user_count() != m
            || self.attributes.user_count() != m
        {
            return Err(Error::data("container parts disagree on user count"));
        }
        if self.ranking_test.len() != m || self.ranking_valid.len() != m {
            return Err(Error::data("container is missing held-out instances"));
        }
        for u in 0..m as u32 {
            if self.source.sequence(u).is_empty() || self.target_train.sequence(u).is_empty() {
                return Err(Error::data(format!("user {u} has an empty history")));
            }
        }
        let s = &self.privacy_split;
        let mut all: Vec<u32> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
        all.sort_unstable();
        all.dedup();
        if all.len() != m || all.last().map(|&u| u as usize + 1) != Some(m) {
            return Err(Error::data("privacy split is not a partition of the users"));
        }
        Ok(())
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            users: self.user_count(),
            source_items: self.source.vocab_size,
            source_events: self.source.event_count(),
            target_items: self.target.vocab_size,
            target_events: self.target.event_count(),
            public_users: self.privacy_split.train.len() + self.privacy_split.valid.len(),
            private_users: self.privacy_split.test.len(),
        }
    }
}

/// Dataset statistics, displayed as the preparation summary table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub users: usize,
    pub source_items: u32,
    pub source_events: usize,
    pub target_items: u32,
    pub target_events: usize,
    pub public_users: usize,
    pub private_users: usize,
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {:>10} {:>10}", "", "source", "target")?;
        writeln!(f, "{:<14} {:>10} {:>10}", "items", self.source_items, self.target_items)?;
        writeln!(f, "{:<14} {:>10} {:>10}", "events", self.source_events, self.target_events)?;
        writeln!(f, "{:<14} {:>10}", "users", self.users)?;
        write!(
            f,
            "{:<14} {:>10} public / {} private",
            "privacy split", self.public_users, self.private_users
        )
    }
}

/// Writes the container: the magic line followed by the JSON body.
pub fn write_container(path: &Path, dataset: &Dataset) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{DATA_MAGIC}")?;
    serde_json::to_writer(&mut w, dataset).map_err(|e| Error::Format(e.to_string()))?;
    w.flush()?;
    Ok(())
}

/// Reads and validates a container written by [`write_container`].
pub fn read_container(path: &Path) -> Result<Dataset> {
    let mut raw = String::new();
    fs::File::open(path)?.read_to_string(&mut raw)?;
    let body = raw
        .strip_prefix(DATA_MAGIC)
        .and_then(|rest| rest.strip_prefix('\n'))
        .ok_or_else(|| {
            Error::Format(format!(
                "{} is not a {DATA_MAGIC} container",
                path.display()
            ))
        })?;
    let dataset: Dataset =
        serde_json::from_str(body).map_err(|e| Error::Format(format!("corrupt container: {e}")))?;
    dataset.validate()?;
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticConfig};

    fn small_dataset(seed: u64) -> Dataset {
        let config = SyntheticConfig {
            users: 24,
            items_per_domain: 60,
            source_events_per_user: 12,
            target_events_per_user: 8,
            seed,
            ..SyntheticConfig::default()
        };
        let (source, target, table) = generate_synthetic(&config).unwrap();
        let spec = SplitSpec { seed, ..SplitSpec::default() };
        prepare_dataset(source, target, table, &spec, 20).unwrap()
    }

    #[test]
    fn prepared_dataset_validates() {
        let d = small_dataset(5);
        d.validate().unwrap();
        assert_eq!(d.ranking_test.len(), d.user_count());
        // validation positive is the second-latest target interaction
        for u in 0..d.user_count() as u32 {
            let seq = d.target.sequence(u);
            assert_eq!(d.ranking_test[u as usize].positive, seq[seq.len() - 1].item);
            assert_eq!(d.ranking_valid[u as usize].positive, seq[seq.len() - 2].item);
            assert_eq!(d.target_train.sequence(u).len(), seq.len() - 2);
        }
    }

    #[test]
    fn test_and_valid_negatives_differ() {
        let d = small_dataset(5);
        assert_ne!(
            d.ranking_test[0].negatives, d.ranking_valid[0].negatives,
            "independent negative draws expected"
        );
    }

    #[test]
    fn container_round_trip_and_byte_identity() {
        let dir = tempfile::tempdir().unwrap();
        let d = small_dataset(9);
        let p1 = dir.path().join("a.privnet");
        let p2 = dir.path().join("b.privnet");
        write_container(&p1, &d).unwrap();
        write_container(&p2, &small_dataset(9)).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        let back = read_container(&p1).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bogus");
        fs::write(&p, "NOT-A-CONTAINER\n{}").unwrap();
        let err = read_container(&p).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn truncated_body_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let d = small_dataset(3);
        let p = dir.path().join("trunc");
        write_container(&p, &d).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        let err = read_container(&p).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn users_with_thin_histories_are_dropped() {
        let config = SyntheticConfig {
            users: 12,
            items_per_domain: 40,
            source_events_per_user: 5,
            target_events_per_user: 2, // below the 3-event minimum
            ..SyntheticConfig::default()
        };
        let (source, target, table) = generate_synthetic(&config).unwrap();
        let err =
            prepare_dataset(source, target, table, &SplitSpec::default(), 10).unwrap_err();
        assert!(err.to_string().contains("3 target events"), "{err}");
    }

    #[test]
    fn summary_counts_match() {
        let d = small_dataset(5);
        let s = d.summary();
        assert_eq!(s.users, d.user_count());
        assert_eq!(s.source_events, d.source.event_count());
        assert_eq!(s.public_users + s.private_users, s.users);
        let text = s.to_string();
        assert!(text.contains("source") && text.contains("target"));
    }
}
