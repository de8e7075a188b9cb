//! Ranking metrics, privacy-inference metrics, the simulated test-time
//! attack, and representation clustering.

mod attack;
mod cluster;
mod metrics;
mod ranking;

pub use attack::{attack_confusions, attack_cross_entropy, test_time_attack};
pub use cluster::{kmeans, kmeans_vmeasure, v_measure};
pub use metrics::{
    majority_confusion, rank_metrics, rank_of, weighted_prf, AttributeReport, PrivacyResult,
    RankMetrics, RankingResult,
};
pub use ranking::{evaluate_ranking, TEST_HOLDOUT, VALID_HOLDOUT};

/// Default cutoff for top-K ranking metrics.
pub const DEFAULT_K: usize = 10;
