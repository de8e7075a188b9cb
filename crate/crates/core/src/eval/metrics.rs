use crate::error::{Error, Result};
use crate::Real;

/// Ranks of each user's held-out positive among its candidate set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingResult {
    /// 1-based rank per user; ties rank the positive last.
    pub ranks: Vec<usize>,
    /// Cutoff for the top-K metrics.
    pub k: usize,
    /// Candidate-set size (positive plus negatives).
    pub n_candidates: usize,
}

/// Rank of the positive among its negatives, ties broken against the
/// positive.
pub fn rank_of(positive: Real, negatives: &[Real]) -> usize {
    1 + negatives.iter().filter(|&&s| s >= positive).count()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankMetrics {
    pub hr: Real,
    pub ndcg: Real,
    pub mrr: Real,
    pub auc: Real,
}

/// HR@K, NDCG@K, MRR and AUC averaged over users.
pub fn rank_metrics(result: &RankingResult) -> Result<RankMetrics> {
    if result.ranks.is_empty() {
        return Err(Error::contract("rank metrics over an empty result set"));
    }
    if result.n_candidates < 2 {
        return Err(Error::contract("rank metrics need at least two candidates"));
    }
    let n = result.ranks.len() as Real;
    let cands = result.n_candidates as Real;
    let (mut hr, mut ndcg, mut mrr, mut auc) = (0.0, 0.0, 0.0, 0.0);
    for &rank in &result.ranks {
        debug_assert!(rank >= 1 && rank <= result.n_candidates);
        if rank <= result.k {
            hr += 1.0;
            ndcg += 1.0 / ((rank as Real) + 1.0).log2();
        }
        mrr += 1.0 / rank as Real;
        auc += (cands - rank as Real) / (cands - 1.0);
    }
    Ok(RankMetrics { hr: hr / n, ndcg: ndcg / n, mrr: mrr / n, auc: auc / n })
}

/// Weighted precision, recall and F1 over a confusion matrix with
/// `counts[true_class][predicted_class]`.
///
/// Per-class scores are averaged with weights proportional to class
/// support; a class nobody predicted contributes precision 0.
pub fn weighted_prf(counts: &[Vec<usize>]) -> Result<(Real, Real, Real)> {
    let c = counts.len();
    if c == 0 || counts.iter().any(|row| row.len() != c) {
        return Err(Error::contract("confusion matrix must be square"));
    }
    let total: usize = counts.iter().flatten().sum();
    if total == 0 {
        return Err(Error::contract("confusion matrix holds no instances"));
    }
    let (mut p, mut r, mut f1) = (0.0, 0.0, 0.0);
    for class in 0..c {
        let support: usize = counts[class].iter().sum();
        if support == 0 {
            continue;
        }
        let predicted: usize = counts.iter().map(|row| row[class]).sum();
        let tp = counts[class][class];
        let (cp, cr, cf) = class_prf(tp, predicted, support);
        let w = support as Real / total as Real;
        p += w * cp;
        r += w * cr;
        f1 += w * cf;
    }
    Ok((p, r, f1))
}

fn class_prf(tp: usize, predicted: usize, support: usize) -> (Real, Real, Real) {
    let p = if predicted == 0 { 0.0 } else { tp as Real / predicted as Real };
    let r = tp as Real / support as Real;
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

/// Support-weighted mean, the averaging rule of [`weighted_prf`].
#[cfg(test)]
pub(crate) fn support_weighted(values: &[Real], supports: &[usize]) -> Real {
    let total: usize = supports.iter().sum();
    values
        .iter()
        .zip(supports)
        .map(|(v, &s)| v * s as Real / total as Real)
        .sum()
}

/// Confusion matrix of the constant predictor that always answers the
/// most common class (lowest class index on ties).
pub fn majority_confusion(labels: &[u32], classes: u32) -> Result<Vec<Vec<usize>>> {
    if labels.is_empty() {
        return Err(Error::contract("majority baseline over no labels"));
    }
    let c = classes as usize;
    let mut support = vec![0usize; c];
    for &l in labels {
        if l >= classes {
            return Err(Error::contract(format!("label {l} outside {classes} classes")));
        }
        support[l as usize] += 1;
    }
    let mut majority = 0;
    for (class, &s) in support.iter().enumerate() {
        if s > support[majority] {
            majority = class;
        }
    }
    let mut counts = vec![vec![0usize; c]; c];
    for (class, &s) in support.iter().enumerate() {
        counts[class][majority] = s;
    }
    Ok(counts)
}

/// Inference quality against one attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeReport {
    pub name: String,
    /// `confusion[true_class][predicted_class]` over the test users.
    pub confusion: Vec<Vec<usize>>,
    pub precision: Real,
    pub recall: Real,
    pub f1: Real,
}

impl AttributeReport {
    pub fn from_confusion(name: String, confusion: Vec<Vec<usize>>) -> Result<Self> {
        let (precision, recall, f1) = weighted_prf(&confusion)?;
        Ok(AttributeReport { name, confusion, precision, recall, f1 })
    }
}

/// Attack evaluation outcome, one report per private attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyResult {
    pub attributes: Vec<AttributeReport>,
}

impl PrivacyResult {
    pub fn mean_f1(&self) -> Real {
        self.attributes.iter().map(|a| a.f1).sum::<Real>() / self.attributes.len() as Real
    }
}
