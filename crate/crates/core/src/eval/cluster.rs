use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, PURPOSE_KMEANS};
use crate::{Real, Tensor};

/// Restart count for K-means; best inertia wins.
const RESTARTS: usize = 10;

fn dist2(a: &[Real], b: &[Real]) -> Real {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[Real], centers: &[Vec<Real>]) -> (usize, Real) {
    let mut best = (0, Real::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = dist2(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn seed_centers<R: Rng>(points: &Tensor, k: usize, rng: &mut R) -> Vec<Vec<Real>> {
    let n = points.rows();
    let mut centers = vec![points.row(rng.gen_range(0..n)).to_vec()];
    while centers.len() < k {
        let d2: Vec<Real> = (0..n).map(|i| nearest(points.row(i), &centers).1).collect();
        let total: Real = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.gen::<Real>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                u -= d;
                if u <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.push(points.row(next).to_vec());
    }
    centers
}

fn lloyd(points: &Tensor, centers: &mut Vec<Vec<Real>>) -> (Vec<usize>, Real) {
    let (n, d) = (points.rows(), points.cols());
    let k = centers.len();
    let mut assignment = vec![usize::MAX; n];
    for _ in 0..200 {
        let mut changed = false;
        for i in 0..n {
            let (c, _) = nearest(points.row(i), centers);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assignment[i]] += 1;
            for (s, v) in sums[assignment[i]].iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // revive an empty cluster at the point farthest from its
                // current center
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = dist2(points.row(a), &centers[assignment[a]]);
                        let db = dist2(points.row(b), &centers[assignment[b]]);
                        da.partial_cmp(&db).expect("finite distances")
                    })
                    .expect("non-empty points");
                centers[c] = points.row(far).to_vec();
            } else {
                for (cv, s) in centers[c].iter_mut().zip(&sums[c]) {
                    *cv = s / counts[c] as Real;
                }
            }
        }
    }
    let inertia = (0..n).map(|i| dist2(points.row(i), &centers[assignment[i]])).sum();
    (assignment, inertia)
}

/// Lloyd's algorithm with K-means++ seeding and 10 restarts; returns
/// the assignment with the best inertia.
pub fn kmeans(points: &Tensor, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = points.rows();
    if k == 0 {
        return Err(Error::contract("k-means with zero clusters"));
    }
    let mut distinct: Vec<&[Real]> = Vec::new();
    for i in 0..n {
        let row = points.row(i);
        if !distinct.contains(&row) {
            distinct.push(row);
            if distinct.len() >= k {
                break;
            }
        }
    }
    if distinct.len() < k {
        return Err(Error::contract(format!(
            "{} distinct points cannot form {k} clusters",
            distinct.len()
        )));
    }
    let mut best: Option<(Vec<usize>, Real)> = None;
    for restart in 0..RESTARTS {
        let mut rng = stream_rng(seed, PURPOSE_KMEANS, restart as u64);
        let mut centers = seed_centers(points, k, &mut rng);
        let (assignment, inertia) = lloyd(points, &mut centers);
        if best.as_ref().map_or(true, |(_, b)| inertia < *b) {
            best = Some((assignment, inertia));
        }
    }
    Ok(best.expect("at least one restart").0)
}

fn entropy(counts: &[usize], total: usize) -> Real {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as Real / total as Real;
            -p * p.ln()
        })
        .sum()
}

/// V-measure between a clustering and ground-truth labels: harmonic
/// mean of homogeneity and completeness from the contingency table.
pub fn v_measure(assignment: &[usize], labels: &[u32]) -> Result<Real> {
    if assignment.is_empty() || assignment.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} assignments against {} labels",
            assignment.len(),
            labels.len()
        )));
    }
    let n = assignment.len();
    let k = assignment.iter().max().expect("non-empty") + 1;
    let c = *labels.iter().max().expect("non-empty") as usize + 1;
    let mut table = vec![vec![0usize; k]; c];
    for (&cluster, &label) in assignment.iter().zip(labels) {
        table[label as usize][cluster] += 1;
    }
    let class_totals: Vec<usize> = table.iter().map(|row| row.iter().sum()).collect();
    let cluster_totals: Vec<usize> =
        (0..k).map(|j| table.iter().map(|row| row[j]).sum()).collect();
    let h_class = entropy(&class_totals, n);
    let h_cluster = entropy(&cluster_totals, n);

    // H(C|K) = Σ_k p(k) H(C | K=k), and symmetrically for H(K|C)
    let mut h_class_given = 0.0;
    for j in 0..k {
        if cluster_totals[j] == 0 {
            continue;
        }
        let col: Vec<usize> = table.iter().map(|row| row[j]).collect();
        h_class_given +=
            cluster_totals[j] as Real / n as Real * entropy(&col, cluster_totals[j]);
    }
    let mut h_cluster_given = 0.0;
    for row in &table {
        let total: usize = row.iter().sum();
        if total == 0 {
            continue;
        }
        h_cluster_given += total as Real / n as Real * entropy(row, total);
    }

    let homogeneity = if h_class == 0.0 { 1.0 } else { 1.0 - h_class_given / h_class };
    let completeness =
        if h_cluster == 0.0 { 1.0 } else { 1.0 - h_cluster_given / h_cluster };
    if homogeneity + completeness == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * homogeneity * completeness / (homogeneity + completeness))
}

/// K=2 clustering of user vectors scored against a private attribute,
/// the representation-leakage probe.
pub fn kmeans_vmeasure(
    points: &Tensor,
    labels: &[u32],
    k: usize,
    seed: u64,
) -> Result<(Vec<usize>, Real)> {
    let assignment = kmeans(points, k, seed)?;
    let v = v_measure(&assignment, labels)?;
    Ok((assignment, v))
}
