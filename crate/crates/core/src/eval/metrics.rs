//! Classification and clustering metrics on representation matrices.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::parallel;
use crate::tensor::Tensor;

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Fraction of `predicted` equal to `labels`.
pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

/// Area under the precision-recall curve by step integration over distinct
/// score thresholds: `Σ (R_t − R_{t−1}) · P_t`.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::shape("average_precision", &[scores.len()], &[positive.len()]));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return Err(Error::Data("average precision undefined without positives".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Macro average of per-class average precision over the classes present in
/// `labels`. `scores[i][c]` is the score of sample `i` for class `c`.
pub fn macro_auprc(scores: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let classes: Vec<usize> = {
        let mut c: Vec<usize> = labels.to_vec();
        c.sort_unstable();
        c.dedup();
        c
    };
    if classes.len() < 2 {
        return Err(Error::Data(
            "AUPRC undefined for a single-class test set".into(),
        ));
    }
    let mut total = 0.0;
    for &c in &classes {
        let s: Vec<f64> = scores
            .iter()
            .map(|row| row.get(c).copied().unwrap_or(f64::NEG_INFINITY))
            .collect();
        let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        total += average_precision(&s, &pos)?;
    }
    Ok(total / classes.len() as f64)
}

fn check_rows(reps: &Tensor, labels: &[usize], op: &'static str) -> Result<()> {
    if reps.rank() != 2 || reps.shape()[0] != labels.len() {
        return Err(Error::shape(op, reps.shape(), &[labels.len()]));
    }
    Ok(())
}

fn class_members(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        m.entry(l).or_default().push(i);
    }
    m
}

/// Mean silhouette coefficient with classes as clusters and the Euclidean
/// metric. Points in singleton classes, and points with `a = b = 0`, score 0.
pub fn silhouette(reps: &Tensor, labels: &[usize]) -> Result<f64> {
    check_rows(reps, labels, "silhouette")?;
    let members = class_members(labels);
    if members.len() < 2 {
        return Err(Error::Data("silhouette needs at least 2 classes".into()));
    }
    let class_ids: Vec<usize> = members.keys().copied().collect();
    let slot: BTreeMap<usize, usize> = class_ids.iter().enumerate().map(|(s, &c)| (c, s)).collect();
    let sizes: Vec<usize> = members.values().map(Vec::len).collect();
    let n = labels.len();

    let per_point = parallel::map_range(n, |i| {
        let mut sums = vec![0.0; class_ids.len()];
        for j in 0..n {
            if j != i {
                sums[slot[&labels[j]]] += euclidean(reps.row(i), reps.row(j));
            }
        }
        let own = slot[&labels[i]];
        if sizes[own] < 2 {
            return 0.0;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..class_ids.len())
            .filter(|&s| s != own)
            .map(|s| sums[s] / sizes[s] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom == 0.0 {
            0.0
        } else {
            (b - a) / denom
        }
    });
    Ok(per_point.iter().sum::<f64>() / n as f64)
}

/// Davies–Bouldin index with classes as clusters: mean over classes of
/// `max_{j≠i} (S_i + S_j) / d(c_i, c_j)` where `S` is the mean distance to
/// the class centroid.
pub fn davies_bouldin(reps: &Tensor, labels: &[usize]) -> Result<f64> {
    check_rows(reps, labels, "davies_bouldin")?;
    let members = class_members(labels);
    if members.len() < 2 {
        return Err(Error::Data("Davies-Bouldin index needs at least 2 classes".into()));
    }
    let d = reps.shape()[1];
    let groups: Vec<(usize, &Vec<usize>)> = members.iter().map(|(&c, m)| (c, m)).collect();
    let stats = parallel::map_slice(&groups, |(_, idx)| {
        let mut centroid = vec![0.0; d];
        for &i in idx.iter() {
            centroid.iter_mut().zip(reps.row(i)).for_each(|(c, v)| *c += v);
        }
        centroid.iter_mut().for_each(|c| *c /= idx.len() as f64);
        let scatter = idx.iter().map(|&i| euclidean(reps.row(i), &centroid)).sum::<f64>()
            / idx.len() as f64;
        (centroid, scatter)
    });
    let mut total = 0.0;
    for (i, (ci, si)) in stats.iter().enumerate() {
        let mut worst = f64::NEG_INFINITY;
        for (j, (cj, sj)) in stats.iter().enumerate() {
            if i == j {
                continue;
            }
            let sep = euclidean(ci, cj);
            if sep == 0.0 {
                return Err(Error::domain(
                    "davies_bouldin",
                    format!("classes {} and {} have coincident centroids", groups[i].0, groups[j].0),
                ));
            }
            worst = worst.max((si + sj) / sep);
        }
        total += worst;
    }
    Ok(total / stats.len() as f64)
}
