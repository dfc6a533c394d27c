use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Area under the ROC curve: probability that a random positive scores above
/// a random negative, ties counted one half. Computed from average ranks.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!("roc_auc: {} scores vs {} labels", scores.len(), labels.len())));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::invalid(format!("roc_auc: labels must be 0 or 1, got {bad}")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("roc_auc: NaN score"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("roc_auc needs both positive and negative labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum of positives keeps tie averaging in integers.
    let mut rank2_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share (i + j + 2) / 2.
        let tied_pos = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        rank2_sum += tied_pos * (i + j + 2) as u128;
        i = j + 1;
    }
    let (p, n) = (pos as u128, neg as u128);
    // U = R - p(p+1)/2; AUC = U / (p n). Doubled throughout.
    let u2 = rank2_sum - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

/// Group scores by mean frame score, then [`roc_auc`] over groups.
pub fn video_auc(frame_scores: &[f64], group_ids: &[String], labels: &[u8]) -> Result<f64> {
    let (means, group_labels) = group_means(frame_scores, group_ids, labels)?;
    roc_auc(&means, &group_labels)
}

/// Per-group mean score and label, in group-id order.
pub fn group_means(frame_scores: &[f64], group_ids: &[String], labels: &[u8]) -> Result<(Vec<f64>, Vec<u8>)> {
    if frame_scores.len() != group_ids.len() || labels.len() != group_ids.len() {
        return Err(Error::invalid("video_auc: scores, groups and labels must have equal length"));
    }
    let mut groups: BTreeMap<&str, (f64, usize, u8)> = BTreeMap::new();
    for ((s, g), &l) in frame_scores.iter().zip(group_ids).zip(labels) {
        let e = groups.entry(g.as_str()).or_insert((0.0, 0, l));
        if e.2 != l {
            return Err(Error::invalid(format!("group {g} mixes labels")));
        }
        e.0 += s;
        e.1 += 1;
    }
    Ok(groups.values().map(|&(sum, n, l)| (sum / n as f64, l)).unzip())
}

/// Mean silhouette coefficient of a labelled point set (Euclidean distance).
/// Points in singleton clusters score 0.
pub fn silhouette(points: &[Vec<f64>], cluster: &[usize]) -> Result<f64> {
    if points.len() != cluster.len() || points.is_empty() {
        return Err(Error::invalid("silhouette: need one cluster id per point"));
    }
    let k = cluster.iter().max().map_or(0, |m| m + 1);
    let sizes: Vec<usize> = (0..k).map(|c| cluster.iter().filter(|&&x| x == c).count()).collect();
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::invalid("silhouette needs at least two non-empty clusters"));
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let own = cluster[i];
        if sizes[own] == 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for (j, q) in points.iter().enumerate() {
            if i != j {
                sums[cluster[j]] += dist(p, q);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / points.len() as f64)
}
