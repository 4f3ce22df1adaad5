//! Entropy, information gain ratio and equal-width discretization.

use super::dataset::{Column, Dataset};
use super::{MlError, Result};

/// Base-2 entropy of a (possibly weighted) class histogram.
pub fn entropy(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Score {
    pub gain: f64,
    pub split_info: f64,
}

impl Score {
    pub fn ratio(&self) -> f64 {
        if self.split_info <= 0.0 {
            0.0
        } else {
            (self.gain / self.split_info).clamp(0.0, 1.0)
        }
    }
}

/// Gain and split information of partitioning `parent` into `parts`.
pub(crate) fn score(parent: &[f64], parts: &[Vec<f64>]) -> Score {
    let total: f64 = parent.iter().sum();
    let sizes: Vec<f64> = parts.iter().map(|p| p.iter().sum()).collect();
    let remainder: f64 = parts.iter().zip(&sizes).map(|(p, &s)| s / total * entropy(p)).sum();
    Score { gain: (entropy(parent) - remainder).max(0.0), split_info: entropy(&sizes) }
}

/// Ties closer than this are treated as equal so the earlier candidate wins.
pub(crate) const TIE: f64 = 1e-12;

/// Best `value <= t` split of `rows` by information gain. Thresholds are
/// observed values; both sides must hold at least `min_side` rows.
pub(crate) fn best_threshold(
    values: &[f64],
    classes: &[usize],
    weights: &[f64],
    rows: &[usize],
    n_classes: usize,
    min_side: usize,
) -> Option<(f64, Score)> {
    let mut sorted: Vec<usize> = rows.to_vec();
    sorted.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut parent = vec![0.0; n_classes];
    for &r in rows {
        parent[classes[r]] += weights[r];
    }
    let mut left = vec![0.0; n_classes];
    let mut best: Option<(f64, Score)> = None;
    for (pos, &r) in sorted.iter().enumerate() {
        left[classes[r]] += weights[r];
        let Some(&next) = sorted.get(pos + 1) else { break };
        if values[next] == values[r] {
            continue;
        }
        let (nl, nr) = (pos + 1, sorted.len() - pos - 1);
        if nl < min_side || nr < min_side {
            continue;
        }
        let right: Vec<f64> = parent.iter().zip(&left).map(|(p, l)| p - l).collect();
        let s = score(&parent, &[left.clone(), right]);
        if best.is_none_or(|(_, b)| s.gain > b.gain + TIE) {
            best = Some((values[r], s));
        }
    }
    best
}

fn class_histogram(classes: &[usize], n_classes: usize) -> Vec<f64> {
    let mut h = vec![0.0; n_classes];
    for &c in classes {
        h[c] += 1.0;
    }
    h
}

/// Information gain ratio of `attribute` with respect to the dataset's
/// nominal target. Nominal attributes split on every category; numeric ones
/// are scored at their best binary threshold. 0 when nothing splits.
pub fn gain_ratio(ds: &Dataset, attribute: &str) -> Result<f64> {
    if attribute == ds.target {
        return Err(MlError::AttributeIsTarget(attribute.to_string()));
    }
    let (labels, classes) = ds.classes()?;
    let k = labels.len();
    let parent = class_histogram(&classes, k);
    match ds.column(attribute)? {
        Column::Numeric { values, .. } => {
            let rows: Vec<usize> = (0..ds.len()).collect();
            let ones = vec![1.0; ds.len()];
            Ok(best_threshold(values, &classes, &ones, &rows, k, 1).map(|(_, s)| s.ratio()).unwrap_or(0.0))
        }
        Column::Nominal { categories, values, .. } => {
            let mut parts = vec![vec![0.0; k]; categories.len()];
            for (v, &c) in values.iter().zip(&classes) {
                let i = categories.iter().position(|x| x == v).expect("validated category");
                parts[i][c] += 1.0;
            }
            parts.retain(|p| p.iter().sum::<f64>() > 0.0);
            Ok(score(&parent, &parts).ratio())
        }
    }
}

/// Gain ratio of every non-target attribute, highest first (ties keep
/// column order).
pub fn rank_attributes(ds: &Dataset) -> Result<Vec<(String, f64)>> {
    let mut out = ds.attributes().map(|c| Ok((c.name().to_string(), gain_ratio(ds, c.name())?))).collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(out)
}

/// Class index of `v` among `k` equal-width bins over `[min, max]`.
pub fn bin_index(v: f64, min: f64, max: f64, k: usize) -> usize {
    let i = (k as f64 * (v - min) / (max - min)).floor();
    if i < 0.0 {
        0
    } else {
        (i as usize).min(k - 1)
    }
}

/// `A`, `B`, ..., `Z`, `AA`, `AB`, ...
pub fn class_label(mut i: usize) -> String {
    let mut s = Vec::new();
    loop {
        s.push(b'A' + (i % 26) as u8);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    s.reverse();
    String::from_utf8(s).expect("ascii")
}

/// Replace a numeric column by `k` equal-width classes labelled A, B, ...
/// (lowest values first; the maximum falls in the last class).
pub fn discretize_equal_width(ds: &Dataset, column: &str, k: usize) -> Result<Dataset> {
    if k < 2 {
        return Err(MlError::InvalidParameter(format!("k must be at least 2, got {k}")));
    }
    let values = match ds.column(column)? {
        Column::Numeric { values, .. } => values,
        Column::Nominal { .. } => return Err(MlError::InvalidParameter(format!("column `{column}` is not numeric"))),
    };
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(MlError::ZeroWidth(column.to_string()));
    }
    let categories: Vec<String> = (0..k).map(class_label).collect();
    let labels: Vec<String> = values.iter().map(|&v| categories[bin_index(v, min, max, k)].clone()).collect();
    let columns = ds
        .columns
        .iter()
        .map(|c| {
            if c.name() == column {
                Column::Nominal { name: column.to_string(), categories: categories.clone(), values: labels.clone() }
            } else {
                c.clone()
            }
        })
        .collect();
    Dataset::new(columns, &ds.target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(class_label(0), "A");
        assert_eq!(class_label(4), "E");
        assert_eq!(class_label(25), "Z");
        assert_eq!(class_label(26), "AA");
        assert_eq!(class_label(27), "AB");
    }

    #[test]
    fn entropy_basics() {
        assert_eq!(entropy(&[4.0, 4.0]), 1.0);
        assert_eq!(entropy(&[3.0, 0.0]), 0.0);
        assert_eq!(entropy(&[]), 0.0);
        assert!((entropy(&[1.0, 1.0, 1.0, 1.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn threshold_respects_min_side() {
        let values = [1.0, 2.0, 3.0, 4.0];
        let classes = [0, 1, 1, 1];
        let w = [1.0; 4];
        let rows = [0, 1, 2, 3];
        assert_eq!(best_threshold(&values, &classes, &w, &rows, 2, 1).unwrap().0, 1.0);
        assert_eq!(best_threshold(&values, &classes, &w, &rows, 2, 2).unwrap().0, 2.0);
        assert!(best_threshold(&values, &classes, &w, &rows, 2, 3).is_none());
    }
}
