use std::collections::BTreeMap;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::dataset::{Column, Dataset, Row};
use super::{MlError, Result};

pub const DEFAULT_MIN_BUCKET: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Rule {
    /// `value < thresholds[i]` selects `classes[i]` for the first such i;
    /// values at or above the last threshold get the last class.
    Numeric { thresholds: Vec<f64>, classes: Vec<String> },
    Nominal { map: BTreeMap<String, String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RuleModel {
    pub target: String,
    pub attribute: String,
    pub rule: Rule,
    /// Used for categories not seen in training.
    pub default_class: String,
    pub training_errors: usize,
    pub training_rows: usize,
}

fn argmax_first(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Interval rule for one numeric attribute: scan in value order, close a
/// bucket once its majority class has `min_bucket` rows and the next row
/// has a different class, then merge neighbours predicting the same class.
fn numeric_rule(values: &[f64], classes: &[usize], k: usize, min_bucket: usize) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let n = order.len();
    let mut breaks = Vec::new();
    let mut labels = Vec::new();
    let mut it = 0;
    while it < n {
        let mut counts = vec![0usize; k];
        let mut major;
        loop {
            loop {
                counts[classes[order[it]]] += 1;
                it += 1;
                if it >= n || values[order[it]] != values[order[it - 1]] {
                    break;
                }
            }
            major = argmax_first(&counts);
            if it >= n || counts[major] >= min_bucket {
                break;
            }
        }
        while it < n && classes[order[it]] == major {
            counts[major] += 1;
            it += 1;
        }
        labels.push(major);
        if it < n {
            breaks.push((values[order[it - 1]] + values[order[it]]) / 2.0);
        }
    }
    let mut thresholds = Vec::new();
    let mut merged = vec![labels[0]];
    for (i, &c) in labels.iter().enumerate().skip(1) {
        if c == *merged.last().expect("non-empty") {
            continue;
        }
        thresholds.push(breaks[i - 1]);
        merged.push(c);
    }
    (thresholds, merged)
}

fn numeric_class(thresholds: &[f64], v: f64) -> usize {
    thresholds.iter().position(|&t| v < t).unwrap_or(thresholds.len())
}

/// Best single-attribute rule for each attribute, with its training error.
pub fn candidate_rules(ds: &Dataset, min_bucket: usize) -> Result<Vec<RuleModel>> {
    if min_bucket == 0 {
        return Err(MlError::InvalidParameter("min_bucket must be at least 1".into()));
    }
    if ds.is_empty() {
        return Err(MlError::Empty);
    }
    let (labels, classes) = ds.classes()?;
    let k = labels.len();
    let mut totals = vec![0usize; k];
    for &c in &classes {
        totals[c] += 1;
    }
    let default_class = labels[argmax_first(&totals)].clone();
    let mut out = Vec::new();
    for col in ds.attributes() {
        let (rule, predicted): (Rule, Vec<usize>) = match col {
            Column::Numeric { values, .. } => {
                let (thresholds, cls) = numeric_rule(values, &classes, k, min_bucket);
                let predicted = values.iter().map(|&v| cls[numeric_class(&thresholds, v)]).collect();
                (Rule::Numeric { thresholds, classes: cls.iter().map(|&c| labels[c].clone()).collect() }, predicted)
            }
            Column::Nominal { values, .. } => {
                let mut per: BTreeMap<&String, Vec<usize>> = BTreeMap::new();
                for (v, &c) in values.iter().zip(&classes) {
                    per.entry(v).or_insert_with(|| vec![0; k])[c] += 1;
                }
                let choice: BTreeMap<&String, usize> = per.iter().map(|(v, counts)| (*v, argmax_first(counts))).collect();
                let predicted = values.iter().map(|v| choice[v]).collect();
                let map = choice.iter().map(|(v, &c)| ((*v).clone(), labels[c].clone())).collect();
                (Rule::Nominal { map }, predicted)
            }
        };
        let errors = predicted.iter().zip(&classes).filter(|(p, c)| p != c).count();
        out.push(RuleModel {
            target: ds.target.clone(),
            attribute: col.name().to_string(),
            rule,
            default_class: default_class.clone(),
            training_errors: errors,
            training_rows: ds.len(),
        });
    }
    Ok(out)
}

/// The attribute rule with the fewest training errors; ties go to the
/// earlier column.
pub fn train_oner(ds: &Dataset, min_bucket: usize) -> Result<RuleModel> {
    let rules = candidate_rules(ds, min_bucket)?;
    let mut best: Option<RuleModel> = None;
    for r in rules {
        if best.as_ref().is_none_or(|b| r.training_errors < b.training_errors) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| MlError::InvalidDataset("no attributes besides the target".into()))
}

impl RuleModel {
    pub fn predict(&self, row: &Row) -> Result<String> {
        let cell = row.get(&self.attribute).ok_or_else(|| MlError::MissingAttribute(self.attribute.clone()))?;
        Ok(match &self.rule {
            Rule::Numeric { thresholds, classes } => {
                let v = cell.as_num().ok_or_else(|| MlError::BadValue(self.attribute.clone()))?;
                classes[numeric_class(thresholds, v)].clone()
            }
            Rule::Nominal { map } => map.get(&cell.as_text()).unwrap_or(&self.default_class).clone(),
        })
    }

    pub fn render(&self) -> String {
        let mut s = format!("{}:\n", self.attribute);
        match &self.rule {
            Rule::Numeric { thresholds, classes } => {
                for (t, c) in thresholds.iter().zip(classes) {
                    s.push_str(&format!("  < {t} : {c}\n"));
                }
                match thresholds.last() {
                    Some(t) => s.push_str(&format!("  >= {t} : {}\n", classes[classes.len() - 1])),
                    None => s.push_str(&format!("  * : {}\n", classes[0])),
                }
            }
            Rule::Nominal { map } => {
                for (v, c) in map {
                    s.push_str(&format!("  {v} : {c}\n"));
                }
                s.push_str(&format!("  * : {}\n", self.default_class));
            }
        }
        s
    }
}
