use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Row};
use super::linear::{train_linear_regression, LinearModel};
use super::oner::{train_oner, RuleModel, DEFAULT_MIN_BUCKET};
use super::tree::{train_tree, TreeModel, DEFAULT_MIN_LEAF};
use super::{MlError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Linear(LinearModel),
    Rule(RuleModel),
    Tree(TreeModel),
}

fn default_min_bucket() -> usize {
    DEFAULT_MIN_BUCKET
}

fn default_min_leaf() -> usize {
    DEFAULT_MIN_LEAF
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum ModelSpec {
    Linear,
    Oner {
        #[serde(default = "default_min_bucket")]
        min_bucket: usize,
    },
    Tree {
        #[serde(default = "default_min_leaf")]
        min_leaf: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cost_matrix: Option<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum Prediction {
    Value(f64),
    Class(String),
}

pub fn train(ds: &Dataset, spec: &ModelSpec) -> Result<Model> {
    Ok(match spec {
        ModelSpec::Linear => Model::Linear(train_linear_regression(ds)?),
        ModelSpec::Oner { min_bucket } => Model::Rule(train_oner(ds, *min_bucket)?),
        ModelSpec::Tree { min_leaf, cost_matrix } => Model::Tree(train_tree(ds, *min_leaf, cost_matrix.as_deref())?),
    })
}

impl Model {
    pub fn predict(&self, row: &Row) -> Result<Prediction> {
        Ok(match self {
            Model::Linear(m) => Prediction::Value(m.predict(row)?),
            Model::Rule(m) => Prediction::Class(m.predict(row)?),
            Model::Tree(m) => Prediction::Class(m.predict(row)?),
        })
    }

    pub fn render(&self) -> String {
        match self {
            Model::Linear(m) => m.render(),
            Model::Rule(m) => m.render(),
            Model::Tree(m) => m.render(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum Metrics {
    Regression {
        /// Pearson correlation of held-out predictions; null when either
        /// side has zero variance.
        correlation: Option<f64>,
        mean_absolute_error: f64,
        root_mean_squared_error: f64,
    },
    Classification {
        classes: Vec<String>,
        /// Percent of held-out rows classified correctly.
        accuracy: f64,
        correct: usize,
        /// `confusion[i][j]`: rows of class i predicted as class j.
        confusion: Vec<Vec<usize>>,
        supports: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EvalReport {
    pub model: ModelSpec,
    pub target: String,
    pub rows: usize,
    pub folds: usize,
    pub seed: u64,
    pub metrics: Metrics,
}

/// Fold of every row: a seeded shuffle cut into `k` contiguous runs whose
/// sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(MlError::InvalidParameter(format!("folds must be at least 2, got {k}")));
    }
    if k > n {
        return Err(MlError::NotEnoughRows { rows: n, needed: k });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        fold[row] = pos * k / n;
    }
    Ok(fold)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() != y.len() || x.is_empty() {
        return None;
    }
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn cross_validate(ds: &Dataset, spec: &ModelSpec, folds: usize, seed: u64) -> Result<EvalReport> {
    let fold = fold_assignment(ds.len(), folds, seed)?;
    let regression = matches!(spec, ModelSpec::Linear);
    let classes = if regression { Vec::new() } else { ds.classes()?.0 };
    if regression {
        ds.numeric_target()?;
    }
    let k = classes.len();
    let mut actual_v = Vec::with_capacity(ds.len());
    let mut predicted_v = Vec::with_capacity(ds.len());
    let mut confusion = vec![vec![0usize; k]; k];
    for f in 0..folds {
        let train_idx: Vec<usize> = (0..ds.len()).filter(|&i| fold[i] != f).collect();
        let model = train(&ds.subset(&train_idx), spec)?;
        for i in (0..ds.len()).filter(|&i| fold[i] == f) {
            let row = ds.row(i);
            match (model.predict(&row)?, &row[&ds.target]) {
                (Prediction::Value(p), actual) => {
                    predicted_v.push(p);
                    actual_v.push(actual.as_num().expect("numeric target"));
                }
                (Prediction::Class(p), actual) => {
                    let a = classes.iter().position(|c| *c == actual.as_text()).expect("known class");
                    let p = classes.iter().position(|c| *c == p).expect("model predicts known classes");
                    confusion[a][p] += 1;
                }
            }
        }
    }
    let metrics = if regression {
        let n = actual_v.len() as f64;
        let abs: f64 = actual_v.iter().zip(&predicted_v).map(|(a, p)| (a - p).abs()).sum();
        let sq: f64 = actual_v.iter().zip(&predicted_v).map(|(a, p)| (a - p).powi(2)).sum();
        Metrics::Regression {
            correlation: pearson(&predicted_v, &actual_v),
            mean_absolute_error: abs / n,
            root_mean_squared_error: (sq / n).sqrt(),
        }
    } else {
        let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
        let supports: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
        Metrics::Classification { classes, accuracy: 100.0 * correct as f64 / ds.len() as f64, correct, confusion, supports }
    };
    Ok(EvalReport { model: spec.clone(), target: ds.target.clone(), rows: ds.len(), folds, seed, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::Column;

    #[test]
    fn folds_are_balanced() {
        let f = fold_assignment(23, 10, 1).unwrap();
        let mut sizes = [0; 10];
        for x in f {
            sizes[x] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 2 || s == 3));
        assert!(fold_assignment(3, 4, 1).is_err());
        assert!(fold_assignment(3, 1, 1).is_err());
    }

    #[test]
    fn constant_class_is_perfect() {
        let ds = Dataset::new(vec![Column::numeric("x", (0..20).map(f64::from).collect()), Column::nominal("c", ["k"; 20])], "c").unwrap();
        for spec in [ModelSpec::Oner { min_bucket: 6 }, ModelSpec::Tree { min_leaf: 2, cost_matrix: None }] {
            let r = cross_validate(&ds, &spec, 10, 3).unwrap();
            assert!(matches!(r.metrics, Metrics::Classification { accuracy, .. } if accuracy == 100.0));
        }
    }

    #[test]
    fn model_kind_must_match_target() {
        let ds = Dataset::new(vec![Column::numeric("x", vec![1.0, 2.0, 3.0]), Column::nominal("c", ["a", "b", "a"])], "c").unwrap();
        assert!(matches!(cross_validate(&ds, &ModelSpec::Linear, 2, 0), Err(MlError::TargetKind { .. })));
    }
}
