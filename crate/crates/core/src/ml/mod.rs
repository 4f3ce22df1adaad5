//! Model induction over provenance-derived datasets.

mod dataset;
mod eval;
mod info;
mod linear;
mod oner;
mod tree;

pub use dataset::{build_dataset, Aggregate, Cell, Column, Dataset, DatasetSpec, FeatureSource, FeatureSpec, ResourceField, Row, RunMetric};
pub use eval::{cross_validate, fold_assignment, pearson, train, EvalReport, Metrics, Model, ModelSpec, Prediction};
pub use info::{bin_index, class_label, discretize_equal_width, entropy, gain_ratio, rank_attributes};
pub use linear::{train_linear_regression, Coefficient, LinearModel, RIDGE_EPSILON};
pub use oner::{candidate_rules, train_oner, Rule, RuleModel, DEFAULT_MIN_BUCKET};
pub use tree::{train_tree, SplitTest, TreeModel, TreeNode, DEFAULT_MIN_LEAF};

use crate::store::StoreError;

#[derive(Debug, thiserror::Error)]
pub enum MlError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("target `{target}` must be {expected}")]
    TargetKind { target: String, expected: &'static str },
    #[error("run {run}: no value for feature `{feature}`")]
    MissingValue { run: String, feature: String },
    #[error("attribute `{0}` is the target")]
    AttributeIsTarget(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("column `{0}` is constant; equal-width bins need max > min")]
    ZeroWidth(String),
    #[error("normal equations are singular even with the ridge term")]
    Degenerate,
    #[error("dataset has no rows")]
    Empty,
    #[error("{rows} rows; at least {needed} needed")]
    NotEnoughRows { rows: usize, needed: usize },
    #[error("row has no value for attribute `{0}`")]
    MissingAttribute(String),
    #[error("attribute `{0}` needs a numeric value")]
    BadValue(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<rusqlite::Error> for MlError {
    fn from(e: rusqlite::Error) -> Self {
        MlError::Store(StoreError::Sql(e))
    }
}

pub type Result<T> = std::result::Result<T, MlError>;
