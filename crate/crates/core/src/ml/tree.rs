use std::collections::BTreeMap;
use std::fmt::Write as _;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::dataset::{Column, Dataset, Row};
use super::info::{best_threshold, score, Score, TIE};
use super::{MlError, Result};

pub const DEFAULT_MIN_LEAF: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum SplitTest {
    LessEq { threshold: f64 },
    Equals { category: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        class: String,
        /// Training rows per class reaching this leaf, in class order.
        counts: Vec<usize>,
    },
    Split {
        attribute: String,
        test: SplitTest,
        gain_ratio: f64,
        /// Branch taken by nominal values never seen in training.
        unseen_to_yes: bool,
        yes: Box<TreeNode>,
        no: Box<TreeNode>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TreeModel {
    pub target: String,
    pub classes: Vec<String>,
    pub min_leaf: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_matrix: Option<Vec<Vec<f64>>>,
    /// Training category sets of nominal attributes.
    pub categories: BTreeMap<String, Vec<String>>,
    pub root: TreeNode,
}

/// Per-row weights from a cost matrix: each class is weighted by its row
/// sum of misclassification costs, scaled so the weights sum to n.
fn class_weights(cost: &[Vec<f64>], classes: &[usize], k: usize) -> Result<Vec<f64>> {
    if cost.len() != k || cost.iter().any(|r| r.len() != k) {
        return Err(MlError::InvalidParameter(format!("cost matrix must be {k}x{k}")));
    }
    if cost.iter().flatten().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(MlError::InvalidParameter("cost matrix entries must be finite and non-negative".into()));
    }
    let per_class: Vec<f64> = cost.iter().map(|r| r.iter().sum()).collect();
    let total: f64 = classes.iter().map(|&c| per_class[c]).sum();
    if total <= 0.0 {
        return Err(MlError::InvalidParameter("cost matrix gives every training row zero weight".into()));
    }
    let scale = classes.len() as f64 / total;
    Ok(classes.iter().map(|&c| per_class[c] * scale).collect())
}

struct Builder<'a> {
    ds: &'a Dataset,
    labels: Vec<String>,
    classes: Vec<usize>,
    weights: Vec<f64>,
    min_leaf: usize,
}

struct Candidate {
    attribute: usize,
    test: SplitTest,
    score: Score,
    yes: Vec<usize>,
    no: Vec<usize>,
}

impl Builder<'_> {
    fn histogram(&self, rows: &[usize]) -> Vec<f64> {
        let mut h = vec![0.0; self.labels.len()];
        for &r in rows {
            h[self.classes[r]] += self.weights[r];
        }
        h
    }

    fn leaf(&self, rows: &[usize]) -> TreeNode {
        let h = self.histogram(rows);
        let mut best = 0;
        for (i, &w) in h.iter().enumerate() {
            if w > h[best] + TIE {
                best = i;
            }
        }
        let mut counts = vec![0; self.labels.len()];
        for &r in rows {
            counts[self.classes[r]] += 1;
        }
        TreeNode::Leaf { class: self.labels[best].clone(), counts }
    }

    /// Best split of one attribute: threshold or category chosen by gain.
    fn candidate(&self, attribute: usize, rows: &[usize]) -> Option<Candidate> {
        let k = self.labels.len();
        match &self.ds.columns[attribute] {
            Column::Numeric { values, .. } => {
                let (t, score) = best_threshold(values, &self.classes, &self.weights, rows, k, self.min_leaf)?;
                let (yes, no) = rows.iter().partition(|&&r| values[r] <= t);
                Some(Candidate { attribute, test: SplitTest::LessEq { threshold: t }, score, yes, no })
            }
            Column::Nominal { categories, values, .. } => {
                let parent = self.histogram(rows);
                let mut best: Option<(usize, Score)> = None;
                for (ci, cat) in categories.iter().enumerate() {
                    let (yes, no): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| &values[r] == cat);
                    if yes.len() < self.min_leaf || no.len() < self.min_leaf {
                        continue;
                    }
                    let s = score(&parent, &[self.histogram(&yes), self.histogram(&no)]);
                    if best.is_none_or(|(_, b)| s.gain > b.gain + TIE) {
                        best = Some((ci, s));
                    }
                }
                let (ci, score) = best?;
                let (yes, no) = rows.iter().partition(|&&r| values[r] == categories[ci]);
                Some(Candidate { attribute, test: SplitTest::Equals { category: categories[ci].clone() }, score, yes, no })
            }
        }
    }

    fn grow(&self, rows: Vec<usize>) -> TreeNode {
        let first = self.classes[rows[0]];
        if rows.iter().all(|&r| self.classes[r] == first) {
            return self.leaf(&rows);
        }
        let mut best: Option<Candidate> = None;
        for (i, c) in self.ds.columns.iter().enumerate() {
            if c.name() == self.ds.target {
                continue;
            }
            if let Some(cand) = self.candidate(i, &rows) {
                if best.as_ref().is_none_or(|b| cand.score.ratio() > b.score.ratio() + TIE) {
                    best = Some(cand);
                }
            }
        }
        match best {
            Some(b) if b.score.gain > TIE && b.score.ratio() > 0.0 => {
                let wy: f64 = b.yes.iter().map(|&r| self.weights[r]).sum();
                let wn: f64 = b.no.iter().map(|&r| self.weights[r]).sum();
                TreeNode::Split {
                    attribute: self.ds.columns[b.attribute].name().to_string(),
                    test: b.test,
                    gain_ratio: b.score.ratio(),
                    unseen_to_yes: wy > wn,
                    yes: Box::new(self.grow(b.yes)),
                    no: Box::new(self.grow(b.no)),
                }
            }
            _ => self.leaf(&rows),
        }
    }
}

/// Top-down binary tree induction. Numeric attributes split on `<= t`,
/// nominal ones on equality with a single category. Thresholds and
/// categories are chosen by information gain, attributes by gain ratio.
pub fn train_tree(ds: &Dataset, min_leaf: usize, cost_matrix: Option<&[Vec<f64>]>) -> Result<TreeModel> {
    if min_leaf == 0 {
        return Err(MlError::InvalidParameter("min_leaf must be at least 1".into()));
    }
    if ds.is_empty() {
        return Err(MlError::Empty);
    }
    let (labels, classes) = ds.classes()?;
    let weights = match cost_matrix {
        Some(c) => class_weights(c, &classes, labels.len())?,
        None => vec![1.0; classes.len()],
    };
    let categories = ds
        .attributes()
        .filter_map(|c| match c {
            Column::Nominal { name, categories, .. } => Some((name.clone(), categories.clone())),
            Column::Numeric { .. } => None,
        })
        .collect();
    let builder = Builder { ds, labels, classes, weights, min_leaf };
    let root = builder.grow((0..ds.len()).collect());
    Ok(TreeModel {
        target: ds.target.clone(),
        classes: builder.labels,
        min_leaf,
        cost_matrix: cost_matrix.map(<[Vec<f64>]>::to_vec),
        categories,
        root,
    })
}

impl TreeNode {
    pub fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { yes, no, .. } => 1 + yes.node_count() + no.node_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { yes, no, .. } => 1 + yes.depth().max(no.depth()),
        }
    }

    pub fn leaves(&self) -> Vec<&TreeNode> {
        match self {
            TreeNode::Leaf { .. } => vec![self],
            TreeNode::Split { yes, no, .. } => {
                let mut v = yes.leaves();
                v.extend(no.leaves());
                v
            }
        }
    }
}

impl TreeModel {
    pub fn predict(&self, row: &Row) -> Result<String> {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { class, .. } => return Ok(class.clone()),
                TreeNode::Split { attribute, test, unseen_to_yes, yes, no, .. } => {
                    let cell = row.get(attribute).ok_or_else(|| MlError::MissingAttribute(attribute.clone()))?;
                    let take_yes = match test {
                        SplitTest::LessEq { threshold } => {
                            cell.as_num().ok_or_else(|| MlError::BadValue(attribute.clone()))? <= *threshold
                        }
                        SplitTest::Equals { category } => {
                            let v = cell.as_text();
                            let known = self.categories.get(attribute).is_some_and(|c| c.contains(&v));
                            if known {
                                &v == category
                            } else {
                                *unseen_to_yes
                            }
                        }
                    };
                    node = if take_yes { yes } else { no };
                }
            }
        }
    }

    pub fn render(&self) -> String {
        fn walk(node: &TreeNode, depth: usize, out: &mut String) {
            let TreeNode::Split { attribute, test, yes, no, .. } = node else { return };
            let (y, n) = match test {
                SplitTest::LessEq { threshold } => (format!("{attribute} <= {threshold}"), format!("{attribute} > {threshold}")),
                SplitTest::Equals { category } => (format!("{attribute} = {category}"), format!("{attribute} != {category}")),
            };
            for (label, child) in [(y, yes), (n, no)] {
                out.push_str(&"|   ".repeat(depth));
                match child.as_ref() {
                    TreeNode::Leaf { class, counts } => {
                        let _ = writeln!(out, "{label}: {class} ({})", counts.iter().sum::<usize>());
                    }
                    TreeNode::Split { .. } => {
                        let _ = writeln!(out, "{label}");
                        walk(child, depth + 1, out);
                    }
                }
            }
        }
        let mut out = String::new();
        match &self.root {
            TreeNode::Leaf { class, counts } => {
                let _ = writeln!(out, ": {class} ({})", counts.iter().sum::<usize>());
            }
            root => walk(root, 0, &mut out),
        }
        out
    }
}
