use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::dataset::{Column, Dataset, Row};
use super::{MlError, Result};

pub const RIDGE_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Coefficient {
    pub attribute: String,
    /// Set for one-hot indicators of a nominal attribute.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LinearModel {
    pub target: String,
    pub intercept: f64,
    pub coefficients: Vec<Coefficient>,
    /// True when the normal equations were singular and the ridge term was used.
    pub ridge: bool,
}

/// Encoded design columns: numeric attributes as-is, nominal ones one-hot
/// over their full category set.
fn design(ds: &Dataset) -> Vec<(String, Option<String>, Vec<f64>)> {
    let mut out = Vec::new();
    for c in ds.attributes() {
        match c {
            Column::Numeric { name, values } => out.push((name.clone(), None, values.clone())),
            Column::Nominal { name, categories, values } => {
                for cat in categories {
                    let x = values.iter().map(|v| if v == cat { 1.0 } else { 0.0 }).collect();
                    out.push((name.clone(), Some(cat.clone()), x));
                }
            }
        }
    }
    out
}

/// In-place Cholesky factorization; `None` when a pivot is not clearly positive.
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let p = a.len();
    let scale = a.iter().enumerate().map(|(i, r)| r[i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut l = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if d <= 1e-10 * scale {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

fn solve_cholesky(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let p = b.len();
    let mut z = vec![0.0; p];
    for i in 0..p {
        z[i] = (b[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        x[i] = (z[i] - (i + 1..p).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

/// Ordinary least squares on standardized features via the normal
/// equations, retrying with a small ridge term when they are singular.
pub fn train_linear_regression(ds: &Dataset) -> Result<LinearModel> {
    let y = ds.numeric_target()?;
    let cols = design(ds);
    let (n, p) = (y.len(), cols.len());
    if n < p + 1 {
        return Err(MlError::NotEnoughRows { rows: n, needed: p + 1 });
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let stats: Vec<(f64, f64)> = cols
        .iter()
        .map(|(_, _, x)| {
            let m = x.iter().sum::<f64>() / n as f64;
            let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            (m, if sd > 0.0 { sd } else { 1.0 })
        })
        .collect();
    let z: Vec<Vec<f64>> = cols.iter().zip(&stats).map(|((_, _, x), (m, sd))| x.iter().map(|v| (v - m) / sd).collect()).collect();
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();

    let mut a = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..=i {
            let d: f64 = z[i].iter().zip(&z[j]).map(|(u, v)| u * v).sum();
            a[i][j] = d;
            a[j][i] = d;
        }
    }
    let b: Vec<f64> = z.iter().map(|zi| zi.iter().zip(&yc).map(|(u, v)| u * v).sum()).collect();

    let (beta, ridge) = if p == 0 {
        (Vec::new(), false)
    } else if let Some(l) = cholesky(&a) {
        (solve_cholesky(&l, &b), false)
    } else {
        let lambda = RIDGE_EPSILON * a.iter().enumerate().map(|(i, r)| r[i]).fold(1.0, f64::max);
        let mut ar = a.clone();
        for (i, row) in ar.iter_mut().enumerate() {
            row[i] += lambda;
        }
        let l = cholesky(&ar).ok_or(MlError::Degenerate)?;
        (solve_cholesky(&l, &b), true)
    };

    let mut intercept = y_mean;
    let mut coefficients = Vec::with_capacity(p);
    for (((attribute, category, _), (m, sd)), beta) in cols.into_iter().zip(&stats).zip(beta) {
        let weight = beta / sd;
        intercept -= weight * m;
        coefficients.push(Coefficient { attribute, category, weight });
    }
    Ok(LinearModel { target: ds.target.clone(), intercept, coefficients, ridge })
}

impl LinearModel {
    /// Unseen categories contribute nothing; numeric attributes are required.
    pub fn predict(&self, row: &Row) -> Result<f64> {
        let mut y = self.intercept;
        for c in &self.coefficients {
            let cell = row.get(&c.attribute).ok_or_else(|| MlError::MissingAttribute(c.attribute.clone()))?;
            y += match &c.category {
                None => c.weight * cell.as_num().ok_or_else(|| MlError::BadValue(c.attribute.clone()))?,
                Some(cat) if &cell.as_text() == cat => c.weight,
                Some(_) => 0.0,
            };
        }
        Ok(y)
    }

    pub fn render(&self) -> String {
        let mut s = format!("{} =\n", self.target);
        for c in &self.coefficients {
            let term = match &c.category {
                Some(cat) => format!("[{} = {}]", c.attribute, cat),
                None => c.attribute.clone(),
            };
            s.push_str(&format!("  {:>14.4} * {}\n", c.weight, term));
        }
        s.push_str(&format!("  {:>14.4}\n", self.intercept));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::dataset::Cell;

    #[test]
    fn exact_line() {
        let ds = Dataset::new(vec![Column::numeric("x", vec![0.0, 1.0, 2.0]), Column::numeric("y", vec![1.0, 3.0, 5.0])], "y").unwrap();
        let m = train_linear_regression(&ds).unwrap();
        assert!((m.intercept - 1.0).abs() <= 1e-9 && (m.coefficients[0].weight - 2.0).abs() <= 1e-9);
        assert!(!m.ridge);
        let row = [("x".to_string(), Cell::Num(4.0))].into_iter().collect();
        assert!((m.predict(&row).unwrap() - 9.0).abs() <= 1e-9);
    }

    #[test]
    fn constant_target_and_one_hot() {
        let ds = Dataset::new(
            vec![
                Column::numeric("x", vec![0.0, 1.0, 2.0, 3.0, 4.0]),
                Column::nominal("c", ["a", "b", "a", "b", "c"]),
                Column::numeric("y", vec![7.0; 5]),
            ],
            "y",
        )
        .unwrap();
        let m = train_linear_regression(&ds).unwrap();
        assert!(m.ridge);
        assert!(m.coefficients.iter().all(|c| c.weight.abs() < 1e-9));
        assert!((m.intercept - 7.0).abs() < 1e-9);
        let unseen = [("x".to_string(), Cell::Num(1.0)), ("c".to_string(), Cell::Text("zzz".into()))].into_iter().collect();
        assert!((m.predict(&unseen).unwrap() - 7.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_rows() {
        let ds = Dataset::new(vec![Column::numeric("x", vec![1.0]), Column::numeric("y", vec![1.0])], "y").unwrap();
        assert!(matches!(train_linear_regression(&ds), Err(MlError::NotEnoughRows { .. })));
    }
}
