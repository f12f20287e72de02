use std::collections::BTreeMap;
use std::ops::Range;

use super::{Dataset, ModelError, ModelSpec};
use crate::linalg::Matrix;

/// Encoded design matrix with names for every column.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub matrix: Matrix,
    pub columns: Vec<String>,
    /// Column range of each model term, in spec order.
    pub term_columns: Vec<(String, Range<usize>)>,
    /// Sorted levels of every factor in the model.
    pub levels: BTreeMap<String, Vec<String>>,
    /// Level index of every row, per factor.
    pub row_levels: BTreeMap<String, Vec<usize>>,
}

/// Effects code of `level` among `n_levels`: one value per contrast column.
/// The last level is coded `-1` in every column.
pub(crate) fn effects_code(level: usize, n_levels: usize) -> Vec<f64> {
    (0..n_levels - 1)
        .map(|j| {
            if level == j {
                1.0
            } else if level == n_levels - 1 {
                -1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Intercept column first, then sum-to-zero contrasts per term;
/// interaction columns are products of main-effect columns.
pub fn encode_design(data: &Dataset, spec: &ModelSpec) -> Result<Design, ModelError> {
    let rows = data.len();
    let mut levels = BTreeMap::new();
    let mut row_levels = BTreeMap::new();
    for term in spec.terms() {
        for f in term.factors() {
            if levels.contains_key(f) {
                continue;
            }
            let labels = data.factors.get(f).ok_or_else(|| ModelError::UnknownFactor(f.clone()))?;
            if labels.len() != rows {
                return Err(ModelError::RowMismatch { factor: f.clone(), rows, got: labels.len() });
            }
            let mut lv: Vec<String> = labels.clone();
            lv.sort();
            lv.dedup();
            if lv.len() < 2 {
                return Err(ModelError::SingleLevel(f.clone()));
            }
            let idx: Vec<usize> = labels.iter().map(|l| lv.binary_search(l).expect("level present")).collect();
            levels.insert(f.clone(), lv);
            row_levels.insert(f.clone(), idx);
        }
    }

    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; rows]];
    let mut names = vec!["(intercept)".to_string()];
    let mut term_columns = Vec::with_capacity(spec.terms().len());

    for term in spec.terms() {
        let start = columns.len();
        // (name, values) for the product of the term's factors' contrast columns
        let mut parts: Vec<(String, Vec<f64>)> = vec![(String::new(), vec![1.0; rows])];
        for f in term.factors() {
            let lv = &levels[f];
            let idx = &row_levels[f];
            let codes: Vec<Vec<f64>> = (0..lv.len()).map(|l| effects_code(l, lv.len())).collect();
            let mut next = Vec::with_capacity(parts.len() * (lv.len() - 1));
            for (name, values) in &parts {
                for (j, level_name) in lv.iter().enumerate().take(lv.len() - 1) {
                    let col: Vec<f64> = values.iter().zip(idx).map(|(v, &l)| v * codes[l][j]).collect();
                    let sep = if name.is_empty() { "" } else { ":" };
                    next.push((format!("{name}{sep}{f}[{level_name}]"), col));
                }
            }
            parts = next;
        }
        for (name, col) in parts {
            names.push(name);
            columns.push(col);
        }
        term_columns.push((term.to_string(), start..columns.len()));
    }

    Ok(Design { matrix: Matrix::from_columns(rows, &columns), columns: names, term_columns, levels, row_levels })
}
