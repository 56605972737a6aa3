//! Classification accuracy and mean average (cosine) distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Fraction of masked nodes whose argmax prediction equals the label.
pub fn accuracy(logits: &Matrix, labels: &[usize], mask: &[bool]) -> Result<f64> {
    if logits.rows() != labels.len() || labels.len() != mask.len() {
        return Err(Error::Dimension(format!(
            "{} logit rows, {} labels, {} mask entries",
            logits.rows(),
            labels.len(),
            mask.len()
        )));
    }
    let mut total = 0usize;
    let mut correct = 0usize;
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        total += 1;
        if argmax(logits.row(i)) == labels[i] {
            correct += 1;
        }
    }
    if total == 0 {
        return Err(Error::InvalidArgument("accuracy over an empty mask".into()));
    }
    Ok(correct as f64 / total as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mad {
    pub value: f64,
    /// Some row had zero norm; its distances were taken as 1.
    pub degenerate: bool,
}

/// Mean average distance over all ordered node pairs.
///
/// `D_ij = 1 − cos(x_i, x_j)`, `D_i` is the mean of the non-zero `D_ij`
/// and the result is the mean of the non-zero `D_i`. Both means are 0 when
/// there is nothing to average.
pub fn mad(x: &Matrix) -> Result<Mad> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("MAD needs at least two rows, got {n}")));
    }
    let norms: Vec<f64> = (0..n).map(|i| linalg::norm(x.row(i))).collect();
    let degenerate = norms.contains(&0.0);
    let mut sum_rows = 0.0;
    let mut nonzero_rows = 0usize;
    for i in 0..n {
        let mut sum = 0.0;
        let mut count = 0usize;
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = if norms[i] == 0.0 || norms[j] == 0.0 {
                1.0
            } else if x.row(i) == x.row(j) {
                // identical rows are at distance exactly zero
                0.0
            } else {
                let c = linalg::dot(x.row(i), x.row(j)) / (norms[i] * norms[j]);
                1.0 - c.clamp(-1.0, 1.0)
            };
            if d != 0.0 {
                sum += d;
                count += 1;
            }
        }
        if count > 0 {
            let di = sum / count as f64;
            if di != 0.0 {
                sum_rows += di;
                nonzero_rows += 1;
            }
        }
    }
    let value = if nonzero_rows == 0 {
        0.0
    } else {
        sum_rows / nonzero_rows as f64
    };
    Ok(Mad { value, degenerate })
}

/// Per-split accuracies and representation smoothness for one evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub mad: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_cases() {
        let logits = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 1.0], vec![0.5, 0.5]])
            .unwrap();
        let all = vec![true; 4];
        assert_eq!(accuracy(&logits, &[0, 1, 0, 0], &all).unwrap(), 1.0);
        assert_eq!(accuracy(&logits, &[0, 1, 1, 1], &all).unwrap(), 0.5);
        assert!(accuracy(&logits, &[0, 1, 1, 1], &[false; 4]).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }

    #[test]
    fn identical_rows_have_zero_mad() {
        let x = Matrix::from_fn(5, 3, |_, c| 0.3 + c as f64 * 0.17);
        assert_eq!(mad(&x).unwrap().value, 0.0);
    }

    #[test]
    fn orthogonal_pair_has_unit_mad() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(mad(&x).unwrap().value, 1.0);
    }

    #[test]
    fn zero_row_is_flagged() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let m = mad(&x).unwrap();
        assert!(m.degenerate);
        // row 0: distances 1, 1; rows 1 and 2: one distance of 1 each (the
        // other is 0 and excluded)
        assert_eq!(m.value, 1.0);
    }

    #[test]
    fn single_row_is_an_error() {
        assert!(mad(&Matrix::zeros(1, 3)).is_err());
    }
}
