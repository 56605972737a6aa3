//! Graph convolution with positive and negative aggregation.
//!
//! Both aggregations use the self-loop-inclusive degree `d̃(i) = deg(i) + 1`:
//!
//! ```text
//! x_i' = Σ_{j ∈ N(i) ∪ {i}} Θ x_j / √(d̃(i) d̃(j))  −  ω Σ_{j ∈ N̄(i)} Θ x_j / √(d̃(i) d̃(j))
//! ```

use crate::graph::Graph;
use crate::linalg::Matrix;
use crate::negsamp::NegativeSampleTable;

/// Sparse row-weighted aggregation `out_i = Σ_j w_ij · h_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregation {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Aggregation {
    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// `A · h`.
    pub fn apply(&self, h: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.rows.len(), h.cols());
        for (i, row) in self.rows.iter().enumerate() {
            let o = out.row_mut(i);
            for &(j, w) in row {
                for (ov, hv) in o.iter_mut().zip(h.row(j)) {
                    *ov += w * hv;
                }
            }
        }
        out
    }

    /// `Aᵀ · g`.
    pub fn apply_transpose(&self, g: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(g.rows(), g.cols());
        for (i, row) in self.rows.iter().enumerate() {
            let gi = g.row(i);
            for &(j, w) in row {
                for (ov, gv) in out.row_mut(j).iter_mut().zip(gi) {
                    *ov += w * gv;
                }
            }
        }
        out
    }

    /// Dense copy, for testing against matrix formulas.
    pub fn to_dense(&self) -> Matrix {
        let n = self.rows.len();
        let mut m = Matrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                m[(i, j)] += w;
            }
        }
        m
    }
}

/// `1 / √(deg(i) + 1)` for every node.
pub fn inv_sqrt_degrees(g: &Graph) -> Vec<f64> {
    (0..g.n())
        .map(|i| 1.0 / ((g.degree(i) + 1) as f64).sqrt())
        .collect()
}

/// Normalised `Ã = A + I` aggregation.
pub fn positive_aggregation(g: &Graph) -> Aggregation {
    let s = inv_sqrt_degrees(g);
    let rows = (0..g.n())
        .map(|i| {
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(g.degree(i) + 1);
            row.push((i, s[i] * s[i]));
            row.extend(g.neighbors(i).iter().map(|&j| (j, s[i] * s[j])));
            row.sort_by_key(|&(j, _)| j);
            row
        })
        .collect();
    Aggregation { rows }
}

/// Aggregation over each node's negatives, normalised like the positive term.
pub fn negative_aggregation(g: &Graph, table: &NegativeSampleTable) -> Aggregation {
    let s = inv_sqrt_degrees(g);
    let rows = (0..g.n())
        .map(|i| {
            if i >= table.n() {
                return Vec::new();
            }
            table.get(i).iter().map(|&j| (j, s[i] * s[j])).collect()
        })
        .collect();
    Aggregation { rows }
}

/// Plain graph convolution `D̃^{-1/2} Ã D̃^{-1/2} X Θ`.
pub fn gcn_layer(x: &Matrix, g: &Graph, theta: &Matrix) -> Matrix {
    positive_aggregation(g).apply(&x.matmul(theta))
}

/// Convolution with the negative term subtracted. With `ω = 0` or an empty
/// table this takes exactly the [`gcn_layer`] path.
pub fn sdgcn_layer(
    x: &Matrix,
    g: &Graph,
    theta: &Matrix,
    omega: f64,
    negs: &NegativeSampleTable,
) -> Matrix {
    let h = x.matmul(theta);
    let mut out = positive_aggregation(g).apply(&h);
    if omega != 0.0 && !negs.is_empty() {
        let neg = negative_aggregation(g, negs).apply(&h);
        for (o, v) in out.as_mut_slice().iter_mut().zip(neg.as_slice()) {
            *o -= omega * v;
        }
    }
    out
}
