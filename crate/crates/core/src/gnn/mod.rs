//! Graph convolutional networks with diverse negative samples.
//!
//! A [`Model`] is a stack of convolution layers, each with its own weight
//! matrix `Θ` and negative weight `ω`. Hidden layers are followed by ReLU;
//! the last layer's output are the class logits. There are no biases.
//!
//! Gradients are accumulated by hand in reverse layer order, treating the
//! negative-sample tables as constants.

mod adam;
mod layer;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use layer::{
    gcn_layer, inv_sqrt_degrees, negative_aggregation, positive_aggregation, sdgcn_layer,
    Aggregation,
};
pub use train::{evaluate, train, train_with_callback, EpochRecord, Resample, TrainConfig, TrainOutcome};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;
use crate::negsamp::NegativeSampleTable;

pub const DEFAULT_OMEGA: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// `d_in × d_out`.
    pub theta: Matrix,
    pub omega: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub layers: Vec<LayerParams>,
}

impl Model {
    /// Glorot-uniform weights; layer widths are `dims[0] → dims[1] → …`.
    pub fn glorot<R: Rng + ?Sized>(dims: &[usize], omega: f64, rng: &mut R) -> Result<Model> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument("a model needs at least one layer".into()));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                LayerParams {
                    theta: Matrix::from_fn(w[0], w[1], |_, _| rng.random_range(-limit..=limit)),
                    omega,
                }
            })
            .collect();
        Ok(Model { layers })
    }

    /// Layer widths for a classifier of the given depth.
    pub fn dims(input: usize, hidden: usize, classes: usize, depth: usize) -> Vec<usize> {
        let mut d = vec![input];
        d.extend(std::iter::repeat_n(hidden, depth.saturating_sub(1)));
        d.push(classes);
        d
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.omega).collect()
    }
}

/// Parameter-shaped gradient (or moment) buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub theta: Vec<Matrix>,
    pub omega: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Gradients {
            theta: model
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.theta.rows(), l.theta.cols()))
                .collect(),
            omega: vec![0.0; model.layers.len()],
        }
    }
}

/// Per-graph quantities shared by every forward pass.
#[derive(Clone, Debug)]
pub struct GraphOps {
    pub positive: Aggregation,
}

impl GraphOps {
    pub fn new(g: &Graph) -> Self {
        GraphOps {
            positive: positive_aggregation(g),
        }
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// Input of each layer (`inputs[0]` is the feature matrix).
    pub inputs: Vec<Matrix>,
    /// `X Θ` of each layer.
    pub transformed: Vec<Matrix>,
    /// Pre-activation output of each layer; the last one is the logits.
    pub outputs: Vec<Matrix>,
    /// Negative aggregation used at each layer, if any.
    pub negatives: Vec<Option<Aggregation>>,
    /// `N · XΘ` for layers with negatives.
    pub negative_terms: Vec<Option<Matrix>>,
}

impl Forward {
    pub fn logits(&self) -> &Matrix {
        self.outputs.last().expect("model has layers")
    }
}

fn relu(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for v in out.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Forward pass where the negative table for each layer is produced on
/// demand from that layer's input. `negatives_for(layer, input)` may return
/// `None` for a purely positive layer.
pub fn forward_with<F>(
    model: &Model,
    g: &Graph,
    ops: &GraphOps,
    features: &Matrix,
    mut negatives_for: F,
) -> Result<Forward>
where
    F: FnMut(usize, &Matrix) -> Result<Option<NegativeSampleTable>>,
{
    if model.layers.is_empty() {
        return Err(Error::InvalidArgument("model has no layers".into()));
    }
    if features.rows() != g.n() {
        return Err(Error::Dimension(format!(
            "{} feature rows for {} nodes",
            features.rows(),
            g.n()
        )));
    }
    let depth = model.depth();
    let mut fw = Forward {
        inputs: Vec::with_capacity(depth),
        transformed: Vec::with_capacity(depth),
        outputs: Vec::with_capacity(depth),
        negatives: Vec::with_capacity(depth),
        negative_terms: Vec::with_capacity(depth),
    };
    let mut x = features.clone();
    for (l, layer) in model.layers.iter().enumerate() {
        if x.cols() != layer.theta.rows() {
            return Err(Error::Dimension(format!(
                "layer {l} expects width {}, got {}",
                layer.theta.rows(),
                x.cols()
            )));
        }
        let table = negatives_for(l, &x)?;
        let h = x.matmul(&layer.theta);
        let mut z = ops.positive.apply(&h);
        let mut neg_agg = None;
        let mut neg_term = None;
        if let Some(table) = table.filter(|t| !t.is_empty()) {
            let agg = negative_aggregation(g, &table);
            let nh = agg.apply(&h);
            if layer.omega != 0.0 {
                for (o, v) in z.as_mut_slice().iter_mut().zip(nh.as_slice()) {
                    *o -= layer.omega * v;
                }
            }
            neg_agg = Some(agg);
            neg_term = Some(nh);
        }
        let next = if l + 1 < depth { relu(&z) } else { z.clone() };
        fw.inputs.push(x);
        fw.transformed.push(h);
        fw.outputs.push(z);
        fw.negatives.push(neg_agg);
        fw.negative_terms.push(neg_term);
        x = next;
    }
    Ok(fw)
}

/// Forward pass with fixed tables: none, one shared by every layer, or one
/// per layer.
pub fn forward(
    model: &Model,
    g: &Graph,
    ops: &GraphOps,
    tables: &[NegativeSampleTable],
) -> Result<Forward> {
    let depth = model.depth();
    if !(tables.len() <= 1 || tables.len() == depth) {
        return Err(Error::InvalidArgument(format!(
            "{} negative tables for a {depth}-layer model",
            tables.len()
        )));
    }
    forward_with(model, g, ops, g.features(), |l, _| {
        Ok(match tables.len() {
            0 => None,
            1 => Some(tables[0].clone()),
            _ => Some(tables[l].clone()),
        })
    })
}

/// Numerically stable softmax of one row.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean cross-entropy over `mask` and its gradient with respect to the logits.
pub fn cross_entropy(logits: &Matrix, labels: &[usize], mask: &[bool]) -> Result<(f64, Matrix)> {
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::InvalidArgument("training mask is empty".into()));
    }
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for i in (0..logits.rows()).filter(|&i| mask[i]) {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[labels[i]];
        let p = softmax(row);
        let gi = grad.row_mut(i);
        for (c, (gv, pv)) in gi.iter_mut().zip(p).enumerate() {
            *gv = (pv - if c == labels[i] { 1.0 } else { 0.0 }) / count as f64;
        }
    }
    Ok((loss / count as f64, grad))
}

/// Reverse pass: gradients of the loss with respect to every `Θ` and `ω`,
/// given the loss gradient on the logits.
pub fn backward(model: &Model, ops: &GraphOps, fw: &Forward, d_logits: &Matrix) -> Gradients {
    let depth = model.depth();
    let mut grads = Gradients::zeros_like(model);
    let mut dz = d_logits.clone();
    for l in (0..depth).rev() {
        let layer = &model.layers[l];
        let mut dh = ops.positive.apply_transpose(&dz);
        if let (Some(agg), Some(nh)) = (&fw.negatives[l], &fw.negative_terms[l]) {
            grads.omega[l] = -nh
                .as_slice()
                .iter()
                .zip(dz.as_slice())
                .map(|(a, b)| a * b)
                .sum::<f64>();
            if layer.omega != 0.0 {
                let back = agg.apply_transpose(&dz);
                for (d, v) in dh.as_mut_slice().iter_mut().zip(back.as_slice()) {
                    *d -= layer.omega * v;
                }
            }
        }
        grads.theta[l] = fw.inputs[l].t_matmul(&dh);
        if l > 0 {
            let mut dx = dh.matmul_t(&layer.theta);
            for (d, z) in dx.as_mut_slice().iter_mut().zip(fw.outputs[l - 1].as_slice()) {
                if *z <= 0.0 {
                    *d = 0.0;
                }
            }
            dz = dx;
        }
    }
    grads
}

/// Loss over `mask` and the full parameter gradient for fixed tables.
pub fn loss_and_gradients(
    model: &Model,
    g: &Graph,
    ops: &GraphOps,
    tables: &[NegativeSampleTable],
    labels: &[usize],
    mask: &[bool],
) -> Result<(f64, Gradients)> {
    let fw = forward(model, g, ops, tables)?;
    let (loss, d_logits) = cross_entropy(fw.logits(), labels, mask)?;
    Ok((loss, backward(model, ops, &fw, &d_logits)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Masks;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> Graph {
        Graph::from_edges(
            3,
            &[(0, 1), (1, 2)],
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap(),
            vec![0, 1, 1],
            2,
            Masks::all_train(3),
        )
        .unwrap()
    }

    #[test]
    fn uniform_logits_give_log_c() {
        let logits = Matrix::zeros(4, 5);
        let (loss, _) = cross_entropy(&logits, &[0, 1, 2, 3], &[true; 4]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn empty_mask_is_an_error() {
        assert!(cross_entropy(&Matrix::zeros(2, 2), &[0, 1], &[false, false]).is_err());
    }

    #[test]
    fn large_logits_stay_finite() {
        let logits = Matrix::from_rows(&[vec![1000.0, -1000.0]]).unwrap();
        let (loss, g) = cross_entropy(&logits, &[1], &[true]).unwrap();
        assert!(loss.is_finite() && g.is_finite());
    }

    #[test]
    fn dims_for_depth() {
        assert_eq!(Model::dims(10, 16, 3, 1), vec![10, 3]);
        assert_eq!(Model::dims(10, 16, 3, 3), vec![10, 16, 16, 3]);
    }

    #[test]
    fn glorot_is_seeded() {
        let a = Model::glorot(&[4, 3, 2], 0.5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = Model::glorot(&[4, 3, 2], 0.5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        let limit = (6.0f64 / 7.0).sqrt();
        assert!(a.layers[0].theta.as_slice().iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn zero_features_give_zero_logits() {
        let g = Graph::from_edges(3, &[(0, 1)], Matrix::zeros(3, 2), vec![0; 3], 2, Masks::all_train(3))
            .unwrap();
        let model = Model::glorot(&[2, 4, 2], 0.5, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let negs = NegativeSampleTable::from_lists(vec![vec![2], vec![2], vec![0]]);
        let fw = forward(&model, &g, &GraphOps::new(&g), &[negs]).unwrap();
        assert!(fw.logits().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn depth_one_matches_layer() {
        let g = tiny();
        let model = Model::glorot(&[2, 2], 0.7, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let negs = NegativeSampleTable::from_lists(vec![vec![2], vec![], vec![0]]);
        let fw = forward(&model, &g, &GraphOps::new(&g), std::slice::from_ref(&negs)).unwrap();
        let direct = sdgcn_layer(g.features(), &g, &model.layers[0].theta, 0.7, &negs);
        assert_eq!(fw.logits(), &direct);
    }

    #[test]
    fn table_count_must_match_depth() {
        let g = tiny();
        let model = Model::glorot(&[2, 3, 3, 2], 0.5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let t = NegativeSampleTable::empty(3);
        assert!(forward(&model, &g, &GraphOps::new(&g), &[t.clone(), t]).is_err());
    }
}
