//! L-ensembles over negative-sample candidates and exact k-DPP sampling.
//!
//! Four kernels are available, all indexed by the candidate list of one
//! anchor node `i`:
//!
//! | variant     | quality `q_j`               | similarity `φ_jᵀφ_j'`                                   |
//! |-------------|-----------------------------|---------------------------------------------------------|
//! | `cosine`    | 1                           | `exp(cos(x_j, x_j') − 1)`                               |
//! | `qd`        | `cos(a_i,b_i)·cos(a_i,a_j)` | `cos(x_j,a_j')·cos(a_j,x_j')·exp(cos(x_j,x_j') − 1)`    |
//! | `community` | `cos(a_i,a_j)`              | `cos(x_j,a_j')·cos(a_j,x_j')`                           |
//! | `node`      | `cos(a_i,b_i)`              | `exp(cos(x_j,x_j') − 1)`                                |
//!
//! with `L_jj' = q_j · φ_jᵀφ_j' · q_j'`. Here `x_j` is a node embedding,
//! `a_j` the mean embedding of `j`'s community and `b_i` the mean embedding
//! of the candidate list.
//!
//! The `qd` and `community` similarities are not Gram matrices in general,
//! so a kernel can be indefinite. [`LEnsemble::regularize`] adds `εI` and,
//! if the smallest eigenvalue is still below `ε/2`, shifts the diagonal by
//! `|λ_min| + ε`. Shifting leaves the eigenvectors untouched.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, eigendecompose, esp_table, EigenDecomposition, Matrix, SymmetricMatrix,
    DEFAULT_EIGEN_TOL,
};

pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelVariant {
    Cosine,
    #[serde(rename = "qd")]
    QualityDiversity,
    Community,
    Node,
}

impl KernelVariant {
    pub const ALL: [KernelVariant; 4] = [
        KernelVariant::Cosine,
        KernelVariant::QualityDiversity,
        KernelVariant::Community,
        KernelVariant::Node,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelVariant::Cosine => "cosine",
            KernelVariant::QualityDiversity => "qd",
            KernelVariant::Community => "community",
            KernelVariant::Node => "node",
        }
    }
}

impl fmt::Display for KernelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(KernelVariant::Cosine),
            "qd" => Ok(KernelVariant::QualityDiversity),
            "community" => Ok(KernelVariant::Community),
            "node" => Ok(KernelVariant::Node),
            _ => Err(Error::InvalidArgument(format!(
                "unknown kernel `{s}` (expected qd, cosine, community or node)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub variant: KernelVariant,
    pub epsilon: f64,
}

impl KernelSpec {
    pub fn new(variant: KernelVariant, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(KernelSpec { variant, epsilon })
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            variant: KernelVariant::QualityDiversity,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Everything a kernel builder needs to know about one anchor.
#[derive(Clone, Debug)]
pub struct KernelContext<'a> {
    pub anchor: usize,
    pub candidates: Vec<usize>,
    /// Embedding rows for every node of the graph.
    pub features: &'a Matrix,
    pub membership: &'a [usize],
    pub community_features: &'a Matrix,
    /// Mean embedding of the candidates.
    pub candidate_mean: Vec<f64>,
}

impl<'a> KernelContext<'a> {
    pub fn new(
        anchor: usize,
        candidates: Vec<usize>,
        features: &'a Matrix,
        membership: &'a [usize],
        community_features: &'a Matrix,
    ) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidArgument("candidate list is empty".into()));
        }
        if membership.len() != features.rows() {
            return Err(Error::Dimension("membership and feature rows differ".into()));
        }
        if community_features.cols() != features.cols() {
            return Err(Error::Dimension(
                "community and node features have different widths".into(),
            ));
        }
        let mut seen = std::collections::HashSet::with_capacity(candidates.len());
        for &c in &candidates {
            if c >= features.rows() {
                return Err(Error::InvalidArgument(format!("candidate {c} out of range")));
            }
            if c == anchor {
                return Err(Error::InvalidArgument("anchor appears among its candidates".into()));
            }
            if !seen.insert(c) {
                return Err(Error::InvalidArgument(format!("candidate {c} listed twice")));
            }
        }
        if anchor >= features.rows() || membership[anchor] >= community_features.rows() {
            return Err(Error::InvalidArgument(format!("anchor {anchor} has no community")));
        }
        let d = features.cols();
        let mut mean = vec![0.0; d];
        for &c in &candidates {
            for (m, x) in mean.iter_mut().zip(features.row(c)) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= candidates.len() as f64;
        }
        Ok(KernelContext {
            anchor,
            candidates,
            features,
            membership,
            community_features,
            candidate_mean: mean,
        })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    fn node(&self, j: usize) -> &[f64] {
        self.features.row(self.candidates[j])
    }

    fn community_of(&self, j: usize) -> &[f64] {
        self.community_features
            .row(self.membership[self.candidates[j]])
    }

    fn anchor_community(&self) -> &[f64] {
        self.community_features.row(self.membership[self.anchor])
    }
}

/// A kernel before regularisation.
#[derive(Clone, Debug)]
pub struct RawKernel {
    pub matrix: SymmetricMatrix,
    /// Some cosine involved a zero vector and was taken as 0.
    pub degenerate: bool,
}

/// Unit-normalised copies of a set of vectors. Zero vectors stay zero, so
/// any cosine against them evaluates to 0.
struct Normalized {
    rows: Vec<Vec<f64>>,
    degenerate: bool,
}

impl Normalized {
    fn new<'b>(vectors: impl Iterator<Item = &'b [f64]>) -> Self {
        let mut degenerate = false;
        let rows = vectors
            .map(|v| {
                let n = linalg::norm(v);
                if n == 0.0 {
                    degenerate = true;
                    vec![0.0; v.len()]
                } else {
                    v.iter().map(|x| x / n).collect()
                }
            })
            .collect();
        Normalized { rows, degenerate }
    }

    fn cos(&self, a: usize, other: &Normalized, b: usize) -> f64 {
        linalg::dot(&self.rows[a], &other.rows[b]).clamp(-1.0, 1.0)
    }
}

/// Pairwise `exp(cos(x_j, x_j') − 1)`, diagonal fixed at 1.
fn exp_cosine(x: &Normalized, m: usize) -> SymmetricMatrix {
    SymmetricMatrix::from_fn(m, |j, jp| {
        if j == jp {
            1.0
        } else {
            (x.cos(j, x, jp) - 1.0).exp()
        }
    })
}

fn cos_or_zero(a: &[f64], b: &[f64], degenerate: &mut bool) -> f64 {
    linalg::cosine(a, b).unwrap_or_else(|| {
        *degenerate = true;
        0.0
    })
}

/// `exp(cos(x_j, x_j') − 1)` over the candidates.
pub fn build_cosine_kernel(ctx: &KernelContext<'_>) -> RawKernel {
    let m = ctx.len();
    let x = Normalized::new((0..m).map(|j| ctx.node(j)));
    RawKernel {
        matrix: exp_cosine(&x, m),
        degenerate: x.degenerate,
    }
}

/// Quality–diversity kernel before the `εI` jitter.
pub fn qd_kernel_raw(ctx: &KernelContext<'_>) -> RawKernel {
    let m = ctx.len();
    let x = Normalized::new((0..m).map(|j| ctx.node(j)));
    let a = Normalized::new((0..m).map(|j| ctx.community_of(j)));
    let mut degenerate = x.degenerate || a.degenerate;
    let ai = ctx.anchor_community();
    let set_quality = cos_or_zero(ai, &ctx.candidate_mean, &mut degenerate);
    let q: Vec<f64> = (0..m)
        .map(|j| set_quality * cos_or_zero(ai, ctx.community_of(j), &mut degenerate))
        .collect();
    let matrix = SymmetricMatrix::from_fn(m, |j, jp| {
        let sim = if j == jp { 1.0 } else { (x.cos(j, &x, jp) - 1.0).exp() };
        let phi = x.cos(j, &a, jp) * a.cos(j, &x, jp) * sim;
        q[j] * phi * q[jp]
    });
    RawKernel { matrix, degenerate }
}

/// Community-only kernel before jitter.
pub fn community_kernel_raw(ctx: &KernelContext<'_>) -> RawKernel {
    let m = ctx.len();
    let x = Normalized::new((0..m).map(|j| ctx.node(j)));
    let a = Normalized::new((0..m).map(|j| ctx.community_of(j)));
    let mut degenerate = x.degenerate || a.degenerate;
    let ai = ctx.anchor_community();
    let q: Vec<f64> = (0..m)
        .map(|j| cos_or_zero(ai, ctx.community_of(j), &mut degenerate))
        .collect();
    let matrix = SymmetricMatrix::from_fn(m, |j, jp| {
        q[j] * x.cos(j, &a, jp) * a.cos(j, &x, jp) * q[jp]
    });
    RawKernel { matrix, degenerate }
}

/// Node-feature kernel before jitter: `cos²(a_i, b_i) · L_cosine`.
pub fn node_kernel_raw(ctx: &KernelContext<'_>) -> RawKernel {
    let mut degenerate = false;
    let q = cos_or_zero(ctx.anchor_community(), &ctx.candidate_mean, &mut degenerate);
    let cosine = build_cosine_kernel(ctx);
    let m = ctx.len();
    let matrix = SymmetricMatrix::from_fn(m, |j, jp| q * cosine.matrix.get(j, jp) * q);
    RawKernel {
        matrix,
        degenerate: degenerate || cosine.degenerate,
    }
}

pub fn build_qd_kernel(ctx: &KernelContext<'_>, epsilon: f64) -> Result<LEnsemble> {
    LEnsemble::regularize(qd_kernel_raw(ctx), epsilon)
}

pub fn build_community_kernel(ctx: &KernelContext<'_>, epsilon: f64) -> Result<LEnsemble> {
    LEnsemble::regularize(community_kernel_raw(ctx), epsilon)
}

pub fn build_node_kernel(ctx: &KernelContext<'_>, epsilon: f64) -> Result<LEnsemble> {
    LEnsemble::regularize(node_kernel_raw(ctx), epsilon)
}

pub fn raw_kernel(ctx: &KernelContext<'_>, variant: KernelVariant) -> RawKernel {
    match variant {
        KernelVariant::Cosine => build_cosine_kernel(ctx),
        KernelVariant::QualityDiversity => qd_kernel_raw(ctx),
        KernelVariant::Community => community_kernel_raw(ctx),
        KernelVariant::Node => node_kernel_raw(ctx),
    }
}

/// Builds and regularises the kernel selected by `spec`. The cosine kernel
/// receives the same jitter as the others so that it always has full rank.
pub fn build_kernel(ctx: &KernelContext<'_>, spec: &KernelSpec) -> Result<LEnsemble> {
    LEnsemble::regularize(raw_kernel(ctx, spec.variant), spec.epsilon)
}

/// A positive definite L-ensemble together with its spectrum.
#[derive(Clone, Debug)]
pub struct LEnsemble {
    pub matrix: SymmetricMatrix,
    pub eigen: EigenDecomposition,
    pub epsilon: f64,
    /// Extra diagonal shift applied on top of `εI`; zero when the jitter
    /// alone was enough.
    pub repair_shift: f64,
    pub degenerate: bool,
}

impl LEnsemble {
    pub fn regularize(raw: RawKernel, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        let mut matrix = raw.matrix;
        matrix.add_diagonal(epsilon);
        let mut eigen = eigendecompose(&matrix, DEFAULT_EIGEN_TOL)?;
        let lmin = eigen.min_eigenvalue();
        let mut repair_shift = 0.0;
        if lmin < 0.5 * epsilon {
            repair_shift = lmin.abs() + epsilon;
            matrix.add_diagonal(repair_shift);
            eigen.shift(repair_shift);
        }
        Ok(LEnsemble {
            matrix,
            eigen,
            epsilon,
            repair_shift,
            degenerate: raw.degenerate,
        })
    }

    pub fn order(&self) -> usize {
        self.matrix.order()
    }

    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<usize>> {
        sample_kdpp_eigen(&self.eigen, k, rng)
    }

    pub fn probability(&self, subset: &[usize], k: usize) -> Result<f64> {
        check_subset(self.order(), subset, k)?;
        let e = esp_table(&self.eigen.eigenvalues, k)?;
        Ok(self.matrix.principal(subset).determinant() / e.top())
    }
}

fn check_subset(order: usize, subset: &[usize], k: usize) -> Result<()> {
    if subset.len() != k {
        return Err(Error::InvalidArgument(format!(
            "subset has {} items, expected {k}",
            subset.len()
        )));
    }
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != subset.len() || sorted.last().is_some_and(|&i| i >= order) {
        return Err(Error::InvalidArgument(format!(
            "subset {subset:?} is not a set of distinct indices below {order}"
        )));
    }
    Ok(())
}

/// `det(L_Y) / e_k(λ(L))`.
pub fn kdpp_probability(l: &SymmetricMatrix, subset: &[usize], k: usize) -> Result<f64> {
    check_subset(l.order(), subset, k)?;
    let eigen = eigendecompose(l, DEFAULT_EIGEN_TOL)?;
    let e = esp_table(&eigen.eigenvalues, k)?;
    Ok(l.principal(subset).determinant() / e.top())
}

/// Draws a size-`k` subset from the k-DPP with kernel `l`.
pub fn sample_kdpp<R: Rng + ?Sized>(l: &SymmetricMatrix, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let eigen = eigendecompose(l, DEFAULT_EIGEN_TOL)?;
    sample_kdpp_eigen(&eigen, k, rng)
}

/// Picks `k` eigenvector indices: walking `v = m … 1`, index `v` is kept
/// with probability `λ_v e_{l−1}^{v−1} / e_l^v` where `l` counts the
/// indices still needed.
fn select_eigenvectors<R: Rng + ?Sized>(
    eigenvalues: &[f64],
    esp: &linalg::EspTable,
    k: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(k);
    let mut l = k;
    for v in (1..=eigenvalues.len()).rev() {
        if l == 0 {
            break;
        }
        let ratio = eigenvalues[v - 1] * esp.get(l - 1, v - 1) / esp.get(l, v);
        if rng.random::<f64>() < ratio {
            chosen.push(v - 1);
            l -= 1;
        }
    }
    chosen
}

/// Modified Gram–Schmidt applied twice. Fails if a vector collapses.
fn orthonormalize(basis: &mut [Vec<f64>]) -> Result<()> {
    for _ in 0..2 {
        for a in 0..basis.len() {
            let (done, rest) = basis.split_at_mut(a);
            let v = &mut rest[0];
            for u in done.iter() {
                let p = linalg::dot(u, v);
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= p * ui;
                }
            }
            let n = linalg::norm(v);
            if !(n > 1e-12) {
                return Err(Error::Numerical(
                    "elementary DPP basis lost rank during projection".into(),
                ));
            }
            for vi in v.iter_mut() {
                *vi /= n;
            }
        }
    }
    Ok(())
}

fn sample_elementary<R: Rng + ?Sized>(
    eigen: &EigenDecomposition,
    chosen: &[usize],
    rng: &mut R,
) -> Result<Vec<usize>> {
    let m = eigen.order();
    let mut basis: Vec<Vec<f64>> = chosen
        .iter()
        .map(|&c| (0..m).map(|r| eigen.eigenvectors[(r, c)]).collect())
        .collect();
    let mut picked = Vec::with_capacity(chosen.len());
    let mut taken = vec![false; m];
    let mut weights = vec![0.0; m];
    while !basis.is_empty() {
        for (i, w) in weights.iter_mut().enumerate() {
            *w = if taken[i] {
                0.0
            } else {
                basis.iter().map(|v| v[i] * v[i]).sum()
            };
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Numerical("item weights vanished".into()));
        }
        let mut u = rng.random::<f64>() * total;
        let mut item = m;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                item = i;
                if u < w {
                    break;
                }
                u -= w;
            }
        }
        taken[item] = true;
        picked.push(item);

        // eliminate the item coordinate using the vector with the largest
        // component there, then drop that vector
        let pivot = (0..basis.len())
            .max_by(|&a, &b| basis[a][item].abs().total_cmp(&basis[b][item].abs()))
            .unwrap();
        let pv = basis.swap_remove(pivot);
        let denom = pv[item];
        for v in basis.iter_mut() {
            let f = v[item] / denom;
            for (vi, pi) in v.iter_mut().zip(&pv) {
                *vi -= f * pi;
            }
            v[item] = 0.0;
        }
        orthonormalize(&mut basis)?;
    }
    picked.sort_unstable();
    Ok(picked)
}

/// k-DPP sampling from a precomputed spectrum. Returns sorted indices.
pub fn sample_kdpp_eigen<R: Rng + ?Sized>(
    eigen: &EigenDecomposition,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let m = eigen.order();
    if k > m {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {k} items from a ground set of {m}"
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let esp = esp_table(&eigen.eigenvalues, k)?;
    if !(esp.top() > 0.0 && esp.top().is_finite()) {
        return Err(Error::Numerical(format!(
            "normaliser e_{k} = {} is not a positive finite number",
            esp.top()
        )));
    }
    for attempt in 0..2 {
        let chosen = select_eigenvectors(&eigen.eigenvalues, &esp, k, rng);
        if chosen.len() == k {
            return sample_elementary(eigen, &chosen, rng);
        }
        log::debug!("eigenvector selection returned {} of {k} (attempt {attempt})", chosen.len());
    }
    Err(Error::Numerical(format!(
        "could not select {k} eigenvectors; kernel rank is likely below {k}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_diagonal_probabilities() {
        let l = SymmetricMatrix::identity(3);
        assert!((kdpp_probability(&l, &[0], 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let l2 = SymmetricMatrix::identity(3).scaled(2.0);
        for y in [[0, 1], [0, 2], [1, 2]] {
            assert!((kdpp_probability(&l2, &y, 2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn wrong_subset_size_is_rejected() {
        let l = SymmetricMatrix::identity(3);
        assert!(kdpp_probability(&l, &[0, 1], 1).is_err());
        assert!(kdpp_probability(&l, &[0, 0], 2).is_err());
        assert!(kdpp_probability(&l, &[0, 5], 2).is_err());
    }

    #[test]
    fn full_subset_is_forced() {
        let l = SymmetricMatrix::identity(4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            assert_eq!(sample_kdpp(&l, 4, &mut rng).unwrap(), vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn dominant_item_wins() {
        let l = SymmetricMatrix::diagonal(&[1e6, 1e-6, 1e-6]);
        let p = kdpp_probability(&l, &[0], 1).unwrap();
        assert!((p - (1.0 - 2e-12)).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(sample_kdpp(&l, 1, &mut rng).unwrap(), vec![0]);
        }
    }

    #[test]
    fn too_large_k_is_an_error() {
        let l = SymmetricMatrix::identity(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_kdpp(&l, 3, &mut rng).is_err());
        assert!(sample_kdpp(&l, 0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in KernelVariant::ALL {
            assert_eq!(v.as_str().parse::<KernelVariant>().unwrap(), v);
        }
        assert!("dpp".parse::<KernelVariant>().is_err());
        assert!(KernelSpec::new(KernelVariant::Node, 0.0).is_err());
    }
}
