//! Semi-synchronous label propagation and per-community mean features.
//!
//! Nodes are greedily coloured so that no two neighbours share a colour.
//! One sweep visits the colour classes in order; every node of a class
//! recomputes its label from the current labels of its neighbours and the
//! whole class commits at once. A node keeps its label when that label is
//! already among the most frequent ones around it; otherwise it adopts the
//! smallest most-frequent label. Initial labels are a seeded permutation of
//! the node ids, which is where the run's randomness enters. The colouring
//! visits nodes in order of their initial label, so the whole run depends on
//! the labels and the topology but not on how nodes are numbered.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;

pub const MAX_SWEEPS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommunityAssignment {
    /// Community id of every node, compacted to `[0, k)` in order of first
    /// appearance.
    pub membership: Vec<usize>,
    pub k: usize,
    /// Row `c` is the mean feature row of community `c`.
    pub community_features: Matrix,
    pub community_sizes: Vec<usize>,
    pub converged: bool,
    pub sweeps: usize,
}

/// Greedy colouring in node-id order.
pub fn greedy_coloring(g: &Graph) -> Vec<usize> {
    greedy_coloring_in_order(g, 0..g.n())
}

/// Greedy colouring visiting nodes in the given order.
pub fn greedy_coloring_in_order(g: &Graph, order: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let n = g.n();
    let mut color = vec![usize::MAX; n];
    let mut used = Vec::new();
    for v in order {
        used.clear();
        used.extend(
            g.neighbors(v)
                .iter()
                .map(|&u| color[u])
                .filter(|&c| c != usize::MAX),
        );
        used.sort_unstable();
        used.dedup();
        let mut c = 0;
        for &u in &used {
            if u == c {
                c += 1;
            } else if u > c {
                break;
            }
        }
        color[v] = c;
    }
    color
}

/// The label node `v` would take given `labels`, or `None` if it keeps its
/// current one.
fn vote(g: &Graph, v: usize, labels: &[usize], counts: &mut HashMap<usize, usize>) -> Option<usize> {
    let nbrs = g.neighbors(v);
    if nbrs.is_empty() {
        return None;
    }
    counts.clear();
    for &u in nbrs {
        *counts.entry(labels[u]).or_insert(0) += 1;
    }
    let best = *counts.values().max().unwrap();
    if counts.get(&labels[v]).copied() == Some(best) {
        return None;
    }
    counts
        .iter()
        .filter(|&(_, &c)| c == best)
        .map(|(&l, _)| l)
        .min()
}

/// True if no node would change label under one more vote.
pub fn is_stable(g: &Graph, labels: &[usize]) -> bool {
    let mut counts = HashMap::new();
    (0..g.n()).all(|v| vote(g, v, labels, &mut counts).is_none())
}

/// Renumbers labels to `[0, k)` by first appearance; returns `k`.
pub fn compact_labels(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

pub fn label_propagation(g: &Graph, seed: u64) -> Result<CommunityAssignment> {
    let mut labels: Vec<usize> = (0..g.n()).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    label_propagation_from(g, labels)
}

/// Label propagation from explicit initial labels, which must be a
/// permutation of `0..n`.
pub fn label_propagation_from(g: &Graph, initial: Vec<usize>) -> Result<CommunityAssignment> {
    let n = g.n();
    if n == 0 {
        return Err(Error::InvalidArgument("label propagation needs at least one node".into()));
    }
    if initial.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} initial labels for {n} nodes",
            initial.len()
        )));
    }
    let mut by_label = vec![usize::MAX; n];
    for (v, &l) in initial.iter().enumerate() {
        if l >= n || by_label[l] != usize::MAX {
            return Err(Error::InvalidArgument(
                "initial labels must be a permutation of the node ids".into(),
            ));
        }
        by_label[l] = v;
    }
    let color = greedy_coloring_in_order(g, by_label);
    let num_colors = color.iter().max().map_or(0, |c| c + 1);
    let mut classes: Vec<Vec<usize>> = vec![Vec::new(); num_colors];
    for (v, &c) in color.iter().enumerate() {
        classes[c].push(v);
    }

    let mut labels = initial;
    let mut counts = HashMap::new();
    let mut updates = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut changed = false;
        for class in &classes {
            updates.clear();
            for &v in class {
                if let Some(l) = vote(g, v, &labels, &mut counts) {
                    updates.push((v, l));
                }
            }
            changed |= !updates.is_empty();
            for &(v, l) in &updates {
                labels[v] = l;
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("label propagation stopped after {MAX_SWEEPS} sweeps without converging");
    }

    let (membership, k) = compact_labels(&labels);
    let community_features = community_features(g.features(), &membership)?;
    let mut community_sizes = vec![0; k];
    for &c in &membership {
        community_sizes[c] += 1;
    }
    Ok(CommunityAssignment {
        membership,
        k,
        community_features,
        community_sizes,
        converged,
        sweeps,
    })
}

/// Mean feature row per community. The community count is one past the
/// largest id; every id below it must have at least one member.
pub fn community_features(features: &Matrix, membership: &[usize]) -> Result<Matrix> {
    if membership.len() != features.rows() {
        return Err(Error::Dimension(format!(
            "{} memberships for {} feature rows",
            membership.len(),
            features.rows()
        )));
    }
    let k = membership.iter().max().map_or(0, |c| c + 1);
    let d = features.cols();
    let mut sums = Matrix::zeros(k, d);
    let mut sizes = vec![0usize; k];
    for (v, &c) in membership.iter().enumerate() {
        sizes[c] += 1;
        for (s, x) in sums.row_mut(c).iter_mut().zip(features.row(v)) {
            *s += x;
        }
    }
    for (c, &size) in sizes.iter().enumerate() {
        if size == 0 {
            return Err(Error::InvalidArgument(format!("community {c} has no members")));
        }
        for s in sums.row_mut(c) {
            *s /= size as f64;
        }
    }
    Ok(sums)
}
