//! Negative-sample tables.
//!
//! For an anchor `i` the target size is `k_i = deg(i) + 1`, clamped to the
//! number of available candidates. Candidates never include `i` or its
//! neighbours. Three samplers are provided:
//!
//! * shortest-path DPP: for every hop distance `l ∈ [2, L]` one node is
//!   picked uniformly from the shell `N_l`; it and its neighbours form the
//!   candidate pool, from which a k-DPP draws the negatives;
//! * full DPP: the pool is every non-neighbour of `i` (small graphs only);
//! * uniform: `k_i` non-neighbours drawn without replacement.
//!
//! Anchors whose pool is empty, or whose kernel cannot be sampled, fall
//! back to the uniform sampler and are flagged in the table.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::community::community_features;
use crate::dpp::{build_kernel, KernelContext, KernelSpec};
use crate::error::{Error, Result};
use crate::graph::{bfs_distance_partition, DistancePartition, Graph};
use crate::linalg::Matrix;
use crate::rng::{stream_rng, StreamId};

/// Largest graph the full-graph DPP sampler accepts.
pub const FULL_DPP_MAX_NODES: usize = 500;
pub const DEFAULT_PATH_LEN: usize = 6;

#[derive(Clone, Debug)]
pub struct CandidateSet {
    pub anchor: usize,
    /// Sorted ascending.
    pub members: Vec<usize>,
    /// Node picked in each shell, in order of increasing distance.
    pub picked: Vec<usize>,
    pub source_partition: DistancePartition,
}

impl CandidateSet {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    /// Mean of the members' rows in `features`; `None` for an empty set.
    pub fn mean_feature(&self, features: &Matrix) -> Option<Vec<f64>> {
        if self.members.is_empty() {
            return None;
        }
        let mut mean = vec![0.0; features.cols()];
        for &v in &self.members {
            for (m, x) in mean.iter_mut().zip(features.row(v)) {
                *m += x;
            }
        }
        let n = self.members.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Some(mean)
    }
}

/// Shortest-path candidate pool for `anchor`.
pub fn build_candidates_shortest_path<R: Rng + ?Sized>(
    g: &Graph,
    anchor: usize,
    max_length: usize,
    rng: &mut R,
) -> Result<CandidateSet> {
    let partition = bfs_distance_partition(g, anchor, max_length)?;
    let mut members = Vec::new();
    let mut picked = Vec::new();
    for l in 2..=max_length {
        let shell = partition.at(l);
        if let Some(&j) = shell.choose(rng) {
            picked.push(j);
            members.push(j);
            members.extend_from_slice(g.neighbors(j));
        }
    }
    members.sort_unstable();
    members.dedup();
    members.retain(|&v| v != anchor && !g.has_edge(anchor, v));
    Ok(CandidateSet {
        anchor,
        members,
        picked,
        source_partition: partition,
    })
}

/// Per-anchor negatives. Nodes that are not anchors have empty lists.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeSampleTable {
    negatives: Vec<Vec<usize>>,
    anchors: Vec<bool>,
    fallback: Vec<bool>,
}

impl NegativeSampleTable {
    pub fn empty(n: usize) -> Self {
        NegativeSampleTable {
            negatives: vec![Vec::new(); n],
            anchors: vec![false; n],
            fallback: vec![false; n],
        }
    }

    /// Table with explicit lists, one per node; every node counts as an anchor.
    pub fn from_lists(lists: Vec<Vec<usize>>) -> Self {
        let n = lists.len();
        NegativeSampleTable {
            negatives: lists,
            anchors: vec![true; n],
            fallback: vec![false; n],
        }
    }

    pub fn n(&self) -> usize {
        self.negatives.len()
    }

    pub fn get(&self, i: usize) -> &[usize] {
        &self.negatives[i]
    }

    pub fn is_anchor(&self, i: usize) -> bool {
        self.anchors[i]
    }

    /// Whether the uniform fallback produced the list for `i`.
    pub fn used_fallback(&self, i: usize) -> bool {
        self.fallback[i]
    }

    pub fn fallback_count(&self) -> usize {
        self.fallback.iter().filter(|&&f| f).count()
    }

    pub fn total_negatives(&self) -> usize {
        self.negatives.iter().map(Vec::len).sum()
    }

    /// True when no node has any negative.
    pub fn is_empty(&self) -> bool {
        self.negatives.iter().all(Vec::is_empty)
    }

    fn set(&mut self, i: usize, list: Vec<usize>, fallback: bool) {
        self.negatives[i] = list;
        self.anchors[i] = true;
        self.fallback[i] = fallback;
    }

    /// `anchor → negatives` for every anchor.
    pub fn to_map(&self) -> BTreeMap<usize, Vec<usize>> {
        (0..self.n())
            .filter(|&i| self.anchors[i])
            .map(|i| (i, self.negatives[i].clone()))
            .collect()
    }
}

/// `|N(i)| + 1`.
pub fn target_size(g: &Graph, i: usize) -> usize {
    g.degree(i) + 1
}

fn non_neighbours(g: &Graph, i: usize) -> Vec<usize> {
    (0..g.n()).filter(|&v| v != i && !g.has_edge(i, v)).collect()
}

fn uniform_pick<R: Rng + ?Sized>(pool: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    let k = k.min(pool.len());
    let mut out: Vec<usize> = index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|p| pool[p])
        .collect();
    out.sort_unstable();
    out
}

/// Identifies which random stream a table draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplingStream {
    pub seed: u64,
    pub epoch: usize,
    pub layer: usize,
}

impl SamplingStream {
    pub fn new(seed: u64) -> Self {
        SamplingStream {
            seed,
            epoch: 0,
            layer: 0,
        }
    }

    fn rng(&self, node: usize) -> crate::rng::StreamRng {
        stream_rng(self.seed, StreamId::new(self.epoch, self.layer, node))
    }
}

/// Uniform negatives for every anchor.
pub fn random_negatives(g: &Graph, anchors: &[usize], stream: SamplingStream) -> NegativeSampleTable {
    let mut table = NegativeSampleTable::empty(g.n());
    for &i in anchors {
        let mut rng = stream.rng(i);
        let pool = non_neighbours(g, i);
        table.set(i, uniform_pick(&pool, target_size(g, i), &mut rng), false);
    }
    table
}

/// Embeddings plus the community structure the kernels are computed from.
pub struct Embeddings<'a> {
    pub features: &'a Matrix,
    pub membership: &'a [usize],
    pub community_features: Matrix,
}

impl<'a> Embeddings<'a> {
    /// Community means are recomputed from `features`.
    pub fn new(features: &'a Matrix, membership: &'a [usize]) -> Result<Self> {
        Ok(Embeddings {
            features,
            membership,
            community_features: community_features(features, membership)?,
        })
    }
}

fn dpp_or_fallback<R: Rng + ?Sized>(
    g: &Graph,
    anchor: usize,
    pool: Vec<usize>,
    emb: &Embeddings<'_>,
    spec: &KernelSpec,
    rng: &mut R,
) -> Result<(Vec<usize>, bool)> {
    let k = target_size(g, anchor);
    if pool.is_empty() {
        let eligible = non_neighbours(g, anchor);
        return Ok((uniform_pick(&eligible, k, rng), true));
    }
    let k = k.min(pool.len());
    let ctx = KernelContext::new(
        anchor,
        pool,
        emb.features,
        emb.membership,
        &emb.community_features,
    )?;
    let sampled = build_kernel(&ctx, spec).and_then(|l| l.sample(k, rng));
    match sampled {
        Ok(idx) => {
            let mut out: Vec<usize> = idx.into_iter().map(|j| ctx.candidates[j]).collect();
            out.sort_unstable();
            Ok((out, false))
        }
        Err(e) if e.is_numeric() => {
            log::warn!("anchor {anchor}: {e}; using uniform negatives");
            Ok((uniform_pick(&ctx.candidates, k, rng), true))
        }
        Err(e) => Err(e),
    }
}

/// Shortest-path DPP negatives.
pub fn diverse_negatives_sp(
    g: &Graph,
    emb: &Embeddings<'_>,
    spec: &KernelSpec,
    max_length: usize,
    anchors: &[usize],
    stream: SamplingStream,
) -> Result<NegativeSampleTable> {
    check_embeddings(g, emb)?;
    let mut table = NegativeSampleTable::empty(g.n());
    for &i in anchors {
        let mut rng = stream.rng(i);
        let cands = build_candidates_shortest_path(g, i, max_length, &mut rng)?;
        let (list, fallback) = dpp_or_fallback(g, i, cands.members, emb, spec, &mut rng)?;
        table.set(i, list, fallback);
    }
    Ok(table)
}

/// Full-graph DPP negatives; refuses graphs above [`FULL_DPP_MAX_NODES`].
pub fn diverse_negatives_full(
    g: &Graph,
    emb: &Embeddings<'_>,
    spec: &KernelSpec,
    anchors: &[usize],
    stream: SamplingStream,
) -> Result<NegativeSampleTable> {
    if g.n() > FULL_DPP_MAX_NODES {
        return Err(Error::GraphTooLarge {
            n: g.n(),
            limit: FULL_DPP_MAX_NODES,
        });
    }
    check_embeddings(g, emb)?;
    let mut table = NegativeSampleTable::empty(g.n());
    for &i in anchors {
        let mut rng = stream.rng(i);
        let pool = non_neighbours(g, i);
        let (list, fallback) = dpp_or_fallback(g, i, pool, emb, spec, &mut rng)?;
        table.set(i, list, fallback);
    }
    Ok(table)
}

fn check_embeddings(g: &Graph, emb: &Embeddings<'_>) -> Result<()> {
    if emb.features.rows() != g.n() || emb.membership.len() != g.n() {
        return Err(Error::Dimension(format!(
            "embeddings cover {} nodes, graph has {}",
            emb.features.rows(),
            g.n()
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegStrategy {
    /// Shortest-path candidate pools with a k-DPP.
    Sdgcn,
    FullDpp,
    Random,
    None,
}

impl NegStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            NegStrategy::Sdgcn => "sdgcn",
            NegStrategy::FullDpp => "full-dpp",
            NegStrategy::Random => "random",
            NegStrategy::None => "none",
        }
    }
}

impl fmt::Display for NegStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NegStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sdgcn" => Ok(NegStrategy::Sdgcn),
            "full-dpp" => Ok(NegStrategy::FullDpp),
            "random" => Ok(NegStrategy::Random),
            "none" => Ok(NegStrategy::None),
            _ => Err(Error::InvalidArgument(format!(
                "unknown negative strategy `{s}` (expected sdgcn, full-dpp, random or none)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeConfig {
    pub strategy: NegStrategy,
    pub kernel: KernelSpec,
    pub path_len: usize,
}

impl Default for NegativeConfig {
    fn default() -> Self {
        NegativeConfig {
            strategy: NegStrategy::Sdgcn,
            kernel: KernelSpec::default(),
            path_len: DEFAULT_PATH_LEN,
        }
    }
}

/// Dispatches to the sampler selected by `cfg`.
pub fn build_negative_table(
    g: &Graph,
    features: &Matrix,
    membership: &[usize],
    cfg: &NegativeConfig,
    anchors: &[usize],
    stream: SamplingStream,
) -> Result<NegativeSampleTable> {
    match cfg.strategy {
        NegStrategy::None => Ok(NegativeSampleTable::empty(g.n())),
        NegStrategy::Random => Ok(random_negatives(g, anchors, stream)),
        NegStrategy::Sdgcn => {
            let emb = Embeddings::new(features, membership)?;
            diverse_negatives_sp(g, &emb, &cfg.kernel, cfg.path_len, anchors, stream)
        }
        NegStrategy::FullDpp => {
            let emb = Embeddings::new(features, membership)?;
            diverse_negatives_full(g, &emb, &cfg.kernel, anchors, stream)
        }
    }
}

/// Which nodes receive negatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AnchorStrategy {
    All,
    /// Nodes with degree greater than one.
    DegreeAboveOne,
    /// The given fraction of nodes with the highest degree.
    TopDegree(f64),
    /// A seeded uniform fraction of nodes.
    Random(f64),
}

impl fmt::Display for AnchorStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnchorStrategy::All => f.write_str("all"),
            AnchorStrategy::DegreeAboveOne => f.write_str("deg1"),
            AnchorStrategy::TopDegree(x) => write!(f, "topk:{x}"),
            AnchorStrategy::Random(x) => write!(f, "rand:{x}"),
        }
    }
}

impl FromStr for AnchorStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let frac = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad fraction `{v}`")))
        };
        match s.split_once(':') {
            None if s == "all" => Ok(AnchorStrategy::All),
            None if s == "deg1" => Ok(AnchorStrategy::DegreeAboveOne),
            Some(("topk", v)) => Ok(AnchorStrategy::TopDegree(frac(v)?)),
            Some(("rand", v)) => Ok(AnchorStrategy::Random(frac(v)?)),
            _ => Err(Error::InvalidArgument(format!(
                "unknown anchor strategy `{s}` (expected all, deg1, topk:F or rand:F)"
            ))),
        }
    }
}

fn fraction_count(n: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "anchor fraction must lie in (0, 1], got {fraction}"
        )));
    }
    Ok(((fraction * n as f64).ceil() as usize).clamp(1.min(n), n))
}

/// Anchor list in selection order. Degree-based strategies are
/// deterministic with ties broken by node id.
pub fn select_anchor_nodes<R: Rng + ?Sized>(
    g: &Graph,
    strategy: AnchorStrategy,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = g.n();
    Ok(match strategy {
        AnchorStrategy::All => (0..n).collect(),
        AnchorStrategy::DegreeAboveOne => (0..n).filter(|&i| g.degree(i) > 1).collect(),
        AnchorStrategy::TopDegree(f) => {
            let count = fraction_count(n, f)?;
            let mut nodes: Vec<usize> = (0..n).collect();
            nodes.sort_by(|&a, &b| g.degree(b).cmp(&g.degree(a)).then(a.cmp(&b)));
            nodes.truncate(count);
            nodes
        }
        AnchorStrategy::Random(f) => {
            let count = fraction_count(n, f)?;
            let mut nodes: Vec<usize> = (0..n).collect();
            nodes.shuffle(rng);
            nodes.truncate(count);
            nodes
        }
    })
}

/// Cost arithmetic comparing a full-graph kernel with shortest-path pools.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub nodes: usize,
    pub avg_degree: f64,
    pub avg_path: f64,
    /// `N³`.
    pub full_cost: f64,
    /// `(⟨pa⟩ · ⟨deg⟩)³`.
    pub reduced_cost: f64,
    /// Mean `|S_i|` measured on a graph, when one was given.
    pub mean_candidates: Option<f64>,
    pub max_candidates: Option<usize>,
    /// `(L − 1)(1 + max_deg)`.
    pub candidate_bound: Option<usize>,
}

pub fn cost_estimate(nodes: usize, avg_degree: f64, avg_path: f64) -> CostReport {
    CostReport {
        nodes,
        avg_degree,
        avg_path,
        full_cost: (nodes as f64).powi(3),
        reduced_cost: (avg_path * avg_degree).powi(3),
        mean_candidates: None,
        max_candidates: None,
        candidate_bound: None,
    }
}

/// Builds every anchor's shortest-path pool once and reports its sizes
/// alongside the closed-form estimate with `⟨pa⟩ = L − 1`.
pub fn measure_cost(g: &Graph, max_length: usize, seed: u64) -> Result<CostReport> {
    let mut report = cost_estimate(g.n(), g.average_degree(), (max_length - 1) as f64);
    let stream = SamplingStream::new(seed);
    let mut total = 0usize;
    let mut max = 0usize;
    for i in 0..g.n() {
        let c = build_candidates_shortest_path(g, i, max_length, &mut stream.rng(i))?;
        total += c.len();
        max = max.max(c.len());
    }
    report.mean_candidates = Some(total as f64 / g.n().max(1) as f64);
    report.max_candidates = Some(max);
    report.candidate_bound = Some((max_length - 1) * (1 + g.max_degree()));
    Ok(report)
}
