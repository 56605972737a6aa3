//! Undirected attributed graphs in compressed sparse row form.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Train / validation / test node splits.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Masks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Masks {
    pub fn all_train(n: usize) -> Self {
        Masks {
            train: vec![true; n],
            val: vec![false; n],
            test: vec![false; n],
        }
    }

    fn select(&self, keep: &[usize]) -> Masks {
        let pick = |m: &[bool]| keep.iter().map(|&i| m[i]).collect();
        Masks {
            train: pick(&self.train),
            val: pick(&self.val),
            test: pick(&self.test),
        }
    }
}

/// Immutable undirected graph with node features, labels and splits.
///
/// Adjacency is stored as CSR: the neighbours of `i` are
/// `targets[offsets[i]..offsets[i + 1]]`, sorted ascending and free of
/// duplicates and self-loops. Every edge is stored in both directions.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
    masks: Masks,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Edges are symmetrised,
    /// duplicates collapsed, and self-loops dropped with a warning.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize)],
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
        masks: Masks,
    ) -> Result<Self> {
        if features.rows() != n {
            return Err(Error::Validation(format!(
                "features have {} rows for {n} nodes",
                features.rows()
            )));
        }
        if labels.len() != n {
            return Err(Error::Validation(format!(
                "{} labels for {n} nodes",
                labels.len()
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::Validation(format!(
                "label {l} of node {i} outside [0, {num_classes})"
            )));
        }
        for (name, m) in [("train", &masks.train), ("val", &masks.val), ("test", &masks.test)] {
            if m.len() != n {
                return Err(Error::Validation(format!(
                    "{name} mask has {} entries for {n} nodes",
                    m.len()
                )));
            }
        }
        for i in 0..n {
            let hits = masks.train[i] as u8 + masks.val[i] as u8 + masks.test[i] as u8;
            if hits > 1 {
                return Err(Error::Validation(format!(
                    "node {i} belongs to more than one split"
                )));
            }
        }

        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut self_loops = 0usize;
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Validation(format!(
                    "edge ({u},{v}) references a node outside [0, {n})"
                )));
            }
            if u == v {
                self_loops += 1;
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        if self_loops > 0 {
            warn!("dropped {self_loops} self-loop(s); aggregation adds the self term itself");
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for mut row in adj {
            row.sort_unstable();
            row.dedup();
            targets.extend(row);
            offsets.push(targets.len());
        }
        Ok(Graph {
            offsets,
            targets,
            features,
            labels,
            num_classes,
            masks,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n()).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    pub fn average_degree(&self) -> f64 {
        if self.n() == 0 {
            return 0.0;
        }
        self.num_edge_slots() as f64 / self.n() as f64
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Number of stored directed slots (twice the undirected edge count).
    pub fn num_edge_slots(&self) -> usize {
        self.targets.len()
    }

    pub fn num_undirected_edges(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn csr_offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn csr_targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn masks(&self) -> &Masks {
        &self.masks
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in CSR order.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_undirected_edges());
        for u in 0..self.n() {
            for &v in self.neighbors(u) {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Hop distance from `source` to every node, `None` when unreachable.
    pub fn bfs_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in self.neighbors(u) {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Connected components, each sorted ascending, listed in order of their
    /// smallest node id.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &v in self.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    /// Subgraph induced by `nodes`; node `nodes[k]` becomes node `k`.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Graph> {
        let mut remap = vec![usize::MAX; self.n()];
        for (k, &v) in nodes.iter().enumerate() {
            if v >= self.n() {
                return Err(Error::InvalidArgument(format!("node {v} out of range")));
            }
            remap[v] = k;
        }
        let mut edges = Vec::new();
        for (k, &u) in nodes.iter().enumerate() {
            for &v in self.neighbors(u) {
                let kv = remap[v];
                if kv != usize::MAX && k < kv {
                    edges.push((k, kv));
                }
            }
        }
        let features = Matrix::from_fn(nodes.len(), self.feature_dim(), |r, c| {
            self.features[(nodes[r], c)]
        });
        let labels = nodes.iter().map(|&v| self.labels[v]).collect();
        Graph::from_edges(
            nodes.len(),
            &edges,
            features,
            labels,
            self.num_classes,
            self.masks.select(nodes),
        )
    }

    /// Induced subgraph on the largest connected component. Equal-size
    /// components are ranked by their smallest original node id.
    pub fn largest_connected_component(&self) -> Result<Graph> {
        if self.n() == 0 {
            return Err(Error::InvalidArgument("graph has no nodes".into()));
        }
        let comps = self.connected_components();
        let mut best = &comps[0];
        for c in &comps[1..] {
            if c.len() > best.len() {
                best = c;
            }
        }
        self.induced_subgraph(best)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Graph> {
        let text = std::fs::read_to_string(path)?;
        Graph::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Graph> {
        let file: GraphFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        file.into_graph()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&GraphFile::from_graph(self)).expect("graph serialises")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

/// On-disk JSON layout.
#[derive(Debug, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub masks: Masks,
    pub num_classes: usize,
}

impl GraphFile {
    pub fn from_graph(g: &Graph) -> GraphFile {
        GraphFile {
            n: g.n(),
            edges: g.undirected_edges().into_iter().map(|(u, v)| [u, v]).collect(),
            features: g.features.to_rows(),
            labels: g.labels.clone(),
            masks: g.masks.clone(),
            num_classes: g.num_classes,
        }
    }

    pub fn into_graph(self) -> Result<Graph> {
        if self.features.len() != self.n {
            return Err(Error::Validation(format!(
                "features has {} rows, n = {}",
                self.features.len(),
                self.n
            )));
        }
        let features = Matrix::from_rows(&self.features)
            .map_err(|e| Error::Validation(format!("features: {e}")))?;
        let edges: Vec<_> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        Graph::from_edges(
            self.n,
            &edges,
            features,
            self.labels,
            self.num_classes,
            self.masks,
        )
    }
}

/// Nodes grouped by exact hop distance from a source.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistancePartition {
    pub source: usize,
    /// `sets[&l]` holds every node at distance exactly `l`, ascending.
    pub sets: BTreeMap<usize, Vec<usize>>,
    pub max_length: usize,
}

impl DistancePartition {
    pub fn at(&self, l: usize) -> &[usize] {
        self.sets.get(&l).map_or(&[], Vec::as_slice)
    }
}

/// Shells `N_1 … N_L` around `source`; empty shells are omitted.
pub fn bfs_distance_partition(g: &Graph, source: usize, max_length: usize) -> Result<DistancePartition> {
    if source >= g.n() {
        return Err(Error::InvalidArgument(format!("source {source} out of range")));
    }
    if max_length < 2 {
        return Err(Error::InvalidArgument(format!(
            "maximum path length must be at least 2, got {max_length}"
        )));
    }
    let mut sets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (v, d) in g.bfs_distances(source).into_iter().enumerate() {
        if let Some(d) = d {
            if d >= 1 && d <= max_length {
                sets.entry(d).or_default().push(v);
            }
        }
    }
    Ok(DistancePartition {
        source,
        sets,
        max_length,
    })
}

/// Planted-partition generator parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub seed: u64,
}

/// Samples a stochastic block model graph.
///
/// Node `v` sits in block `v / nodes_per_block`, which is also its label.
/// Its feature row is the one-hot prototype `e_{block mod d}` plus
/// independent `N(0, σ²)` noise. Each block is split 60/20/20 into
/// train/val/test after a seeded shuffle.
pub fn generate_sbm(params: &SbmParams) -> Result<Graph> {
    let SbmParams {
        blocks,
        nodes_per_block: m,
        p_in,
        p_out,
        feature_dim: d,
        feature_noise: sigma,
        seed,
    } = *params;
    let n = blocks * m;
    if n == 0 {
        return Err(Error::InvalidArgument("blocks × nodes_per_block must be positive".into()));
    }
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) || p_out > p_in {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}"
        )));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("feature dimension must be positive".into()));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid feature noise {sigma}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = |v: usize| v / m;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if block(u) == block(v) { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let features = Matrix::from_fn(n, d, |v, c| {
        let proto = if c == block(v) % d { 1.0 } else { 0.0 };
        if sigma == 0.0 {
            proto
        } else {
            proto + noise.sample(&mut rng)
        }
    });
    let labels: Vec<usize> = (0..n).map(block).collect();

    let mut masks = Masks {
        train: vec![false; n],
        val: vec![false; n],
        test: vec![false; n],
    };
    let n_train = (0.6 * m as f64).round() as usize;
    let n_val = ((0.2 * m as f64).round() as usize).min(m - n_train);
    for b in 0..blocks {
        let mut members: Vec<usize> = (b * m..(b + 1) * m).collect();
        members.shuffle(&mut rng);
        for (r, &v) in members.iter().enumerate() {
            if r < n_train {
                masks.train[v] = true;
            } else if r < n_train + n_val {
                masks.val[v] = true;
            } else {
                masks.test[v] = true;
            }
        }
    }

    Graph::from_edges(n, &edges, features, labels, blocks, masks)
}
