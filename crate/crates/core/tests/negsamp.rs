use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sdgcn::dpp::{KernelSpec, KernelVariant};
use sdgcn::graph::{generate_sbm, Masks, SbmParams};
use sdgcn::negsamp::{
    build_candidates_shortest_path, build_negative_table, cost_estimate, diverse_negatives_full,
    random_negatives, select_anchor_nodes, AnchorStrategy, Embeddings, NegStrategy, NegativeConfig,
    SamplingStream, FULL_DPP_MAX_NODES,
};
use sdgcn::{Error, Graph, Matrix};

fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
    Graph::from_edges(
        n,
        edges,
        Matrix::from_fn(n, 3, |i, c| ((i * 7 + c * 3) % 5) as f64 + 0.5),
        vec![0; n],
        1,
        Masks::all_train(n),
    )
    .unwrap()
}

fn path(n: usize) -> Graph {
    graph(n, &(0..n - 1).map(|i| (i, i + 1)).collect::<Vec<_>>())
}

fn star(leaves: usize) -> Graph {
    graph(leaves + 1, &(1..=leaves).map(|i| (0, i)).collect::<Vec<_>>())
}

fn cycle(n: usize) -> Graph {
    graph(n, &(0..n).map(|i| (i, (i + 1) % n)).collect::<Vec<_>>())
}

fn clique(n: usize) -> Graph {
    let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    graph(n, &edges)
}

fn sbm(blocks: usize, m: usize, p_in: f64, p_out: f64, noise: f64, seed: u64) -> Graph {
    generate_sbm(&SbmParams {
        blocks,
        nodes_per_block: m,
        p_in,
        p_out,
        feature_dim: 4,
        feature_noise: noise,
        seed,
    })
    .unwrap()
}

#[test]
fn shortest_path_pool_respects_distance_and_size_bound() {
    for seed in 0..8 {
        let g = sbm(3, 20, 0.2, 0.02, 0.3, seed);
        for max_len in 2..=6 {
            let bound = (max_len - 1) * (1 + g.max_degree());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..g.n() {
                let dist = g.bfs_distances(i);
                let c = build_candidates_shortest_path(&g, i, max_len, &mut rng).unwrap();
                assert!(c.len() <= bound);
                assert!(c.members.windows(2).all(|w| w[0] < w[1]));
                for &v in &c.members {
                    let d = dist[v].unwrap();
                    assert!(d >= 2 && d <= max_len + 1, "node {v} at distance {d}");
                }
                for (&j, l) in c.picked.iter().zip(2..) {
                    assert!(dist[j].unwrap() >= l);
                }
            }
        }
    }
}

#[test]
fn path_pool_is_the_shells_and_their_neighbours() {
    let g = path(6);
    let c = build_candidates_shortest_path(&g, 0, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(c.picked, vec![2, 3]);
    assert_eq!(c.members, vec![2, 3, 4]);
}

#[test]
fn star_and_clique_edge_cases() {
    let g = star(5);
    let stream = SamplingStream::new(3);
    let table = random_negatives(&g, &[0], stream);
    assert!(table.get(0).is_empty());

    let cfg = NegativeConfig {
        path_len: 4,
        ..NegativeConfig::default()
    };
    let anchors: Vec<usize> = (0..6).collect();
    let membership = vec![0; 6];
    let t = build_negative_table(&g, g.features(), &membership, &cfg, &anchors, stream).unwrap();
    assert!(t.get(0).is_empty());
    assert!(t.used_fallback(0));
    for leaf in 1..6 {
        let negs = t.get(leaf);
        assert_eq!(negs.len(), 1);
        assert!(negs[0] != 0 && negs[0] != leaf);
    }

    let k4 = clique(4);
    let t = build_negative_table(&k4, k4.features(), &[0; 4], &cfg, &[0, 1, 2, 3], stream).unwrap();
    assert!(t.is_empty());
    assert_eq!(t.fallback_count(), 4);
}

#[test]
fn five_cycle_takes_both_far_nodes() {
    let g = cycle(5);
    let cfg = NegativeConfig {
        path_len: 3,
        ..NegativeConfig::default()
    };
    for seed in 0..10 {
        let t = build_negative_table(&g, g.features(), &[0; 5], &cfg, &[0], SamplingStream::new(seed)).unwrap();
        assert_eq!(t.get(0), &[2, 3]);
    }
}

#[test]
fn uniform_inclusion_frequency() {
    // node 0 has two neighbours and ten non-neighbours
    let g = graph(13, &[(0, 1), (0, 2)]);
    let draws = 100_000u64;
    let mut hits = [0u64; 13];
    for seed in 0..draws {
        let t = random_negatives(&g, &[0], SamplingStream::new(seed));
        assert_eq!(t.get(0).len(), 3);
        for &v in t.get(0) {
            hits[v] += 1;
        }
    }
    assert_eq!(hits[0] + hits[1] + hits[2], 0);
    for &h in &hits[3..] {
        let f = h as f64 / draws as f64;
        assert!((f - 0.3).abs() < 0.01, "{f}");
    }
}

/// Share of lists holding two nodes with identical features, counting only
/// anchors whose pool has at least as many distinct rows as negatives.
fn duplicate_rate(g: &Graph, table_for: impl Fn(SamplingStream) -> Vec<Vec<usize>>) -> f64 {
    let x = g.features();
    let avoidable: Vec<bool> = (0..g.n())
        .map(|i| {
            let mut rows: Vec<&[f64]> = (0..g.n()).filter(|&v| v != i && !g.has_edge(i, v)).map(|v| x.row(v)).collect();
            let pool = rows.len();
            rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
            rows.dedup();
            (g.degree(i) + 1).min(pool) <= rows.len()
        })
        .collect();
    let mut lists = 0usize;
    let mut dup = 0usize;
    for epoch in 0..2000 {
        let stream = SamplingStream {
            seed: 1,
            epoch,
            layer: 0,
        };
        for (i, negs) in table_for(stream).into_iter().enumerate() {
            if negs.len() < 2 || !avoidable[i] {
                continue;
            }
            lists += 1;
            let same = negs
                .iter()
                .enumerate()
                .any(|(a, &u)| negs[a + 1..].iter().any(|&v| x.row(u) == x.row(v)));
            dup += usize::from(same);
        }
    }
    assert!(lists > 0);
    dup as f64 / lists as f64
}

#[test]
fn full_dpp_avoids_duplicate_features_more_than_uniform() {
    // noise-free blocks: every block shares one feature row
    let g = sbm(4, 3, 0.7, 0.15, 0.0, 2);
    let anchors: Vec<usize> = (0..g.n()).collect();
    let labels = g.labels().to_vec();
    let emb = Embeddings::new(g.features(), &labels).unwrap();
    let spec = KernelSpec::new(KernelVariant::Cosine, 0.001).unwrap();
    let dpp = duplicate_rate(&g, |s| {
        let t = diverse_negatives_full(&g, &emb, &spec, &anchors, s).unwrap();
        anchors.iter().map(|&i| t.get(i).to_vec()).collect()
    });
    let uniform = duplicate_rate(&g, |s| {
        let t = random_negatives(&g, &anchors, s);
        anchors.iter().map(|&i| t.get(i).to_vec()).collect()
    });
    assert!(dpp < 0.05 && uniform > 0.3, "dpp {dpp} uniform {uniform}");
}

#[test]
fn tables_exclude_self_and_neighbours() {
    for seed in 0..4 {
        let g = sbm(3, 12, 0.4, 0.05, 0.4, seed);
        let anchors: Vec<usize> = (0..g.n()).collect();
        let membership = g.labels().to_vec();
        for strategy in [NegStrategy::Sdgcn, NegStrategy::FullDpp, NegStrategy::Random] {
            for variant in KernelVariant::ALL {
                let cfg = NegativeConfig {
                    strategy,
                    kernel: KernelSpec::new(variant, 0.01).unwrap(),
                    path_len: 4,
                };
                let t = build_negative_table(&g, g.features(), &membership, &cfg, &anchors, SamplingStream::new(seed))
                    .unwrap();
                for i in 0..g.n() {
                    let negs = t.get(i);
                    assert!(negs.len() <= g.degree(i) + 1);
                    assert!(negs.windows(2).all(|w| w[0] < w[1]));
                    assert!(negs.iter().all(|&v| v != i && !g.has_edge(i, v)));
                }
            }
        }
    }
}

#[test]
fn tables_are_stream_deterministic() {
    let g = sbm(3, 10, 0.4, 0.05, 0.4, 5);
    let anchors: Vec<usize> = (0..g.n()).collect();
    let membership = g.labels().to_vec();
    let cfg = NegativeConfig::default();
    let s = SamplingStream::new(11);
    let a = build_negative_table(&g, g.features(), &membership, &cfg, &anchors, s).unwrap();
    let b = build_negative_table(&g, g.features(), &membership, &cfg, &anchors, s).unwrap();
    assert_eq!(a, b);
    let other = SamplingStream { epoch: 1, ..s };
    let c = build_negative_table(&g, g.features(), &membership, &cfg, &anchors, other).unwrap();
    assert_ne!(a, c);
}

#[test]
fn full_dpp_refuses_large_graphs() {
    let n = FULL_DPP_MAX_NODES + 1;
    let g = path(n);
    let membership = vec![0; n];
    let emb = Embeddings::new(g.features(), &membership).unwrap();
    let err = diverse_negatives_full(&g, &emb, &KernelSpec::default(), &[0], SamplingStream::new(0)).unwrap_err();
    assert!(matches!(err, Error::GraphTooLarge { .. }));
}

#[test]
fn anchor_strategies() {
    let g = star(6);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(select_anchor_nodes(&g, AnchorStrategy::All, &mut rng).unwrap(), (0..7).collect::<Vec<_>>());
    assert_eq!(select_anchor_nodes(&g, AnchorStrategy::DegreeAboveOne, &mut rng).unwrap(), vec![0]);
    assert_eq!(select_anchor_nodes(&g, AnchorStrategy::TopDegree(0.3), &mut rng).unwrap(), vec![0, 1, 2]);
    let picked = select_anchor_nodes(&g, AnchorStrategy::Random(0.5), &mut rng).unwrap();
    assert_eq!(picked.len(), 4);
    assert!(select_anchor_nodes(&g, AnchorStrategy::Random(0.0), &mut rng).is_err());
    assert!(select_anchor_nodes(&g, AnchorStrategy::TopDegree(1.5), &mut rng).is_err());
    for s in ["all", "deg1", "topk:0.25", "rand:0.5"] {
        let parsed: AnchorStrategy = s.parse().unwrap();
        assert_eq!(parsed.to_string(), s);
    }
    assert!("every".parse::<AnchorStrategy>().is_err());
}

#[test]
fn cost_arithmetic() {
    let r = cost_estimate(3327, 2.74, 5.0);
    assert_eq!(r.full_cost, 3327f64.powi(3));
    assert!((r.reduced_cost - 13.7f64.powi(3)).abs() < 1e-9);
}
