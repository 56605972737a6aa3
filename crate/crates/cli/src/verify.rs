use std::collections::HashMap;
use std::fmt;

use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use sdgcn::community::label_propagation;
use sdgcn::dpp::{build_kernel, KernelContext, KernelSpec};
use sdgcn::Graph;

pub const DRAWS: usize = 200_000;
pub const TV_LIMIT: f64 = 0.02;
const BALL: usize = 8;

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub anchor: usize,
    pub candidates: Vec<usize>,
    pub k: usize,
    pub draws: usize,
    pub tv: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.tv < TV_LIMIT
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "verify: order={} k={} draws={} tv={:.5} limit={} {}",
            self.candidates.len(),
            self.k,
            self.draws,
            self.tv,
            TV_LIMIT,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    rec(0, m, k, &mut cur, &mut out);
    out
}

/// Compares empirical k-DPP subset frequencies with enumerated
/// probabilities on the kernel of a BFS ball of at most eight nodes
/// around node 0: the first node is the anchor, the rest are candidates.
pub fn self_test(g: &Graph, spec: KernelSpec, seed: u64) -> Result<VerifyReport> {
    if g.n() < 2 {
        return Err(sdgcn::Error::Validation("self-test needs at least two nodes".into()).into());
    }
    let dist = g.bfs_distances(0);
    let mut ball: Vec<usize> = (0..g.n()).filter(|&i| dist[i].is_some()).collect();
    ball.sort_by_key(|&i| (dist[i], i));
    ball.truncate(BALL);
    if ball.len() < 2 {
        ball = (0..g.n().min(BALL)).collect();
    }
    let sub = g.induced_subgraph(&ball)?;
    let communities = label_propagation(&sub, seed)?;
    let candidates: Vec<usize> = (1..sub.n()).collect();
    let ctx = KernelContext::new(
        0,
        candidates.clone(),
        sub.features(),
        &communities.membership,
        &communities.community_features,
    )?;
    let ensemble = build_kernel(&ctx, &spec)?;
    let m = candidates.len();
    let k = m.min(3);

    let all = subsets(m, k);
    let mut index = HashMap::with_capacity(all.len());
    for (i, s) in all.iter().enumerate() {
        index.insert(s.clone(), i);
    }
    let mut counts = vec![0usize; all.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..DRAWS {
        let s = ensemble.sample(k, &mut rng)?;
        counts[index[&s]] += 1;
    }
    let mut tv = 0.0;
    for (s, &c) in all.iter().zip(&counts) {
        let p = ensemble.probability(s, k)?;
        tv += (c as f64 / DRAWS as f64 - p).abs();
    }
    Ok(VerifyReport {
        anchor: ball[0],
        candidates: ball[1..].to_vec(),
        k,
        draws: DRAWS,
        tv: 0.5 * tv,
    })
}
