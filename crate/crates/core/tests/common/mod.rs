//! Brute-force oracles shared by the integration tests. None of these use
//! the cached leaf or color counts of the tree under test.

#![allow(dead_code)]

use std::collections::HashSet;

use fairhc::tree::NodeKind;
use fairhc::{Dendrogram, NodeId, SimilarityGraph};

/// Points below `v`, found by walking children.
pub fn leaves_below(t: &Dendrogram, v: NodeId) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![v];
    while let Some(x) = stack.pop() {
        match t.kind(x).unwrap() {
            NodeKind::Leaf(p) => out.push(p),
            NodeKind::Dummy => {}
            NodeKind::Internal => stack.extend_from_slice(t.children(x)),
        }
    }
    out.sort_unstable();
    out
}

/// Leaf count and color counts below `v` by walking children.
pub fn recount(t: &Dendrogram, v: NodeId) -> (usize, Vec<usize>) {
    let pts = leaves_below(t, v);
    let mut colors = vec![0; t.num_colors()];
    for &p in &pts {
        colors[t.point_colors()[p]] += 1;
    }
    (pts.len(), colors)
}

/// Every live node's cached counts agree with a recount.
pub fn counts_consistent(t: &Dendrogram) -> bool {
    t.preorder(t.root()).into_iter().all(|v| {
        let (size, colors) = recount(t, v);
        t.leaf_count(v).unwrap() == size && t.color_counts(v).unwrap() == colors.as_slice()
    })
}

/// Sorted points of the whole tree plus root color counts, by recount.
pub fn fingerprint(t: &Dendrogram) -> (Vec<usize>, Vec<usize>) {
    let pts = leaves_below(t, t.root());
    let (_, colors) = recount(t, t.root());
    (pts, colors)
}

/// Size of the smallest cluster holding points `i` and `j`, from ancestor
/// sets.
pub fn lca_size(t: &Dendrogram, i: usize, j: usize) -> usize {
    let mut up = HashSet::new();
    let mut x = Some(t.leaf_node(i).unwrap());
    while let Some(v) = x {
        up.insert(v);
        x = t.parent(v);
    }
    let mut y = t.leaf_node(j).unwrap();
    while !up.contains(&y) {
        y = t.parent(y).unwrap();
    }
    leaves_below(t, y).len()
}

/// Dasgupta cost summed pair by pair.
pub fn oracle_cost(t: &Dendrogram, g: &SimilarityGraph) -> f64 {
    let n = g.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += g.weight(i, j) * lca_size(t, i, j) as f64;
        }
    }
    total
}

/// Average linkage recomputing every cluster-pair average from point
/// weights at every step. Returns `(smaller id, larger id, average)`; ids
/// follow creation order and ties go to the smallest id pair.
pub fn naive_average_linkage(g: &SimilarityGraph) -> Vec<(usize, usize, f64)> {
    let n = g.len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::new();
    let mut next = n;
    while clusters.len() > 1 {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut sum = 0.0;
                for &x in &clusters[a].1 {
                    for &y in &clusters[b].1 {
                        sum += g.weight(x, y);
                    }
                }
                let avg = sum / (clusters[a].1.len() * clusters[b].1.len()) as f64;
                let (ia, ib) = (clusters[a].0, clusters[b].0);
                let pair = (ia.min(ib), ia.max(ib));
                let better = match best {
                    None => true,
                    Some((bavg, bpair, _, _)) => avg > bavg || (avg == bavg && pair < bpair),
                };
                if better {
                    best = Some((avg, pair, a, b));
                }
            }
        }
        let (avg, pair, a, b) = best.unwrap();
        let mut members = clusters[a].1.clone();
        members.extend_from_slice(&clusters[b].1);
        clusters.remove(b);
        clusters.remove(a);
        clusters.push((next, members));
        next += 1;
        merges.push((pair.0, pair.1, avg));
    }
    merges
}

/// ε-relative balance from recounted child sizes.
pub fn oracle_balanced(t: &Dendrogram, v: NodeId, eps: f64) -> bool {
    let n = leaves_below(t, v).len() as f64;
    let c = t.children(v).len() as f64;
    t.children(v).iter().all(|&ch| {
        let s = leaves_below(t, ch).len() as f64;
        s >= (1.0 / c - eps) * n - 1e-9 * n && s <= (1.0 / c + eps) * n + 1e-9 * n
    })
}
