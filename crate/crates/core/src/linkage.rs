//! Average-linkage agglomerative clustering on a similarity graph.
//!
//! Clusters are merged in order of decreasing average inter-cluster
//! similarity (sum of cross weights over the product of sizes). Cluster ids
//! follow creation order: points are `0..n`, the `s`-th merge creates
//! cluster `n + s`. Ties on average similarity go to the pair with the
//! lexicographically smallest `(min id, max id)`.
//!
//! Each cluster caches its best partner, so a merge only rescans the rows
//! whose cached partner was one of the two merged clusters. On typical
//! inputs this is O(n²) overall.

use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;
use crate::tree::{Dendrogram, DendrogramBuilder, NodeId};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Merge {
    /// Smaller cluster id.
    pub left: usize,
    /// Larger cluster id.
    pub right: usize,
    /// Average similarity between the two clusters at merge time.
    pub similarity: f64,
}

/// Returns true when candidate `(avg, pair)` beats `(best_avg, best_pair)`.
#[inline]
pub fn beats(avg: f64, pair: (usize, usize), best_avg: f64, best_pair: (usize, usize)) -> bool {
    avg > best_avg || (avg == best_avg && pair < best_pair)
}

#[derive(Clone, Copy)]
struct Partner {
    slot: usize,
    avg: f64,
    pair: (usize, usize),
}

struct State {
    n: usize,
    sums: Vec<f64>,
    size: Vec<usize>,
    id: Vec<usize>,
    active: Vec<bool>,
    partner: Vec<Option<Partner>>,
}

impl State {
    fn key(&self, x: usize, y: usize) -> (f64, (usize, usize)) {
        let avg = self.sums[x * self.n + y] / (self.size[x] * self.size[y]) as f64;
        let (a, b) = (self.id[x], self.id[y]);
        (avg, (a.min(b), a.max(b)))
    }

    fn best_partner(&self, x: usize) -> Option<Partner> {
        let mut best: Option<Partner> = None;
        for y in 0..self.n {
            if y == x || !self.active[y] {
                continue;
            }
            let (avg, pair) = self.key(x, y);
            if best.is_none_or(|b| beats(avg, pair, b.avg, b.pair)) {
                best = Some(Partner { slot: y, avg, pair });
            }
        }
        best
    }
}

/// Runs average linkage and returns the `n - 1` merges in order.
pub fn average_linkage(graph: &SimilarityGraph) -> Result<Vec<Merge>> {
    let n = graph.len();
    if n < 2 {
        return Err(Error::Input(format!("average linkage needs at least 2 points, got {n}")));
    }
    let mut sums = vec![0.0; n * n];
    for i in 0..n {
        sums[i * n..(i + 1) * n].copy_from_slice(graph.row(i));
    }
    let mut st = State { n, sums, size: vec![1; n], id: (0..n).collect(), active: vec![true; n], partner: Vec::new() };
    st.partner = (0..n).map(|x| st.best_partner(x)).collect();

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut best: Option<(usize, Partner)> = None;
        for x in 0..n {
            if !st.active[x] {
                continue;
            }
            if let Some(p) = st.partner[x] {
                if best.is_none_or(|(_, b)| beats(p.avg, p.pair, b.avg, b.pair)) {
                    best = Some((x, p));
                }
            }
        }
        let (x, p) = best.expect("at least two active clusters remain");
        // Keep the slot of the older cluster; the other slot is retired.
        let (keep, drop) = if st.id[x] < st.id[p.slot] { (x, p.slot) } else { (p.slot, x) };
        merges.push(Merge { left: p.pair.0, right: p.pair.1, similarity: p.avg });

        st.active[drop] = false;
        st.partner[drop] = None;
        for y in 0..n {
            if !st.active[y] || y == keep {
                continue;
            }
            let s = st.sums[keep * n + y] + st.sums[drop * n + y];
            st.sums[keep * n + y] = s;
            st.sums[y * n + keep] = s;
        }
        st.size[keep] += st.size[drop];
        st.id[keep] = n + step;

        for y in 0..n {
            if !st.active[y] || y == keep {
                continue;
            }
            match st.partner[y] {
                Some(q) if q.slot == keep || q.slot == drop => st.partner[y] = st.best_partner(y),
                Some(q) => {
                    let (avg, pair) = st.key(y, keep);
                    if beats(avg, pair, q.avg, q.pair) {
                        st.partner[y] = Some(Partner { slot: keep, avg, pair });
                    }
                }
                None => st.partner[y] = st.best_partner(y),
            }
        }
        st.partner[keep] = st.best_partner(keep);
    }
    Ok(merges)
}

/// Builds the binary dendrogram described by a merge list. Node ids equal
/// cluster ids; each internal node lists the smaller cluster id first.
pub fn dendrogram_from_merges(merges: &[Merge], point_colors: &[usize], num_colors: usize) -> Result<Dendrogram> {
    let n = point_colors.len();
    if merges.len() + 1 != n {
        return Err(Error::Shape(format!("{} merges cannot join {n} points", merges.len())));
    }
    let mut builder = DendrogramBuilder::new(point_colors, num_colors)?;
    let mut last = NodeId(0);
    for (s, m) in merges.iter().enumerate() {
        if m.left >= n + s || m.right >= n + s {
            return Err(Error::Shape(format!("merge {s} references a cluster that does not exist yet")));
        }
        last = builder.merge(&[NodeId(m.left), NodeId(m.right)])?;
    }
    builder.finish(last)
}

/// Average linkage straight to a colored dendrogram.
pub fn average_linkage_tree(graph: &SimilarityGraph, point_colors: &[usize], num_colors: usize) -> Result<Dendrogram> {
    if graph.len() != point_colors.len() {
        return Err(Error::Shape("graph and color vector differ in length".into()));
    }
    dendrogram_from_merges(&average_linkage(graph)?, point_colors, num_colors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points() {
        let g = SimilarityGraph::from_fn(2, |_, _| 0.3).unwrap();
        let t = average_linkage_tree(&g, &[0, 0], 1).unwrap();
        assert_eq!(t.children(t.root()), &[NodeId(0), NodeId(1)]);
    }

    #[test]
    fn unique_maximum_merges_first() {
        let g = SimilarityGraph::from_fn(3, |i, j| if (i, j) == (0, 1) { 0.9 } else { 0.1 }).unwrap();
        let m = average_linkage(&g).unwrap();
        assert_eq!((m[0].left, m[0].right), (0, 1));
        assert_eq!((m[1].left, m[1].right), (2, 3));
        assert!((m[1].similarity - 0.1).abs() < 1e-15);
    }

    #[test]
    fn ties_resolve_to_smallest_pair() {
        let g = SimilarityGraph::from_fn(4, |_, _| 1.0).unwrap();
        let m = average_linkage(&g).unwrap();
        let pairs: Vec<_> = m.iter().map(|m| (m.left, m.right)).collect();
        assert_eq!(pairs, vec![(0, 1), (2, 3), (4, 5)]);
    }

    #[test]
    fn rejects_single_point() {
        let g = SimilarityGraph::from_fn(1, |_, _| 0.0).unwrap();
        assert!(matches!(average_linkage(&g), Err(Error::Input(_))));
    }
}
