//! Dasgupta cost: every pair of points pays its similarity times the size of
//! the smallest cluster that contains both.

use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;
use crate::tree::{Dendrogram, NodeKind};

fn check_shape(tree: &Dendrogram, graph: &SimilarityGraph) -> Result<()> {
    if tree.num_points() != graph.len() {
        return Err(Error::Shape(format!(
            "tree has {} leaves but the graph has {} vertices",
            tree.num_points(),
            graph.len()
        )));
    }
    Ok(())
}

/// `w(i,j) * leaf_count(lca(i,j))` for two distinct points.
pub fn edge_cost(tree: &Dendrogram, graph: &SimilarityGraph, i: usize, j: usize) -> Result<f64> {
    check_shape(tree, graph)?;
    let lca = tree.lca_of_points(i, j)?;
    Ok(graph.weight(i, j) * tree.size(lca) as f64)
}

/// Total cost by per-node aggregation. Each pair is visited exactly once, at
/// its lowest common ancestor, by crossing the leaf lists of distinct
/// children, so the whole pass is O(n²) regardless of tree shape.
pub fn total_cost(tree: &Dendrogram, graph: &SimilarityGraph) -> Result<f64> {
    check_shape(tree, graph)?;
    let mut lists: Vec<Vec<usize>> = vec![Vec::new(); tree.arena_len()];
    let mut total = 0.0;
    for v in tree.postorder(tree.root()) {
        match tree.kind(v)? {
            NodeKind::Leaf(p) => lists[v.0].push(p),
            NodeKind::Dummy => {}
            NodeKind::Internal => {
                let children = tree.children(v);
                let mut cross = 0.0;
                for (a, &ca) in children.iter().enumerate() {
                    for &cb in &children[a + 1..] {
                        for &x in &lists[ca.0] {
                            let row = graph.row(x);
                            cross += lists[cb.0].iter().map(|&y| row[y]).sum::<f64>();
                        }
                    }
                }
                total += cross * tree.size(v) as f64;
                let mut merged = Vec::with_capacity(tree.size(v));
                for &c in children {
                    merged.append(&mut lists[c.0]);
                }
                lists[v.0] = merged;
            }
        }
    }
    Ok(total)
}

/// Total cost by summing [`edge_cost`] over all unordered pairs.
/// O(n² · height); used to cross-check [`total_cost`].
pub fn pairwise_total_cost(tree: &Dendrogram, graph: &SimilarityGraph) -> Result<f64> {
    check_shape(tree, graph)?;
    let n = graph.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += graph.weight(i, j) * tree.size(tree.lca_of_points(i, j)?) as f64;
        }
    }
    Ok(total)
}
