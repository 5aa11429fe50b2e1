//! Seeded random instances for tests and benchmarks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::graph::SimilarityGraph;
use crate::tree::{Dendrogram, DendrogramBuilder};

/// Binary tree built by merging two uniformly chosen clusters until one
/// remains.
pub fn random_binary_tree<R: Rng>(rng: &mut R, colors: &[usize], num_colors: usize) -> Result<Dendrogram> {
    random_tree_with(rng, colors, num_colors, 2)
}

/// Like [`random_binary_tree`] but each merge takes between 2 and
/// `max_arity` clusters.
pub fn random_tree_with<R: Rng>(
    rng: &mut R,
    colors: &[usize],
    num_colors: usize,
    max_arity: usize,
) -> Result<Dendrogram> {
    let mut b = DendrogramBuilder::new(colors, num_colors)?;
    let mut pool: Vec<_> = (0..colors.len()).map(|i| b.leaf(i)).collect();
    while pool.len() > 1 {
        let arity = rng.random_range(2..=max_arity.max(2)).min(pool.len());
        pool.shuffle(rng);
        let group: Vec<_> = pool.split_off(pool.len() - arity);
        pool.push(b.merge(&group)?);
    }
    b.finish(pool[0])
}

/// Binary tree that, with probability `chain`, grows the cluster made by
/// the previous merge instead of picking two clusters at random. `chain = 1`
/// gives a caterpillar over a random point order.
pub fn random_skewed_tree<R: Rng>(rng: &mut R, colors: &[usize], num_colors: usize, chain: f64) -> Result<Dendrogram> {
    let mut b = DendrogramBuilder::new(colors, num_colors)?;
    let mut pool: Vec<_> = (0..colors.len()).map(|i| b.leaf(i)).collect();
    pool.shuffle(rng);
    let mut last = pool.pop().expect("at least one point");
    while !pool.is_empty() {
        if rng.random_bool(chain) {
            let i = rng.random_range(0..pool.len());
            let other = pool.swap_remove(i);
            last = b.merge(&[last, other])?;
        } else {
            pool.push(last);
            pool.shuffle(rng);
            let x = pool.pop().expect("two clusters");
            let y = pool.pop().expect("two clusters");
            last = b.merge(&[x, y])?;
        }
    }
    b.finish(last)
}

/// Caterpillar over points `0..n` in order: `((0,1),2),...`.
pub fn comb_tree(colors: &[usize], num_colors: usize) -> Result<Dendrogram> {
    let mut b = DendrogramBuilder::new(colors, num_colors)?;
    let mut acc = b.leaf(0);
    for i in 1..colors.len() {
        let leaf = b.leaf(i);
        acc = b.merge(&[acc, leaf])?;
    }
    b.finish(acc)
}

/// Each point gets color 0 with probability `p0`, otherwise a uniform
/// color among the rest.
pub fn random_colors<R: Rng>(rng: &mut R, n: usize, num_colors: usize, p0: f64) -> Vec<usize> {
    (0..n).map(|_| if num_colors == 1 || rng.random_bool(p0) { 0 } else { rng.random_range(1..num_colors) }).collect()
}

/// Symmetric weights uniform in `[0, 1)`.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize) -> SimilarityGraph {
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let x: f64 = rng.random();
            w[i][j] = x;
            w[j][i] = x;
        }
    }
    SimilarityGraph::from_fn(n, |i, j| w[i][j]).expect("finite weights")
}

/// Symmetric weights drawn from `{0, 1/levels, ..., 1}`; forces ties in
/// linkage.
pub fn random_dyadic_graph<R: Rng>(rng: &mut R, n: usize, levels: u32) -> SimilarityGraph {
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let x = rng.random_range(0..=levels) as f64 / levels as f64;
            w[i][j] = x;
            w[j][i] = x;
        }
    }
    SimilarityGraph::from_fn(n, |i, j| w[i][j]).expect("finite weights")
}
