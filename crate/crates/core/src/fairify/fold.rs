use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::operators::{shallow_fold, shallow_fold_logged, SeparationLog};
use crate::tree::{Dendrogram, NodeId};

/// Orders nodes by their fraction of `color`, exactly (cross-multiplied
/// integer counts), ties broken by ascending node id.
fn by_balance(tree: &Dendrogram, color: usize) -> impl Fn(&NodeId, &NodeId) -> Ordering + '_ {
    move |&a, &b| {
        let (ca, na) = (tree.colors_of(a)[color] as u128, tree.size(a) as u128);
        let (cb, nb) = (tree.colors_of(b)[color] as u128, tree.size(b) as u128);
        (ca * nb).cmp(&(cb * na)).then(a.cmp(&b))
    }
}

/// Sizes of `k` contiguous chunks over `m` items, differing by at most one,
/// larger chunks first.
pub fn chunk_sizes(m: usize, k: usize) -> Vec<usize> {
    (0..k).map(|j| m / k + usize::from(j < m % k)).collect()
}

/// Sorts sibling nodes by their fraction of `color`, cuts the order into `k`
/// contiguous chunks and folds together the i-th member of every chunk.
/// Groups with a single member are left as they are. Returns the resulting
/// nodes, one per chunk position.
pub fn fold_by_color(tree: &mut Dendrogram, children: &[NodeId], color: usize, k: usize) -> Result<Vec<NodeId>> {
    fold_by_color_with(tree, children, color, k, None)
}

pub(crate) fn fold_by_color_with(
    tree: &mut Dendrogram,
    children: &[NodeId],
    color: usize,
    k: usize,
    mut log: Option<(&mut SeparationLog, usize)>,
) -> Result<Vec<NodeId>> {
    if k < 2 {
        return Err(Error::Parameter(format!("fold width must be at least 2, got {k}")));
    }
    if children.len() < k {
        return Err(Error::Parameter(format!("cannot fold {} nodes into {k} chunks", children.len())));
    }
    if color >= tree.num_colors() {
        return Err(Error::Parameter(format!("color {color} out of range")));
    }
    for &c in children {
        tree.check(c)?;
    }
    let mut order = children.to_vec();
    order.sort_by(by_balance(tree, color));

    let sizes = chunk_sizes(order.len(), k);
    let mut chunks = Vec::with_capacity(k);
    let mut rest = order.as_slice();
    for s in sizes {
        let (head, tail) = rest.split_at(s);
        chunks.push(head);
        rest = tail;
    }

    let width = chunks[0].len();
    let mut out = Vec::with_capacity(width);
    for i in 0..width {
        let group: Vec<NodeId> = chunks.iter().filter_map(|c| c.get(i).copied()).collect();
        if group.len() < 2 {
            out.push(group[0]);
            continue;
        }
        let f = match log.as_mut() {
            Some((log, level)) => shallow_fold_logged(tree, &group, *level, log)?,
            None => shallow_fold(tree, &group)?,
        };
        out.push(f);
    }
    Ok(out)
}
