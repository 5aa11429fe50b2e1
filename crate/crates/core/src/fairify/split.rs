//! Root splitting: give a root exactly `h` children and move subtrees from
//! the largest child to the smallest until the split is ε-relatively
//! balanced.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{del_ins, del_ins_logged, SeparationLog};
use crate::tree::{Dendrogram, NodeId, NodeKind};

/// Smallest subtree that is split rather than given a trivial topology:
/// below `1/eps` leaves ε-balance is not reachable at integer granularity,
/// and below `2h` an `h`-way split is degenerate.
pub fn min_split_size(h: usize, eps: f64) -> usize {
    (2 * h).max((1.0 / eps).ceil() as usize)
}

/// Snapshot of a root's children at one iteration of the splitting loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitState {
    /// `n / h`.
    pub target: f64,
    pub v_max: NodeId,
    pub v_min: NodeId,
    pub n_max: usize,
    pub n_min: usize,
    /// Proportional shortfall of the smallest child.
    pub delta_min: f64,
    /// Proportional excess of the largest child.
    pub delta_max: f64,
    /// `min(delta_min, delta_max)`: the most that can move without pushing
    /// either child past the target.
    pub delta: f64,
    /// `delta * n` computed exactly in leaves.
    pub cap: usize,
    /// `Σ max(0, n_c - n/h)` over children.
    pub excess: f64,
    pub iteration: usize,
}

impl SplitState {
    /// Deviations are measured against the integer sizes nearest the target
    /// (`⌈n/h⌉` for the shortfall, `⌊n/h⌋` for the excess), which equals the
    /// real-valued deviation when `h` divides `n` and keeps `delta * n >= 1`
    /// whenever the root is not yet balanced.
    fn measure(tree: &Dendrogram, v: NodeId, h: usize, iteration: usize) -> Self {
        let n = tree.size(v);
        let target = n as f64 / h as f64;
        let children = tree.children(v);
        let mut v_max = children[0];
        let mut v_min = children[0];
        for &c in &children[1..] {
            if tree.size(c) > tree.size(v_max) {
                v_max = c;
            }
            if tree.size(c) < tree.size(v_min) {
                v_min = c;
            }
        }
        let (n_max, n_min) = (tree.size(v_max), tree.size(v_min));
        let nf = n as f64;
        let short = n.div_ceil(h).saturating_sub(n_min);
        let over = n_max.saturating_sub(n / h);
        let delta_min = short as f64 / nf;
        let delta_max = over as f64 / nf;
        let excess = children.iter().map(|&c| (tree.size(c) as f64 - target).max(0.0)).sum();
        Self {
            target,
            v_max,
            v_min,
            n_max,
            n_min,
            delta_min,
            delta_max,
            delta: delta_min.min(delta_max),
            cap: short.min(over),
            excess,
            iteration,
        }
    }
}

/// One subtree relocation performed while splitting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitMove {
    pub moved: NodeId,
    pub size: usize,
    pub insertion_point: NodeId,
    /// Size bound `delta * n` the moved subtree had to respect.
    pub cap: f64,
    pub state: SplitState,
    pub excess_after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub root: NodeId,
    pub n: usize,
    pub h: usize,
    pub eps: f64,
    pub iterations: usize,
    pub moves: Vec<SplitMove>,
}

/// Descends from `v_max` into the larger child (first on ties) and returns
/// the first node with at most `cap` leaves.
pub fn select_movable_subtree(tree: &Dendrogram, v_max: NodeId, cap: f64) -> Result<NodeId> {
    tree.check(v_max)?;
    if tree.size(v_max) as f64 <= cap {
        return Err(Error::Precondition(format!("{v_max} already fits under the cap {cap}")));
    }
    let mut cur = v_max;
    loop {
        let next = heavier_child(tree, cur).ok_or_else(|| {
            Error::Invariant(format!("descent reached {cur} without finding a subtree of at most {cap} leaves"))
        })?;
        if tree.size(next) as f64 <= cap {
            return Ok(next);
        }
        cur = next;
    }
}

/// Where a subtree of `s` leaves is inserted below `v_min`: a dummy is
/// filled directly; otherwise descend through larger children until the
/// smaller child of the current node has fewer than `s` leaves, and insert
/// beside that smaller child. Reaching a leaf inserts beside the leaf.
pub fn find_insertion_point(tree: &Dendrogram, v_min: NodeId, s: usize) -> Result<NodeId> {
    if tree.kind(v_min)? != NodeKind::Internal {
        return Ok(v_min);
    }
    let mut cur = v_min;
    loop {
        let children = tree.children(cur);
        if children.is_empty() {
            return Ok(cur);
        }
        let heavy = heavier_child(tree, cur).expect("internal node has children");
        let light = children.iter().copied().filter(|&c| c != heavy).min_by_key(|&c| tree.size(c)).unwrap_or(heavy);
        if tree.size(light) < s {
            return Ok(light);
        }
        cur = heavy;
    }
}

fn heavier_child(tree: &Dendrogram, v: NodeId) -> Option<NodeId> {
    let children = tree.children(v);
    let mut best = *children.first()?;
    for &c in &children[1..] {
        if tree.size(c) > tree.size(best) {
            best = c;
        }
    }
    Some(best)
}

/// Every child within the ε window around `n/h`, or within the integer band
/// `[⌊n/h⌋, ⌈n/h⌉]` when the window is narrower than one leaf. No dummies.
fn split_done(tree: &Dendrogram, v: NodeId, h: usize, eps: f64) -> bool {
    let n = tree.size(v);
    let target = n as f64 / h as f64;
    let slack = eps * n as f64 * (1.0 + 1e-12);
    tree.children(v).iter().all(|&c| {
        let s = tree.size(c);
        !tree.is_dummy(c) && ((s as f64 - target).abs() <= slack || (n / h <= s && s <= n.div_ceil(h)))
    })
}

/// Splits the root `v` into exactly `h` ε-relatively balanced children.
///
/// `v`'s children must be binary subtrees. Fails with [`Error::TooSmall`]
/// when `v` has fewer than [`min_split_size`] leaves.
pub fn split_root(tree: &mut Dendrogram, v: NodeId, h: usize, eps: f64) -> Result<SplitReport> {
    let n = tree.leaf_count(v)?;
    if n < min_split_size(h, eps) {
        return Err(Error::TooSmall { size: n, arity: h });
    }
    split_root_with(tree, v, h, eps, None)
}

/// Splitting loop without the size threshold, optionally logging
/// separations at `level`.
pub(crate) fn split_root_with(
    tree: &mut Dendrogram,
    v: NodeId,
    h: usize,
    eps: f64,
    mut log: Option<(&mut SeparationLog, usize)>,
) -> Result<SplitReport> {
    if h < 2 {
        return Err(Error::Parameter(format!("split arity must be at least 2, got {h}")));
    }
    if tree.kind(v)? != NodeKind::Internal {
        return Err(Error::Precondition(format!("{v} is not an internal node")));
    }
    let n = tree.size(v);
    if n < h {
        return Err(Error::TooSmall { size: n, arity: h });
    }
    if tree.children(v).len() > h {
        return Err(Error::Precondition(format!(
            "{v} already has {} children, more than h = {h}",
            tree.children(v).len()
        )));
    }
    while tree.children(v).len() < h {
        let d = tree.alloc_dummy();
        tree.push_child(v, d);
    }

    // Each productive move lowers Σ|n_c - n/h| and sizes are integers, so
    // this bound is never reached unless an invariant is broken.
    let limit = (2.0 * (h as f64 - 1.0) / eps).ceil() as usize + h + 2 * n;
    let mut moves = Vec::new();
    let mut iteration = 0;
    while !split_done(tree, v, h, eps) {
        if iteration >= limit {
            return Err(Error::Invariant(format!("root splitting did not converge after {limit} moves")));
        }
        let state = SplitState::measure(tree, v, h, iteration);
        let cap = state.cap as f64;
        let u = select_movable_subtree(tree, state.v_max, cap)?;
        let size = tree.size(u);
        let at = find_insertion_point(tree, state.v_min, size)?;
        match log.as_mut() {
            Some((log, level)) => del_ins_logged(tree, u, at, *level, log)?,
            None => del_ins(tree, u, at)?,
        };
        let excess_after = tree.children(v).iter().map(|&c| (tree.size(c) as f64 - state.target).max(0.0)).sum();
        moves.push(SplitMove { moved: u, size, insertion_point: at, cap, state, excess_after });
        iteration += 1;
    }
    Ok(SplitReport { root: v, n, h, eps, iterations: iteration, moves })
}
