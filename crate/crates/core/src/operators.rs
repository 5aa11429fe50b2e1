//! Tree rewriting operators: subtree deletion/insertion and shallow folding,
//! plus the log of leaf pairs whose lowest-common-ancestor cluster they
//! resize.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{Dendrogram, NodeId, NodeKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    DelIns,
    Fold,
    /// Rebuilding a subtree as a trivial topology.
    Flatten,
}

/// Every pair `(a, b)` with `a` in `moved` and `b` in `partners` had its
/// LCA leaf count go from `before` to `after`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationBlock {
    pub moved: Vec<usize>,
    pub partners: Vec<usize>,
    pub before: usize,
    pub after: usize,
}

impl SeparationBlock {
    /// The pair's smallest enclosing cluster grew.
    pub fn is_split(&self) -> bool {
        self.after > self.before
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.moved.iter().flat_map(move |&a| self.partners.iter().map(move |&b| (a.min(b), a.max(b))))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationEvent {
    pub level: usize,
    pub kind: OpKind,
    pub blocks: Vec<SeparationBlock>,
}

/// Append-only record of pair-level LCA changes. Pairs are stored as
/// bipartite blocks and only expanded on demand.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeparationLog {
    events: Vec<SeparationEvent>,
}

/// Outcome of the pair-level audit: how many recursion levels each pair was
/// separated at.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeparationAudit {
    pub pairs_separated: usize,
    pub pairs_multi_level: usize,
    /// One offending pair and its levels, if any.
    pub example: Option<(usize, usize, Vec<usize>)>,
}

impl SeparationAudit {
    pub fn passed(&self) -> bool {
        self.pairs_multi_level == 0
    }
}

impl SeparationLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: SeparationEvent) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[SeparationEvent] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Levels at which each pair was separated, where a block counts when
    /// `counts(event, block)` says so. Dense over all `n(n-1)/2` pairs.
    pub fn audit_with(&self, n: usize, counts: impl Fn(&SeparationEvent, &SeparationBlock) -> bool) -> SeparationAudit {
        let idx = |i: usize, j: usize| i * n - i * (i + 1) / 2 + (j - i - 1);
        let mut first = vec![u32::MAX; n * n.saturating_sub(1) / 2];
        let mut multi: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for e in &self.events {
            for b in e.blocks.iter().filter(|b| counts(e, b)) {
                for (i, j) in b.pairs() {
                    let slot = &mut first[idx(i, j)];
                    if *slot == u32::MAX {
                        *slot = e.level as u32;
                    } else if *slot != e.level as u32 {
                        let levels = multi.entry((i, j)).or_insert_with(|| vec![*slot as usize]);
                        if !levels.contains(&e.level) {
                            levels.push(e.level);
                        }
                    }
                }
            }
        }
        let example = multi.iter().min_by_key(|(k, _)| **k).map(|(&(i, j), l)| (i, j, l.clone()));
        SeparationAudit {
            pairs_separated: first.iter().filter(|&&s| s != u32::MAX).count(),
            pairs_multi_level: multi.len(),
            example,
        }
    }

    /// Pair audit counting blocks in which the pair's enclosing cluster grew
    /// through subtree moves or folds.
    pub fn audit(&self, n: usize) -> SeparationAudit {
        self.audit_with(n, |e, b| e.kind != OpKind::Flatten && b.is_split())
    }
}

/// Result of [`del_ins`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DelInsOutcome {
    /// The node spliced in above the insertion point; `None` when `u`
    /// filled a dummy slot directly.
    pub new_parent: Option<NodeId>,
    /// Former parent of `u` that was contracted away, if it was left with a
    /// single child.
    pub contracted: Option<NodeId>,
}

/// Deletes the subtree at `u` and reinserts it at `v`.
///
/// Deletion removes `u` from its parent; if the parent is left with one
/// child, that child is contracted into the parent's slot. Insertion splices
/// a new node with children `[v, u]` between `v` and its parent (making it
/// the root if `v` was the root). If `v` is a dummy, `u` takes the dummy's
/// place instead. Cached counts are updated along the two affected paths only.
pub fn del_ins(tree: &mut Dendrogram, u: NodeId, v: NodeId) -> Result<DelInsOutcome> {
    tree.check(u)?;
    tree.check(v)?;
    if tree.is_dummy(u) {
        return Err(Error::Precondition(format!("cannot move dummy {u}")));
    }
    let pu = tree.parent(u).ok_or_else(|| Error::Precondition(format!("cannot delete the root {u}")))?;
    if tree.is_ancestor(u, v) {
        return Err(Error::Precondition(format!("insertion point {v} lies inside the moved subtree {u}")));
    }
    if v == pu {
        return Err(Error::Precondition(format!("insertion point {v} is the parent of {u}")));
    }
    if tree.children(pu).len() < 2 {
        return Err(Error::Precondition(format!("{u} has no sibling")));
    }

    let moved = tree.size(u);
    let colors = tree.colors_of(u).to_vec();

    tree.detach(pu, u);
    tree.shift_counts(Some(pu), moved, &colors, false);
    let contracted = if tree.children(pu).len() == 1 {
        let s = tree.children(pu)[0];
        tree.replace_in_parent(pu, s);
        tree.tombstone(pu);
        Some(pu)
    } else {
        None
    };

    if tree.is_dummy(v) {
        tree.replace_in_parent(v, u);
        tree.tombstone(v);
        let parent = tree.parent(u);
        tree.shift_counts(parent, moved, &colors, true);
        return Ok(DelInsOutcome { new_parent: None, contracted });
    }

    let g = tree.parent(v);
    let slot = g.map(|g| tree.child_index(g, v));
    let p = tree.alloc_internal(vec![v, u]);
    match (g, slot) {
        (Some(g), Some(idx)) => {
            tree.replace_child_at(g, idx, p);
            tree.shift_counts(Some(g), moved, &colors, true);
        }
        _ => tree.set_root(p),
    }
    Ok(DelInsOutcome { new_parent: Some(p), contracted })
}

/// Replaces sibling subtrees `roots` (all children of one parent) by a single
/// node whose children are the union of their children, then left-comb
/// binarizes it. A leaf in `roots` contributes itself. The new node takes
/// the slot of `roots[0]`; its id is returned.
pub fn shallow_fold(tree: &mut Dendrogram, roots: &[NodeId]) -> Result<NodeId> {
    if roots.len() < 2 {
        return Err(Error::Precondition("a fold needs at least two subtrees".into()));
    }
    for &r in roots {
        tree.check(r)?;
        if tree.is_dummy(r) {
            return Err(Error::Precondition(format!("cannot fold dummy {r}")));
        }
    }
    let p = tree.parent(roots[0]).ok_or_else(|| Error::Precondition("folded subtrees need a parent".into()))?;
    for (i, &r) in roots.iter().enumerate() {
        if tree.parent(r) != Some(p) {
            return Err(Error::Precondition(format!("{r} is not a sibling of {}", roots[0])));
        }
        if roots[..i].contains(&r) {
            return Err(Error::Precondition(format!("{r} listed twice")));
        }
    }

    let slot = tree.child_index(p, roots[0]);
    let before_slot = tree.children(p)[..slot].iter().filter(|c| !roots.contains(c)).count();
    let mut hoisted = Vec::new();
    for &r in roots {
        if tree.is_leaf(r) {
            hoisted.push(r);
        } else {
            hoisted.extend_from_slice(tree.children(r));
        }
    }
    for &r in roots {
        tree.detach(p, r);
    }
    let f = tree.alloc_internal(hoisted);
    for &r in roots {
        if tree.kind(r)? == NodeKind::Internal {
            tree.tombstone(r);
        }
    }
    tree.insert_child_at(p, before_slot, f);
    tree.comb_children(f);
    Ok(f)
}

/// Deepest-first enumeration of the partners of subtree `u`: every leaf
/// outside `u` paired with the leaf count of its LCA with `u`. Stops after
/// the ancestor `stop` (inclusive) or once `limit` partners were found.
fn partner_profile(tree: &Dendrogram, u: NodeId, stop: Option<NodeId>, limit: Option<usize>) -> HashMap<usize, usize> {
    let mut out = HashMap::new();
    let mut cur = u;
    while let Some(a) = tree.parent(cur) {
        let size = tree.size(a);
        for &c in tree.children(a) {
            if c != cur {
                for j in tree.points_under(c) {
                    out.insert(j, size);
                }
            }
        }
        if Some(a) == stop || limit.is_some_and(|l| out.len() >= l) {
            break;
        }
        cur = a;
    }
    out
}

fn group_blocks(
    moved: &[usize],
    before: &HashMap<usize, usize>,
    after: &HashMap<usize, usize>,
) -> Vec<SeparationBlock> {
    let mut groups: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (&j, &b) in before {
        let a = after.get(&j).copied().unwrap_or(b);
        if a != b {
            groups.entry((b, a)).or_default().push(j);
        }
    }
    let mut blocks: Vec<_> = groups
        .into_iter()
        .map(|((before, after), mut partners)| {
            partners.sort_unstable();
            SeparationBlock { moved: moved.to_vec(), partners, before, after }
        })
        .collect();
    blocks.sort_by_key(|b| (b.before, b.after));
    blocks
}

/// [`del_ins`] that also records, for every leaf outside `u` whose LCA with
/// `u` changes size, a separation block at `level`.
pub fn del_ins_logged(
    tree: &mut Dendrogram,
    u: NodeId,
    v: NodeId,
    level: usize,
    log: &mut SeparationLog,
) -> Result<DelInsOutcome> {
    let scope = match tree.parent(u) {
        Some(pu) if tree.exists(v) && pu != v => Some(tree.lca(pu, v)?),
        _ => None,
    };
    let moved = tree.points_under(u);
    let before = partner_profile(tree, u, scope, None);
    let outcome = del_ins(tree, u, v)?;
    let after = partner_profile(tree, u, None, Some(before.len()));
    log.push(SeparationEvent { level, kind: OpKind::DelIns, blocks: group_blocks(&moved, &before, &after) });
    Ok(outcome)
}

/// [`shallow_fold`] that records the pairs inside each folded subtree whose
/// LCA changes size.
pub fn shallow_fold_logged(
    tree: &mut Dendrogram,
    roots: &[NodeId],
    level: usize,
    log: &mut SeparationLog,
) -> Result<NodeId> {
    // (points, representative leaf, size of the folded root) per root child.
    let mut groups: Vec<(usize, Vec<(Vec<usize>, NodeId)>)> = Vec::new();
    for &r in roots {
        if tree.kind(r)? != NodeKind::Internal {
            continue;
        }
        let parts = tree
            .children(r)
            .iter()
            .map(|&c| {
                let pts = tree.points_under(c);
                let rep = tree.leaf_node(pts[0]);
                rep.map(|rep| (pts, rep))
            })
            .collect::<Result<Vec<_>>>()?;
        groups.push((tree.size(r), parts));
    }
    let f = shallow_fold(tree, roots)?;
    let mut blocks = Vec::new();
    for (before, parts) in &groups {
        for (a, (pa, ra)) in parts.iter().enumerate() {
            for (pb, rb) in &parts[a + 1..] {
                let after = tree.size(tree.lca(*ra, *rb)?);
                if after != *before {
                    blocks.push(SeparationBlock { moved: pa.clone(), partners: pb.clone(), before: *before, after });
                }
            }
        }
    }
    log.push(SeparationEvent { level, kind: OpKind::Fold, blocks });
    Ok(f)
}

/// [`Dendrogram::make_trivial`] that records every pair whose LCA was below `v`.
pub fn make_trivial_logged(tree: &mut Dendrogram, v: NodeId, level: usize, log: &mut SeparationLog) -> Result<()> {
    let after = tree.leaf_count(v)?;
    let mut blocks = Vec::new();
    for x in tree.preorder(v) {
        if x == v || tree.kind(x)? != NodeKind::Internal {
            continue;
        }
        let before = tree.size(x);
        let parts: Vec<Vec<usize>> = tree.children(x).iter().map(|&c| tree.points_under(c)).collect();
        for a in 0..parts.len() {
            let partners: Vec<usize> = parts[a + 1..].iter().flatten().copied().collect();
            if !partners.is_empty() && before != after {
                blocks.push(SeparationBlock { moved: parts[a].clone(), partners, before, after });
            }
        }
    }
    tree.make_trivial(v)?;
    log.push(SeparationEvent { level, kind: OpKind::Flatten, blocks });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lca_table(t: &Dendrogram) -> Vec<Vec<usize>> {
        let n = t.num_points();
        let mut m = vec![vec![0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let s = t.size(t.lca_of_points(i, j).unwrap());
                m[i][j] = s;
                m[j][i] = s;
            }
        }
        m
    }

    #[test]
    fn smallest_del_ins() {
        // ((u,s),v) with u = 0, s = 1, v = 2.
        let mut t = Dendrogram::from_nested_uncolored("((0,1),2)", 3).unwrap();
        let (u, s, v) = (NodeId(0), NodeId(1), NodeId(2));
        let out = del_ins(&mut t, u, v).unwrap();
        t.validate().unwrap();
        assert_eq!(t.children(t.root()), &[s, out.new_parent.unwrap()]);
        assert_eq!(t.children(out.new_parent.unwrap()), &[v, u]);
        assert_eq!(out.contracted, Some(NodeId(3)));
        assert!(!t.exists(NodeId(3)));
    }

    #[test]
    fn del_ins_at_root_makes_new_root() {
        let mut t = Dendrogram::from_nested_uncolored("((0,1),(2,3))", 4).unwrap();
        let old_root = t.root();
        let out = del_ins(&mut t, NodeId(0), old_root).unwrap();
        t.validate().unwrap();
        assert_eq!(t.root(), out.new_parent.unwrap());
        assert_eq!(t.children(t.root()), &[old_root, NodeId(0)]);
        assert_eq!(t.leaf_count(old_root).unwrap(), 3);
    }

    #[test]
    fn del_ins_preconditions() {
        let mut t = Dendrogram::from_nested_uncolored("((0,1),(2,3))", 4).unwrap();
        let root = t.root();
        let left = t.parent(NodeId(0)).unwrap();
        assert!(del_ins(&mut t, root, NodeId(0)).is_err());
        assert!(del_ins(&mut t, left, NodeId(0)).is_err());
        assert!(del_ins(&mut t, NodeId(0), left).is_err());
        assert!(del_ins(&mut t, NodeId(0), NodeId(0)).is_err());
    }

    #[test]
    fn del_ins_conserves_counts_along_paths() {
        let mut t = Dendrogram::from_nested_uncolored("((((0,1),2),3),(((4,5),6),7))", 8).unwrap();
        let moved = t.parent(NodeId(0)).unwrap(); // (0,1), size 2
        let before: Vec<(NodeId, usize)> = t.node_ids().map(|v| (v, t.size(v))).collect();
        let old_anc: Vec<NodeId> = {
            let mut a = Vec::new();
            let mut c = t.parent(moved);
            while let Some(x) = c {
                a.push(x);
                c = t.parent(x);
            }
            a
        };
        del_ins(&mut t, moved, NodeId(6)).unwrap();
        t.validate().unwrap();
        for (v, s) in before {
            if !t.exists(v) {
                continue;
            }
            let now = t.size(v);
            if v == t.root() {
                assert_eq!(now, s);
            } else if old_anc.contains(&v) {
                assert_eq!(now, s - 2, "old ancestor {v}");
            } else if t.is_ancestor(v, moved) && v != moved {
                assert_eq!(now, s + 2, "new ancestor {v}");
            } else {
                assert_eq!(now, s);
            }
        }
    }

    #[test]
    fn fold_structure() {
        let mut t = Dendrogram::from_nested_uncolored("(((0,1),(2,3)),4)", 5).unwrap();
        let top = t.children(t.root())[0];
        let a = t.children(top)[0];
        let b = t.children(top)[1];
        let f = shallow_fold(&mut t, &[a, b]).unwrap();
        // top is left with the single folded child until the caller cleans it up.
        assert_eq!(t.children(top), &[f]);
        assert_eq!(t.leaf_count(f).unwrap(), 4);
        assert_eq!(t.points_under(f), vec![0, 1, 2, 3]);
        assert_eq!(t.children(f).len(), 2);
        assert_eq!(t.point(t.children(f)[1]), Some(3));
    }

    #[test]
    fn fold_balance_of_monochromatic_halves() {
        let colors = [1, 1, 0, 0, 0];
        let mut t = Dendrogram::from_nested("((0,1),(2,3),4)", &colors, 2).unwrap();
        let kids = t.children(t.root()).to_vec();
        let f = shallow_fold(&mut t, &kids[..2]).unwrap();
        assert_eq!(crate::balance::cluster_balance(&t, f, 1).unwrap(), 0.5);
        assert_eq!(t.children(t.root()), &[f, NodeId(4)]);
        t.validate().unwrap();
    }

    #[test]
    fn fold_preconditions() {
        let mut t = Dendrogram::from_nested_uncolored("((0,1),(2,3))", 4).unwrap();
        let a = t.children(t.root())[0];
        assert!(shallow_fold(&mut t, &[a]).is_err());
        assert!(shallow_fold(&mut t, &[a, NodeId(2)]).is_err());
    }

    #[test]
    fn logged_events_match_brute_force_tables() {
        let mut t = Dendrogram::from_nested_uncolored("((((0,1),2),(3,4)),((5,6),(7,(8,9))))", 10).unwrap();
        let mut log = SeparationLog::new();
        let before = lca_table(&t);
        let u = t.parent(NodeId(0)).unwrap();
        del_ins_logged(&mut t, u, NodeId(7), 0, &mut log).unwrap();
        let after = lca_table(&t);
        let mut logged: Vec<(usize, usize)> = log.events()[0].blocks.iter().flat_map(|b| b.pairs()).collect();
        logged.sort_unstable();
        let moved = [0, 1];
        let mut expected = Vec::new();
        for i in 0..10 {
            for j in (i + 1)..10 {
                if moved.contains(&i) != moved.contains(&j) && before[i][j] != after[i][j] {
                    expected.push((i, j));
                }
            }
        }
        assert_eq!(logged, expected);
        for b in &log.events()[0].blocks {
            for (i, j) in b.pairs() {
                assert_eq!((before[i][j], after[i][j]), (b.before, b.after));
            }
        }
    }
}
