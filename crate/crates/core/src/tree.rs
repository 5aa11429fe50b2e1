//! Arena-backed dendrogram.
//!
//! Nodes live in a flat arena and are addressed by [`NodeId`]. Deleting a node
//! leaves a tombstone so ids stay stable for the whole life of a tree; new
//! nodes are always appended. Every node caches its leaf count and per-color
//! leaf counts, and all mutating operations keep those caches exact.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a node in a [`Dendrogram`] arena.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    /// A data point.
    Leaf(usize),
    Internal,
    /// Zero-leaf placeholder, only legal while a root is being split.
    Dummy,
}

#[derive(Clone, Debug, PartialEq)]
struct Node {
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    kind: NodeKind,
    alive: bool,
    leaf_count: usize,
    color_counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dendrogram {
    nodes: Vec<Node>,
    root: NodeId,
    leaf_of_point: Vec<NodeId>,
    point_colors: Vec<usize>,
    num_colors: usize,
}

/// Bottom-up construction helper: leaves are created up front (leaf of point
/// `i` gets id `i`) and internal nodes are added by merging parentless nodes.
#[derive(Debug)]
pub struct DendrogramBuilder {
    tree: Dendrogram,
}

impl DendrogramBuilder {
    pub fn new(point_colors: &[usize], num_colors: usize) -> Result<Self> {
        if num_colors == 0 {
            return Err(Error::Input("at least one color is required".into()));
        }
        if let Some(&c) = point_colors.iter().find(|&&c| c >= num_colors) {
            return Err(Error::Input(format!("color {c} out of range for {num_colors} colors")));
        }
        let mut nodes = Vec::with_capacity(2 * point_colors.len());
        for (point, &color) in point_colors.iter().enumerate() {
            let mut color_counts = vec![0; num_colors];
            color_counts[color] = 1;
            nodes.push(Node {
                parent: None,
                children: Vec::new(),
                kind: NodeKind::Leaf(point),
                alive: true,
                leaf_count: 1,
                color_counts,
            });
        }
        let leaf_of_point = (0..point_colors.len()).map(NodeId).collect();
        Ok(Self {
            tree: Dendrogram { nodes, root: NodeId(0), leaf_of_point, point_colors: point_colors.to_vec(), num_colors },
        })
    }

    /// Uncolored builder (every point gets color 0).
    pub fn uncolored(n: usize) -> Self {
        Self::new(&vec![0; n], 1).expect("single color is always valid")
    }

    pub fn leaf(&self, point: usize) -> NodeId {
        self.tree.leaf_of_point[point]
    }

    /// Creates a new internal node over `children`, which must all be
    /// existing nodes that do not have a parent yet.
    pub fn merge(&mut self, children: &[NodeId]) -> Result<NodeId> {
        if children.len() < 2 {
            return Err(Error::Precondition("a merge needs at least two children".into()));
        }
        for (i, &c) in children.iter().enumerate() {
            self.tree.check(c)?;
            if self.tree.nodes[c.0].parent.is_some() || children[..i].contains(&c) {
                return Err(Error::Precondition(format!("{c} already has a parent")));
            }
        }
        Ok(self.tree.alloc_internal(children.to_vec()))
    }

    pub fn finish(mut self, root: NodeId) -> Result<Dendrogram> {
        self.tree.check(root)?;
        self.tree.root = root;
        self.tree.validate()?;
        Ok(self.tree)
    }
}

impl Dendrogram {
    /// Parses a nested parenthesis form such as `((0,1),(2,3))`, where the
    /// integers are point ids.
    pub fn from_nested(text: &str, point_colors: &[usize], num_colors: usize) -> Result<Self> {
        let mut builder = DendrogramBuilder::new(point_colors, num_colors)?;
        let bytes: Vec<u8> = text.bytes().filter(|b| !b.is_ascii_whitespace()).collect();
        let mut pos = 0;
        let root = parse_nested(&bytes, &mut pos, &mut builder)?;
        if pos != bytes.len() {
            return Err(Error::Parse(format!("trailing input at byte {pos}")));
        }
        builder.finish(root)
    }

    /// Nested form with every point colored 0.
    pub fn from_nested_uncolored(text: &str, n: usize) -> Result<Self> {
        Self::from_nested(text, &vec![0; n], 1)
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    /// Number of data points (leaves).
    pub fn num_points(&self) -> usize {
        self.leaf_of_point.len()
    }

    pub fn num_colors(&self) -> usize {
        self.num_colors
    }

    pub fn point_colors(&self) -> &[usize] {
        &self.point_colors
    }

    /// Size of the arena, including tombstones.
    pub fn arena_len(&self) -> usize {
        self.nodes.len()
    }

    pub fn exists(&self, v: NodeId) -> bool {
        self.nodes.get(v.0).is_some_and(|n| n.alive)
    }

    pub(crate) fn check(&self, v: NodeId) -> Result<()> {
        if self.exists(v) {
            Ok(())
        } else {
            Err(Error::InvalidNode(v))
        }
    }

    pub fn kind(&self, v: NodeId) -> Result<NodeKind> {
        self.check(v)?;
        Ok(self.nodes[v.0].kind)
    }

    pub fn is_leaf(&self, v: NodeId) -> bool {
        self.exists(v) && matches!(self.nodes[v.0].kind, NodeKind::Leaf(_))
    }

    pub fn is_dummy(&self, v: NodeId) -> bool {
        self.exists(v) && self.nodes[v.0].kind == NodeKind::Dummy
    }

    /// Point id of a leaf node.
    pub fn point(&self, v: NodeId) -> Option<usize> {
        match self.nodes.get(v.0) {
            Some(Node { alive: true, kind: NodeKind::Leaf(p), .. }) => Some(*p),
            _ => None,
        }
    }

    pub fn leaf_node(&self, point: usize) -> Result<NodeId> {
        self.leaf_of_point
            .get(point)
            .copied()
            .ok_or_else(|| Error::InvalidPair(format!("point {point} is not in the tree")))
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.nodes.get(v.0).filter(|n| n.alive).and_then(|n| n.parent)
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        match self.nodes.get(v.0) {
            Some(n) if n.alive => &n.children,
            _ => &[],
        }
    }

    /// Number of leaf descendants of `v`.
    pub fn leaf_count(&self, v: NodeId) -> Result<usize> {
        self.check(v)?;
        Ok(self.nodes[v.0].leaf_count)
    }

    /// Per-color leaf counts under `v`.
    pub fn color_counts(&self, v: NodeId) -> Result<&[usize]> {
        self.check(v)?;
        Ok(&self.nodes[v.0].color_counts)
    }

    /// Unchecked cached leaf count; callers guarantee `v` is alive.
    pub(crate) fn size(&self, v: NodeId) -> usize {
        self.nodes[v.0].leaf_count
    }

    pub(crate) fn colors_of(&self, v: NodeId) -> &[usize] {
        &self.nodes[v.0].color_counts
    }

    /// Alive node ids in arena order.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().enumerate().filter(|(_, n)| n.alive).map(|(i, _)| NodeId(i))
    }

    /// Alive internal nodes reachable from the root, in pre-order.
    pub fn internal_nodes(&self) -> Vec<NodeId> {
        self.preorder(self.root).into_iter().filter(|&v| self.nodes[v.0].kind == NodeKind::Internal).collect()
    }

    pub fn preorder(&self, from: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            out.push(v);
            stack.extend(self.nodes[v.0].children.iter().rev());
        }
        out
    }

    /// Children before parents, reversed pre-order.
    pub fn postorder(&self, from: NodeId) -> Vec<NodeId> {
        let mut order = Vec::new();
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend(self.nodes[v.0].children.iter());
        }
        order.reverse();
        order
    }

    /// Point ids of the leaves under `v`, in left-to-right order.
    pub fn points_under(&self, v: NodeId) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.get(v.0).map_or(0, |n| n.leaf_count));
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            let node = &self.nodes[x.0];
            match node.kind {
                NodeKind::Leaf(p) => out.push(p),
                _ => stack.extend(node.children.iter().rev()),
            }
        }
        out
    }

    pub fn depth(&self, v: NodeId) -> Result<usize> {
        self.check(v)?;
        let mut d = 0;
        let mut cur = v;
        while let Some(p) = self.nodes[cur.0].parent {
            d += 1;
            cur = p;
        }
        Ok(d)
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(self.root, 0usize)];
        while let Some((v, d)) = stack.pop() {
            best = best.max(d);
            for &c in &self.nodes[v.0].children {
                stack.push((c, d + 1));
            }
        }
        best
    }

    /// Is `a` an ancestor of (or equal to) `d`?
    pub fn is_ancestor(&self, a: NodeId, d: NodeId) -> bool {
        let mut cur = Some(d);
        while let Some(x) = cur {
            if x == a {
                return true;
            }
            cur = self.nodes[x.0].parent;
        }
        false
    }

    /// Lowest common ancestor of two distinct nodes.
    pub fn lca(&self, u: NodeId, v: NodeId) -> Result<NodeId> {
        self.check(u)?;
        self.check(v)?;
        if u == v {
            return Err(Error::InvalidPair(format!("lca of {u} with itself")));
        }
        let (mut a, mut b) = (u, v);
        let (mut da, mut db) = (self.depth(a)?, self.depth(b)?);
        while da > db {
            a = self.nodes[a.0].parent.expect("depth is consistent");
            da -= 1;
        }
        while db > da {
            b = self.nodes[b.0].parent.expect("depth is consistent");
            db -= 1;
        }
        while a != b {
            a = self.nodes[a.0].parent.expect("nodes share a root");
            b = self.nodes[b.0].parent.expect("nodes share a root");
        }
        Ok(a)
    }

    /// Lowest common ancestor of the leaves of two points.
    pub fn lca_of_points(&self, i: usize, j: usize) -> Result<NodeId> {
        if i == j {
            return Err(Error::InvalidPair(format!("points {i} and {j} are identical")));
        }
        self.lca(self.leaf_node(i)?, self.leaf_node(j)?)
    }

    pub fn has_dummies(&self) -> bool {
        self.nodes.iter().any(|n| n.alive && n.kind == NodeKind::Dummy)
    }

    pub fn is_binary(&self) -> bool {
        self.internal_nodes().iter().all(|&v| self.nodes[v.0].children.len() == 2)
    }

    // ---- mutation primitives ------------------------------------------------

    pub(crate) fn alloc_internal(&mut self, children: Vec<NodeId>) -> NodeId {
        let id = NodeId(self.nodes.len());
        let mut leaf_count = 0;
        let mut color_counts = vec![0; self.num_colors];
        for &c in &children {
            let child = &self.nodes[c.0];
            leaf_count += child.leaf_count;
            for (acc, x) in color_counts.iter_mut().zip(&child.color_counts) {
                *acc += x;
            }
        }
        for &c in &children {
            self.nodes[c.0].parent = Some(id);
        }
        self.nodes.push(Node {
            parent: None,
            children,
            kind: NodeKind::Internal,
            alive: true,
            leaf_count,
            color_counts,
        });
        id
    }

    pub(crate) fn alloc_dummy(&mut self) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            parent: None,
            children: Vec::new(),
            kind: NodeKind::Dummy,
            alive: true,
            leaf_count: 0,
            color_counts: vec![0; self.num_colors],
        });
        id
    }

    pub(crate) fn tombstone(&mut self, v: NodeId) {
        let node = &mut self.nodes[v.0];
        node.alive = false;
        node.parent = None;
        node.children.clear();
        node.leaf_count = 0;
        node.color_counts.iter_mut().for_each(|c| *c = 0);
    }

    pub(crate) fn set_root(&mut self, v: NodeId) {
        self.nodes[v.0].parent = None;
        self.root = v;
    }

    pub(crate) fn push_child(&mut self, parent: NodeId, child: NodeId) {
        self.nodes[child.0].parent = Some(parent);
        self.nodes[parent.0].children.push(child);
    }

    pub(crate) fn child_index(&self, parent: NodeId, child: NodeId) -> usize {
        self.nodes[parent.0].children.iter().position(|&c| c == child).expect("parent/child links are consistent")
    }

    /// Puts `new` in `old`'s slot under `old`'s parent (or makes it the root).
    /// Counts are not touched; `old` is detached but not tombstoned.
    pub(crate) fn replace_in_parent(&mut self, old: NodeId, new: NodeId) {
        match self.nodes[old.0].parent {
            Some(p) => {
                let idx = self.child_index(p, old);
                self.nodes[p.0].children[idx] = new;
                self.nodes[new.0].parent = Some(p);
            }
            None => self.set_root(new),
        }
        self.nodes[old.0].parent = None;
    }

    pub(crate) fn replace_child_at(&mut self, parent: NodeId, idx: usize, child: NodeId) {
        self.nodes[parent.0].children[idx] = child;
        self.nodes[child.0].parent = Some(parent);
    }

    pub(crate) fn insert_child_at(&mut self, parent: NodeId, idx: usize, child: NodeId) {
        self.nodes[parent.0].children.insert(idx, child);
        self.nodes[child.0].parent = Some(parent);
    }

    /// Detaches `child` from `parent` without touching counts.
    pub(crate) fn detach(&mut self, parent: NodeId, child: NodeId) {
        let idx = self.child_index(parent, child);
        self.nodes[parent.0].children.remove(idx);
        self.nodes[child.0].parent = None;
    }

    /// Adds (or subtracts) a count vector to `start` and every ancestor of it.
    pub(crate) fn shift_counts(&mut self, start: Option<NodeId>, leaves: usize, colors: &[usize], add: bool) {
        let mut cur = start;
        while let Some(v) = cur {
            let node = &mut self.nodes[v.0];
            if add {
                node.leaf_count += leaves;
                for (acc, x) in node.color_counts.iter_mut().zip(colors) {
                    *acc += x;
                }
            } else {
                node.leaf_count -= leaves;
                for (acc, x) in node.color_counts.iter_mut().zip(colors) {
                    *acc -= x;
                }
            }
            cur = node.parent;
        }
    }

    /// Replaces the children of internal node `v` (which has more than two)
    /// with a left comb in the existing order: `((((c1,c2),c3),...),cm)`.
    /// `v` keeps its id and counts.
    pub(crate) fn comb_children(&mut self, v: NodeId) {
        let children = std::mem::take(&mut self.nodes[v.0].children);
        if children.len() <= 2 {
            self.nodes[v.0].children = children;
            return;
        }
        let m = children.len();
        let mut acc = self.alloc_internal(vec![children[0], children[1]]);
        for &c in &children[2..m - 1] {
            acc = self.alloc_internal(vec![acc, c]);
        }
        self.nodes[v.0].children = vec![acc, children[m - 1]];
        self.nodes[acc.0].parent = Some(v);
        self.nodes[children[m - 1].0].parent = Some(v);
    }

    /// Makes every internal node binary: nodes with more than two children
    /// become a left comb in their existing child order and single-child
    /// nodes are contracted. Already-binary trees are left untouched.
    pub fn binarize(&mut self) {
        for v in self.internal_nodes() {
            match self.nodes[v.0].children.len() {
                1 => {
                    let child = self.nodes[v.0].children[0];
                    self.replace_in_parent(v, child);
                    self.tombstone(v);
                }
                n if n > 2 => self.comb_children(v),
                _ => {}
            }
        }
    }

    pub fn binarized(&self) -> Self {
        let mut t = self.clone();
        t.binarize();
        t
    }

    /// Rebuilds the subtree at `v` as a trivial topology: `v` keeps its id and
    /// becomes the direct parent of all of its leaves. Internal descendants
    /// are tombstoned.
    pub fn make_trivial(&mut self, v: NodeId) -> Result<()> {
        self.check(v)?;
        if self.nodes[v.0].kind != NodeKind::Internal {
            return Ok(());
        }
        let mut leaves = Vec::with_capacity(self.nodes[v.0].leaf_count);
        let mut internal = Vec::new();
        let mut stack: Vec<NodeId> = self.nodes[v.0].children.iter().rev().copied().collect();
        while let Some(x) = stack.pop() {
            match self.nodes[x.0].kind {
                NodeKind::Leaf(_) => leaves.push(x),
                NodeKind::Internal | NodeKind::Dummy => {
                    stack.extend(self.nodes[x.0].children.iter().rev());
                    internal.push(x);
                }
            }
        }
        for x in internal {
            self.tombstone(x);
        }
        for &l in &leaves {
            self.nodes[l.0].parent = Some(v);
        }
        self.nodes[v.0].children = leaves;
        Ok(())
    }

    // ---- validation ---------------------------------------------------------

    /// Full structural check: single root, consistent links, acyclic, leaves
    /// biject with points, cached counts equal recomputed ones, every
    /// internal node has at least two children and no dummies remain.
    pub fn validate(&self) -> Result<()> {
        self.validate_impl(false)
    }

    pub(crate) fn validate_impl(&self, allow_dummies: bool) -> Result<()> {
        let fail = |msg: String| Err(Error::Invariant(msg));
        self.check(self.root)?;
        if self.nodes[self.root.0].parent.is_some() {
            return fail(format!("root {} has a parent", self.root));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut seen_points = vec![false; self.num_points()];
        for v in self.postorder_checked()? {
            seen[v.0] = true;
            let node = &self.nodes[v.0];
            let mut count = 0;
            let mut colors = vec![0; self.num_colors];
            match node.kind {
                NodeKind::Leaf(p) => {
                    if !node.children.is_empty() {
                        return fail(format!("leaf {v} has children"));
                    }
                    if p >= seen_points.len() || seen_points[p] || self.leaf_of_point[p] != v {
                        return fail(format!("leaf {v} does not map uniquely to point {p}"));
                    }
                    seen_points[p] = true;
                    count = 1;
                    colors[self.point_colors[p]] = 1;
                }
                NodeKind::Dummy => {
                    if !allow_dummies {
                        return fail(format!("dummy node {v} outside of root splitting"));
                    }
                    if !node.children.is_empty() {
                        return fail(format!("dummy {v} has children"));
                    }
                }
                NodeKind::Internal => {
                    let real = node.children.iter().filter(|c| self.nodes[c.0].kind != NodeKind::Dummy).count();
                    if node.children.len() < 2 && !(allow_dummies && real < node.children.len()) {
                        return fail(format!("internal node {v} has {} children", node.children.len()));
                    }
                    for &c in &node.children {
                        if self.nodes[c.0].parent != Some(v) {
                            return fail(format!("child {c} of {v} points to another parent"));
                        }
                        count += self.nodes[c.0].leaf_count;
                        for (acc, x) in colors.iter_mut().zip(&self.nodes[c.0].color_counts) {
                            *acc += x;
                        }
                    }
                }
            }
            if count != node.leaf_count || colors != node.color_counts {
                return fail(format!("cached counts of {v} are stale"));
            }
        }
        if let Some(p) = seen_points.iter().position(|s| !s) {
            return fail(format!("point {p} is not reachable from the root"));
        }
        if let Some((i, _)) = self.nodes.iter().enumerate().find(|(i, n)| n.alive && !seen[*i]) {
            return fail(format!("node #{i} is alive but detached"));
        }
        Ok(())
    }

    /// Post-order over the reachable tree that fails on cycles, dead links or
    /// shared children instead of looping.
    fn postorder_checked(&self) -> Result<Vec<NodeId>> {
        let mut visited = vec![false; self.nodes.len()];
        let mut order = Vec::new();
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            if !self.exists(v) {
                return Err(Error::Invariant(format!("link to dead node {v}")));
            }
            if visited[v.0] {
                return Err(Error::Invariant(format!("node {v} reached twice")));
            }
            visited[v.0] = true;
            order.push(v);
            stack.extend(self.nodes[v.0].children.iter());
        }
        order.reverse();
        Ok(order)
    }

    // ---- serialization ------------------------------------------------------

    pub fn to_tree_file(&self) -> TreeFile {
        let nodes = self
            .node_ids()
            .map(|v| {
                let node = &self.nodes[v.0];
                TreeFileNode {
                    id: v.0,
                    children: node.children.iter().map(|c| c.0).collect(),
                    leaf: self.point(v),
                    size: Some(node.leaf_count),
                }
            })
            .collect();
        TreeFile { nodes, root: self.root.0 }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_tree_file()).expect("tree serialization is infallible")
    }

    /// Rebuilds a tree from its file form, preserving node ids.
    pub fn from_tree_file(file: &TreeFile, point_colors: &[usize], num_colors: usize) -> Result<Self> {
        let issues = file.structural_issues(point_colors.len());
        if let Some(first) = issues.first() {
            return Err(Error::Parse(first.clone()));
        }
        let arena_len = file.nodes.iter().map(|n| n.id + 1).max().unwrap_or(0);
        let mut nodes: Vec<Node> = (0..arena_len)
            .map(|_| Node {
                parent: None,
                children: Vec::new(),
                kind: NodeKind::Internal,
                alive: false,
                leaf_count: 0,
                color_counts: vec![0; num_colors],
            })
            .collect();
        let mut leaf_of_point = vec![NodeId(usize::MAX); point_colors.len()];
        for n in &file.nodes {
            let node = &mut nodes[n.id];
            node.alive = true;
            node.children = n.children.iter().map(|&c| NodeId(c)).collect();
            if let Some(p) = n.leaf {
                if point_colors[p] >= num_colors {
                    return Err(Error::Input(format!("color of point {p} out of range")));
                }
                node.kind = NodeKind::Leaf(p);
                node.leaf_count = 1;
                node.color_counts[point_colors[p]] = 1;
                leaf_of_point[p] = NodeId(n.id);
            }
        }
        for n in &file.nodes {
            for &c in &n.children {
                nodes[c].parent = Some(NodeId(n.id));
            }
        }
        let mut tree = Dendrogram {
            nodes,
            root: NodeId(file.root),
            leaf_of_point,
            point_colors: point_colors.to_vec(),
            num_colors,
        };
        for v in tree.postorder(tree.root) {
            if tree.nodes[v.0].kind != NodeKind::Internal {
                continue;
            }
            let children = tree.nodes[v.0].children.clone();
            let mut count = 0;
            let mut colors = vec![0; num_colors];
            for c in children {
                count += tree.nodes[c.0].leaf_count;
                for (acc, x) in colors.iter_mut().zip(&tree.nodes[c.0].color_counts) {
                    *acc += x;
                }
            }
            tree.nodes[v.0].leaf_count = count;
            tree.nodes[v.0].color_counts = colors;
        }
        for n in &file.nodes {
            if let Some(size) = n.size {
                if size != tree.nodes[n.id].leaf_count {
                    return Err(Error::Parse(format!(
                        "node #{} records {size} leaves but has {}",
                        n.id, tree.nodes[n.id].leaf_count
                    )));
                }
            }
        }
        tree.validate()?;
        Ok(tree)
    }

    pub fn from_json(text: &str, point_colors: &[usize], num_colors: usize) -> Result<Self> {
        let file: TreeFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_tree_file(&file, point_colors, num_colors)
    }
}

fn parse_nested(bytes: &[u8], pos: &mut usize, builder: &mut DendrogramBuilder) -> Result<NodeId> {
    match bytes.get(*pos) {
        Some(b'(') => {
            *pos += 1;
            let mut children = vec![parse_nested(bytes, pos, builder)?];
            loop {
                match bytes.get(*pos) {
                    Some(b',') => {
                        *pos += 1;
                        children.push(parse_nested(bytes, pos, builder)?);
                    }
                    Some(b')') => {
                        *pos += 1;
                        break;
                    }
                    _ => return Err(Error::Parse(format!("expected ',' or ')' at byte {pos}"))),
                }
            }
            builder.merge(&children)
        }
        Some(b) if b.is_ascii_digit() => {
            let start = *pos;
            while bytes.get(*pos).is_some_and(|b| b.is_ascii_digit()) {
                *pos += 1;
            }
            let point: usize = std::str::from_utf8(&bytes[start..*pos])
                .expect("ascii digits")
                .parse()
                .map_err(|e| Error::Parse(format!("bad point id: {e}")))?;
            if point >= builder.tree.num_points() {
                return Err(Error::Parse(format!("point {point} out of range")));
            }
            Ok(builder.leaf(point))
        }
        _ => Err(Error::Parse(format!("unexpected input at byte {pos}"))),
    }
}

/// On-disk tree form: `{"nodes":[{"id":..,"children":[..],"leaf":..}],"root":..}`.
///
/// `leaf` references a row index of the dataset the tree was built on.
/// `size` is the leaf count of the node; it is written on output and, when
/// present on input, checked against the structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeFile {
    pub nodes: Vec<TreeFileNode>,
    pub root: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeFileNode {
    pub id: usize,
    pub children: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
}

impl TreeFile {
    /// Conservation and shape problems that prevent building a tree over
    /// `num_points` rows: duplicate or dangling ids, nodes with several
    /// parents, leaves with children, rows that appear twice or not at all,
    /// and recorded sizes that disagree with the structure.
    pub fn structural_issues(&self, num_points: usize) -> Vec<String> {
        let mut issues = Vec::new();
        let max_id = self.nodes.iter().map(|n| n.id).max().unwrap_or(0);
        let mut index = vec![None; max_id + 1];
        for (i, n) in self.nodes.iter().enumerate() {
            if index[n.id].replace(i).is_some() {
                issues.push(format!("node id {} appears more than once", n.id));
            }
        }
        let lookup = |id: usize| index.get(id).copied().flatten();
        if lookup(self.root).is_none() {
            issues.push(format!("root {} is not a node", self.root));
            return issues;
        }
        let mut parent_count = vec![0usize; max_id + 1];
        let mut row_seen = vec![0usize; num_points];
        for n in &self.nodes {
            if n.leaf.is_some() && !n.children.is_empty() {
                issues.push(format!("leaf node {} has children", n.id));
            }
            if n.leaf.is_none() && n.children.len() < 2 {
                issues.push(format!("internal node {} has {} children", n.id, n.children.len()));
            }
            if let Some(p) = n.leaf {
                match row_seen.get_mut(p) {
                    Some(c) => *c += 1,
                    None => issues.push(format!("leaf {} references row {p}, beyond {num_points} rows", n.id)),
                }
            }
            for &c in &n.children {
                match lookup(c) {
                    Some(_) => parent_count[c] += 1,
                    None => issues.push(format!("node {} lists unknown child {c}", n.id)),
                }
            }
        }
        for (row, &c) in row_seen.iter().enumerate() {
            match c {
                0 => issues.push(format!("row {row} has no leaf")),
                1 => {}
                _ => issues.push(format!("row {row} appears as {c} leaves")),
            }
        }
        for n in &self.nodes {
            let expected = usize::from(n.id != self.root);
            if parent_count[n.id] != expected {
                issues.push(format!("node {} has {} parents", n.id, parent_count[n.id]));
            }
        }
        if !issues.is_empty() {
            return issues;
        }
        // Reachability and recorded sizes, computed bottom-up from the root.
        let mut sizes = vec![0usize; max_id + 1];
        let mut order = Vec::new();
        let mut stack = vec![self.root];
        let mut visited = vec![false; max_id + 1];
        while let Some(id) = stack.pop() {
            if visited[id] {
                issues.push(format!("cycle through node {id}"));
                return issues;
            }
            visited[id] = true;
            order.push(id);
            stack.extend(self.nodes[lookup(id).expect("checked")].children.iter());
        }
        for &id in order.iter().rev() {
            let n = &self.nodes[lookup(id).expect("checked")];
            sizes[id] = if n.leaf.is_some() { 1 } else { n.children.iter().map(|&c| sizes[c]).sum() };
            if let Some(s) = n.size {
                if s != sizes[id] {
                    issues.push(format!("node {id} records {s} leaves but holds {}", sizes[id]));
                }
            }
        }
        for n in &self.nodes {
            if !visited[n.id] {
                issues.push(format!("node {} is unreachable from the root", n.id));
            }
        }
        issues
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced8() -> Dendrogram {
        Dendrogram::from_nested_uncolored("(((0,1),(2,3)),((4,5),(6,7)))", 8).unwrap()
    }

    #[test]
    fn leaf_counts() {
        let t = balanced8();
        assert_eq!(t.leaf_count(t.leaf_node(3).unwrap()).unwrap(), 1);
        assert_eq!(t.leaf_count(t.root()).unwrap(), 8);
        let t = Dendrogram::from_nested_uncolored("((0,1,2),3)", 4).unwrap();
        let p = t.parent(t.leaf_node(0).unwrap()).unwrap();
        assert_eq!(t.leaf_count(p).unwrap(), 3);
        assert!(matches!(t.leaf_count(NodeId(99)), Err(Error::InvalidNode(_))));
    }

    #[test]
    fn lca_cases() {
        let t = balanced8();
        let p = t.parent(t.leaf_node(0).unwrap()).unwrap();
        assert_eq!(t.lca_of_points(0, 1).unwrap(), p);
        assert_eq!(t.lca_of_points(0, 7).unwrap(), t.root());
        let comb = Dendrogram::from_nested_uncolored("((0,1),2)", 3).unwrap();
        assert_eq!(comb.lca_of_points(0, 2).unwrap(), comb.root());
        assert!(matches!(t.lca_of_points(2, 2), Err(Error::InvalidPair(_))));
    }

    #[test]
    fn binarize_keeps_binary_trees() {
        let t = balanced8();
        assert_eq!(t.binarized(), t);
    }

    #[test]
    fn binarize_five_children_into_left_comb() {
        let t = Dendrogram::from_nested_uncolored("(0,1,2,3,4)", 5).unwrap();
        let b = t.binarized();
        b.validate().unwrap();
        assert!(b.is_binary());
        assert_eq!(b.internal_nodes().len(), 4);
        assert_eq!(b.points_under(b.root()), vec![0, 1, 2, 3, 4]);
        // Left comb: the root's right child is the last original child.
        let right = b.children(b.root())[1];
        assert_eq!(b.point(right), Some(4));
        assert_eq!(b.lca_of_points(0, 1).unwrap(), b.parent(b.leaf_node(0).unwrap()).unwrap());
        assert_eq!(b.leaf_count(b.lca_of_points(1, 2).unwrap()).unwrap(), 3);
    }

    #[test]
    fn make_trivial_flattens_subtree() {
        let mut t = balanced8();
        let left = t.children(t.root())[0];
        t.make_trivial(left).unwrap();
        t.validate().unwrap();
        assert_eq!(t.children(left).len(), 4);
        assert!(t.children(left).iter().all(|&c| t.is_leaf(c)));
        assert_eq!(t.leaf_count(left).unwrap(), 4);
    }

    #[test]
    fn json_round_trip_preserves_ids() {
        let mut t = balanced8();
        t.make_trivial(t.children(t.root())[1]).unwrap();
        let text = t.to_json();
        let back = Dendrogram::from_json(&text, &[0; 8], 1).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn tree_file_reports_conservation_faults() {
        let t = balanced8();
        let mut file = t.to_tree_file();
        // Move leaf 0 under another parent without fixing the recorded sizes.
        let leaf = file.nodes.iter().position(|n| n.leaf == Some(0)).unwrap();
        let leaf_id = file.nodes[leaf].id;
        let from = file.nodes.iter().position(|n| n.children.contains(&leaf_id)).unwrap();
        file.nodes[from].children.retain(|&c| c != leaf_id);
        let to = file.nodes.iter().position(|n| n.children.contains(&6)).unwrap();
        file.nodes[to].children.push(leaf_id);
        let issues = file.structural_issues(8);
        assert!(!issues.is_empty());
        assert!(Dendrogram::from_tree_file(&file, &[0; 8], 1).is_err());

        let mut dup = t.to_tree_file();
        let l1 = dup.nodes.iter().position(|n| n.leaf == Some(1)).unwrap();
        dup.nodes[l1].leaf = Some(0);
        let issues = dup.structural_issues(8);
        assert!(issues.iter().any(|s| s.contains("row 0 appears as 2")));
        assert!(issues.iter().any(|s| s.contains("row 1 has no leaf")));
    }

    #[test]
    fn builder_rejects_reused_children() {
        let mut b = DendrogramBuilder::uncolored(3);
        let x = b.merge(&[NodeId(0), NodeId(1)]).unwrap();
        assert!(b.merge(&[NodeId(0), NodeId(2)]).is_err());
        let r = b.merge(&[x, NodeId(2)]).unwrap();
        b.finish(r).unwrap();
    }
}
