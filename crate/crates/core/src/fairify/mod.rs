//! Top-down conversion of a hierarchy into a fair, relatively balanced one.
//!
//! Each recursion frame owns one subtree. Small subtrees are flattened into
//! a trivial topology. Otherwise the frame root is split into `h` balanced
//! children ([`split_root`]), the children are folded together color by color
//! ([`fold_by_color`]), and every remaining child becomes a new frame.

mod fold;
mod split;

pub use fold::{chunk_sizes, fold_by_color};
pub use split::{
    find_insertion_point, min_split_size, select_movable_subtree, split_root, SplitMove, SplitReport, SplitState,
};

use serde::{Deserialize, Serialize};

use crate::balance::{is_relatively_balanced, FairnessSpec};
use crate::error::{Error, Result};
use crate::operators::{make_trivial_logged, SeparationLog};
use crate::tree::{Dendrogram, NodeId};

/// Split arity `h`, fold width `k` and balance slack `eps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairParams {
    pub h: usize,
    pub k: usize,
    pub eps: f64,
}

impl FairParams {
    pub fn new(h: usize, k: usize, eps: f64) -> Result<Self> {
        if h < 2 {
            return Err(Error::Parameter(format!("h must be at least 2, got {h}")));
        }
        if k < 2 {
            return Err(Error::Parameter(format!("k must be at least 2, got {k}")));
        }
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::Parameter(format!("eps must lie in (0, 1/2), got {eps}")));
        }
        Ok(Self { h, k, eps })
    }

    /// `eps = 1 / (c · log2 n)`.
    pub fn with_eps_c(h: usize, k: usize, c: f64, n: usize) -> Result<Self> {
        if n < 2 || c <= 0.0 {
            return Err(Error::Parameter(format!("eps from c={c}, n={n} is undefined")));
        }
        Self::new(h, k, 1.0 / (c * (n as f64).log2()))
    }

    /// Requires `h >= k^λ`.
    pub fn check_colors(&self, num_colors: usize) -> Result<()> {
        let needed = (self.k as u128).checked_pow(num_colors as u32).unwrap_or(u128::MAX);
        if (self.h as u128) < needed {
            return Err(Error::Parameter(format!("h = {} is smaller than k^λ = {}^{}", self.h, self.k, num_colors)));
        }
        Ok(())
    }

    /// Subtrees with fewer leaves get a trivial topology.
    pub fn base_case_size(&self) -> usize {
        min_split_size(self.h, self.eps)
    }

    /// Colors folded per frame: a color is folded only while more than `k`
    /// children remain, so every frame keeps at least two children.
    pub fn folded_colors(&self, num_colors: usize) -> usize {
        let mut m = self.h;
        let mut folded = 0;
        for _ in 0..num_colors {
            if m <= self.k {
                break;
            }
            m = m.div_ceil(self.k);
            folded += 1;
        }
        folded
    }

    /// Most pieces any post-fold child is made of.
    pub fn fold_factor(&self, num_colors: usize) -> usize {
        self.k.pow(self.folded_colors(num_colors) as u32)
    }

    /// Slack used when splitting inside [`make_fair`]: a post-fold child
    /// sums `fold_factor` split pieces, so the pieces are balanced to
    /// `eps / fold_factor` for the child to be `eps`-balanced.
    pub fn split_eps(&self, num_colors: usize) -> f64 {
        self.eps / self.fold_factor(num_colors) as f64
    }

    /// Range a child's color fraction may take relative to its frame's
    /// fraction `p` of that color (with `c = p`), after one split and fold.
    pub fn drift_bounds(&self, p: f64) -> (f64, f64) {
        if p <= 0.0 {
            return (0.0, 0.0);
        }
        let (lo, hi) = self.drift_factors(p);
        ((p * lo).max(0.0), (p * hi).min(1.0))
    }

    /// Per-level multiplicative factors on a color fraction `c`.
    pub fn drift_factors(&self, c: f64) -> (f64, f64) {
        let (e, k, h) = (self.eps, self.k as f64, self.h as f64);
        let lo = (1.0 - e) / (1.0 + e).powi(2) * (1.0 - k * (1.0 + e) / (c * h));
        let hi = (1.0 + e) / (1.0 - e).powi(2) * (1.0 + (1.0 - e) / (c * k));
        (lo, hi)
    }

    /// Bounds on a color fraction `depth` recursion levels below a root
    /// whose fraction is `p`. Both `x · lo(x)` and `x · hi(x)` grow with
    /// `x`, so applying the per-level factors to the running extremes is
    /// sound.
    pub fn depth_bounds(&self, p: f64, depth: usize) -> (f64, f64) {
        let (mut lo, mut hi) = (p, p);
        for _ in 0..depth {
            lo = if lo > 0.0 { self.drift_bounds(lo).0 } else { 0.0 };
            hi = if hi > 0.0 { self.drift_bounds(hi).1 } else { 0.0 };
        }
        (lo, hi)
    }

    /// Concrete fairness bounds for clusters up to `levels` recursion levels
    /// below a root with color fractions `proportions`.
    pub fn synthesize_spec(&self, proportions: &[f64], levels: usize) -> Result<FairnessSpec> {
        let (alpha, beta) = proportions.iter().map(|&p| self.depth_bounds(p, levels)).unzip();
        FairnessSpec::new(alpha, beta)
    }
}

/// Size and color counts of one node at a point in time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node: NodeId,
    pub size: usize,
    pub color_counts: Vec<usize>,
}

impl NodeSummary {
    fn of(tree: &Dendrogram, node: NodeId) -> Self {
        Self { node, size: tree.size(node), color_counts: tree.colors_of(node).to_vec() }
    }

    pub fn fraction(&self, color: usize) -> f64 {
        self.color_counts[color] as f64 / self.size as f64
    }
}

/// What happened at one recursion frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub level: usize,
    pub root: NodeSummary,
    /// The subtree was given a trivial topology, either because it was
    /// small or because its split and fold came out unbalanced (then
    /// `split` is set).
    pub base_case: bool,
    pub split: Option<SplitReport>,
    pub folded_colors: usize,
    /// The frame root's children after folding.
    pub children: Vec<NodeSummary>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MakeFairOptions {
    /// Record pair-level separations.
    pub record_separations: bool,
    /// Verify leaf multiset and color counts of the frame after every
    /// operator, and the whole tree after every frame.
    pub check_conservation: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MakeFairTrace {
    pub frames: Vec<FrameRecord>,
    pub separations: SeparationLog,
    /// Number of conservation checks performed (all passed, or the run
    /// would have returned an error).
    pub conservation_checks: usize,
    pub split_eps: f64,
}

impl MakeFairTrace {
    /// Deepest recursion level reached, counting from 0 at the root.
    pub fn max_level(&self) -> usize {
        self.frames.iter().map(|f| f.level).max().unwrap_or(0)
    }

    /// Number of frames that were split and folded.
    pub fn split_frames(&self) -> impl Iterator<Item = &FrameRecord> {
        self.frames.iter().filter(|f| !f.base_case)
    }

    /// Frames that were split and folded but then flattened.
    pub fn fallbacks(&self) -> usize {
        self.frames.iter().filter(|f| f.base_case && f.split.is_some()).count()
    }

    /// Ids of the nodes flattened into trivial topologies.
    pub fn base_case_nodes(&self) -> Vec<NodeId> {
        self.frames.iter().filter(|f| f.base_case).map(|f| f.root.node).collect()
    }
}

struct Frame<'a> {
    tree: &'a mut Dendrogram,
    options: &'a MakeFairOptions,
    trace: &'a mut MakeFairTrace,
}

fn log_of<'b>(
    options: &MakeFairOptions,
    trace: &'b mut MakeFairTrace,
    level: usize,
) -> Option<(&'b mut SeparationLog, usize)> {
    options.record_separations.then_some((&mut trace.separations, level))
}

impl Frame<'_> {
    fn check(&mut self, v: NodeId, expected: &(usize, Vec<usize>, Vec<usize>)) -> Result<()> {
        if !self.options.check_conservation {
            return Ok(());
        }
        let mut points = self.tree.points_under(v);
        points.sort_unstable();
        if self.tree.size(v) != expected.0 || self.tree.colors_of(v) != expected.1 || points != expected.2 {
            return Err(Error::Invariant(format!("leaves or colors under {v} changed")));
        }
        self.trace.conservation_checks += 1;
        Ok(())
    }

    fn run(&mut self, v: NodeId, level: usize, params: &FairParams) -> Result<Vec<NodeId>> {
        let snapshot = if self.options.check_conservation {
            let mut pts = self.tree.points_under(v);
            pts.sort_unstable();
            (self.tree.size(v), self.tree.colors_of(v).to_vec(), pts)
        } else {
            (0, Vec::new(), Vec::new())
        };
        let root = NodeSummary::of(self.tree, v);

        if root.size < params.base_case_size() {
            return self.flatten(v, level, root, &snapshot, None, 0);
        }

        let split_eps = self.trace.split_eps;
        let log = log_of(self.options, self.trace, level);
        let split = split::split_root_with(self.tree, v, params.h, split_eps, log)?;
        self.check(v, &snapshot)?;

        let num_colors = self.tree.num_colors();
        let mut children = self.tree.children(v).to_vec();
        let mut folded_colors = 0;
        for color in 0..num_colors {
            if children.len() <= params.k {
                break;
            }
            let log = log_of(self.options, self.trace, level);
            children = fold::fold_by_color_with(self.tree, &children, color, params.k, log)?;
            folded_colors += 1;
            self.check(v, &snapshot)?;
        }
        debug_assert_eq!(children.len(), self.tree.children(v).len());

        // Split pieces may sit a leaf off n/h when the ε window is narrower
        // than a leaf, and folding adds those offsets up. If that leaves the
        // frame unbalanced, it gets the base-case topology instead.
        if !is_relatively_balanced(self.tree, v, params.eps)? {
            return self.flatten(v, level, root, &snapshot, Some(split), folded_colors);
        }

        let children = self.tree.children(v).to_vec();
        self.trace.frames.push(FrameRecord {
            level,
            root,
            base_case: false,
            split: Some(split),
            folded_colors,
            children: children.iter().map(|&c| NodeSummary::of(self.tree, c)).collect(),
        });
        Ok(children)
    }

    fn flatten(
        &mut self,
        v: NodeId,
        level: usize,
        root: NodeSummary,
        snapshot: &(usize, Vec<usize>, Vec<usize>),
        split: Option<SplitReport>,
        folded_colors: usize,
    ) -> Result<Vec<NodeId>> {
        match log_of(self.options, self.trace, level) {
            Some((log, level)) => make_trivial_logged(self.tree, v, level, log)?,
            None => self.tree.make_trivial(v)?,
        }
        self.check(v, snapshot)?;
        let children = self.tree.children(v).iter().map(|&c| NodeSummary::of(self.tree, c)).collect();
        self.trace.frames.push(FrameRecord { level, root, base_case: true, split, folded_colors, children });
        Ok(Vec::new())
    }
}

/// Rewrites `tree` into a fair, relatively balanced hierarchy over the same
/// leaves. The input is binarized first (left comb) if it is not binary.
pub fn make_fair(tree: &Dendrogram, params: &FairParams) -> Result<Dendrogram> {
    make_fair_traced(tree, params, &MakeFairOptions::default()).map(|(t, _)| t)
}

/// [`make_fair`] returning the per-frame trace and, if requested, the
/// separation log and conservation checks.
pub fn make_fair_traced(
    tree: &Dendrogram,
    params: &FairParams,
    options: &MakeFairOptions,
) -> Result<(Dendrogram, MakeFairTrace)> {
    let params = FairParams::new(params.h, params.k, params.eps)?;
    if tree.num_points() == 0 {
        return Err(Error::Input("cannot rebuild an empty hierarchy".into()));
    }
    if tree.has_dummies() {
        return Err(Error::Precondition("input tree contains dummy nodes".into()));
    }
    params.check_colors(tree.num_colors())?;

    let mut out = tree.binarized();
    let mut trace = MakeFairTrace { split_eps: params.split_eps(tree.num_colors()), ..Default::default() };
    let root_before = (out.size(out.root()), out.colors_of(out.root()).to_vec());

    let mut stack = vec![(out.root(), 0usize)];
    {
        let mut frame = Frame { tree: &mut out, options, trace: &mut trace };
        while let Some((v, level)) = stack.pop() {
            if frame.tree.is_leaf(v) {
                continue;
            }
            let children = frame.run(v, level, &params)?;
            stack.extend(children.into_iter().rev().map(|c| (c, level + 1)));
        }
    }

    if options.check_conservation {
        out.validate()?;
        if (out.size(out.root()), out.colors_of(out.root()).to_vec()) != root_before {
            return Err(Error::Invariant("root counts changed".into()));
        }
        trace.conservation_checks += 1;
    }
    Ok((out, trace))
}
