//! Size balance and color fairness predicates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{Dendrogram, NodeId, NodeKind};

/// Slack for comparing integer leaf counts against real-valued bounds.
const BOUND_TOL: f64 = 1e-9;

/// Is `v` ε-relatively balanced: every child holds between
/// `(1/c - eps) * n` and `(1/c + eps) * n` of the `n` leaves under `v`,
/// where `c` is the number of children. Dummy children count as empty.
pub fn is_relatively_balanced(tree: &Dendrogram, v: NodeId, eps: f64) -> Result<bool> {
    if tree.kind(v)? != NodeKind::Internal {
        return Err(Error::InvalidNode(v));
    }
    let children = tree.children(v);
    let n = tree.size(v) as f64;
    let c = children.len() as f64;
    let lo = (1.0 / c - eps) * n - BOUND_TOL * n.max(1.0);
    let hi = (1.0 / c + eps) * n + BOUND_TOL * n.max(1.0);
    Ok(children.iter().all(|&ch| {
        let s = tree.size(ch) as f64;
        lo <= s && s <= hi
    }))
}

/// Largest `|n_i / n - 1/c|` over the children of internal node `v`, i.e.
/// the smallest ε for which `v` is ε-relatively balanced.
pub fn balance_deviation(tree: &Dendrogram, v: NodeId) -> Result<f64> {
    if tree.kind(v)? != NodeKind::Internal {
        return Err(Error::InvalidNode(v));
    }
    let children = tree.children(v);
    let n = tree.size(v) as f64;
    let target = 1.0 / children.len() as f64;
    Ok(children.iter().map(|&c| (tree.size(c) as f64 / n - target).abs()).fold(0.0, f64::max))
}

/// Fraction of the leaves under `v` that carry `color`.
pub fn cluster_balance(tree: &Dendrogram, v: NodeId, color: usize) -> Result<f64> {
    let counts = tree.color_counts(v)?;
    let n = tree.size(v);
    if n == 0 {
        return Err(Error::InvalidNode(v));
    }
    let count = counts.get(color).ok_or_else(|| Error::Parameter(format!("color {color} out of range")))?;
    Ok(*count as f64 / n as f64)
}

/// Per-color lower (`alpha`) and upper (`beta`) bounds on the fraction of
/// each color in every non-singleton cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessSpec {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl FairnessSpec {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.len() != beta.len() || alpha.is_empty() {
            return Err(Error::Parameter("alpha and beta need one entry per color".into()));
        }
        for (l, (&a, &b)) in alpha.iter().zip(&beta).enumerate() {
            if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a > b {
                return Err(Error::Parameter(format!(
                    "color {l}: need 0 <= alpha <= beta <= 1, got alpha={a}, beta={b}"
                )));
            }
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn num_colors(&self) -> usize {
        self.alpha.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FairnessViolation {
    BelowLower {
        node: NodeId,
        color: usize,
        fraction: f64,
        bound: f64,
    },
    AboveUpper {
        node: NodeId,
        color: usize,
        fraction: f64,
        bound: f64,
    },
    /// Internal node with both leaf and non-leaf children.
    MixedLeafChildren {
        node: NodeId,
    },
}

impl FairnessViolation {
    pub fn node(&self) -> NodeId {
        match *self {
            Self::BelowLower { node, .. } | Self::AboveUpper { node, .. } | Self::MixedLeafChildren { node } => node,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub clusters_checked: usize,
    pub violations: Vec<FairnessViolation>,
}

impl FairnessReport {
    pub fn is_fair(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every non-singleton cluster against `spec`, plus the rule that a
/// cluster with a leaf child has only leaf children.
pub fn is_fair(tree: &Dendrogram, spec: &FairnessSpec) -> Result<FairnessReport> {
    check_fairness(tree, spec, &tree.internal_nodes())
}

/// [`is_fair`] restricted to the given internal nodes.
pub fn check_fairness(tree: &Dendrogram, spec: &FairnessSpec, nodes: &[NodeId]) -> Result<FairnessReport> {
    if spec.num_colors() != tree.num_colors() {
        return Err(Error::Shape(format!(
            "fairness spec has {} colors, tree has {}",
            spec.num_colors(),
            tree.num_colors()
        )));
    }
    let mut report = FairnessReport::default();
    for &v in nodes {
        if tree.kind(v)? != NodeKind::Internal {
            continue;
        }
        report.clusters_checked += 1;
        let size = tree.size(v) as f64;
        for (color, &count) in tree.colors_of(v).iter().enumerate() {
            let count = count as f64;
            let lo = spec.alpha[color] * size;
            let hi = spec.beta[color] * size;
            let fraction = count / size;
            if count < lo - BOUND_TOL * size {
                report.violations.push(FairnessViolation::BelowLower {
                    node: v,
                    color,
                    fraction,
                    bound: spec.alpha[color],
                });
            }
            if count > hi + BOUND_TOL * size {
                report.violations.push(FairnessViolation::AboveUpper {
                    node: v,
                    color,
                    fraction,
                    bound: spec.beta[color],
                });
            }
        }
        let children = tree.children(v);
        let leaves = children.iter().filter(|&&c| tree.is_leaf(c)).count();
        if leaves > 0 && leaves < children.len() {
            report.violations.push(FairnessViolation::MixedLeafChildren { node: v });
        }
    }
    Ok(report)
}
