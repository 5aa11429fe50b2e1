//! One replication end to end: subsample, similarity, average linkage,
//! fair rebuild, cost ratio, histogram and audit.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::balance::{check_fairness, is_relatively_balanced, FairnessSpec, FairnessViolation};
use crate::cost::total_cost;
use crate::data::{build_similarity, subsample, Dataset};
use crate::error::{Error, Result};
use crate::fairify::{make_fair_traced, FairParams, MakeFairOptions, MakeFairTrace};
use crate::linkage::average_linkage_tree;
use crate::metrics::{
    balance_histogram, dataset_balance, Audit, Check, FairnessCheck, RunParams, RunReport, SeparationCheck,
};
use crate::tree::{Dendrogram, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Usage,
    Ingest,
    Subsample,
    Similarity,
    Linkage,
    Fairify,
    Metrics,
    Audit,
    Output,
}

/// An error tagged with the pipeline phase it came from.
#[derive(Debug, thiserror::Error)]
#[error("{phase:?}: {source}")]
pub struct PhaseError {
    pub phase: Phase,
    #[source]
    pub source: Error,
}

pub trait InPhase<T> {
    fn phase(self, phase: Phase) -> Result<T, PhaseError>;
}

impl<T> InPhase<T> for Result<T> {
    fn phase(self, phase: Phase) -> Result<T, PhaseError> {
        self.map_err(|source| PhaseError { phase, source })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub h: usize,
    pub k: usize,
    /// `eps = 1 / (eps_c · log2 n)` unless `eps` is given.
    pub eps_c: f64,
    pub eps: Option<f64>,
    pub n: usize,
    pub bins: usize,
    /// Color binned in the histogram.
    pub histogram_color: usize,
    /// Explicit bounds; synthesized per depth when absent.
    pub spec: Option<FairnessSpec>,
    pub record_separations: bool,
    pub dataset: String,
    pub numeric_cols: Vec<String>,
    pub color_col: String,
    pub normalize: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            h: 4,
            k: 2,
            eps_c: 8.0,
            eps: None,
            n: 512,
            bins: crate::metrics::DEFAULT_BINS,
            histogram_color: 0,
            spec: None,
            record_separations: false,
            dataset: String::new(),
            numeric_cols: Vec::new(),
            color_col: String::new(),
            normalize: false,
        }
    }
}

impl RunConfig {
    pub fn fair_params(&self, n: usize) -> Result<FairParams> {
        match self.eps {
            Some(eps) => FairParams::new(self.h, self.k, eps),
            None => FairParams::with_eps_c(self.h, self.k, self.eps_c, n),
        }
    }
}

/// Everything a replication produced.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub sample: Dataset,
    pub vanilla: Dendrogram,
    pub fair: Dendrogram,
    pub trace: MakeFairTrace,
    pub details: AuditDetails,
}

/// Individual findings behind an [`Audit`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditDetails {
    pub unbalanced: Vec<NodeId>,
    pub fairness: Vec<FairnessViolation>,
    pub base_case_fairness: Vec<FairnessViolation>,
    pub drift: Vec<String>,
    pub conservation: Vec<String>,
}

fn timed<T>(timings: &mut BTreeMap<String, f64>, name: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.insert(name.to_string(), start.elapsed().as_secs_f64() * 1e3);
    out
}

/// Runs one replication on a sample of `config.n` rows drawn with `seed`.
pub fn run_replication(data: &Dataset, config: &RunConfig, seed: u64) -> Result<RunOutput, PhaseError> {
    let mut timings = BTreeMap::new();
    let sample = timed(&mut timings, "subsample", || subsample(data, config.n, seed)).phase(Phase::Subsample)?;
    let graph = timed(&mut timings, "similarity", || build_similarity(&sample)).phase(Phase::Similarity)?;
    let vanilla = timed(&mut timings, "linkage", || average_linkage_tree(&graph, &sample.colors, sample.num_colors))
        .phase(Phase::Linkage)?;

    let params = config.fair_params(sample.len()).phase(Phase::Fairify)?;
    let options = MakeFairOptions { record_separations: config.record_separations, check_conservation: true };
    let (fair, trace) =
        timed(&mut timings, "make_fair", || make_fair_traced(&vanilla, &params, &options)).phase(Phase::Fairify)?;

    let (cost_vanilla, cost_fair) = timed(&mut timings, "cost", || -> Result<_> {
        Ok((total_cost(&vanilla, &graph)?, total_cost(&fair, &graph)?))
    })
    .phase(Phase::Metrics)?;
    if cost_vanilla == 0.0 {
        return Err(Error::Degenerate("vanilla cost is zero".into())).phase(Phase::Metrics);
    }
    let histogram = balance_histogram(&fair, config.histogram_color, config.bins).phase(Phase::Metrics)?;

    let (audit, details) = timed(&mut timings, "audit", || -> Result<_> {
        let (mut audit, mut details) = audit_tree(&fair, &params, config.spec.as_ref())?;
        audit_trace(&trace, &params, &mut audit, &mut details);
        audit.conservation.checked += trace.conservation_checks;
        if config.record_separations {
            let s = trace.separations.audit(fair.num_points());
            audit.separation =
                Some(SeparationCheck { pairs_separated: s.pairs_separated, pairs_multi_level: s.pairs_multi_level });
        }
        audit.passed = audit_passed(&audit);
        Ok((audit, details))
    })
    .phase(Phase::Audit)?;

    let report = RunReport {
        params: RunParams {
            h: params.h,
            k: params.k,
            eps: params.eps,
            eps_c: config.eps.is_none().then_some(config.eps_c),
            n: sample.len(),
            seed,
            dataset: config.dataset.clone(),
            numeric_cols: config.numeric_cols.clone(),
            color_col: config.color_col.clone(),
            normalize: config.normalize,
        },
        cost_vanilla,
        cost_fair,
        ratio_cost: cost_fair / cost_vanilla,
        histogram,
        dataset_balance: dataset_balance(&fair),
        audit,
        timings_ms: timings,
    };
    Ok(RunOutput { report, sample, vanilla, fair, trace, details })
}

fn audit_passed(a: &Audit) -> bool {
    a.relative_balance.passed() && a.drift.passed() && a.fairness.violations == 0 && a.conservation.passed()
}

/// A trivial-topology cluster: every child is a leaf.
pub fn is_base_case(tree: &Dendrogram, v: NodeId) -> bool {
    tree.children(v).iter().all(|&c| tree.is_leaf(c))
}

/// Checks a finished tree on its own: relative balance at every internal
/// node outside base cases, fairness (explicit `spec`, or bounds synthesized
/// per depth from the root's color fractions), and structural validity.
pub fn audit_tree(
    tree: &Dendrogram,
    params: &FairParams,
    spec: Option<&FairnessSpec>,
) -> Result<(Audit, AuditDetails)> {
    let mut audit = Audit::default();
    let mut details = AuditDetails::default();

    audit.conservation.checked += 1;
    if let Err(e) = tree.validate() {
        audit.conservation.failures += 1;
        details.conservation.push(e.to_string());
    }

    let internal = tree.internal_nodes();
    let (base, split): (Vec<NodeId>, Vec<NodeId>) = internal.iter().partition(|&&v| is_base_case(tree, v));
    for &v in &split {
        audit.relative_balance.checked += 1;
        if !is_relatively_balanced(tree, v, params.eps)? {
            audit.relative_balance.failures += 1;
            details.unbalanced.push(v);
        }
    }

    let mut by_depth: BTreeMap<usize, (Vec<NodeId>, Vec<NodeId>)> = BTreeMap::new();
    for &v in &internal {
        let entry = by_depth.entry(tree.depth(v)?).or_default();
        if is_base_case(tree, v) {
            entry.1.push(v);
        } else {
            entry.0.push(v);
        }
    }
    audit.recursion_levels = by_depth.keys().next_back().map_or(0, |d| d + 1);
    let proportions = dataset_balance(tree);
    let deepest = params.synthesize_spec(&proportions, audit.recursion_levels.saturating_sub(1))?;
    let mut fairness = FairnessCheck {
        alpha: spec.unwrap_or(&deepest).alpha().to_vec(),
        beta: spec.unwrap_or(&deepest).beta().to_vec(),
        source: if spec.is_some() { "explicit" } else { "synthesized" }.into(),
        ..Default::default()
    };
    for (depth, (split_nodes, base_nodes)) in &by_depth {
        let level_spec = match spec {
            Some(s) => s.clone(),
            None => params.synthesize_spec(&proportions, *depth)?,
        };
        let r = check_fairness(tree, &level_spec, split_nodes)?;
        fairness.clusters_checked += r.clusters_checked;
        fairness.violations += r.violations.len();
        details.fairness.extend(r.violations);
        let r = check_fairness(tree, &level_spec, base_nodes)?;
        fairness.clusters_checked += r.clusters_checked;
        fairness.base_case_violations += r.violations.len();
        details.base_case_fairness.extend(r.violations);
    }
    debug_assert_eq!(base.len() + split.len(), internal.len());
    audit.fairness = fairness;
    audit.passed = audit_passed(&audit);
    Ok((audit, details))
}

/// Per-frame drift: every post-fold child's color fractions lie within the
/// per-level bounds around its frame's fractions.
fn audit_trace(trace: &MakeFairTrace, params: &FairParams, audit: &mut Audit, details: &mut AuditDetails) {
    let mut check = Check::default();
    for frame in trace.split_frames() {
        for child in &frame.children {
            for color in 0..frame.root.color_counts.len() {
                check.checked += 1;
                let (lo, hi) = params.drift_bounds(frame.root.fraction(color));
                let x = child.fraction(color);
                if x < lo - 1e-9 || x > hi + 1e-9 {
                    check.failures += 1;
                    details.drift.push(format!(
                        "level {} child {} color {color}: fraction {x} outside [{lo}, {hi}]",
                        frame.level, child.node
                    ));
                }
            }
        }
    }
    audit.drift = check;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::census_dataset;

    #[test]
    fn census_run_passes_audit() {
        let data = census_dataset(4000, 11);
        let config = RunConfig { n: 256, record_separations: true, ..Default::default() };
        let out = run_replication(&data, &config, 1).unwrap();
        let r = &out.report;
        assert!(r.audit.passed, "{:?}\n{:?}", r.audit, out.details);
        assert!(r.ratio_cost.is_finite() && r.ratio_cost > 0.0);
        assert_eq!(r.histogram.total() as usize, out.fair.internal_nodes().len());
        assert!((r.dataset_balance[0] - data.color_fractions()[0]).abs() < 1.0 / 256.0);
        let again = run_replication(&data, &config, 1).unwrap();
        assert_eq!(r.without_timings(), again.report.without_timings());
    }

    #[test]
    fn errors_carry_their_phase() {
        let data = census_dataset(100, 1);
        let config = RunConfig { n: 500, ..Default::default() };
        let err = run_replication(&data, &config, 1).unwrap_err();
        assert_eq!(err.phase, Phase::Subsample);
    }
}
