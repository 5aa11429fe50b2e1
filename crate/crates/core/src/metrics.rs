//! Run reports: cost ratio, balance histograms, audit outcomes and their
//! aggregation across replications.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cost::total_cost;
use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;
use crate::tree::Dendrogram;

pub const DEFAULT_BINS: usize = 50;

/// `cost(fair) / cost(vanilla)`.
pub fn cost_ratio(vanilla: &Dendrogram, fair: &Dendrogram, graph: &SimilarityGraph) -> Result<f64> {
    let base = total_cost(vanilla, graph)?;
    if base == 0.0 {
        return Err(Error::Degenerate("vanilla cost is zero".into()));
    }
    Ok(total_cost(fair, graph)? / base)
}

/// Counts over `bins` equal bins on `[0, 1]`, right-closed: bin `i` holds
/// `(i/bins, (i+1)/bins]`, and bin 0 also holds 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: usize,
    pub counts: Vec<u64>,
    /// Color whose fraction is binned.
    pub color: usize,
}

impl Histogram {
    pub fn empty(bins: usize, color: usize) -> Self {
        Self { bins, counts: vec![0; bins], color }
    }

    /// Bin of the fraction `num / den`, computed exactly.
    pub fn bin_of(&self, num: usize, den: usize) -> usize {
        if num == 0 {
            return 0;
        }
        ((num * self.bins).div_ceil(den) - 1).min(self.bins - 1)
    }

    /// Bin of a real fraction, for reference lines.
    pub fn bin_of_value(&self, x: f64) -> usize {
        ((x * self.bins as f64).ceil() as usize).saturating_sub(1).min(self.bins - 1)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn midpoint(&self, bin: usize) -> f64 {
        (bin as f64 + 0.5) / self.bins as f64
    }

    /// Two columns, `bin_midpoint,count`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_midpoint", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([self.midpoint(i).to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.bins != other.bins || self.color != other.color {
            return Err(Error::Aggregation("histograms differ in bins or color".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Histogram of `color` fractions over every internal node of `tree`.
pub fn balance_histogram(tree: &Dendrogram, color: usize, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Parameter("at least one bin is required".into()));
    }
    if color >= tree.num_colors() {
        return Err(Error::Parameter(format!("color {color} out of range")));
    }
    let mut h = Histogram::empty(bins, color);
    for v in tree.internal_nodes() {
        let b = h.bin_of(tree.colors_of(v)[color], tree.size(v));
        h.counts[b] += 1;
    }
    Ok(h)
}

/// Fraction of each color over all points.
pub fn dataset_balance(tree: &Dendrogram) -> Vec<f64> {
    let root = tree.root();
    let n = tree.size(root) as f64;
    tree.colors_of(root).iter().map(|&c| c as f64 / n).collect()
}

/// Everything that identifies a configuration, except the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub h: usize,
    pub k: usize,
    pub eps: f64,
    pub eps_c: Option<f64>,
    pub n: usize,
    pub seed: u64,
    pub dataset: String,
    pub numeric_cols: Vec<String>,
    pub color_col: String,
    pub normalize: bool,
}

impl RunParams {
    fn same_configuration(&self, other: &Self) -> bool {
        Self { seed: 0, ..self.clone() } == Self { seed: 0, ..other.clone() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub checked: usize,
    pub failures: usize,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FairnessCheck {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// `synthesized` or `explicit`.
    pub source: String,
    pub clusters_checked: usize,
    pub violations: usize,
    /// Violations inside trivial-topology base cases, reported only.
    pub base_case_violations: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeparationCheck {
    pub pairs_separated: usize,
    pub pairs_multi_level: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    /// Relative balance at every internal node outside base cases.
    pub relative_balance: Check,
    /// Every post-fold child within its frame's per-level drift bounds.
    pub drift: Check,
    pub fairness: FairnessCheck,
    pub conservation: Check,
    pub recursion_levels: usize,
    pub separation: Option<SeparationCheck>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub params: RunParams,
    pub cost_vanilla: f64,
    pub cost_fair: f64,
    pub ratio_cost: f64,
    pub histogram: Histogram,
    pub dataset_balance: Vec<f64>,
    pub audit: Audit,
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunReport {
    /// The report with timings cleared, for comparing runs.
    pub fn without_timings(&self) -> Self {
        Self { timings_ms: BTreeMap::new(), ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub params: RunParams,
    pub replications: usize,
    pub seeds: Vec<u64>,
    pub ratio_mean: f64,
    pub ratio_stderr: f64,
    pub cost_vanilla_mean: f64,
    pub cost_fair_mean: f64,
    pub histogram: Histogram,
    pub audits_passed: usize,
}

fn mean_stderr(mut xs: Vec<f64>) -> (f64, f64) {
    // Summing in sorted order makes the result independent of report order.
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let mut dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(f64::total_cmp);
    let var = dev.iter().sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Mean and standard error of the cost ratio, merged histograms. All
/// reports must share a configuration (seeds may differ).
pub fn aggregate(reports: &[RunReport]) -> Result<Summary> {
    let first = reports.first().ok_or_else(|| Error::Aggregation("no reports".into()))?;
    let mut histogram = Histogram::empty(first.histogram.bins, first.histogram.color);
    for r in reports {
        if !r.params.same_configuration(&first.params) {
            return Err(Error::Aggregation("reports have different parameters".into()));
        }
        histogram.merge(&r.histogram)?;
    }
    let (ratio_mean, ratio_stderr) = mean_stderr(reports.iter().map(|r| r.ratio_cost).collect());
    let (cost_vanilla_mean, _) = mean_stderr(reports.iter().map(|r| r.cost_vanilla).collect());
    let (cost_fair_mean, _) = mean_stderr(reports.iter().map(|r| r.cost_fair).collect());
    let mut seeds: Vec<u64> = reports.iter().map(|r| r.params.seed).collect();
    seeds.sort_unstable();
    Ok(Summary {
        params: RunParams { seed: seeds[0], ..first.params.clone() },
        replications: reports.len(),
        seeds,
        ratio_mean,
        ratio_stderr,
        cost_vanilla_mean,
        cost_fair_mean,
        histogram,
        audits_passed: reports.iter().filter(|r| r.audit.passed).count(),
    })
}
