//! CSV ingestion, coloring, seeded balance-preserving subsampling and the
//! similarity graph built from numeric features.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;

/// Maps raw values of the color column to color ids. A `*` entry catches
/// every value not listed explicitly.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ColorMap {
    entries: BTreeMap<String, usize>,
    fallback: Option<usize>,
}

impl ColorMap {
    /// Parses `value=id` pairs, e.g. `["White=1", "*=0"]`.
    pub fn parse<S: AsRef<str>>(pairs: &[S]) -> Result<Self> {
        let mut map = Self::default();
        for pair in pairs {
            let pair = pair.as_ref();
            let (value, id) = pair
                .rsplit_once('=')
                .ok_or_else(|| Error::Parse(format!("color mapping {pair:?} is not of the form value=id")))?;
            let id: usize = id
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("color id in {pair:?} is not a nonnegative integer")))?;
            let value = value.trim();
            let slot = if value == "*" { map.fallback.replace(id) } else { map.entries.insert(value.to_string(), id) };
            if slot.is_some() {
                return Err(Error::Parse(format!("color value {value:?} mapped twice")));
            }
        }
        if map.entries.is_empty() && map.fallback.is_none() {
            return Err(Error::Parse("empty color mapping".into()));
        }
        Ok(map)
    }

    pub fn get(&self, value: &str) -> Option<usize> {
        self.entries.get(value.trim()).copied().or(self.fallback)
    }

    /// Distinct ids named by the mapping, ascending.
    fn ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.entries.values().copied().chain(self.fallback).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub path: PathBuf,
    pub numeric_cols: Vec<String>,
    pub color_col: String,
    pub color_map: ColorMap,
    /// Rescale every feature to `[0, 1]`. Off by default.
    #[serde(default)]
    pub normalize: bool,
}

/// Numeric feature rows with one color per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub colors: Vec<usize>,
    pub num_colors: usize,
    pub columns: Vec<String>,
    /// Index of each row among the data rows of the source file.
    pub source_rows: Vec<usize>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, colors: Vec<usize>, num_colors: usize, columns: Vec<String>) -> Result<Self> {
        if features.len() != colors.len() {
            return Err(Error::Input(format!("{} feature rows but {} colors", features.len(), colors.len())));
        }
        if let Some(&c) = colors.iter().find(|&&c| c >= num_colors) {
            return Err(Error::Input(format!("color {c} out of range for {num_colors} colors")));
        }
        if features.iter().any(|r| r.len() != columns.len()) {
            return Err(Error::Input("feature row width differs from the column count".into()));
        }
        let source_rows = (0..features.len()).collect();
        Ok(Self { features, colors, num_colors, columns, source_rows })
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn color_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_colors];
        for &c in &self.colors {
            counts[c] += 1;
        }
        counts
    }

    pub fn color_fractions(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.color_counts().into_iter().map(|c| c as f64 / n).collect()
    }

    /// Min-max rescales each feature to `[0, 1]`; constant features become 0.
    pub fn normalize(&mut self) {
        for j in 0..self.columns.len() {
            let (lo, hi) = self
                .features
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])));
            let span = hi - lo;
            for r in &mut self.features {
                r[j] = if span > 0.0 { (r[j] - lo) / span } else { 0.0 };
            }
        }
    }

    fn select(&self, rows: &[usize]) -> Self {
        Self {
            features: rows.iter().map(|&i| self.features[i].clone()).collect(),
            colors: rows.iter().map(|&i| self.colors[i]).collect(),
            num_colors: self.num_colors,
            columns: self.columns.clone(),
            source_rows: rows.iter().map(|&i| self.source_rows[i]).collect(),
        }
    }
}

/// Reads the configured columns. Rows whose selected numeric fields are
/// missing or unparsable are dropped; an unmapped color value is an error.
/// Color ids are renumbered densely in ascending order, so the number of
/// colors equals the number of distinct ids in the mapping.
pub fn load_csv(config: &IngestConfig) -> Result<Dataset> {
    let file = std::fs::File::open(&config.path)
        .map_err(|e| Error::Ingest(format!("cannot open {}: {e}", config.path.display())))?;
    let mut data = read_csv(file, config)?;
    if config.normalize {
        data.normalize();
    }
    Ok(data)
}

/// [`load_csv`] over any reader. Does not normalize.
pub fn read_csv<R: std::io::Read>(reader: R, config: &IngestConfig) -> Result<Dataset> {
    if config.numeric_cols.is_empty() {
        return Err(Error::Ingest("at least one numeric column is required".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Ingest(format!("missing column {name:?}")))
    };
    let numeric: Vec<usize> = config.numeric_cols.iter().map(|c| position(c)).collect::<Result<_>>()?;
    let color_idx = position(&config.color_col)?;

    let ids = config.color_map.ids();
    let dense = |id: usize| ids.binary_search(&id).expect("id comes from the map");

    let mut features = Vec::new();
    let mut colors = Vec::new();
    let mut source_rows = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let values: Option<Vec<f64>> = numeric
            .iter()
            .map(|&j| record.get(j).and_then(|s| s.parse::<f64>().ok()).filter(|x| x.is_finite()))
            .collect();
        let Some(values) = values else { continue };
        let raw = record.get(color_idx).unwrap_or("");
        let color = config
            .color_map
            .get(raw)
            .ok_or_else(|| Error::Ingest(format!("row {}: color value {raw:?} is not mapped", row + 1)))?;
        features.push(values);
        colors.push(dense(color));
        source_rows.push(row);
    }
    if features.is_empty() {
        return Err(Error::Ingest("no usable rows".into()));
    }
    Ok(Dataset { features, colors, num_colors: ids.len(), columns: config.numeric_cols.clone(), source_rows })
}

/// Per-color quotas `⌊n · fraction⌋`, topped up by largest remainder (ties
/// to the lower color id) so they sum to `n`.
pub fn quotas(counts: &[usize], n: usize) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0; counts.len()];
    }
    let mut q: Vec<usize> = counts.iter().map(|&c| c * n / total).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&c| (std::cmp::Reverse(counts[c] * n % total), c));
    let short = n - q.iter().sum::<usize>();
    for &c in order.iter().take(short) {
        q[c] += 1;
    }
    q
}

/// Draws `n` rows preserving color fractions (see [`quotas`]), uniformly
/// within each color, from a ChaCha8 stream seeded with `seed`. Selected
/// rows keep their original relative order.
pub fn subsample(data: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::Input(format!("sample size must be at least 2, got {n}")));
    }
    if n > data.len() {
        return Err(Error::Input(format!("sample size {n} exceeds the {} available rows", data.len())));
    }
    let counts = data.color_counts();
    let q = quotas(&counts, n);
    let mut by_color: Vec<Vec<usize>> = vec![Vec::new(); data.num_colors];
    for (i, &c) in data.colors.iter().enumerate() {
        by_color[c].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for (c, members) in by_color.iter().enumerate() {
        if q[c] > members.len() {
            return Err(Error::Input(format!("quota {} for color {c} exceeds its {} rows", q[c], members.len())));
        }
        rows.extend(index::sample(&mut rng, members.len(), q[c]).into_iter().map(|i| members[i]));
    }
    rows.sort_unstable();
    Ok(data.select(&rows))
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `w(i, j) = 1 / (1 + ‖x_i − x_j‖)`.
pub fn build_similarity(data: &Dataset) -> Result<SimilarityGraph> {
    let f = &data.features;
    SimilarityGraph::from_fn(data.len(), |i, j| 1.0 / (1.0 + euclidean(&f[i], &f[j])))
}
