//! Synthetic census-style data: a mixture of demographic archetypes over
//! the usual numeric census columns, with a binary group attribute whose
//! rate varies by archetype and averages 1:7 overall.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::data::{ColorMap, Dataset};
use crate::error::Result;

pub const COLUMNS: [&str; 6] = ["age", "fnlwgt", "education_num", "capital_gain", "capital_loss", "hours_per_week"];
pub const GROUP_COLUMN: &str = "race";
pub const MINORITY: &str = "blue";
pub const MAJORITY: &str = "red";

struct Archetype {
    weight: f64,
    age: (f64, f64),
    /// Education levels and their relative weights.
    education: &'static [(f64, f64)],
    /// Probability of the standard 40-hour week; otherwise `hours` applies.
    full_time: f64,
    hours: (f64, f64),
    gain_rate: f64,
    loss_rate: f64,
    /// Share of the minority group within the archetype.
    minority: f64,
}

const GRADUATES: &[(f64, f64)] = &[(13.0, 6.0), (14.0, 2.5), (15.0, 0.8), (16.0, 0.7)];
const SCHOOL: &[(f64, f64)] = &[(9.0, 5.0), (10.0, 3.5), (11.0, 0.8), (12.0, 0.6)];
const DROPOUTS: &[(f64, f64)] = &[(3.0, 0.5), (4.0, 1.0), (5.0, 1.0), (6.0, 1.5), (7.0, 2.0), (8.0, 0.8), (9.0, 3.0)];

// Weighted minority share: 0.25·0.05 + 0.2·0.1 + 0.2·0.15 + 0.15·0.3 + 0.1·0.05 + 0.1·0.125 = 0.125.
const ARCHETYPES: [Archetype; 6] = [
    Archetype {
        weight: 0.25,
        age: (44.0, 10.0),
        education: GRADUATES,
        full_time: 0.45,
        hours: (48.0, 8.0),
        gain_rate: 0.14,
        loss_rate: 0.07,
        minority: 0.05,
    },
    Archetype {
        weight: 0.20,
        age: (23.0, 4.0),
        education: SCHOOL,
        full_time: 0.35,
        hours: (28.0, 10.0),
        gain_rate: 0.01,
        loss_rate: 0.02,
        minority: 0.10,
    },
    Archetype {
        weight: 0.20,
        age: (38.0, 9.0),
        education: SCHOOL,
        full_time: 0.65,
        hours: (42.0, 7.0),
        gain_rate: 0.05,
        loss_rate: 0.04,
        minority: 0.15,
    },
    Archetype {
        weight: 0.15,
        age: (35.0, 10.0),
        education: DROPOUTS,
        full_time: 0.55,
        hours: (40.0, 9.0),
        gain_rate: 0.02,
        loss_rate: 0.02,
        minority: 0.30,
    },
    Archetype {
        weight: 0.10,
        age: (63.0, 7.0),
        education: SCHOOL,
        full_time: 0.25,
        hours: (22.0, 9.0),
        gain_rate: 0.12,
        loss_rate: 0.05,
        minority: 0.05,
    },
    Archetype {
        weight: 0.10,
        age: (49.0, 9.0),
        education: GRADUATES,
        full_time: 0.30,
        hours: (55.0, 8.0),
        gain_rate: 0.25,
        loss_rate: 0.08,
        minority: 0.125,
    },
];

fn normal(rng: &mut ChaCha8Rng, (mean, sd): (f64, f64), lo: f64, hi: f64) -> f64 {
    Normal::new(mean, sd).expect("valid parameters").sample(rng).round().clamp(lo, hi)
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T], weight: impl Fn(&T) -> f64) -> &'a T {
    let total: f64 = items.iter().map(&weight).sum();
    let mut u = rng.random::<f64>() * total;
    items
        .iter()
        .find(|it| {
            u -= weight(it);
            u < 0.0
        })
        .unwrap_or(&items[items.len() - 1])
}

/// One generated row: features in [`COLUMNS`] order and the group
/// (`true` for the minority).
pub fn census_rows(rows: usize, seed: u64) -> Vec<(Vec<f64>, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gain = LogNormal::new(8.3, 0.9).expect("valid parameters");
    let loss = LogNormal::new(7.4, 0.3).expect("valid parameters");
    let weight = LogNormal::new(12.0, 0.5).expect("valid parameters");
    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let a = pick(&mut rng, &ARCHETYPES, |a| a.weight);
        let age = normal(&mut rng, a.age, 17.0, 90.0);
        let education = pick(&mut rng, a.education, |e| e.1).0;
        let hours = if rng.random_bool(a.full_time) { 40.0 } else { normal(&mut rng, a.hours, 1.0, 99.0) };
        let capital_gain: f64 = if rng.random_bool(a.gain_rate) { gain.sample(&mut rng) } else { 0.0 };
        let capital_gain = capital_gain.round().min(99_999.0);
        let capital_loss: f64 =
            if capital_gain == 0.0 && rng.random_bool(a.loss_rate) { loss.sample(&mut rng) } else { 0.0 };
        let fnlwgt: f64 = weight.sample(&mut rng);
        let fnlwgt = fnlwgt.round().clamp(12_000.0, 1_500_000.0);
        let minority = rng.random_bool(a.minority);
        out.push((vec![age, fnlwgt, education, capital_gain, capital_loss.round(), hours], minority));
    }
    out
}

/// Writes [`census_rows`] as CSV with a header row.
pub fn write_census_csv<W: Write>(out: W, rows: usize, seed: u64) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = COLUMNS.to_vec();
    header.push(GROUP_COLUMN);
    w.write_record(&header)?;
    for (features, minority) in census_rows(rows, seed) {
        let mut record: Vec<String> = features.iter().map(|x| format!("{x}")).collect();
        record.push(if minority { MINORITY } else { MAJORITY }.to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Color mapping for generated files: minority 0, majority 1.
pub fn census_color_map() -> ColorMap {
    ColorMap::parse(&[format!("{MINORITY}=0"), format!("{MAJORITY}=1")]).expect("static mapping")
}

/// Generated rows as a [`Dataset`] with minority color 0, bypassing CSV.
pub fn census_dataset(rows: usize, seed: u64) -> Dataset {
    let (features, colors) = census_rows(rows, seed).into_iter().map(|(f, m)| (f, usize::from(!m))).unzip();
    Dataset::new(features, colors, 2, COLUMNS.iter().map(|c| c.to_string()).collect()).expect("consistent rows")
}
