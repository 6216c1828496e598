//! Synthetic control charts, subsampling masks and CSV ingestion.

use std::collections::HashMap;
use std::path::Path;

use phasenet_core::gp::IrregularSeries;
use phasenet_core::rng;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub const N_CLASSES: usize = 6;
pub const CLASS_NAMES: [&str; N_CLASSES] =
    ["normal", "cyclic", "increasing_trend", "decreasing_trend", "upward_shift", "downward_shift"];

/// Control-chart series, `n_per_class` of each class, labels in class order.
///
/// Raw values are `30 + 2r` with `r ~ U(-3, 3)` plus the class pattern
/// (cycle amplitude and period `U(10, 15)`, slope `U(0.2, 0.5)`, shift size
/// `U(7.5, 20)` starting in the middle third). Each series is z-scored and
/// placed on `t / (length - 1)`.
pub fn generate_synthetic_control(
    n_per_class: usize,
    length: usize,
    seed: u64,
) -> Result<Vec<IrregularSeries>, HarnessError> {
    if length < 8 {
        return Err(HarnessError::Validation(format!("series length must be at least 8, got {length}")));
    }
    let mut rng = rng::seeded(seed);
    let locations: Vec<f64> = (0..length).map(|t| t as f64 / (length - 1) as f64).collect();
    let mut out = Vec::with_capacity(N_CLASSES * n_per_class);
    for class in 0..N_CLASSES {
        for _ in 0..n_per_class {
            let a = rng.random_range(10.0..15.0);
            let period = rng.random_range(10.0..15.0);
            let slope = rng.random_range(0.2..0.5);
            let jump = rng.random_range(7.5..20.0);
            let onset = rng.random_range(length as f64 / 3.0..2.0 * length as f64 / 3.0);
            let raw: Vec<f64> = (0..length)
                .map(|t| {
                    let t = t as f64;
                    let base = 30.0 + 2.0 * rng.random_range(-3.0..3.0);
                    base + match class {
                        0 => 0.0,
                        1 => a * (2.0 * std::f64::consts::PI * t / period).sin(),
                        2 => slope * t,
                        3 => -slope * t,
                        4 => if t >= onset { jump } else { 0.0 },
                        _ => if t >= onset { -jump } else { 0.0 },
                    }
                })
                .collect();
            out.push(IrregularSeries::new(locations.clone(), z_score(&raw), Some(class))?);
        }
    }
    Ok(out)
}

fn z_score(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    v.iter().map(|x| (x - mean) / sd).collect()
}

/// `⌈f · length⌉` sorted indices drawn without replacement.
pub fn sample_mask(length: usize, fraction: f64, seed: u64) -> Result<Vec<usize>, HarnessError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(HarnessError::Validation(format!("sampling fraction must lie in (0, 1], got {fraction}")));
    }
    // Guard against 0.1 * 30 = 3.0000000000000004.
    let keep = ((fraction * length as f64 - 1e-9).ceil() as usize).clamp(1.min(length), length);
    if keep == length {
        return Ok((0..length).collect());
    }
    let mut idx = index::sample(&mut rng::seeded(seed), length, keep).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Keep only the masked observations.
pub fn subsample(series: &IrregularSeries, mask: &[usize]) -> Result<IrregularSeries, HarnessError> {
    if let Some(&bad) = mask.iter().find(|&&i| i >= series.len()) {
        return Err(HarnessError::Validation(format!("mask index {bad} exceeds series length {}", series.len())));
    }
    let locations = mask.iter().map(|&i| series.locations[i]).collect();
    let values = mask.iter().map(|&i| series.values[i]).collect();
    Ok(IrregularSeries::new(locations, values, series.label)?)
}

/// Apply one mask to every series.
pub fn subsample_all(series: &[IrregularSeries], mask: &[usize]) -> Result<Vec<IrregularSeries>, HarnessError> {
    series.iter().map(|s| subsample(s, mask)).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesRow {
    series_id: String,
    location: f64,
    value: f64,
    label: Option<usize>,
}

/// Long-format CSV with header `series_id,location,value,label`.
pub fn read_series_csv(path: &Path) -> Result<Vec<IrregularSeries>, HarnessError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, (Vec<(f64, f64)>, Option<usize>)> = HashMap::new();
    for (line, row) in rdr.deserialize::<SeriesRow>().enumerate() {
        let row = row.map_err(|e| HarnessError::Validation(format!("{}: row {}: {e}", path.display(), line + 2)))?;
        let entry = groups.entry(row.series_id.clone()).or_insert_with(|| {
            order.push(row.series_id.clone());
            (Vec::new(), row.label)
        });
        if entry.1 != row.label {
            return Err(HarnessError::Validation(format!("series `{}` has inconsistent labels", row.series_id)));
        }
        entry.0.push((row.location, row.value));
    }
    order
        .iter()
        .map(|id| {
            let (mut pts, label) = groups.remove(id).expect("grouped above");
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (locs, vals) = pts.into_iter().unzip();
            IrregularSeries::new(locs, vals, label)
                .map_err(|e| HarnessError::Validation(format!("series `{id}`: {e}")))
        })
        .collect()
}

pub fn write_series_csv(path: &Path, series: &[IrregularSeries]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    for (id, s) in series.iter().enumerate() {
        for (&location, &value) in s.locations.iter().zip(&s.values) {
            w.serialize(SeriesRow { series_id: id.to_string(), location, value, label: s.label })
                .map_err(|e| HarnessError::Io(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))
}
