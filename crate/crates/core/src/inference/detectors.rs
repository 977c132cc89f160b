//! Classical anomaly detectors over 2-D scan grids.
//!
//! All three detectors share one shape: compute a per-cell statistic, keep the
//! cells at or above a cut-off, and normalize the kept statistic to a score in
//! `[0, 1]` with `(s - cut) / (S - cut)`, where `S` is the largest statistic on
//! the scan. When `S == cut` every candidate scores `1.0`.

use crate::npy::{ArrayData, Dtype, ScanArray};

use super::cluster::{cluster_rois, sort_rois};
use super::{InferenceError, Roi};

/// Added to the median absolute deviation so flat neighborhoods do not divide by zero.
pub const MAD_EPSILON: f64 = 1e-9;

/// A candidate cell before merging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub row: usize,
    pub col: usize,
    pub score: f64,
}

/// Row-major `f64` view of a 2-D scan with all values checked finite.
#[derive(Debug, Clone)]
pub(crate) struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn from_scan(scan: &ScanArray) -> Result<Self, InferenceError> {
        let &[rows, cols] = scan.shape() else {
            return Err(InferenceError::NotTwoDimensional { ndim: scan.ndim() });
        };
        let values: Vec<f64> = match scan.data() {
            ArrayData::F64(v) => v.clone(),
            ArrayData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            ArrayData::I32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            ArrayData::U8(v) => v.iter().map(|&x| f64::from(x)).collect(),
            // Not every i64 has an exact f64 image.
            ArrayData::I64(_) => return Err(InferenceError::UnsupportedDtype(Dtype::I64)),
        };
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(InferenceError::NonFiniteValue {
                row: i / cols.max(1),
                col: i % cols.max(1),
            });
        }
        Ok(Grid { rows, cols, values })
    }

    fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

fn check_confidence(confidence: f64) -> Result<(), InferenceError> {
    if (0.0..=1.0).contains(&confidence) {
        Ok(())
    } else {
        Err(InferenceError::InvalidParameter(format!(
            "confidence {confidence} outside [0, 1]"
        )))
    }
}

fn check_k(k: f64) -> Result<(), InferenceError> {
    if k.is_finite() && k > 0.0 {
        Ok(())
    } else {
        Err(InferenceError::InvalidParameter(format!("k must be positive and finite, got {k}")))
    }
}

/// Keeps cells whose statistic reaches `cut` and whose normalized score reaches `confidence`.
fn select(grid: &Grid, stats: &[f64], cut: f64, confidence: f64) -> Result<Vec<Candidate>, InferenceError> {
    let Some(top) = stats.iter().copied().reduce(f64::max) else {
        return Ok(Vec::new());
    };
    let span = top - cut;
    if !span.is_finite() {
        return Err(InferenceError::NumericRange);
    }
    let mut out = Vec::new();
    for (i, &s) in stats.iter().enumerate() {
        if s < cut {
            continue;
        }
        let score = if span > 0.0 { (s - cut) / span } else { 1.0 };
        if score >= confidence {
            out.push(Candidate {
                row: i / grid.cols,
                col: i % grid.cols,
                score,
            });
        }
    }
    Ok(out)
}

fn finish(mut candidates: Vec<Candidate>, merge: bool) -> Vec<Roi> {
    if merge {
        return cluster_rois(&candidates);
    }
    let mut rois: Vec<Roi> = candidates
        .drain(..)
        .map(|c| Roi {
            row: c.row,
            col: c.col,
            score: c.score,
        })
        .collect();
    sort_rois(&mut rois);
    rois
}

pub(crate) fn threshold_candidates(
    grid: &Grid,
    theta: f64,
    confidence: f64,
) -> Result<Vec<Candidate>, InferenceError> {
    check_confidence(confidence)?;
    if !theta.is_finite() {
        return Err(InferenceError::InvalidParameter(format!("theta must be finite, got {theta}")));
    }
    select(grid, &grid.values, theta, confidence)
}

pub(crate) fn zscore_candidates(grid: &Grid, k: f64, confidence: f64) -> Result<Vec<Candidate>, InferenceError> {
    check_confidence(confidence)?;
    check_k(k)?;
    let n = grid.values.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mean = grid.values.iter().sum::<f64>() / n as f64;
    let variance = grid.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let sigma = variance.sqrt();
    if !sigma.is_finite() {
        return Err(InferenceError::NumericRange);
    }
    if sigma == 0.0 {
        return Ok(Vec::new());
    }
    let z: Vec<f64> = grid.values.iter().map(|v| (v - mean).abs() / sigma).collect();
    select(grid, &z, k, confidence)
}

pub(crate) fn local_contrast_candidates(
    grid: &Grid,
    window: usize,
    k: f64,
    confidence: f64,
) -> Result<Vec<Candidate>, InferenceError> {
    if window.is_multiple_of(2) {
        return Err(InferenceError::EvenWindow(window));
    }
    if window < 3 {
        return Err(InferenceError::InvalidParameter(format!("window must be at least 3, got {window}")));
    }
    check_confidence(confidence)?;
    check_k(k)?;

    let half = window / 2;
    let mut neighborhood = Vec::with_capacity(window * window);
    let mut deviations = Vec::with_capacity(window * window);
    let mut stats = Vec::with_capacity(grid.values.len());
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            neighborhood.clear();
            for r in row.saturating_sub(half)..(row + half + 1).min(grid.rows) {
                for c in col.saturating_sub(half)..(col + half + 1).min(grid.cols) {
                    neighborhood.push(grid.at(r, c));
                }
            }
            let m = median(&mut neighborhood);
            deviations.clear();
            deviations.extend(neighborhood.iter().map(|x| (x - m).abs()));
            let mad = median(&mut deviations);
            stats.push((grid.at(row, col) - m).abs() / (mad + MAD_EPSILON));
        }
    }
    if stats.iter().any(|d| !d.is_finite()) {
        return Err(InferenceError::NumericRange);
    }
    select(grid, &stats, k, confidence)
}

/// Median of a non-empty slice; even lengths average the two middle values.
fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Flags cells with value at or above `theta`.
pub fn threshold_detect(
    scan: &ScanArray,
    theta: f64,
    confidence: f64,
    merge: bool,
) -> Result<Vec<Roi>, InferenceError> {
    let grid = Grid::from_scan(scan)?;
    Ok(finish(threshold_candidates(&grid, theta, confidence)?, merge))
}

/// Flags cells whose absolute z-score (population statistics) reaches `k`.
pub fn zscore_detect(
    scan: &ScanArray,
    k: f64,
    confidence: f64,
    merge: bool,
) -> Result<Vec<Roi>, InferenceError> {
    let grid = Grid::from_scan(scan)?;
    Ok(finish(zscore_candidates(&grid, k, confidence)?, merge))
}

/// Flags cells that deviate from their neighborhood median by at least `k`
/// median absolute deviations. Windows are clipped at the scan borders.
pub fn local_contrast_detect(
    scan: &ScanArray,
    window: usize,
    k: f64,
    confidence: f64,
    merge: bool,
) -> Result<Vec<Roi>, InferenceError> {
    let grid = Grid::from_scan(scan)?;
    Ok(finish(local_contrast_candidates(&grid, window, k, confidence)?, merge))
}
