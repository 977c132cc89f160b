//! Anomaly detection on 2-D scans.
//!
//! [`run_inference`] takes a model descriptor, a scan and per-request
//! parameter overrides, resolves the full parameter set against the model's
//! schema and dispatches to one of the detectors in [`detectors`].

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::npy::{Dtype, ScanArray};
use crate::registry::ModelDescriptor;

mod cluster;
pub mod detectors;
mod params;

pub use cluster::{cluster_rois, sort_rois};
pub use detectors::{local_contrast_detect, threshold_detect, zscore_detect, Candidate};
pub use params::{DetectorKind, DetectorParams, ParamKind, ParamSpec, ParamValue};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("scan must be two-dimensional, got {ndim} dimensions")]
    NotTwoDimensional { ndim: usize },
    #[error("detectors do not accept {0} scans")]
    UnsupportedDtype(Dtype),
    #[error("non-finite value at ({row}, {col})")]
    NonFiniteValue { row: usize, col: usize },
    #[error("window must be odd, got {0}")]
    EvenWindow(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("scan values exceed the representable range of the detector statistics")]
    NumericRange,
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("parameter {name:?} = {value} outside [{min}, {max}]")]
    ParamOutOfRange { name: String, value: f64, min: f64, max: f64 },
    #[error("parameter {name:?} expects a {expected} value")]
    ParamKindMismatch { name: String, expected: ParamKind },
}

impl InferenceError {
    pub fn code(&self) -> &'static str {
        match self {
            InferenceError::NotTwoDimensional { .. } => "NotTwoDimensional",
            InferenceError::UnsupportedDtype(_) => "UnsupportedDtype",
            InferenceError::NonFiniteValue { .. } => "NonFiniteValue",
            InferenceError::EvenWindow(_) => "EvenWindow",
            InferenceError::InvalidParameter(_) => "InvalidParameter",
            InferenceError::NumericRange => "NumericRange",
            InferenceError::UnknownParam(_) => "UnknownParam",
            InferenceError::ParamOutOfRange { .. } => "ParamOutOfRange",
            InferenceError::ParamKindMismatch { .. } => "ParamKindMismatch",
        }
    }
}

/// A flagged location on a scan with a confidence score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub row: usize,
    pub col: usize,
    pub score: f64,
}

/// The standardized result of one inference call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceOutcome {
    pub model_id: String,
    pub version: u32,
    /// Sorted by descending score, ties by `(row, col)`.
    pub rois: Vec<Roi>,
    pub params_used: BTreeMap<String, ParamValue>,
    pub duration_ms: f64,
}

/// Runs a detector with explicit, already-resolved parameters.
pub fn detect(scan: &ScanArray, params: DetectorParams) -> Result<Vec<Roi>, InferenceError> {
    match params {
        DetectorParams::Threshold { theta, confidence, merge } => {
            threshold_detect(scan, theta, confidence, merge)
        }
        DetectorParams::Zscore { k, confidence, merge } => zscore_detect(scan, k, confidence, merge),
        DetectorParams::LocalContrast { window, k, confidence, merge } => {
            local_contrast_detect(scan, window, k, confidence, merge)
        }
    }
}

/// Resolves parameters against the model schema and runs its detector.
///
/// The caller decides which version may serve; this function runs whatever
/// descriptor it is given.
pub fn run_inference(
    desc: &ModelDescriptor,
    scan: &ScanArray,
    overrides: &BTreeMap<String, ParamValue>,
) -> Result<InferenceOutcome, InferenceError> {
    let started = Instant::now();
    let params_used = desc.detector.resolve(&desc.param_schema, overrides)?;
    let params = DetectorParams::from_resolved(desc.detector, &params_used)?;
    let rois = detect(scan, params)?;
    Ok(InferenceOutcome {
        model_id: desc.model_id.clone(),
        version: desc.version,
        rois,
        params_used,
        duration_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}
