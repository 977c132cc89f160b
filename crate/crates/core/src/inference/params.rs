//! User-adjustable detector parameters.
//!
//! Every detector kind has a fixed set of built-in parameters with defaults.
//! A model's schema exposes some or all of them to the user, narrowing the
//! bounds and replacing the defaults. Parameters left out of the schema keep
//! their built-in default and cannot be overridden per request.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::InferenceError;

/// Which detection algorithm a model runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Threshold,
    Zscore,
    LocalContrast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Float,
    Int,
    Bool,
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamKind::Float => "float",
            ParamKind::Int => "int",
            ParamKind::Bool => "bool",
        })
    }
}

/// A parameter value as it travels over the wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
}

impl ParamValue {
    pub fn as_f64(self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(i as f64),
            ParamValue::Float(x) => Some(x),
            ParamValue::Bool(_) => None,
        }
    }

    /// Coerces the value to `kind`. Integers widen to floats; nothing else converts.
    pub fn coerce(self, kind: ParamKind) -> Option<ParamValue> {
        match (kind, self) {
            (ParamKind::Float, ParamValue::Float(_)) => Some(self),
            (ParamKind::Float, ParamValue::Int(i)) => Some(ParamValue::Float(i as f64)),
            (ParamKind::Int, ParamValue::Int(_)) => Some(self),
            (ParamKind::Bool, ParamValue::Bool(_)) => Some(self),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
        }
    }
}

/// One user-adjustable parameter: name, kind, bounds and default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    pub default: ParamValue,
}

impl ParamSpec {
    pub fn float(name: &str, min: f64, max: f64, default: f64) -> Self {
        ParamSpec {
            name: name.to_string(),
            kind: ParamKind::Float,
            min: Some(min),
            max: Some(max),
            default: ParamValue::Float(default),
        }
    }

    pub fn int(name: &str, min: i64, max: i64, default: i64) -> Self {
        ParamSpec {
            name: name.to_string(),
            kind: ParamKind::Int,
            min: Some(min as f64),
            max: Some(max as f64),
            default: ParamValue::Int(default),
        }
    }

    pub fn boolean(name: &str, default: bool) -> Self {
        ParamSpec {
            name: name.to_string(),
            kind: ParamKind::Bool,
            min: None,
            max: None,
            default: ParamValue::Bool(default),
        }
    }

    fn contains(&self, value: f64) -> bool {
        match (self.min, self.max) {
            (Some(lo), Some(hi)) => lo <= value && value <= hi,
            _ => false,
        }
    }
}

struct Builtin {
    name: &'static str,
    kind: ParamKind,
    default: ParamValue,
    /// Inclusive domain the detector accepts; schema bounds must sit inside it.
    domain: (f64, f64),
}

const CONFIDENCE: Builtin = Builtin {
    name: "confidence",
    kind: ParamKind::Float,
    default: ParamValue::Float(0.0),
    domain: (0.0, 1.0),
};

const MERGE: Builtin = Builtin {
    name: "merge",
    kind: ParamKind::Bool,
    default: ParamValue::Bool(true),
    domain: (0.0, 0.0),
};

const THRESHOLD_PARAMS: &[Builtin] = &[
    Builtin {
        name: "theta",
        kind: ParamKind::Float,
        default: ParamValue::Float(0.5),
        domain: (-1e12, 1e12),
    },
    CONFIDENCE,
    MERGE,
];

const ZSCORE_PARAMS: &[Builtin] = &[
    Builtin {
        name: "k",
        kind: ParamKind::Float,
        default: ParamValue::Float(3.0),
        domain: (f64::MIN_POSITIVE, 1e6),
    },
    CONFIDENCE,
    MERGE,
];

const LOCAL_CONTRAST_PARAMS: &[Builtin] = &[
    Builtin {
        name: "window",
        kind: ParamKind::Int,
        default: ParamValue::Int(5),
        domain: (3.0, 101.0),
    },
    Builtin {
        name: "k",
        kind: ParamKind::Float,
        default: ParamValue::Float(3.5),
        domain: (f64::MIN_POSITIVE, 1e6),
    },
    CONFIDENCE,
    MERGE,
];

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [
        DetectorKind::Threshold,
        DetectorKind::Zscore,
        DetectorKind::LocalContrast,
    ];

    fn builtins(self) -> &'static [Builtin] {
        match self {
            DetectorKind::Threshold => THRESHOLD_PARAMS,
            DetectorKind::Zscore => ZSCORE_PARAMS,
            DetectorKind::LocalContrast => LOCAL_CONTRAST_PARAMS,
        }
    }

    /// Names of every parameter the detector reads.
    pub fn param_names(self) -> impl Iterator<Item = &'static str> {
        self.builtins().iter().map(|b| b.name)
    }

    /// A schema exposing every parameter with its built-in default.
    pub fn default_schema(self) -> Vec<ParamSpec> {
        self.builtins()
            .iter()
            .map(|b| match b.kind {
                ParamKind::Bool => ParamSpec {
                    name: b.name.to_string(),
                    kind: b.kind,
                    min: None,
                    max: None,
                    default: b.default,
                },
                _ => {
                    let (lo, hi) = match b.name {
                        "theta" => (-1e6, 1e6),
                        "k" => (0.1, 20.0),
                        "window" => (3.0, 15.0),
                        _ => b.domain,
                    };
                    ParamSpec {
                        name: b.name.to_string(),
                        kind: b.kind,
                        min: Some(lo),
                        max: Some(hi),
                        default: b.default,
                    }
                }
            })
            .collect()
    }

    /// Checks that `schema` only exposes parameters this detector reads, with
    /// matching kinds, consistent bounds and in-domain defaults.
    pub fn check_schema(self, schema: &[ParamSpec]) -> Result<(), String> {
        let builtins = self.builtins();
        for (i, spec) in schema.iter().enumerate() {
            if schema[..i].iter().any(|s| s.name == spec.name) {
                return Err(format!("parameter {:?} declared twice", spec.name));
            }
            let builtin = builtins
                .iter()
                .find(|b| b.name == spec.name)
                .ok_or_else(|| format!("detector {self:?} has no parameter {:?}", spec.name))?;
            if builtin.kind != spec.kind {
                return Err(format!(
                    "parameter {:?} must be {}, not {}",
                    spec.name, builtin.kind, spec.kind
                ));
            }
            if spec.default.coerce(spec.kind).is_none() {
                return Err(format!("default for {:?} is not a {}", spec.name, spec.kind));
            }
            match spec.kind {
                ParamKind::Bool => {
                    if spec.min.is_some() || spec.max.is_some() {
                        return Err(format!("bool parameter {:?} cannot have bounds", spec.name));
                    }
                }
                ParamKind::Float | ParamKind::Int => {
                    let (Some(lo), Some(hi)) = (spec.min, spec.max) else {
                        return Err(format!("numeric parameter {:?} needs min and max", spec.name));
                    };
                    if !(lo.is_finite() && hi.is_finite()) {
                        return Err(format!("bounds of {:?} must be finite", spec.name));
                    }
                    if lo > hi {
                        return Err(format!("min > max for {:?}", spec.name));
                    }
                    let default = spec.default.as_f64().unwrap_or(f64::NAN);
                    if !(lo <= default && default <= hi) {
                        return Err(format!("default of {:?} outside [min, max]", spec.name));
                    }
                    let (dlo, dhi) = builtin.domain;
                    if lo < dlo || hi > dhi {
                        return Err(format!(
                            "bounds of {:?} must lie within [{dlo}, {dhi}]",
                            spec.name
                        ));
                    }
                    if spec.kind == ParamKind::Int && (lo.fract() != 0.0 || hi.fract() != 0.0) {
                        return Err(format!("bounds of int parameter {:?} must be integral", spec.name));
                    }
                    if spec.name == "window" && default as i64 % 2 == 0 {
                        return Err("default window must be odd".to_string());
                    }
                }
            }
        }
        Ok(())
    }

    /// Resolves the value of every detector parameter: request override if
    /// present, else schema default, else built-in default.
    pub fn resolve(
        self,
        schema: &[ParamSpec],
        overrides: &BTreeMap<String, ParamValue>,
    ) -> Result<BTreeMap<String, ParamValue>, InferenceError> {
        let mut resolved: BTreeMap<String, ParamValue> = self
            .builtins()
            .iter()
            .map(|b| (b.name.to_string(), b.default))
            .collect();
        for spec in schema {
            if let Some(v) = spec.default.coerce(spec.kind) {
                resolved.insert(spec.name.clone(), v);
            }
        }
        for (name, value) in overrides {
            let spec = schema
                .iter()
                .find(|s| &s.name == name)
                .ok_or_else(|| InferenceError::UnknownParam(name.clone()))?;
            let value = value.coerce(spec.kind).ok_or_else(|| InferenceError::ParamKindMismatch {
                name: name.clone(),
                expected: spec.kind,
            })?;
            if let Some(x) = value.as_f64() {
                if !spec.contains(x) {
                    return Err(InferenceError::ParamOutOfRange {
                        name: name.clone(),
                        value: x,
                        min: spec.min.unwrap_or(f64::NAN),
                        max: spec.max.unwrap_or(f64::NAN),
                    });
                }
            }
            resolved.insert(name.clone(), value);
        }
        Ok(resolved)
    }
}

/// Typed parameter set handed to a detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetectorParams {
    Threshold { theta: f64, confidence: f64, merge: bool },
    Zscore { k: f64, confidence: f64, merge: bool },
    LocalContrast { window: usize, k: f64, confidence: f64, merge: bool },
}

impl DetectorParams {
    /// Builds the typed parameter set from a fully resolved map.
    pub fn from_resolved(
        kind: DetectorKind,
        values: &BTreeMap<String, ParamValue>,
    ) -> Result<Self, InferenceError> {
        let float = |name: &str| {
            values
                .get(name)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| InferenceError::InvalidParameter(format!("{name} missing")))
        };
        let merge = match values.get("merge") {
            Some(ParamValue::Bool(b)) => *b,
            _ => return Err(InferenceError::InvalidParameter("merge missing".into())),
        };
        Ok(match kind {
            DetectorKind::Threshold => DetectorParams::Threshold {
                theta: float("theta")?,
                confidence: float("confidence")?,
                merge,
            },
            DetectorKind::Zscore => DetectorParams::Zscore {
                k: float("k")?,
                confidence: float("confidence")?,
                merge,
            },
            DetectorKind::LocalContrast => {
                let window = match values.get("window") {
                    Some(ParamValue::Int(w)) if *w >= 0 => *w as usize,
                    _ => return Err(InferenceError::InvalidParameter("window missing".into())),
                };
                DetectorParams::LocalContrast {
                    window,
                    k: float("k")?,
                    confidence: float("confidence")?,
                    merge,
                }
            }
        })
    }
}
