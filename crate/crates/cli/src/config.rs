//! Config loading: JSON file → overrides → full validation that reports
//! every violated constraint, not just the first.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use sepp_core::mc::{ExperimentKind, ExperimentParams, ExperimentSpec};
use sepp_core::rate_fn::{RateFunction, RateKind};
use sepp_core::sim::{Method, SimConfig, DEFAULT_MAX_EVENTS};

#[derive(Debug, Clone, Serialize)]
pub struct Issue {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug)]
pub enum ConfigError {
    /// I/O or JSON syntax problems (runtime failure, exit 1).
    Io(String),
    /// Constraint violations (validation failure, exit 2).
    Invalid(Vec<Issue>),
}

pub struct Loaded<T> {
    pub config: T,
    /// Raw bytes of the config file (hashed into the manifest).
    pub raw: Vec<u8>,
}

/// Reads the file, applies `key=value` overrides (dotted paths), checks the
/// schema version, and runs the command validator.
pub fn load<T, F>(path: &Path, overrides: &[String], validate: F) -> Result<Loaded<T>, ConfigError>
where
    T: for<'de> Deserialize<'de>,
    F: Fn(&Value, &mut Vec<Issue>),
{
    let raw = std::fs::read(path)
        .map_err(|e| ConfigError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_slice(&raw)
        .map_err(|e| ConfigError::Io(format!("{} is not valid JSON: {e}", path.display())))?;

    let mut issues = Vec::new();
    for item in overrides {
        if let Err(msg) = apply_override(&mut value, item) {
            issues.push(Issue {
                field: format!("--set {item}"),
                message: msg,
            });
        }
    }
    match value.get("schema_version") {
        Some(v) if v.as_u64() == Some(1) => {}
        Some(v) => issues.push(Issue {
            field: "schema_version".into(),
            message: format!("unsupported schema version {v}; this build reads version 1"),
        }),
        None => issues.push(Issue {
            field: "schema_version".into(),
            message: "missing (expected 1)".into(),
        }),
    }
    validate(&value, &mut issues);
    if !issues.is_empty() {
        return Err(ConfigError::Invalid(issues));
    }
    let config: T = serde_json::from_value(value).map_err(|e| {
        ConfigError::Invalid(vec![Issue {
            field: "<config>".into(),
            message: e.to_string(),
        }])
    })?;
    Ok(Loaded { config, raw })
}

/// `a.b.c=json-or-string`: walks/creates the dotted path and replaces the
/// leaf. Values parse as JSON when possible, else as a bare string.
fn apply_override(root: &mut Value, item: &str) -> Result<(), String> {
    let (path, raw_value) = item
        .split_once('=')
        .ok_or_else(|| "expected KEY=VALUE".to_string())?;
    if path.is_empty() {
        return Err("empty key".to_string());
    }
    let parsed: Value =
        serde_json::from_str(raw_value).unwrap_or_else(|_| Value::String(raw_value.to_string()));
    let mut cursor = root;
    let parts: Vec<&str> = path.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        if !cursor.is_object() {
            return Err(format!("{part} is not an object"));
        }
        cursor = cursor
            .as_object_mut()
            .unwrap()
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    match cursor.as_object_mut() {
        Some(map) => {
            map.insert(parts[parts.len() - 1].to_string(), parsed);
            Ok(())
        }
        None => Err("parent is not an object".to_string()),
    }
}

// ---------------------------------------------------------------------------
// Field validators.
// ---------------------------------------------------------------------------

fn check_rate_fn(value: &Value, issues: &mut Vec<Issue>) -> Option<RateFunction> {
    let Some(v) = value.get("rate_fn") else {
        issues.push(Issue {
            field: "rate_fn".into(),
            message: "missing".into(),
        });
        return None;
    };
    match serde_json::from_value::<RateKind>(v.clone()) {
        Ok(kind) => match RateFunction::new(kind) {
            Ok(rf) => Some(rf),
            Err(e) => {
                issues.push(Issue {
                    field: "rate_fn".into(),
                    message: e.to_string(),
                });
                None
            }
        },
        Err(e) => {
            issues.push(Issue {
                field: "rate_fn".into(),
                message: format!("unrecognized: {e}"),
            });
            None
        }
    }
}

fn check_number(
    value: &Value,
    field: &str,
    required: bool,
    pred: impl Fn(f64) -> bool,
    expect: &str,
    issues: &mut Vec<Issue>,
) {
    match value.get(field) {
        None if required => issues.push(Issue {
            field: field.into(),
            message: "missing".into(),
        }),
        None => {}
        Some(v) => match v.as_f64() {
            Some(x) if pred(x) => {}
            Some(x) => issues.push(Issue {
                field: field.into(),
                message: format!("must be {expect}, got {x}"),
            }),
            None => issues.push(Issue {
                field: field.into(),
                message: format!("must be a number ({expect})"),
            }),
        },
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
pub struct SimulateConfig {
    #[allow(dead_code)]
    pub schema_version: u32,
    pub rate_fn: RateFunction,
    pub gamma: f64,
    pub horizon: f64,
    #[serde(default = "default_max_events")]
    pub max_events: u64,
    pub seed: u64,
    #[serde(default)]
    pub method: Method,
}

fn default_max_events() -> u64 {
    DEFAULT_MAX_EVENTS
}

impl SimulateConfig {
    pub fn validate(value: &Value, issues: &mut Vec<Issue>) {
        let rf = check_rate_fn(value, issues);
        check_number(value, "gamma", true, |x| x >= 0.0, ">= 0", issues);
        check_number(
            value,
            "horizon",
            true,
            |x| x > 0.0 && x.is_finite(),
            "> 0 and finite",
            issues,
        );
        check_number(value, "max_events", false, |x| x >= 1.0, ">= 1", issues);
        check_number(
            value,
            "seed",
            true,
            |x| x >= 0.0 && x.fract() == 0.0,
            "a nonnegative integer",
            issues,
        );
        let method = match value.get("method") {
            None => Some(Method::Auto),
            Some(m) => match serde_json::from_value::<Method>(m.clone()) {
                Ok(m) => Some(m),
                Err(_) => {
                    issues.push(Issue {
                        field: "method".into(),
                        message: format!(
                            "unknown method {m}; expected inversion, thinning, or auto"
                        ),
                    });
                    None
                }
            },
        };
        if let (Some(rf), Some(method)) = (rf, method) {
            if let Err(e) = sepp_core::sim::JumpStream::new(&rf, 0.0, method) {
                issues.push(Issue {
                    field: "method".into(),
                    message: e.to_string(),
                });
            }
        }
    }

    pub fn to_sim_config(&self) -> SimConfig {
        SimConfig {
            rf: self.rate_fn.clone(),
            gamma: self.gamma,
            horizon: self.horizon,
            max_events: self.max_events,
            seed: self.seed,
            method: self.method,
        }
    }
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisKind {
    Moments,
    Pmf,
    Flow,
}

#[derive(Debug, Deserialize)]
pub struct AnalyzeConfig {
    #[allow(dead_code)]
    pub schema_version: u32,
    pub analysis: AnalysisKind,
    pub rate_fn: RateFunction,
    /// Moments: evaluation times.
    #[serde(default)]
    pub t_grid: Vec<f64>,
    /// Pmf: initial condition and time.
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub t: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Flow: start level and final time.
    #[serde(default)]
    pub y0: f64,
    #[serde(default)]
    pub t_max: f64,
}

fn default_k_max() -> usize {
    128
}

impl AnalyzeConfig {
    pub fn validate(value: &Value, issues: &mut Vec<Issue>) {
        let rf = check_rate_fn(value, issues);
        let analysis = value.get("analysis").and_then(|v| v.as_str());
        match analysis {
            Some("moments") => {
                if !matches!(
                    rf.as_ref().map(RateFunction::kind),
                    Some(RateKind::Affine { .. }) | Some(RateKind::Constant { .. }) | None
                ) {
                    issues.push(Issue {
                        field: "rate_fn".into(),
                        message: "closed-form moments exist for affine rates only".into(),
                    });
                }
                match value.get("t_grid").and_then(|v| v.as_array()) {
                    Some(a) if !a.is_empty() => {
                        if a.iter().any(|t| t.as_f64().is_none_or(|x| !(x >= 0.0))) {
                            issues.push(Issue {
                                field: "t_grid".into(),
                                message: "entries must be numbers >= 0".into(),
                            });
                        }
                    }
                    _ => issues.push(Issue {
                        field: "t_grid".into(),
                        message: "missing or empty".into(),
                    }),
                }
            }
            Some("pmf") => {
                check_number(value, "gamma", true, |x| x >= 0.0, ">= 0", issues);
                check_number(
                    value,
                    "t",
                    true,
                    |x| x >= 0.0 && x.is_finite(),
                    ">= 0 and finite",
                    issues,
                );
                check_number(value, "k_max", false, |x| x >= 1.0, ">= 1", issues);
            }
            Some("flow") => {
                check_number(value, "y0", true, |x| x >= 0.0, ">= 0", issues);
                check_number(
                    value,
                    "t_max",
                    true,
                    |x| x > 0.0 && x.is_finite(),
                    "> 0 and finite",
                    issues,
                );
            }
            Some(other) => issues.push(Issue {
                field: "analysis".into(),
                message: format!("unknown analysis {other}; expected moments, pmf, or flow"),
            }),
            None => issues.push(Issue {
                field: "analysis".into(),
                message: "missing".into(),
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// ldp
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
pub struct XGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Deserialize)]
pub struct LdpConfig {
    #[allow(dead_code)]
    pub schema_version: u32,
    pub rate_fn: RateFunction,
    pub x_grid: XGrid,
    #[serde(default = "default_n_grid")]
    pub n_grid: usize,
    #[serde(default)]
    pub emit_minimizers: bool,
}

fn default_n_grid() -> usize {
    64
}

impl LdpConfig {
    pub fn validate(value: &Value, issues: &mut Vec<Issue>) {
        check_rate_fn(value, issues);
        match value.get("x_grid") {
            None => issues.push(Issue {
                field: "x_grid".into(),
                message: "missing".into(),
            }),
            Some(g) => {
                check_number(g, "start", true, |x| x >= 0.0, ">= 0", issues);
                check_number(g, "stop", true, |x| x >= 0.0, ">= 0", issues);
                check_number(g, "step", true, |x| x > 0.0, "> 0", issues);
                if let (Some(a), Some(b)) = (
                    g.get("start").and_then(Value::as_f64),
                    g.get("stop").and_then(Value::as_f64),
                ) {
                    if b < a {
                        issues.push(Issue {
                            field: "x_grid".into(),
                            message: format!("stop {b} below start {a}"),
                        });
                    }
                }
            }
        }
        check_number(value, "n_grid", false, |x| x >= 2.0, ">= 2", issues);
    }

    pub fn xs(&self) -> Vec<f64> {
        let mut xs = Vec::new();
        let mut x = self.x_grid.start;
        while x <= self.x_grid.stop + 1e-12 {
            xs.push(x);
            x += self.x_grid.step;
        }
        xs
    }
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
pub struct ExperimentConfig {
    #[allow(dead_code)]
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub rate_fn: RateFunction,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub gamma_grid: Option<Vec<f64>>,
    pub horizons: Vec<f64>,
    pub replications: u32,
    pub master_seed: u64,
    #[serde(default = "default_max_events")]
    pub max_events: u64,
    #[serde(default)]
    pub params: ExperimentParams,
}

impl ExperimentConfig {
    pub fn validate(value: &Value, issues: &mut Vec<Issue>) {
        check_rate_fn(value, issues);
        if let Some(kind) = value.get("kind") {
            if serde_json::from_value::<ExperimentKind>(kind.clone()).is_err() {
                issues.push(Issue {
                    field: "kind".into(),
                    message: format!("unknown experiment kind {kind}"),
                });
            }
        } else {
            issues.push(Issue {
                field: "kind".into(),
                message: "missing".into(),
            });
        }
        check_number(value, "gamma", false, |x| x >= 0.0, ">= 0", issues);
        check_number(value, "replications", true, |x| x >= 1.0, ">= 1", issues);
        check_number(
            value,
            "master_seed",
            true,
            |x| x >= 0.0 && x.fract() == 0.0,
            "a nonnegative integer",
            issues,
        );
        check_number(value, "max_events", false, |x| x >= 1.0, ">= 1", issues);
        match value.get("horizons").and_then(|v| v.as_array()) {
            Some(a) if !a.is_empty() => {
                if a.iter().any(|t| t.as_f64().is_none_or(|x| !(x > 0.0))) {
                    issues.push(Issue {
                        field: "horizons".into(),
                        message: "entries must be positive numbers".into(),
                    });
                }
            }
            _ => issues.push(Issue {
                field: "horizons".into(),
                message: "missing or empty".into(),
            }),
        }
    }

    pub fn to_spec(&self) -> ExperimentSpec {
        ExperimentSpec {
            kind: self.kind,
            rf: self.rate_fn.clone(),
            gamma: self.gamma,
            gamma_grid: self.gamma_grid.clone(),
            horizons: self.horizons.clone(),
            replications: self.replications,
            master_seed: self.master_seed,
            max_events: self.max_events,
            params: self.params.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// fixed-points
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
pub struct FixedPointsConfig {
    #[allow(dead_code)]
    pub schema_version: u32,
    pub rate_fn: RateFunction,
    #[serde(default)]
    pub search_hi: Option<f64>,
}

impl FixedPointsConfig {
    pub fn validate(value: &Value, issues: &mut Vec<Issue>) {
        check_rate_fn(value, issues);
        check_number(
            value,
            "search_hi",
            false,
            |x| x > 0.0 && x.is_finite(),
            "> 0 and finite",
            issues,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_sets_nested_keys() {
        let mut v: Value = serde_json::from_str(
            r#"{"schema_version":1,"rate_fn":{"kind":"affine","alpha":0.5,"beta":1.0},"seed":1}"#,
        )
        .unwrap();
        apply_override(&mut v, "seed=7").unwrap();
        apply_override(&mut v, "rate_fn.alpha=0.25").unwrap();
        assert_eq!(v["seed"], 7);
        assert_eq!(v["rate_fn"]["alpha"], 0.25);
        assert!(apply_override(&mut v, "nokey").is_err());
    }

    #[test]
    fn simulate_validation_collects_all_issues() {
        let v: Value = serde_json::from_str(
            r#"{"schema_version":1,"rate_fn":{"kind":"affine","alpha":-1.0,"beta":1.0},
                "gamma":-2.0,"horizon":0.0,"seed":1}"#,
        )
        .unwrap();
        let mut issues = Vec::new();
        SimulateConfig::validate(&v, &mut issues);
        let fields: Vec<&str> = issues.iter().map(|i| i.field.as_str()).collect();
        assert!(fields.contains(&"rate_fn"), "{issues:?}");
        assert!(fields.contains(&"gamma"), "{issues:?}");
        assert!(fields.contains(&"horizon"), "{issues:?}");
    }
}
