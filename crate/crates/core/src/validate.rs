//! Admissibility checks on part inputs, plus unit normalization.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{DrawingEntity, Feature3D};

/// Parameters that measure length or angle and must be strictly positive.
pub const DIMENSIONAL_PARAMS: [&str; 6] =
    ["diameter", "radius", "depth", "width", "length", "angle"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Fatal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub subject: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
    /// Entities with defaults applied and units converted to mm/deg.
    #[serde(skip)]
    pub normalized_entities: Vec<DrawingEntity>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn is_admissible(&self) -> bool {
        self.issues.iter().all(|i| i.severity != Severity::Fatal)
    }

    pub fn fatal(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Fatal)
    }

    fn push(&mut self, severity: Severity, subject: &str, message: impl Into<String>) {
        self.issues.push(Issue {
            severity,
            subject: subject.to_string(),
            message: message.into(),
        });
    }
}

/// Converts a value to millimetres or degrees. `None` for unsupported units.
pub fn to_canonical_unit(value: f64, unit: &str) -> Option<(f64, &'static str)> {
    match unit.trim().to_ascii_lowercase().as_str() {
        "" | "mm" | "millimeter" | "millimetre" => Some((value, "mm")),
        "cm" => Some((value * 10.0, "mm")),
        "m" => Some((value * 1000.0, "mm")),
        "um" | "µm" | "micron" => Some((value / 1000.0, "mm")),
        "in" | "inch" | "\"" => Some((value * 25.4, "mm")),
        "deg" | "degree" | "degrees" | "°" => Some((value, "deg")),
        "rad" => Some((value.to_degrees(), "deg")),
        _ => None,
    }
}

pub fn validate_part_inputs(
    features: &[Feature3D],
    entities: &[DrawingEntity],
) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut seen = BTreeSet::new();
    for f in features {
        if !seen.insert(f.id.as_str()) {
            report.push(Severity::Fatal, &f.id, "duplicate feature id");
        }
        if !(0.0..=1.0).contains(&f.afr_confidence) {
            report.push(
                Severity::Fatal,
                &f.id,
                format!("afr_confidence {} outside [0,1]", f.afr_confidence),
            );
        }
        for (key, value) in &f.params {
            if !value.is_finite() {
                report.push(
                    Severity::Fatal,
                    &f.id,
                    format!("parameter `{key}` is not finite"),
                );
            } else if DIMENSIONAL_PARAMS.contains(&key.as_str()) && *value <= 0.0 {
                report.push(
                    Severity::Fatal,
                    &f.id,
                    format!("dimensional parameter `{key}` = {value} must be > 0"),
                );
            }
        }
    }

    let mut seen = BTreeSet::new();
    for e in entities {
        if !seen.insert(e.id.as_str()) {
            report.push(Severity::Fatal, &e.id, "duplicate entity id");
        }
        if e.raw_text.trim().is_empty() {
            report.push(Severity::Fatal, &e.id, "raw_text is empty");
        }
        let mut normalized = e.clone();
        if let Some(value) = e.semantic_values.get("value") {
            match value.as_f64() {
                Some(v) if v.is_finite() => {
                    match e.semantic_values.get("unit").and_then(|u| u.as_str()) {
                        None => {
                            report.push(
                                Severity::Warning,
                                &e.id,
                                "numeric value without unit; assuming mm",
                            );
                            normalized
                                .semantic_values
                                .insert("unit".into(), "mm".into());
                        }
                        Some(unit) => match to_canonical_unit(v, unit) {
                            Some((cv, cu)) => {
                                normalized
                                    .semantic_values
                                    .insert("value".into(), serde_json::json!(cv));
                                normalized.semantic_values.insert("unit".into(), cu.into());
                            }
                            None => report.push(
                                Severity::Fatal,
                                &e.id,
                                format!("unsupported unit `{unit}`"),
                            ),
                        },
                    }
                }
                _ => report.push(
                    Severity::Fatal,
                    &e.id,
                    "semantic value is not a finite number",
                ),
            }
        }
        report.normalized_entities.push(normalized);
    }
    report
}
