use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::model::{EntityId, FeatureId, UnifiedSpec};

pub type Link = (FeatureId, EntityId);

/// Manually curated correspondences for one part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub part_id: String,
    pub links: BTreeSet<Link>,
}

impl GroundTruth {
    /// Ids in the truth file that the spec's inventory does not know.
    pub fn unknown_ids(&self, spec: &UnifiedSpec) -> Vec<String> {
        let f: BTreeSet<&str> = spec.inventory.features.iter().map(String::as_str).collect();
        let e: BTreeSet<&str> = spec.inventory.entities.iter().map(String::as_str).collect();
        let mut out = BTreeSet::new();
        for (fid, eid) in &self.links {
            if !f.contains(fid.as_str()) {
                out.insert(fid.clone());
            }
            if !e.contains(eid.as_str()) {
                out.insert(eid.clone());
            }
        }
        out.into_iter().collect()
    }

    pub fn check_against(&self, spec: &UnifiedSpec) -> Result<(), EvalError> {
        let unknown = self.unknown_ids(spec);
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(EvalError::UnknownIds(unknown))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub exact_match_rate: f64,
    pub partial_match_rate: f64,
    pub predicted: usize,
    pub truth: usize,
    pub correct: usize,
}

fn ratio(num: usize, den: usize, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Link-level scores plus per-feature match rates. Match rates run over the
/// features that appear in the truth set.
pub fn compute_metrics(predicted: &BTreeSet<Link>, truth: &GroundTruth) -> PartMetrics {
    let correct = predicted.intersection(&truth.links).count();
    let truth_empty = truth.links.is_empty();
    let precision = ratio(
        correct,
        predicted.len(),
        if truth_empty { 1.0 } else { 0.0 },
    );
    let recall = ratio(correct, truth.links.len(), 1.0);

    let mut by_feature: BTreeMap<&str, (BTreeSet<&str>, BTreeSet<&str>)> = BTreeMap::new();
    for (f, e) in &truth.links {
        by_feature.entry(f).or_default().0.insert(e);
    }
    for (f, e) in predicted {
        if let Some(entry) = by_feature.get_mut(f.as_str()) {
            entry.1.insert(e);
        }
    }
    let exact = by_feature.values().filter(|(t, p)| t == p).count();
    let partial = by_feature
        .values()
        .filter(|(t, p)| t.intersection(p).next().is_some())
        .count();
    let vacuous = if predicted.is_empty() { 1.0 } else { 0.0 };

    PartMetrics {
        precision,
        recall,
        f1: f1_score(precision, recall),
        exact_match_rate: ratio(exact, by_feature.len(), vacuous),
        partial_match_rate: ratio(partial, by_feature.len(), vacuous),
        predicted: predicted.len(),
        truth: truth.links.len(),
        correct,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Result<Stats, EvalError> {
        if values.is_empty() {
            return Err(EvalError::Empty);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Stats {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub parts: usize,
    pub precision: Stats,
    pub recall: Stats,
    pub f1: Stats,
    pub exact_match_rate: Stats,
    pub partial_match_rate: Stats,
}

pub fn macro_average(per_part: &[PartMetrics]) -> Result<AggregateMetrics, EvalError> {
    let col = |f: fn(&PartMetrics) -> f64| Stats::of(&per_part.iter().map(f).collect::<Vec<_>>());
    Ok(AggregateMetrics {
        parts: per_part.len(),
        precision: col(|m| m.precision)?,
        recall: col(|m| m.recall)?,
        f1: col(|m| m.f1)?,
        exact_match_rate: col(|m| m.exact_match_rate)?,
        partial_match_rate: col(|m| m.partial_match_rate)?,
    })
}

/// Aligned text table with Mean/Std/Min/Max columns.
pub fn render_summary(agg: &AggregateMetrics) -> String {
    let mut out = format!(
        "{:<22}{:>9}{:>9}{:>9}{:>9}\n",
        "Metric", "Mean", "Std", "Min", "Max"
    );
    for (name, s) in [
        ("Mapping Precision", agg.precision),
        ("Mapping Recall", agg.recall),
        ("Mapping F1", agg.f1),
        ("Exact Match Rate", agg.exact_match_rate),
        ("Partial Match Rate", agg.partial_match_rate),
    ] {
        out.push_str(&format!(
            "{:<22}{:>9.4}{:>9.4}{:>9.4}{:>9.4}\n",
            name, s.mean, s.std, s.min, s.max
        ));
    }
    out
}
