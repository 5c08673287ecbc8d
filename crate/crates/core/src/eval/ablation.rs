use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, macro_average, AggregateMetrics, PartMetrics};
use super::PartInput;
use crate::clock::Clock;
use crate::config::{AblationVariant, PipelineConfig};
use crate::enrich::Enricher;
use crate::error::EvalError;
use crate::escalation::MockClient;
use crate::pipeline::Pipeline;
use crate::scoring::CompatibilityTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartResult {
    pub part_id: String,
    pub metrics: PartMetrics,
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub aggregate: AggregateMetrics,
    pub parts: Vec<PartResult>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, variant: AblationVariant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    /// Aligned text table with Variant/P/R/F1 columns.
    pub fn render(&self) -> String {
        let mut out = format!("{:<30}{:>9}{:>9}{:>9}\n", "Variant", "P", "R", "F1");
        for r in &self.rows {
            let a = &r.aggregate;
            out.push_str(&format!(
                "{:<30}{:>9.4}{:>9.4}{:>9.4}\n",
                r.variant.display_name(),
                a.precision.mean,
                a.recall.mean,
                a.f1.mean
            ));
        }
        out
    }
}

/// Maps every part offline (rule-based enrichment, oracle escalation) once
/// per variant and scores the live links against ground truth.
pub fn evaluate_variant(
    parts: &[PartInput],
    config: &PipelineConfig,
    table: &CompatibilityTable,
    clock: &dyn Clock,
) -> Result<Vec<PartResult>, EvalError> {
    let enricher = Enricher::rule_based(config.enrich_confidence);
    parts
        .par_iter()
        .map(|part| {
            let client = MockClient::oracle(part.truth.links.iter().cloned());
            let pipeline = Pipeline {
                config: config.clone(),
                table: table.clone(),
                enricher: &enricher,
                client: &client,
                clock,
            };
            let out = pipeline.map_part(&part.part_id, &part.features, &part.entities)?;
            Ok(PartResult {
                part_id: part.part_id.clone(),
                metrics: compute_metrics(&out.spec.live_links(), &part.truth),
                flagged: out.spec.flagged_count(),
            })
        })
        .collect()
}

pub fn run_ablation(
    parts: &[PartInput],
    variants: &[AblationVariant],
    base: &PipelineConfig,
    table: &CompatibilityTable,
    clock: &dyn Clock,
) -> Result<AblationReport, EvalError> {
    let mut report = AblationReport::default();
    for &variant in variants {
        let mut config = base.clone();
        variant.apply(&mut config);
        let results = evaluate_variant(parts, &config, table, clock)?;
        let metrics: Vec<PartMetrics> = results.iter().map(|r| r.metrics).collect();
        report.rows.push(AblationRow {
            variant,
            aggregate: macro_average(&metrics)?,
            parts: results,
        });
    }
    Ok(report)
}
