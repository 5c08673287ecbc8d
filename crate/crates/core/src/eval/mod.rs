//! Link-level evaluation, ablations and the synthetic benchmark corpus.

pub mod ablation;
pub mod corpus;
pub mod metrics;

use serde::{Deserialize, Serialize};

use crate::model::{DrawingEntity, Feature3D};

pub use ablation::{evaluate_variant, run_ablation, AblationReport, AblationRow, PartResult};
pub use corpus::{generate_synthetic_corpus, CorpusProfile};
pub use metrics::{
    compute_metrics, f1_score, macro_average, render_summary, AggregateMetrics, GroundTruth, Link,
    PartMetrics, Stats,
};

/// One part with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartInput {
    pub part_id: String,
    pub features: Vec<Feature3D>,
    pub entities: Vec<DrawingEntity>,
    pub truth: GroundTruth,
}
