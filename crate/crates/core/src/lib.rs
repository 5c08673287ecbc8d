//! Deterministic-first mapping of 2D drawing annotations to 3D CAD features.
//!
//! The pipeline validates inputs, enriches each annotation into a typed
//! descriptor, scores every (feature, annotation) pair with a traceable
//! composite score, selects near-tie candidate sets per feature, escalates
//! the ambiguous ones and emits a [`UnifiedSpec`] with provenance for
//! human review.

pub mod assignment;
pub mod clock;
pub mod config;
pub mod digest;
pub mod emit;
pub mod enrich;
pub mod error;
pub mod escalation;
pub mod eval;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod review;
pub mod scoring;
pub mod validate;

pub use clock::{Clock, FixedClock, SystemClock};
pub use config::{AblationVariant, EnrichConfidenceTable, PipelineConfig};
pub use error::{ConfigError, EmitError, EvalError, IoError, PipelineError, ReviewError};
pub use model::*;
pub use pipeline::{MapOutcome, Pipeline};
pub use review::{apply_review_decisions, approve, ReviewAction, ReviewDecision};
pub use scoring::{score_pair, CompatibilityTable};
