//! Two-stage escalation for correspondences deterministic scoring could not
//! settle: a multimodal selection stage, then a constrained reasoning stage
//! whose output must match a fixed schema.
//!
//! Each stage gets at most one retry after a schema violation, with the
//! validator message echoed back. A second violation counts as a rejection.
//! Transport failures stop escalation and flag the item for review.

mod http;
mod mock;
mod schema;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::digest::digest_json;
use crate::model::{DrawingEntity, EnrichedDescriptor, FeatureId, FeatureType};

pub use http::HttpEscalationClient;
pub use mock::{MockClient, MockPolicy, ScriptEntry};
pub use schema::{validate_response, SchemaViolation, RESPONSE_SCHEMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Multimodal,
    ConstrainedLlm,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Multimodal => "multimodal",
            Stage::ConstrainedLlm => "constrained_llm",
        })
    }
}

/// Summary of a candidate feature sent to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub feature_id: FeatureId,
    pub feature_type: FeatureType,
    pub params: BTreeMap<String, f64>,
    pub s_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscalationRequest {
    pub stage: Stage,
    /// Feature whose near-tie set triggered this request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus_feature_id: Option<FeatureId>,
    pub entity: DrawingEntity,
    pub descriptor: EnrichedDescriptor,
    /// Opaque cropped-region reference; absent for purely structured input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drawing_region: Option<String>,
    /// Sorted by `s_final`, highest first.
    pub candidates: Vec<CandidateSummary>,
    /// Validator message from the previous attempt, on retry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_feedback: Option<String>,
}

impl EscalationRequest {
    pub fn digest(&self) -> String {
        digest_json(self)
    }

    pub fn has_candidate(&self, feature_id: &str) -> bool {
        self.candidates.iter().any(|c| c.feature_id == feature_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Map,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscalationResponse {
    pub decision: Decision,
    pub target_feature_id: Option<FeatureId>,
    pub confidence: f64,
    pub rationale: String,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("transport error: {0}")]
pub struct TransportError(pub String);

/// A model endpoint. Returns the raw response text; validation happens here,
/// not in the client.
pub trait EscalationClient: Send + Sync {
    fn complete(&self, request: &EscalationRequest) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub stage: Stage,
    pub request_digest: String,
    pub raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Present only when the raw response passed validation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<EscalationResponse>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EscalationOutcome {
    Mapped {
        stage: Stage,
        response: EscalationResponse,
    },
    /// Explicit rejection, or a second schema violation at the last stage.
    Rejected {
        stage: Stage,
        rationale: String,
        confidence: f64,
    },
    /// Could not be decided automatically.
    Flagged { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscalationResult {
    pub outcome: EscalationOutcome,
    pub attempts: Vec<Attempt>,
}

enum StageResult {
    Valid(EscalationResponse),
    Invalid(String),
    Transport(String),
}

fn run_stage(
    mut request: EscalationRequest,
    client: &dyn EscalationClient,
    attempts: &mut Vec<Attempt>,
) -> StageResult {
    for attempt in 0..2 {
        let request_digest = request.digest();
        let raw = match client.complete(&request) {
            Ok(raw) => raw,
            Err(e) => {
                attempts.push(Attempt {
                    stage: request.stage,
                    request_digest,
                    raw: String::new(),
                    error: Some(e.to_string()),
                    response: None,
                });
                return StageResult::Transport(e.0);
            }
        };
        match validate_response(&raw, &request) {
            Ok(response) => {
                attempts.push(Attempt {
                    stage: request.stage,
                    request_digest,
                    raw,
                    error: None,
                    response: Some(response.clone()),
                });
                return StageResult::Valid(response);
            }
            Err(violation) => {
                let message = violation.to_string();
                attempts.push(Attempt {
                    stage: request.stage,
                    request_digest,
                    raw,
                    error: Some(message.clone()),
                    response: None,
                });
                if attempt == 1 {
                    return StageResult::Invalid(message);
                }
                request.validation_feedback = Some(message);
            }
        }
    }
    unreachable!("loop returns on the second attempt")
}

/// Runs the enabled stages in order for one ambiguous entity. The `stage`
/// field of `request` is overwritten per stage.
pub fn escalate(
    request: &EscalationRequest,
    client: &dyn EscalationClient,
    config: &PipelineConfig,
) -> EscalationResult {
    let mut attempts = Vec::new();
    if request.candidates.is_empty() {
        return EscalationResult {
            outcome: EscalationOutcome::Flagged {
                reason: "no candidates to escalate".into(),
            },
            attempts,
        };
    }
    let stages: Vec<Stage> = [
        (config.vlm_selection_enabled, Stage::Multimodal),
        (config.llm_escalation_enabled, Stage::ConstrainedLlm),
    ]
    .into_iter()
    .filter_map(|(on, s)| on.then_some(s))
    .collect();
    if stages.is_empty() {
        return EscalationResult {
            outcome: EscalationOutcome::Flagged {
                reason: "escalation disabled".into(),
            },
            attempts,
        };
    }

    let mut last_rejection = None;
    for stage in stages {
        let mut req = request.clone();
        req.stage = stage;
        req.validation_feedback = None;
        match run_stage(req, client, &mut attempts) {
            StageResult::Valid(resp) if resp.decision == Decision::Map => {
                return EscalationResult {
                    outcome: EscalationOutcome::Mapped {
                        stage,
                        response: resp,
                    },
                    attempts,
                };
            }
            StageResult::Valid(resp) => {
                last_rejection = Some(EscalationOutcome::Rejected {
                    stage,
                    rationale: resp.rationale,
                    confidence: resp.confidence,
                });
            }
            StageResult::Invalid(message) => {
                last_rejection = Some(EscalationOutcome::Rejected {
                    stage,
                    rationale: format!("invalid response after retry: {message}"),
                    confidence: 0.0,
                });
            }
            StageResult::Transport(message) => {
                return EscalationResult {
                    outcome: EscalationOutcome::Flagged {
                        reason: format!("{stage} transport error: {message}"),
                    },
                    attempts,
                };
            }
        }
    }
    EscalationResult {
        outcome: last_rejection.expect("at least one stage ran"),
        attempts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EntityType, NormalizedType};
    use std::sync::Mutex;

    pub(crate) fn request() -> EscalationRequest {
        let entity = DrawingEntity::new("E2", EntityType::Dimension, "Ø6");
        let descriptor = EnrichedDescriptor::new("E2", NormalizedType::Diameter);
        let cand = |id: &str, s: f64| CandidateSummary {
            feature_id: id.into(),
            feature_type: FeatureType::Hole,
            params: BTreeMap::from([("diameter".to_string(), 6.0)]),
            s_final: s,
        };
        EscalationRequest {
            stage: Stage::Multimodal,
            focus_feature_id: Some("F2".into()),
            entity,
            descriptor,
            drawing_region: None,
            candidates: vec![cand("F1", 1.0), cand("F2", 1.0)],
            validation_feedback: None,
        }
    }

    /// Replies from a queue and records what it was asked.
    struct Queue {
        replies: Mutex<Vec<Result<String, TransportError>>>,
        seen: Mutex<Vec<EscalationRequest>>,
    }

    impl Queue {
        fn new(mut replies: Vec<Result<String, TransportError>>) -> Self {
            replies.reverse();
            Queue {
                replies: Mutex::new(replies),
                seen: Mutex::new(Vec::new()),
            }
        }
    }

    impl EscalationClient for Queue {
        fn complete(&self, request: &EscalationRequest) -> Result<String, TransportError> {
            self.seen.lock().unwrap().push(request.clone());
            self.replies
                .lock()
                .unwrap()
                .pop()
                .unwrap_or_else(|| Err(TransportError("exhausted".into())))
        }
    }

    fn ok(s: &str) -> Result<String, TransportError> {
        Ok(s.to_string())
    }

    #[test]
    fn valid_map_at_multimodal() {
        let q = Queue::new(vec![ok(
            r#"{"decision":"map","target_feature_id":"F2","confidence":0.8,"rationale":"leader touches left hole"}"#,
        )]);
        let r = escalate(&request(), &q, &PipelineConfig::default());
        match r.outcome {
            EscalationOutcome::Mapped { stage, response } => {
                assert_eq!(stage, Stage::Multimodal);
                assert_eq!(response.target_feature_id.as_deref(), Some("F2"));
                assert_eq!(response.confidence, 0.8);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(r.attempts.len(), 1);
    }

    #[test]
    fn reject_then_llm_reject() {
        let reject = r#"{"decision":"reject","target_feature_id":null,"confidence":0.9,"rationale":"no candidate matches depth"}"#;
        let q = Queue::new(vec![ok(reject), ok(reject)]);
        let r = escalate(&request(), &q, &PipelineConfig::default());
        assert!(matches!(
            r.outcome,
            EscalationOutcome::Rejected {
                stage: Stage::ConstrainedLlm,
                ..
            }
        ));
        let seen = q.seen.lock().unwrap();
        assert_eq!(
            seen.iter().map(|r| r.stage).collect::<Vec<_>>(),
            vec![Stage::Multimodal, Stage::ConstrainedLlm]
        );
    }

    #[test]
    fn foreign_target_retries_once_with_feedback() {
        let bad = r#"{"decision":"map","target_feature_id":"F9","confidence":0.8,"rationale":"x"}"#;
        let q = Queue::new(vec![ok(bad), ok(bad)]);
        let cfg = PipelineConfig {
            llm_escalation_enabled: false,
            ..PipelineConfig::default()
        };
        let r = escalate(&request(), &q, &cfg);
        assert!(matches!(r.outcome, EscalationOutcome::Rejected { .. }));
        assert_eq!(r.attempts.len(), 2);
        let seen = q.seen.lock().unwrap();
        assert!(seen[0].validation_feedback.is_none());
        assert!(seen[1]
            .validation_feedback
            .as_deref()
            .unwrap()
            .contains("F9"));
    }

    #[test]
    fn retry_can_recover() {
        let q = Queue::new(vec![
            ok("not json"),
            ok(r#"{"decision":"map","target_feature_id":"F1","confidence":0.7,"rationale":"ok"}"#),
        ]);
        let r = escalate(&request(), &q, &PipelineConfig::default());
        assert!(matches!(
            r.outcome,
            EscalationOutcome::Mapped {
                stage: Stage::Multimodal,
                ..
            }
        ));
        assert_eq!(r.attempts.len(), 2);
    }

    #[test]
    fn transport_error_flags() {
        let q = Queue::new(vec![Err(TransportError("connection refused".into()))]);
        let r = escalate(&request(), &q, &PipelineConfig::default());
        assert!(matches!(r.outcome, EscalationOutcome::Flagged { .. }));
        assert_eq!(q.seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn llm_only_runs_when_multimodal_disabled() {
        let q = Queue::new(vec![ok(
            r#"{"decision":"map","target_feature_id":"F2","confidence":0.6,"rationale":"depth"}"#,
        )]);
        let cfg = PipelineConfig {
            vlm_selection_enabled: false,
            ..PipelineConfig::default()
        };
        let r = escalate(&request(), &q, &cfg);
        assert!(matches!(
            r.outcome,
            EscalationOutcome::Mapped {
                stage: Stage::ConstrainedLlm,
                ..
            }
        ));
    }

    #[test]
    fn disabled_escalation_flags_without_calls() {
        let q = Queue::new(vec![]);
        let cfg = PipelineConfig {
            vlm_selection_enabled: false,
            llm_escalation_enabled: false,
            ..PipelineConfig::default()
        };
        let r = escalate(&request(), &q, &cfg);
        assert!(matches!(r.outcome, EscalationOutcome::Flagged { .. }));
        assert!(q.seen.lock().unwrap().is_empty());
    }
}
