use serde_json::Value;
use thiserror::Error;

use super::{Decision, EscalationRequest, EscalationResponse};

/// JSON Schema of the fixed response format, as sent to model providers.
pub const RESPONSE_SCHEMA: &str = include_str!("../../assets/escalation_response.schema.json");

const KEYS: [&str; 4] = ["decision", "target_feature_id", "confidence", "rationale"];

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SchemaViolation {
    #[error("response is not valid JSON: {0}")]
    NotJson(String),
    #[error("response must be a JSON object")]
    NotObject,
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("unexpected key `{0}`")]
    UnexpectedKey(String),
    #[error("`decision` must be \"map\" or \"reject\"")]
    BadDecision,
    #[error("`confidence` must be a number in [0, 1]")]
    BadConfidence,
    #[error("`rationale` must be a non-empty string")]
    BadRationale,
    #[error("`target_feature_id` must be a string or null")]
    BadTargetType,
    #[error("decision `map` requires a target_feature_id")]
    MissingTarget,
    #[error("decision `reject` must not name a target (got `{0}`)")]
    TargetOnReject(String),
    #[error("target_feature_id `{0}` is not among the candidates")]
    UnknownTarget(String),
}

/// Parses and checks a raw model response against the fixed schema and
/// the request's candidate list.
pub fn validate_response(
    raw: &str,
    request: &EscalationRequest,
) -> Result<EscalationResponse, SchemaViolation> {
    let value: Value =
        serde_json::from_str(raw.trim()).map_err(|e| SchemaViolation::NotJson(e.to_string()))?;
    let obj = value.as_object().ok_or(SchemaViolation::NotObject)?;
    for key in KEYS {
        if !obj.contains_key(key) {
            return Err(SchemaViolation::MissingKey(key));
        }
    }
    if let Some(extra) = obj.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(SchemaViolation::UnexpectedKey(extra.clone()));
    }
    let decision = match obj["decision"].as_str() {
        Some("map") => Decision::Map,
        Some("reject") => Decision::Reject,
        _ => return Err(SchemaViolation::BadDecision),
    };
    let confidence = obj["confidence"]
        .as_f64()
        .filter(|c| c.is_finite() && (0.0..=1.0).contains(c))
        .ok_or(SchemaViolation::BadConfidence)?;
    let rationale = obj["rationale"]
        .as_str()
        .filter(|r| !r.trim().is_empty())
        .ok_or(SchemaViolation::BadRationale)?
        .to_string();
    let target = match &obj["target_feature_id"] {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        _ => return Err(SchemaViolation::BadTargetType),
    };
    match (decision, &target) {
        (Decision::Map, None) => return Err(SchemaViolation::MissingTarget),
        (Decision::Map, Some(t)) if !request.has_candidate(t) => {
            return Err(SchemaViolation::UnknownTarget(t.clone()))
        }
        (Decision::Reject, Some(t)) => return Err(SchemaViolation::TargetOnReject(t.clone())),
        _ => {}
    }
    Ok(EscalationResponse {
        decision,
        target_feature_id: target,
        confidence,
        rationale,
    })
}
