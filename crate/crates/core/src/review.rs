//! Reviewer decisions over a proposed specification.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::digest::digest_json;
use crate::emit::{check_invariants, refresh_buckets};
use crate::error::ReviewError;
use crate::model::{
    Actor, Approval, FeatureId, MappingMethod, MappingRecord, MappingStatus, ProvenanceEvent,
    UnifiedSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ReviewAction {
    Accept,
    Reject,
    Edit { target_feature_id: FeatureId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub mapping_id: String,
    #[serde(flatten)]
    pub action: ReviewAction,
    pub reviewer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

fn human_event(decision: &ReviewDecision, clock: &dyn Clock, note: String) -> ProvenanceEvent {
    ProvenanceEvent {
        stage: "review".to_string(),
        timestamp: clock.now(),
        actor: Actor::Human,
        actor_id: Some(decision.reviewer.clone()),
        payload_digest: digest_json(decision),
        note,
        payload: Some(serde_json::to_value(decision).expect("decision serializes")),
    }
}

/// Applies decisions in order. Either all succeed or the input is returned
/// untouched via the error path; the revision increases by one on success.
pub fn apply_review_decisions(
    spec: &UnifiedSpec,
    decisions: &[ReviewDecision],
    clock: &dyn Clock,
) -> Result<UnifiedSpec, ReviewError> {
    if spec.approval.is_some() {
        return Err(ReviewError::AlreadyApproved);
    }
    let mut out = spec.clone();
    let mut reasons = BTreeMap::new();
    for d in decisions {
        if d.reviewer.trim().is_empty() {
            return Err(ReviewError::MissingReviewer);
        }
        let idx = out
            .mappings
            .iter()
            .position(|m| m.id == d.mapping_id)
            .ok_or_else(|| ReviewError::UnknownMapping(d.mapping_id.clone()))?;
        match &d.action {
            ReviewAction::Accept => {
                let m = &mut out.mappings[idx];
                if m.status != MappingStatus::Accepted && m.status != MappingStatus::HumanEdited {
                    m.method = MappingMethod::Human;
                    m.confidence = 1.0;
                }
                if m.status != MappingStatus::HumanEdited {
                    m.status = MappingStatus::Accepted;
                }
                if let Some(r) = &d.rationale {
                    m.rationale = r.clone();
                }
                let ev = human_event(d, clock, "accepted by reviewer".into());
                m.provenance.push(ev);
            }
            ReviewAction::Reject => {
                let rationale = d
                    .rationale
                    .clone()
                    .unwrap_or_else(|| "rejected by reviewer".to_string());
                let ev = human_event(d, clock, format!("rejected: {rationale}"));
                let m = &mut out.mappings[idx];
                m.method = MappingMethod::Human;
                m.status = MappingStatus::Rejected;
                m.rationale = rationale.clone();
                m.provenance.push(ev);
                reasons.insert(
                    m.entity_id.clone(),
                    format!("rejected by {}: {rationale}", d.reviewer),
                );
            }
            ReviewAction::Edit { target_feature_id } => {
                if !out.inventory.features.contains(target_feature_id) {
                    return Err(ReviewError::UnknownFeature(target_feature_id.clone()));
                }
                let entity_id = out.mappings[idx].entity_id.clone();
                let new_id = MappingRecord::make_id(&entity_id, target_feature_id);
                if new_id != d.mapping_id && out.mappings.iter().any(|m| m.id == new_id) {
                    // The target pair already has a record: retire this one
                    // and promote the existing record.
                    let ev = human_event(d, clock, format!("superseded by {new_id}"));
                    let old = &mut out.mappings[idx];
                    old.status = MappingStatus::Rejected;
                    old.method = MappingMethod::Human;
                    old.provenance.push(ev);
                    let ev = human_event(d, clock, format!("edited from {}", d.mapping_id));
                    let m = out
                        .mappings
                        .iter_mut()
                        .find(|m| m.id == new_id)
                        .expect("checked above");
                    promote(m, d, ev);
                } else {
                    let from = out.mappings[idx].feature_id.clone();
                    let ev = human_event(
                        d,
                        clock,
                        format!("edited from {from} to {target_feature_id}"),
                    );
                    let m = &mut out.mappings[idx];
                    m.id = new_id;
                    m.feature_id = target_feature_id.clone();
                    promote(m, d, ev);
                }
                reasons.remove(&entity_id);
            }
        }
    }
    out.mappings.sort_by(|a, b| {
        a.feature_id
            .cmp(&b.feature_id)
            .then_with(|| a.entity_id.cmp(&b.entity_id))
    });
    refresh_buckets(&mut out, &reasons);
    check_invariants(&out).expect("review keeps bucket invariants");
    out.revision += 1;
    Ok(out)
}

fn promote(m: &mut MappingRecord, d: &ReviewDecision, ev: ProvenanceEvent) {
    m.method = MappingMethod::Human;
    m.status = MappingStatus::HumanEdited;
    m.confidence = 1.0;
    m.rationale = d
        .rationale
        .clone()
        .unwrap_or_else(|| "edited by reviewer".to_string());
    m.provenance.push(ev);
}

/// Records approval. Refused while flagged items remain.
pub fn approve(
    spec: &UnifiedSpec,
    reviewer: &str,
    clock: &dyn Clock,
) -> Result<UnifiedSpec, ReviewError> {
    if spec.approval.is_some() {
        return Err(ReviewError::AlreadyApproved);
    }
    if reviewer.trim().is_empty() {
        return Err(ReviewError::MissingReviewer);
    }
    let flagged = spec.flagged_count();
    if flagged > 0 {
        return Err(ReviewError::FlaggedRemaining(flagged));
    }
    let mut out = spec.clone();
    out.approval = Some(Approval {
        reviewer: reviewer.to_string(),
        timestamp: clock.now(),
    });
    out.revision += 1;
    Ok(out)
}
