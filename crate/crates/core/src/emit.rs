use std::collections::{BTreeMap, BTreeSet};

use crate::config::PipelineConfig;
use crate::error::EmitError;
use crate::model::{
    DrawingEntity, Feature3D, Inventory, MappingRecord, MappingStatus, SpecNote, UnifiedSpec,
    UnmappedEntity, SPEC_VERSION,
};

pub fn emit_proposed_spec(
    part_id: &str,
    records: Vec<MappingRecord>,
    features: &[Feature3D],
    entities: &[DrawingEntity],
    notes: Vec<SpecNote>,
    config: &PipelineConfig,
) -> Result<UnifiedSpec, EmitError> {
    let mut spec = UnifiedSpec {
        spec_version: SPEC_VERSION.to_string(),
        part_id: part_id.to_string(),
        revision: 0,
        inventory: Inventory {
            features: features.iter().map(|f| f.id.clone()).collect(),
            entities: entities.iter().map(|e| e.id.clone()).collect(),
        },
        mappings: records,
        unmapped_entities: Vec::new(),
        unconstrained_features: Vec::new(),
        approval: None,
        notes,
        config_snapshot: config.clone(),
    };
    refresh_buckets(&mut spec, &BTreeMap::new());
    check_invariants(&spec)?;
    Ok(spec)
}

/// Recomputes `unmapped_entities` and `unconstrained_features` from the
/// mapping list. `reasons` overrides the generated reason per entity; an
/// existing reason on the spec is kept otherwise.
pub fn refresh_buckets(spec: &mut UnifiedSpec, reasons: &BTreeMap<String, String>) {
    let live_entities: BTreeSet<&str> = spec
        .mappings
        .iter()
        .filter(|m| m.status.is_live())
        .map(|m| m.entity_id.as_str())
        .collect();
    let live_features: BTreeSet<&str> = spec
        .mappings
        .iter()
        .filter(|m| m.status.is_live())
        .map(|m| m.feature_id.as_str())
        .collect();
    let previous: BTreeMap<String, String> = spec
        .unmapped_entities
        .iter()
        .map(|u| (u.entity_id.clone(), u.reason.clone()))
        .collect();

    let mut unmapped = Vec::new();
    for e in &spec.inventory.entities {
        if live_entities.contains(e.as_str()) {
            continue;
        }
        let flagged = spec
            .mappings
            .iter()
            .find(|m| &m.entity_id == e && m.status == MappingStatus::Flagged);
        let rejected = spec
            .mappings
            .iter()
            .rev()
            .find(|m| &m.entity_id == e && m.status == MappingStatus::Rejected);
        let reason = if let Some(r) = reasons.get(e) {
            r.clone()
        } else if let Some(m) = flagged {
            format!("pending review: {}", m.rationale)
        } else if let Some(m) = rejected {
            format!("rejected: {}", m.rationale)
        } else if let Some(r) = previous.get(e).filter(|r| !r.starts_with("pending review")) {
            r.clone()
        } else {
            "no compatible feature above the candidate threshold".to_string()
        };
        unmapped.push(UnmappedEntity {
            entity_id: e.clone(),
            reason,
        });
    }
    spec.unmapped_entities = unmapped;
    spec.unconstrained_features = spec
        .inventory
        .features
        .iter()
        .filter(|f| !live_features.contains(f.as_str()))
        .cloned()
        .collect();
}

/// Every entity is either mapped or listed unmapped, every feature is either
/// constrained or listed unconstrained, and mappings reference known ids.
pub fn check_invariants(spec: &UnifiedSpec) -> Result<(), EmitError> {
    let features: BTreeSet<&str> = spec.inventory.features.iter().map(String::as_str).collect();
    let entities: BTreeSet<&str> = spec.inventory.entities.iter().map(String::as_str).collect();
    let mut ids = BTreeSet::new();
    for m in &spec.mappings {
        if !ids.insert(m.id.as_str()) {
            return Err(EmitError::Invariant(format!(
                "duplicate mapping id {}",
                m.id
            )));
        }
        if !features.contains(m.feature_id.as_str()) || !entities.contains(m.entity_id.as_str()) {
            return Err(EmitError::Invariant(format!(
                "mapping {} references unknown ids",
                m.id
            )));
        }
        if !(0.0..=1.0).contains(&m.confidence) {
            return Err(EmitError::Invariant(format!(
                "mapping {} confidence {} out of range",
                m.id, m.confidence
            )));
        }
    }
    let live_e: BTreeSet<&str> = spec
        .mappings
        .iter()
        .filter(|m| m.status.is_live())
        .map(|m| m.entity_id.as_str())
        .collect();
    let live_f: BTreeSet<&str> = spec
        .mappings
        .iter()
        .filter(|m| m.status.is_live())
        .map(|m| m.feature_id.as_str())
        .collect();
    let unmapped: BTreeSet<&str> = spec
        .unmapped_entities
        .iter()
        .map(|u| u.entity_id.as_str())
        .collect();
    let unconstrained: BTreeSet<&str> = spec
        .unconstrained_features
        .iter()
        .map(String::as_str)
        .collect();
    for e in &entities {
        if live_e.contains(e) == unmapped.contains(e) {
            return Err(EmitError::Invariant(format!(
                "entity {e} must be in exactly one bucket"
            )));
        }
    }
    for f in &features {
        if live_f.contains(f) == unconstrained.contains(f) {
            return Err(EmitError::Invariant(format!(
                "feature {f} must be in exactly one bucket"
            )));
        }
    }
    if unmapped.len() != spec.unmapped_entities.len()
        || unconstrained.len() != spec.unconstrained_features.len()
    {
        return Err(EmitError::Invariant("duplicate bucket entries".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EntityType, FeatureType, MappingMethod};

    fn record(f: &str, e: &str, status: MappingStatus) -> MappingRecord {
        MappingRecord {
            id: MappingRecord::make_id(e, f),
            feature_id: f.into(),
            entity_id: e.into(),
            method: MappingMethod::Deterministic,
            confidence: 0.9,
            rationale: "r".into(),
            status,
            provenance: vec![],
            candidates: vec![],
        }
    }

    fn inputs() -> (Vec<Feature3D>, Vec<DrawingEntity>) {
        (
            vec![
                Feature3D::new("F1", FeatureType::Hole),
                Feature3D::new("F2", FeatureType::Slot),
            ],
            vec![
                DrawingEntity::new("E1", EntityType::Dimension, "Ø5"),
                DrawingEntity::new("E2", EntityType::Note, "x"),
            ],
        )
    }

    #[test]
    fn buckets_are_exhaustive() {
        let (f, e) = inputs();
        let spec = emit_proposed_spec(
            "p",
            vec![record("F1", "E1", MappingStatus::Accepted)],
            &f,
            &e,
            vec![],
            &PipelineConfig::default(),
        )
        .unwrap();
        assert_eq!(spec.unmapped_entities.len(), 1);
        assert_eq!(spec.unmapped_entities[0].entity_id, "E2");
        assert_eq!(spec.unconstrained_features, vec!["F2".to_string()]);
        assert!(spec.approval.is_none());
    }

    #[test]
    fn flagged_entity_listed_pending() {
        let (f, e) = inputs();
        let spec = emit_proposed_spec(
            "p",
            vec![record("F1", "E1", MappingStatus::Flagged)],
            &f,
            &e,
            vec![],
            &PipelineConfig::default(),
        )
        .unwrap();
        assert_eq!(spec.unmapped_entities.len(), 2);
        assert!(spec.unmapped_entities[0]
            .reason
            .starts_with("pending review"));
        assert_eq!(spec.flagged_count(), 1);
    }

    #[test]
    fn empty_entities_leave_all_unconstrained() {
        let (f, _) = inputs();
        let spec =
            emit_proposed_spec("p", vec![], &f, &[], vec![], &PipelineConfig::default()).unwrap();
        assert_eq!(spec.unconstrained_features.len(), 2);
    }

    #[test]
    fn unknown_ids_abort() {
        let (f, e) = inputs();
        let err = emit_proposed_spec(
            "p",
            vec![record("F9", "E1", MappingStatus::Accepted)],
            &f,
            &e,
            vec![],
            &PipelineConfig::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn broken_bucket_detected() {
        let (f, e) = inputs();
        let mut spec =
            emit_proposed_spec("p", vec![], &f, &e, vec![], &PipelineConfig::default()).unwrap();
        spec.unmapped_entities.pop();
        assert!(check_invariants(&spec).is_err());
    }
}
