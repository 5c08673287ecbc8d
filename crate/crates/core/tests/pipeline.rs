use std::path::PathBuf;

use cadmap_core::emit::check_invariants;
use cadmap_core::enrich::Enricher;
use cadmap_core::escalation::{MockClient, MockPolicy};
use cadmap_core::eval::{compute_metrics, generate_synthetic_corpus, CorpusProfile, GroundTruth};
use cadmap_core::io::{read_json, EntitiesFile, FeaturesFile};
use cadmap_core::{
    apply_review_decisions, approve, CompatibilityTable, FixedClock, MappingMethod, MappingStatus,
    Pipeline, PipelineConfig, ReviewAction, ReviewDecision, ReviewError, UnifiedSpec,
};

fn fig3_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/fig3")
}

fn map_fig3(client: &MockClient) -> UnifiedSpec {
    let dir = fig3_dir();
    let features: FeaturesFile = read_json(&dir.join("features.json")).unwrap();
    let entities: EntitiesFile = read_json(&dir.join("entities.json")).unwrap();
    let table = CompatibilityTable::load_override(&dir.join("compat.json")).unwrap();
    let config = PipelineConfig::default();
    let enricher = Enricher::rule_based(config.enrich_confidence);
    let clock = FixedClock::epoch();
    let pipeline = Pipeline {
        config,
        table,
        enricher: &enricher,
        client,
        clock: &clock,
    };
    pipeline
        .map_part("fig3", &features.features, &entities.entities)
        .unwrap()
        .spec
}

#[test]
fn fig3_with_rejecting_escalation_leaves_pattern_callout_for_review() {
    let spec = map_fig3(&MockClient::new(MockPolicy::AlwaysReject));
    check_invariants(&spec).unwrap();
    assert_eq!(spec.flagged_count(), 1);
    let flagged = spec
        .mappings
        .iter()
        .find(|m| m.status == MappingStatus::Flagged)
        .unwrap();
    assert_eq!(flagged.entity_id, "E2");
    assert!(!flagged.candidates.is_empty());
    assert!(spec
        .unmapped_entities
        .iter()
        .any(|u| u.entity_id == "E2" && u.reason.starts_with("pending review")));
    assert!(spec.approval.is_none());
}

#[test]
fn review_flow_reaches_approval() {
    let spec = map_fig3(&MockClient::new(MockPolicy::AlwaysReject));
    let clock = FixedClock::epoch();
    let flagged_id = spec
        .mappings
        .iter()
        .find(|m| m.status == MappingStatus::Flagged)
        .unwrap()
        .id
        .clone();

    let err = approve(&spec, "ana", &clock).unwrap_err();
    assert!(matches!(err, ReviewError::FlaggedRemaining(1)));

    let accept = ReviewDecision {
        mapping_id: flagged_id.clone(),
        action: ReviewAction::Accept,
        reviewer: "ana".into(),
        rationale: None,
    };
    let reviewed = apply_review_decisions(&spec, &[accept], &clock).unwrap();
    assert_eq!(reviewed.revision, spec.revision + 1);
    let m = reviewed.mapping(&flagged_id).unwrap();
    assert_eq!(
        (m.status, m.method, m.confidence),
        (MappingStatus::Accepted, MappingMethod::Human, 1.0)
    );
    assert_eq!(
        m.provenance.last().unwrap().actor_id.as_deref(),
        Some("ana")
    );
    // Earlier provenance is preserved verbatim.
    let before = spec.mapping(&flagged_id).unwrap();
    assert_eq!(
        &m.provenance[..before.provenance.len()],
        &before.provenance[..]
    );
    check_invariants(&reviewed).unwrap();

    let truth: GroundTruth = read_json(&fig3_dir().join("truth.json")).unwrap();
    assert_eq!(
        compute_metrics(&reviewed.live_links(), &truth).exact_match_rate,
        1.0
    );

    let approved = approve(&reviewed, "ana", &clock).unwrap();
    assert_eq!(approved.approval.as_ref().unwrap().reviewer, "ana");
    assert!(matches!(
        approve(&approved, "ana", &clock),
        Err(ReviewError::AlreadyApproved)
    ));
    let again = ReviewDecision {
        mapping_id: flagged_id,
        action: ReviewAction::Reject,
        reviewer: "bo".into(),
        rationale: None,
    };
    assert!(matches!(
        apply_review_decisions(&approved, &[again], &clock),
        Err(ReviewError::AlreadyApproved)
    ));
}

#[test]
fn edit_and_reject_move_items_between_buckets() {
    let spec = map_fig3(&MockClient::new(MockPolicy::AlwaysReject));
    let clock = FixedClock::epoch();
    let reject = ReviewDecision {
        mapping_id: "E4->F4".into(),
        action: ReviewAction::Reject,
        reviewer: "ana".into(),
        rationale: Some("wrong edge".into()),
    };
    let out = apply_review_decisions(&spec, &[reject], &clock).unwrap();
    assert_eq!(
        out.mapping("E4->F4").unwrap().status,
        MappingStatus::Rejected
    );
    assert!(out.unconstrained_features.contains(&"F4".to_string()));
    let reason = &out
        .unmapped_entities
        .iter()
        .find(|u| u.entity_id == "E4")
        .unwrap()
        .reason;
    assert!(
        reason.contains("ana") && reason.contains("wrong edge"),
        "{reason}"
    );
    check_invariants(&out).unwrap();

    let edit = ReviewDecision {
        mapping_id: "E4->F4".into(),
        action: ReviewAction::Edit {
            target_feature_id: "F4".into(),
        },
        reviewer: "bo".into(),
        rationale: None,
    };
    let restored = apply_review_decisions(&out, &[edit], &clock).unwrap();
    assert_eq!(
        restored.mapping("E4->F4").unwrap().status,
        MappingStatus::HumanEdited
    );
    check_invariants(&restored).unwrap();

    let bad = ReviewDecision {
        mapping_id: "E4->F4".into(),
        action: ReviewAction::Edit {
            target_feature_id: "F99".into(),
        },
        reviewer: "bo".into(),
        rationale: None,
    };
    assert!(matches!(
        apply_review_decisions(&restored, &[bad], &clock),
        Err(ReviewError::UnknownFeature(_))
    ));
}

#[test]
fn synthetic_corpus_specs_hold_invariants_under_every_policy() {
    let parts = generate_synthetic_corpus(7, 10, CorpusProfile::Table1);
    let clock = FixedClock::epoch();
    let config = PipelineConfig::default();
    let enricher = Enricher::rule_based(config.enrich_confidence);
    for part in &parts {
        let clients = [
            MockClient::oracle(part.truth.links.iter().cloned()),
            MockClient::new(MockPolicy::FirstCandidate),
            MockClient::new(MockPolicy::AlwaysReject),
        ];
        for client in &clients {
            let pipeline = Pipeline {
                config: config.clone(),
                table: CompatibilityTable::default(),
                enricher: &enricher,
                client,
                clock: &clock,
            };
            let out = pipeline
                .map_part(&part.part_id, &part.features, &part.entities)
                .unwrap();
            check_invariants(&out.spec).unwrap();
            for c in &out.scored {
                assert!((c.replay_trace() - c.s_final).abs() < 1e-12);
            }
            let m = compute_metrics(&out.spec.live_links(), &part.truth);
            assert!(m.exact_match_rate <= m.partial_match_rate);
        }
    }
}

#[test]
fn mapping_is_reproducible() {
    let a = serde_json::to_string(&map_fig3(&MockClient::new(MockPolicy::FirstCandidate))).unwrap();
    let b = serde_json::to_string(&map_fig3(&MockClient::new(MockPolicy::FirstCandidate))).unwrap();
    assert_eq!(a, b);
}
