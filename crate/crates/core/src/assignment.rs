//! Per-feature candidate filtering, near-tie selection, pattern expansion
//! and resolution into mapping records.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::config::PipelineConfig;
use crate::digest::{digest_bytes, digest_json};
use crate::escalation::{
    escalate, Attempt, CandidateSummary, EscalationClient, EscalationOutcome, EscalationRequest,
    EscalationResult, Stage,
};
use crate::model::{
    Actor, DrawingEntity, EnrichedDescriptor, EntityId, Feature3D, FeatureId, MappingMethod,
    MappingRecord, MappingStatus, ProvenanceEvent, ScoredCandidate, TraceStep,
};
use crate::validate::DIMENSIONAL_PARAMS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub feature_id: FeatureId,
    /// Highest score first; equal scores ordered by entity id.
    pub ranked: Vec<ScoredCandidate>,
    /// Entities scoring at least `rho` times the best score.
    pub near_tie_set: Vec<EntityId>,
}

impl CandidateSet {
    fn new(feature_id: FeatureId, mut ranked: Vec<ScoredCandidate>, rho: f64) -> Self {
        sort_ranked(&mut ranked);
        let scores: Vec<f64> = ranked.iter().map(|c| c.s_final).collect();
        let near_tie_set = select_near_ties(&scores, rho)
            .into_iter()
            .map(|i| ranked[i].entity_id.clone())
            .collect();
        CandidateSet {
            feature_id,
            ranked,
            near_tie_set,
        }
    }

    pub fn best(&self) -> Option<&ScoredCandidate> {
        self.ranked.first()
    }

    pub fn near_ties(&self) -> impl Iterator<Item = &ScoredCandidate> {
        self.ranked
            .iter()
            .filter(|c| self.near_tie_set.contains(&c.entity_id))
    }

    pub fn candidate(&self, entity_id: &str) -> Option<&ScoredCandidate> {
        self.ranked.iter().find(|c| c.entity_id == entity_id)
    }
}

fn sort_ranked(ranked: &mut [ScoredCandidate]) {
    ranked.sort_by(|a, b| {
        b.s_final
            .total_cmp(&a.s_final)
            .then_with(|| a.entity_id.cmp(&b.entity_id))
    });
}

/// Indices of scores at or above `rho` times the maximum.
pub fn select_near_ties(scores: &[f64], rho: f64) -> Vec<usize> {
    let Some(max) = scores.iter().copied().reduce(f64::max) else {
        return Vec::new();
    };
    let cutoff = rho * max;
    scores
        .iter()
        .enumerate()
        .filter(|(_, s)| **s >= cutoff)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateSets {
    /// One set per feature with a surviving candidate, by feature id.
    pub sets: Vec<CandidateSet>,
    pub unconstrained: Vec<FeatureId>,
}

impl CandidateSets {
    pub fn get(&self, feature_id: &str) -> Option<&CandidateSet> {
        self.sets.iter().find(|s| s.feature_id == feature_id)
    }

    /// Every surviving candidate for one entity, best first.
    pub fn candidates_for_entity(&self, entity_id: &str) -> Vec<&ScoredCandidate> {
        let mut out: Vec<&ScoredCandidate> = self
            .sets
            .iter()
            .filter_map(|s| s.candidate(entity_id))
            .collect();
        out.sort_by(|a, b| {
            b.s_final
                .total_cmp(&a.s_final)
                .then_with(|| a.feature_id.cmp(&b.feature_id))
        });
        out
    }
}

pub fn build_candidate_sets(
    scored: &[ScoredCandidate],
    features: &[Feature3D],
    config: &PipelineConfig,
) -> CandidateSets {
    let mut by_feature: BTreeMap<&str, Vec<ScoredCandidate>> = BTreeMap::new();
    for c in scored
        .iter()
        .filter(|c| c.s_type > 0.0 && c.s_final >= config.theta_cand)
    {
        by_feature
            .entry(c.feature_id.as_str())
            .or_default()
            .push(c.clone());
    }
    let mut out = CandidateSets::default();
    for f in features {
        match by_feature.remove(f.id.as_str()) {
            Some(ranked) => out
                .sets
                .push(CandidateSet::new(f.id.clone(), ranked, config.rho)),
            None => out.unconstrained.push(f.id.clone()),
        }
    }
    out.sets.sort_by(|a, b| a.feature_id.cmp(&b.feature_id));
    out.unconstrained.sort();
    out
}

/// Same type with every shared dimensional parameter within tolerance, or
/// the same pattern id.
pub fn geometrically_similar(a: &Feature3D, b: &Feature3D, epsilon: f64) -> bool {
    if let (Some(pa), Some(pb)) = (&a.metadata.pattern_id, &b.metadata.pattern_id) {
        if pa == pb {
            return true;
        }
    }
    if a.feature_type != b.feature_type {
        return false;
    }
    let mut shared = 0;
    for key in DIMENSIONAL_PARAMS {
        if let (Some(x), Some(y)) = (a.param(key), b.param(key)) {
            shared += 1;
            if (x - y).abs() > epsilon + 1e-9 {
                return false;
            }
        }
    }
    shared > 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternNote {
    pub entity_id: EntityId,
    pub multiplicity: u32,
    pub group: Vec<FeatureId>,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatternExpansion {
    pub notes: Vec<PatternNote>,
    /// Entities whose multiplicity no feature group satisfies. Their pairs
    /// are never accepted without escalation.
    pub unsatisfied: BTreeSet<EntityId>,
}

/// Spreads an `nX` callout over the group of similar features around its
/// best match.
pub fn expand_pattern_groups(
    sets: &mut CandidateSets,
    features: &[Feature3D],
    descriptors: &[EnrichedDescriptor],
    config: &PipelineConfig,
) -> PatternExpansion {
    let mut out = PatternExpansion::default();
    let feature_by_id: BTreeMap<&str, &Feature3D> =
        features.iter().map(|f| (f.id.as_str(), f)).collect();

    for desc in descriptors.iter().filter(|d| d.multiplicity > 1) {
        let Some(best) = sets
            .candidates_for_entity(&desc.entity_id)
            .first()
            .map(|c| (*c).clone())
        else {
            continue;
        };
        let anchor = feature_by_id[best.feature_id.as_str()];
        let group: Vec<&Feature3D> = features
            .iter()
            .filter(|f| f.id == anchor.id || geometrically_similar(anchor, f, config.epsilon_mm))
            .collect();
        let satisfied = group.len() >= desc.multiplicity as usize;
        out.notes.push(PatternNote {
            entity_id: desc.entity_id.clone(),
            multiplicity: desc.multiplicity,
            group: group.iter().map(|f| f.id.clone()).collect(),
            satisfied,
        });
        if !satisfied {
            out.unsatisfied.insert(desc.entity_id.clone());
            continue;
        }
        for member in group.iter().filter(|f| f.id != anchor.id) {
            let mut copy = best.clone();
            copy.feature_id = member.id.clone();
            copy.trace.push(TraceStep::Note {
                label: format!(
                    "pattern expansion from {} ({}X)",
                    anchor.id, desc.multiplicity
                ),
            });
            match sets.sets.iter_mut().find(|s| s.feature_id == member.id) {
                Some(set) => {
                    let mut ranked = std::mem::take(&mut set.ranked);
                    match ranked.iter_mut().find(|c| c.entity_id == desc.entity_id) {
                        Some(existing) if existing.s_final >= copy.s_final => {}
                        Some(existing) => *existing = copy,
                        None => ranked.push(copy),
                    }
                    *set = CandidateSet::new(member.id.clone(), ranked, config.rho);
                }
                None => {
                    sets.unconstrained.retain(|f| f != &member.id);
                    sets.sets
                        .push(CandidateSet::new(member.id.clone(), vec![copy], config.rho));
                }
            }
        }
        sets.sets.sort_by(|a, b| a.feature_id.cmp(&b.feature_id));
    }
    out
}

/// Everything resolution needs to look up by id.
pub struct PartContext<'a> {
    pub features: &'a [Feature3D],
    pub entities: &'a [DrawingEntity],
    pub descriptors: &'a [EnrichedDescriptor],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Resolution {
    /// Sorted by feature id, then entity id.
    pub records: Vec<MappingRecord>,
}

impl Resolution {
    pub fn flagged(&self) -> impl Iterator<Item = &MappingRecord> {
        self.records
            .iter()
            .filter(|r| r.status == MappingStatus::Flagged)
    }
}

struct Unit<'a> {
    focus: &'a ScoredCandidate,
    request: EscalationRequest,
}

fn event(
    stage: &str,
    actor: Actor,
    clock: &dyn Clock,
    digest: String,
    note: String,
    payload: Option<serde_json::Value>,
) -> ProvenanceEvent {
    ProvenanceEvent {
        stage: stage.to_string(),
        timestamp: clock.now(),
        actor,
        actor_id: None,
        payload_digest: digest,
        note,
        payload,
    }
}

fn scoring_event(c: &ScoredCandidate, clock: &dyn Clock) -> ProvenanceEvent {
    event(
        "scoring",
        Actor::Engine,
        clock,
        digest_json(c),
        format!(
            "s_type={} s_dim={} s_ctx={} h={} s_final={:.6}",
            c.s_type, c.s_dim, c.s_ctx, c.h_adjust, c.s_final
        ),
        None,
    )
}

fn attempt_event(a: &Attempt, clock: &dyn Clock) -> ProvenanceEvent {
    let actor = match a.stage {
        Stage::Multimodal => Actor::Vlm,
        Stage::ConstrainedLlm => Actor::Llm,
    };
    let stage = format!("escalation:{}", a.stage);
    match (&a.response, &a.error) {
        (Some(resp), _) => event(
            &stage,
            actor,
            clock,
            digest_bytes(a.raw.as_bytes()),
            String::new(),
            Some(serde_json::to_value(resp).expect("response serializes")),
        ),
        (None, err) => event(
            &stage,
            actor,
            clock,
            digest_bytes(a.raw.as_bytes()),
            format!(
                "rejected by validator: {}",
                err.as_deref().unwrap_or("unknown")
            ),
            Some(serde_json::Value::String(a.raw.clone())),
        ),
    }
}

fn summary(feature: &Feature3D, s_final: f64) -> CandidateSummary {
    CandidateSummary {
        feature_id: feature.id.clone(),
        feature_type: feature.feature_type.clone(),
        params: feature.params.clone(),
        s_final,
    }
}

pub fn resolve(
    sets: &CandidateSets,
    part: &PartContext<'_>,
    expansion: &PatternExpansion,
    config: &PipelineConfig,
    client: &dyn EscalationClient,
    clock: &dyn Clock,
) -> Resolution {
    let features: BTreeMap<&str, &Feature3D> =
        part.features.iter().map(|f| (f.id.as_str(), f)).collect();
    let entities: BTreeMap<&str, &DrawingEntity> =
        part.entities.iter().map(|e| (e.id.as_str(), e)).collect();
    let descriptors: BTreeMap<&str, &EnrichedDescriptor> = part
        .descriptors
        .iter()
        .map(|d| (d.entity_id.as_str(), d))
        .collect();

    let mut accepted: Vec<MappingRecord> = Vec::new();
    let mut units: Vec<Unit<'_>> = Vec::new();

    for set in &sets.sets {
        let near: Vec<&ScoredCandidate> = set.near_ties().collect();
        let Some(top) = near.first() else { continue };
        let singleton_ok = near.len() == 1
            && top.s_final >= config.theta_escal
            && !expansion.unsatisfied.contains(&top.entity_id);
        if singleton_ok || config.argmax_accept {
            let rationale = if singleton_ok {
                format!("single near-tie candidate with score {:.3}", top.s_final)
            } else {
                format!("highest-ranked candidate with score {:.3}", top.s_final)
            };
            accepted.push(MappingRecord {
                id: MappingRecord::make_id(&top.entity_id, &set.feature_id),
                feature_id: set.feature_id.clone(),
                entity_id: top.entity_id.clone(),
                method: MappingMethod::Deterministic,
                confidence: top.s_final.clamp(0.0, 1.0),
                rationale: rationale.clone(),
                status: MappingStatus::Accepted,
                provenance: vec![
                    scoring_event(top, clock),
                    event(
                        "assignment",
                        Actor::Engine,
                        clock,
                        digest_json(&set.near_tie_set),
                        rationale,
                        None,
                    ),
                ],
                candidates: Vec::new(),
            });
            continue;
        }
        for cand in near {
            let (Some(entity), Some(desc)) = (
                entities.get(cand.entity_id.as_str()),
                descriptors.get(cand.entity_id.as_str()),
            ) else {
                continue;
            };
            let candidates = sets
                .candidates_for_entity(&cand.entity_id)
                .into_iter()
                .filter_map(|c| {
                    features
                        .get(c.feature_id.as_str())
                        .map(|f| summary(f, c.s_final))
                })
                .collect();
            units.push(Unit {
                focus: cand,
                request: EscalationRequest {
                    stage: Stage::Multimodal,
                    focus_feature_id: Some(set.feature_id.clone()),
                    entity: (*entity).clone(),
                    descriptor: (*desc).clone(),
                    drawing_region: entity.context.region_ref.clone(),
                    candidates,
                    validation_feedback: None,
                },
            });
        }
    }

    let results: Vec<EscalationResult> = if units.is_empty() {
        Vec::new()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.max_in_flight.max(1))
            .build()
            .expect("thread pool");
        pool.install(|| {
            units
                .par_iter()
                .map(|u| escalate(&u.request, client, config))
                .collect()
        })
    };

    let mut flagged: Vec<MappingRecord> = Vec::new();
    for (unit, result) in units.iter().zip(results) {
        let focus = unit.focus;
        let mut provenance = vec![scoring_event(focus, clock)];
        provenance.extend(result.attempts.iter().map(|a| attempt_event(a, clock)));
        match result.outcome {
            EscalationOutcome::Mapped { stage, response } => {
                let target = response
                    .target_feature_id
                    .clone()
                    .expect("validated map has target");
                let method = match stage {
                    Stage::Multimodal => MappingMethod::DeterministicVlm,
                    Stage::ConstrainedLlm => MappingMethod::Llm,
                };
                let mut rationale = response.rationale.clone();
                if target != focus.feature_id {
                    rationale = format!("{rationale} (selected over {})", focus.feature_id);
                }
                accepted.push(MappingRecord {
                    id: MappingRecord::make_id(&focus.entity_id, &target),
                    feature_id: target,
                    entity_id: focus.entity_id.clone(),
                    method,
                    confidence: response.confidence,
                    rationale,
                    status: MappingStatus::Accepted,
                    provenance,
                    candidates: Vec::new(),
                });
            }
            outcome => {
                let (method, rationale) = match outcome {
                    EscalationOutcome::Rejected {
                        stage: Stage::ConstrainedLlm,
                        rationale,
                        ..
                    } => (MappingMethod::Llm, rationale),
                    EscalationOutcome::Rejected {
                        stage: Stage::Multimodal,
                        rationale,
                        ..
                    } => (MappingMethod::DeterministicVlm, rationale),
                    EscalationOutcome::Flagged { reason } => (MappingMethod::Deterministic, reason),
                    EscalationOutcome::Mapped { .. } => unreachable!(),
                };
                let mut candidates: Vec<ScoredCandidate> = sets
                    .candidates_for_entity(&focus.entity_id)
                    .into_iter()
                    .cloned()
                    .collect();
                if let Some(set) = sets.get(&focus.feature_id) {
                    for c in set.near_ties() {
                        if !candidates
                            .iter()
                            .any(|x| x.feature_id == c.feature_id && x.entity_id == c.entity_id)
                        {
                            candidates.push(c.clone());
                        }
                    }
                }
                let mut note = format!("flagged for review: {rationale}");
                if expansion.unsatisfied.contains(&focus.entity_id) {
                    note.push_str("; multiplicity unsatisfied");
                }
                provenance.push(event(
                    "assignment",
                    Actor::Engine,
                    clock,
                    digest_json(&focus.entity_id),
                    note,
                    None,
                ));
                flagged.push(MappingRecord {
                    id: MappingRecord::make_id(&focus.entity_id, &focus.feature_id),
                    feature_id: focus.feature_id.clone(),
                    entity_id: focus.entity_id.clone(),
                    method,
                    confidence: focus.s_final.clamp(0.0, 1.0),
                    rationale,
                    status: MappingStatus::Flagged,
                    provenance,
                    candidates,
                });
            }
        }
    }

    // First acceptance of a pair wins; a flagged pair that was also accepted
    // through another feature's escalation is dropped.
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    let mut records: Vec<MappingRecord> = Vec::new();
    for r in accepted.into_iter().chain(flagged) {
        if seen.insert((r.feature_id.clone(), r.entity_id.clone())) {
            records.push(r);
        }
    }
    records.sort_by(|a, b| {
        a.feature_id
            .cmp(&b.feature_id)
            .then_with(|| a.entity_id.cmp(&b.entity_id))
    });
    Resolution { records }
}
