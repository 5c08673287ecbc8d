use crate::assignment::{
    build_candidate_sets, expand_pattern_groups, resolve, CandidateSets, PartContext,
};
use crate::clock::Clock;
use crate::config::PipelineConfig;
use crate::emit::emit_proposed_spec;
use crate::enrich::Enricher;
use crate::error::PipelineError;
use crate::escalation::EscalationClient;
use crate::model::{
    DrawingEntity, EnrichedDescriptor, Feature3D, ScoredCandidate, SpecNote, UnifiedSpec,
};
use crate::scoring::{score_all, CompatibilityTable};
use crate::validate::{validate_part_inputs, ValidationReport};

pub struct Pipeline<'a> {
    pub config: PipelineConfig,
    pub table: CompatibilityTable,
    pub enricher: &'a Enricher,
    pub client: &'a dyn EscalationClient,
    pub clock: &'a dyn Clock,
}

#[derive(Debug, Clone)]
pub struct MapOutcome {
    pub spec: UnifiedSpec,
    pub descriptors: Vec<EnrichedDescriptor>,
    pub scored: Vec<ScoredCandidate>,
    pub sets: CandidateSets,
    pub validation: ValidationReport,
}

impl Pipeline<'_> {
    /// Validate, enrich, score, select, resolve and emit one part.
    pub fn map_part(
        &self,
        part_id: &str,
        features: &[Feature3D],
        entities: &[DrawingEntity],
    ) -> Result<MapOutcome, PipelineError> {
        self.config.validate()?;
        let validation = validate_part_inputs(features, entities);
        if !validation.is_admissible() {
            let msgs: Vec<String> = validation
                .fatal()
                .map(|i| format!("{}: {}", i.subject, i.message))
                .collect();
            return Err(PipelineError::Validation(msgs.join("; ")));
        }
        let entities = &validation.normalized_entities;

        let mut notes: Vec<SpecNote> = validation
            .issues
            .iter()
            .map(|i| SpecNote {
                entity_id: None,
                message: format!("{}: {}", i.subject, i.message),
            })
            .collect();
        let mut descriptors = Vec::with_capacity(entities.len());
        for e in entities {
            let enriched = self.enricher.enrich(e);
            if let Some(note) = enriched.fallback_note {
                notes.push(SpecNote {
                    entity_id: Some(e.id.clone()),
                    message: note,
                });
            }
            descriptors.push(enriched.descriptor);
        }

        let scored = score_all(features, &descriptors, &self.config, &self.table);
        let mut sets = build_candidate_sets(&scored, features, &self.config);
        let expansion = expand_pattern_groups(&mut sets, features, &descriptors, &self.config);
        for n in expansion.notes.iter().filter(|n| !n.satisfied) {
            notes.push(SpecNote {
                entity_id: Some(n.entity_id.clone()),
                message: format!(
                    "multiplicity {}X unsatisfied: group of {} similar features",
                    n.multiplicity,
                    n.group.len()
                ),
            });
        }
        let part = PartContext {
            features,
            entities,
            descriptors: &descriptors,
        };
        let resolution = resolve(
            &sets,
            &part,
            &expansion,
            &self.config,
            self.client,
            self.clock,
        );
        let spec = emit_proposed_spec(
            part_id,
            resolution.records,
            features,
            entities,
            notes,
            &self.config,
        )?;
        Ok(MapOutcome {
            spec,
            descriptors,
            scored,
            sets,
            validation,
        })
    }
}
