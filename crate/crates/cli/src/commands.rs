use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use cadmap_core::clock::{Clock, FixedClock, SystemClock};
use cadmap_core::enrich::{Enricher, EnricherBackend};
use cadmap_core::error::{EvalError, IoError, PipelineError};
use cadmap_core::escalation::{EscalationClient, HttpEscalationClient, MockClient, MockPolicy};
use cadmap_core::eval::{
    compute_metrics, generate_synthetic_corpus, macro_average, render_summary, run_ablation,
    CorpusProfile, GroundTruth, PartInput, PartMetrics, PartResult,
};
use cadmap_core::io::{read_json, write_atomic, write_json, EntitiesFile, FeaturesFile};
use cadmap_core::scoring::CompatibilityTable;
use cadmap_core::{AblationVariant, Pipeline, PipelineConfig, UnifiedSpec};
use cadmap_review::{AppState, SpecStore};
use rayon::prelude::*;
use serde::Serialize;

use crate::{EvalArgs, GenArgs, MapArgs, PipelineArgs, Policy, ServeArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or input files.
    Input(String),
    /// An internal invariant failed.
    Invariant(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Invariant(m) => f.write_str(m),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Emit(_) => CliError::Invariant(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Pipeline(p) => p.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn clock(now: Option<&str>, offline: bool) -> Result<Arc<dyn Clock>> {
    if let Some(text) = now {
        let c = FixedClock::parse(text).ok_or_else(|| {
            CliError::Input(format!("--now: `{text}` is not an RFC 3339 timestamp"))
        })?;
        return Ok(Arc::new(c));
    }
    if let Ok(v) = std::env::var("SOURCE_DATE_EPOCH") {
        let secs = v.trim().parse().ok().and_then(FixedClock::from_unix);
        return secs
            .map(|c| Arc::new(c) as Arc<dyn Clock>)
            .ok_or_else(|| CliError::Input(format!("SOURCE_DATE_EPOCH `{v}` is invalid")));
    }
    Ok(if offline {
        Arc::new(FixedClock::epoch())
    } else {
        Arc::new(SystemClock)
    })
}

struct Setup {
    config: PipelineConfig,
    table: CompatibilityTable,
}

fn setup(args: &PipelineArgs) -> Result<Setup> {
    let mut config: PipelineConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => PipelineConfig::default(),
    };
    if args.keep_routing {
        config.no_heuristics_keeps_routing = true;
    }
    if let Some(v) = &args.ablate {
        let variant: AblationVariant = v
            .parse()
            .map_err(|e| CliError::Input(format!("--ablate: {e}")))?;
        variant.apply(&mut config);
    }
    config
        .validate()
        .map_err(|e| CliError::Input(format!("configuration: {e}")))?;
    let table = match &args.compat {
        Some(p) => CompatibilityTable::load_override(p)?,
        None => CompatibilityTable::default(),
    };
    Ok(Setup { config, table })
}

fn part_dirs(corpus: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(corpus).map_err(|source| IoError::Read {
        path: corpus.display().to_string(),
        source,
    })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join("features.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no part directories with features.json",
            corpus.display()
        )));
    }
    Ok(dirs)
}

fn load_part(dir: &Path, with_truth: bool) -> Result<PartInput> {
    let features: FeaturesFile = read_json(&dir.join("features.json"))?;
    let entities: EntitiesFile = read_json(&dir.join("entities.json"))?;
    let fallback = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "part".into());
    let part_id = features.part_id.clone().unwrap_or(fallback);
    let truth = if with_truth {
        read_json(&dir.join("truth.json"))?
    } else {
        GroundTruth {
            part_id: part_id.clone(),
            links: Default::default(),
        }
    };
    Ok(PartInput {
        part_id,
        features: features.features,
        entities: entities.entities,
        truth,
    })
}

fn client_for(args: &MapArgs, truth: Option<&GroundTruth>) -> Result<Box<dyn EscalationClient>> {
    if args.online {
        let endpoint = args.endpoint.as_deref().expect("clap requires endpoint");
        let env = args
            .credential_env
            .as_deref()
            .expect("clap requires credential env");
        let client =
            HttpEscalationClient::new(endpoint, env, Duration::from_millis(args.timeout_ms))
                .map_err(|e| CliError::Input(e.to_string()))?;
        return Ok(Box::new(client));
    }
    Ok(Box::new(match args.escalation_policy {
        Policy::Oracle => {
            let truth = truth.ok_or_else(|| {
                CliError::Input("the oracle policy needs ground truth (--truth)".into())
            })?;
            MockClient::oracle(truth.links.iter().cloned())
        }
        Policy::FirstCandidate => MockClient::new(MockPolicy::FirstCandidate),
        Policy::AlwaysReject => MockClient::new(MockPolicy::AlwaysReject),
        Policy::Scripted => {
            let path = args
                .script
                .as_deref()
                .ok_or_else(|| CliError::Input("the scripted policy needs --script".into()))?;
            MockClient::scripted_from_file(path)?
        }
    }))
}

fn map_one(
    setup: &Setup,
    enricher: &Enricher,
    client: &dyn EscalationClient,
    clock: &dyn Clock,
    part: &PartInput,
) -> Result<UnifiedSpec> {
    let pipeline = Pipeline {
        config: setup.config.clone(),
        table: setup.table.clone(),
        enricher,
        client,
        clock,
    };
    Ok(pipeline
        .map_part(&part.part_id, &part.features, &part.entities)?
        .spec)
}

pub fn map(args: MapArgs) -> Result<()> {
    let setup = setup(&args.pipeline)?;
    let clock = clock(args.pipeline.now.as_deref(), !args.online)?;
    let enricher = Enricher::new(EnricherBackend::RuleBased, setup.config.enrich_confidence)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let wants_truth = args.escalation_policy == Policy::Oracle && !args.online;

    if let Some(corpus) = &args.corpus {
        let parts: Vec<PartInput> = part_dirs(corpus)?
            .iter()
            .map(|d| load_part(d, wants_truth))
            .collect::<Result<_>>()?;
        let specs: Vec<(String, UnifiedSpec)> = parts
            .par_iter()
            .map(|part| {
                let client = client_for(&args, Some(&part.truth))?;
                Ok((
                    part.part_id.clone(),
                    map_one(&setup, &enricher, client.as_ref(), clock.as_ref(), part)?,
                ))
            })
            .collect::<Result<_>>()?;
        for (id, spec) in &specs {
            write_json(&args.out.join(format!("{id}.json")), spec)?;
        }
        println!("mapped {} parts into {}", specs.len(), args.out.display());
        return Ok(());
    }

    let features_path = args.features.as_deref().expect("clap requires features");
    let entities_path = args.entities.as_deref().expect("clap requires entities");
    let features: FeaturesFile = read_json(features_path)?;
    let entities: EntitiesFile = read_json(entities_path)?;
    let part_id = args
        .part_id
        .clone()
        .or(features.part_id.clone())
        .unwrap_or_else(|| "part".into());
    let truth: Option<GroundTruth> = match &args.truth {
        Some(p) => Some(read_json(p)?),
        None => None,
    };
    let client = client_for(&args, truth.as_ref())?;
    let part = PartInput {
        part_id: part_id.clone(),
        features: features.features,
        entities: entities.entities,
        truth: GroundTruth {
            part_id,
            links: Default::default(),
        },
    };
    let spec = map_one(&setup, &enricher, client.as_ref(), clock.as_ref(), &part)?;
    write_json(&args.out, &spec)?;
    println!(
        "{}: {} mappings ({} flagged), {} unmapped entities, {} unconstrained features",
        spec.part_id,
        spec.mappings.len(),
        spec.flagged_count(),
        spec.unmapped_entities.len(),
        spec.unconstrained_features.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct CorpusReport<'a> {
    parts: &'a [PartResult],
    aggregate: cadmap_core::eval::AggregateMetrics,
}

#[derive(Serialize)]
struct PartReport<'a> {
    part_id: &'a str,
    metrics: &'a PartMetrics,
}

fn emit_report<T: Serialize>(out: Option<&Path>, text: &str, value: &T) -> Result<()> {
    print!("{text}");
    if let Some(path) = out {
        write_json(path, value)?;
        let txt = path.with_extension("txt");
        write_atomic(&txt, text.as_bytes())?;
    }
    Ok(())
}

fn score_spec(spec: &UnifiedSpec, truth: &GroundTruth) -> Result<PartMetrics> {
    truth.check_against(spec)?;
    Ok(compute_metrics(&spec.live_links(), truth))
}

pub fn eval(args: EvalArgs) -> Result<()> {
    if let Some(spec_path) = &args.spec {
        let truth_path = args
            .truth
            .as_deref()
            .ok_or_else(|| CliError::Input("--spec needs --truth".into()))?;
        let spec: UnifiedSpec = read_json(spec_path)?;
        let truth: GroundTruth = read_json(truth_path)?;
        let m = score_spec(&spec, &truth)?;
        let text = render_summary(&macro_average(&[m])?);
        return emit_report(
            args.out.as_deref(),
            &text,
            &PartReport {
                part_id: &spec.part_id,
                metrics: &m,
            },
        );
    }
    let corpus = args
        .corpus
        .as_deref()
        .ok_or_else(|| CliError::Input("pass --spec/--truth or --corpus".into()))?;
    let dirs = part_dirs(corpus)?;

    if let Some(list) = &args.pipeline.ablate {
        let variants = AblationVariant::parse_list(list)
            .map_err(|e| CliError::Input(format!("--ablate: {e}")))?;
        let base_args = PipelineArgs {
            ablate: None,
            ..args.pipeline.clone()
        };
        let setup = setup(&base_args)?;
        let clock = clock(args.pipeline.now.as_deref(), true)?;
        let parts: Vec<PartInput> = dirs
            .iter()
            .map(|d| load_part(d, true))
            .collect::<Result<_>>()?;
        let report = run_ablation(
            &parts,
            &variants,
            &setup.config,
            &setup.table,
            clock.as_ref(),
        )?;
        return emit_report(args.out.as_deref(), &report.render(), &report);
    }

    let specs_dir = args
        .specs
        .as_deref()
        .ok_or_else(|| CliError::Input("--corpus needs --specs or --ablate".into()))?;
    let mut results = Vec::new();
    for dir in &dirs {
        let part = load_part(dir, true)?;
        let spec: UnifiedSpec = read_json(&specs_dir.join(format!("{}.json", part.part_id)))?;
        let metrics = score_spec(&spec, &part.truth)?;
        results.push(PartResult {
            part_id: part.part_id,
            metrics,
            flagged: spec.flagged_count(),
        });
    }
    let metrics: Vec<PartMetrics> = results.iter().map(|r| r.metrics).collect();
    let aggregate = macro_average(&metrics)?;
    emit_report(
        args.out.as_deref(),
        &render_summary(&aggregate),
        &CorpusReport {
            parts: &results,
            aggregate,
        },
    )
}

#[derive(Serialize)]
struct CorpusManifest<'a> {
    seed: u64,
    parts: usize,
    profile: &'a str,
}

pub fn gen(args: GenArgs) -> Result<()> {
    let profile: CorpusProfile = args.profile.parse().map_err(CliError::Input)?;
    let parts = generate_synthetic_corpus(args.seed, args.parts, profile);
    for p in &parts {
        let dir = args.out.join(&p.part_id);
        write_json(
            &dir.join("features.json"),
            &FeaturesFile {
                part_id: Some(p.part_id.clone()),
                features: p.features.clone(),
            },
        )?;
        write_json(
            &dir.join("entities.json"),
            &EntitiesFile {
                part_id: Some(p.part_id.clone()),
                entities: p.entities.clone(),
            },
        )?;
        write_json(&dir.join("truth.json"), &p.truth)?;
    }
    let name = profile.to_string();
    write_json(
        &args.out.join("corpus.json"),
        &CorpusManifest {
            seed: args.seed,
            parts: parts.len(),
            profile: &name,
        },
    )?;
    println!("wrote {} parts to {}", parts.len(), args.out.display());
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<()> {
    let store = SpecStore::open(&args.store)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Invariant(format!("runtime: {e}")))?;
    runtime
        .block_on(cadmap_review::serve(
            args.bind,
            AppState::new(store),
            args.ui,
        ))
        .map_err(|e| CliError::Input(format!("serve on {}: {e}", args.bind)))
}
