//! Seeded synthetic parts with injected ambiguities and ground truth.
//!
//! Feature and entity counts stay within 2..=9 and 2..=13 per part. The
//! `table1` profile injects:
//! - a repeated hole pattern dimensioned by one `nX` callout;
//! - a blind hole with separate diameter and depth callouts;
//! - a slot with width and length dimensions;
//! - near-duplicate hole diameters within tolerance;
//! - uncalled holes whose diameter coincides with another feature's depth
//!   or slot length, which only unrouted scoring mistakes for a match;
//! - a radius equal to a hole radius, which the type gate must reject;
//! - free-text notes that constrain nothing.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::GroundTruth;
use super::PartInput;
use crate::model::{DrawingEntity, EntityType, Feature3D, FeatureType};

pub const MAX_FEATURES: usize = 9;
pub const MAX_ENTITIES: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusProfile {
    Table1,
    /// No near-duplicates or coincidences.
    Clean,
}

impl fmt::Display for CorpusProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusProfile::Table1 => "table1",
            CorpusProfile::Clean => "clean",
        })
    }
}

impl FromStr for CorpusProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table1" => Ok(CorpusProfile::Table1),
            "clean" => Ok(CorpusProfile::Clean),
            other => Err(format!(
                "unknown corpus profile `{other}` (expected table1 or clean)"
            )),
        }
    }
}

/// Abstract component before ids are assigned.
enum Component {
    Pattern { count: usize, diameter: f64 },
    BlindHole { diameter: f64, depth: f64 },
    Slot { width: f64, length: f64 },
    Fillet { radius: f64 },
    NearDuplicate { a: f64, b: f64 },
    Decoy { diameter: f64, depth: Option<f64> },
    Note(&'static str),
}

impl Component {
    fn features(&self) -> usize {
        match self {
            Component::Pattern { count, .. } => *count,
            Component::NearDuplicate { .. } => 2,
            Component::Note(_) => 0,
            _ => 1,
        }
    }

    fn entities(&self) -> usize {
        match self {
            Component::BlindHole { .. }
            | Component::Slot { .. }
            | Component::NearDuplicate { .. } => 2,
            Component::Decoy { .. } => 0,
            _ => 1,
        }
    }
}

const NOTES: [&str; 4] = [
    "BREAK ALL SHARP EDGES",
    "DEBURR",
    "UNLESS OTHERWISE SPECIFIED",
    "MATERIAL: AL 6061-T6",
];

/// Values on a 0.5 mm grid kept at least 0.5 mm apart from each other.
struct ValuePool {
    used: BTreeSet<i64>,
}

impl ValuePool {
    fn new() -> Self {
        ValuePool {
            used: BTreeSet::new(),
        }
    }

    fn key(v: f64) -> i64 {
        (v * 100.0).round() as i64
    }

    fn free(&self, v: f64) -> bool {
        let k = Self::key(v);
        self.used.range(k - 49..=k + 49).next().is_none()
    }

    fn claim(&mut self, v: f64) {
        self.used.insert(Self::key(v));
    }

    fn draw(&mut self, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Option<f64> {
        let steps = ((hi - lo) / 0.5).round() as i64;
        for _ in 0..64 {
            let v = lo + 0.5 * rng.gen_range(0..=steps) as f64;
            if self.free(v) {
                self.claim(v);
                return Some(v);
            }
        }
        None
    }
}

/// Adds `c` unless it would push the part past the count bounds.
fn push(c: Component, out: &mut Vec<Component>) -> bool {
    let nf: usize = out.iter().map(Component::features).sum();
    let ne: usize = out.iter().map(Component::entities).sum();
    if nf + c.features() <= MAX_FEATURES && ne + c.entities() <= MAX_ENTITIES {
        out.push(c);
        true
    } else {
        false
    }
}

fn plan(rng: &mut ChaCha8Rng, profile: CorpusProfile) -> Vec<Component> {
    let injected = profile == CorpusProfile::Table1;
    let mut pool = ValuePool::new();
    let mut out = Vec::new();

    let blind = (pool.draw(rng, 8.0, 14.0), pool.draw(rng, 4.0, 20.0));
    let (Some(bd), Some(depth)) = blind else {
        unreachable!("fresh pool")
    };
    push(
        Component::BlindHole {
            diameter: bd,
            depth,
        },
        &mut out,
    );

    let mut pattern_diameter = None;
    if rng.gen_bool(0.8) {
        let count = rng.gen_range(2..=4);
        if let Some(d) = pool.draw(rng, 3.0, 7.5) {
            if push(Component::Pattern { count, diameter: d }, &mut out) {
                pattern_diameter = Some(d);
            }
        }
    }
    if injected && rng.gen_bool(0.8) {
        if let Some(z) = pool.draw(rng, 30.0, 45.0) {
            push(
                Component::Decoy {
                    diameter: depth,
                    depth: Some(z),
                },
                &mut out,
            );
        }
    }
    if rng.gen_bool(0.7) {
        if let (Some(w), Some(l)) = (pool.draw(rng, 4.0, 10.0), pool.draw(rng, 15.0, 28.0)) {
            if push(
                Component::Slot {
                    width: w,
                    length: l,
                },
                &mut out,
            ) && injected
                && rng.gen_bool(0.7)
            {
                push(
                    Component::Decoy {
                        diameter: l,
                        depth: None,
                    },
                    &mut out,
                );
            }
        }
    }
    if injected && rng.gen_bool(0.6) {
        if let Some(a) = pool.draw(rng, 14.5, 19.5) {
            pool.claim(a + 0.05);
            push(Component::NearDuplicate { a, b: a + 0.05 }, &mut out);
        }
    }
    if rng.gen_bool(0.6) {
        // Type-gate coincidence: the radius equals the pattern hole radius.
        let coincident = pattern_diameter
            .map(|d| d / 2.0)
            .filter(|r| injected && pool.free(*r));
        let radius = match coincident {
            Some(r) => {
                pool.claim(r);
                Some(r)
            }
            None => pool.draw(rng, 1.0, 3.0),
        };
        if let Some(radius) = radius {
            push(Component::Fillet { radius }, &mut out);
        }
    }
    if out.iter().map(Component::features).sum::<usize>() < 2 {
        let radius = pool.draw(rng, 1.0, 3.0).expect("radius grid has room");
        push(Component::Fillet { radius }, &mut out);
    }
    if rng.gen_bool(0.5) {
        push(
            Component::Note(NOTES[rng.gen_range(0..NOTES.len())]),
            &mut out,
        );
    }
    out.shuffle(rng);
    out
}

fn fmt_mm(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn realize(part_id: &str, components: Vec<Component>, rng: &mut ChaCha8Rng) -> PartInput {
    let mut features = Vec::new();
    let mut entities = Vec::new();
    let mut links = BTreeSet::new();
    let mut next_f = 0;
    let mut next_e = 0;
    let mut fid = || {
        next_f += 1;
        format!("F{next_f}")
    };
    let mut entity = |text: String, kind: EntityType, rng: &mut ChaCha8Rng| {
        next_e += 1;
        let x = rng.gen_range(0..40) as f64 * 5.0;
        let y = rng.gen_range(0..30) as f64 * 5.0;
        DrawingEntity::new(format!("E{next_e}"), kind, text).with_bbox(x, y, 20.0, 6.0)
    };

    for (i, c) in components.into_iter().enumerate() {
        match c {
            Component::Pattern { count, diameter } => {
                let e = entity(
                    format!("{count}X Ø{} THRU", fmt_mm(diameter)),
                    EntityType::Dimension,
                    rng,
                );
                for _ in 0..count {
                    let f = Feature3D::new(fid(), FeatureType::Hole)
                        .with_param("diameter", diameter)
                        .with_pattern(&format!("pattern-{i}"));
                    links.insert((f.id.clone(), e.id.clone()));
                    features.push(f);
                }
                entities.push(e);
            }
            Component::BlindHole { diameter, depth } => {
                let f = Feature3D::new(fid(), FeatureType::Hole)
                    .with_param("diameter", diameter)
                    .with_param("depth", depth);
                for text in [
                    format!("Ø{}", fmt_mm(diameter)),
                    format!("↧{}", fmt_mm(depth)),
                ] {
                    let e = entity(text, EntityType::Dimension, rng);
                    links.insert((f.id.clone(), e.id.clone()));
                    entities.push(e);
                }
                features.push(f);
            }
            Component::Slot { width, length } => {
                let f = Feature3D::new(fid(), FeatureType::Slot)
                    .with_param("width", width)
                    .with_param("length", length);
                for v in [width, length] {
                    let e = entity(fmt_mm(v), EntityType::Dimension, rng);
                    links.insert((f.id.clone(), e.id.clone()));
                    entities.push(e);
                }
                features.push(f);
            }
            Component::Fillet { radius } => {
                let f = Feature3D::new(fid(), FeatureType::Fillet).with_param("radius", radius);
                let e = entity(format!("R{}", fmt_mm(radius)), EntityType::Dimension, rng);
                links.insert((f.id.clone(), e.id.clone()));
                entities.push(e);
                features.push(f);
            }
            Component::NearDuplicate { a, b } => {
                for d in [a, b] {
                    let f = Feature3D::new(fid(), FeatureType::Hole).with_param("diameter", d);
                    let e = entity(format!("Ø{}", fmt_mm(d)), EntityType::Dimension, rng);
                    links.insert((f.id.clone(), e.id.clone()));
                    entities.push(e);
                    features.push(f);
                }
            }
            Component::Decoy { diameter, depth } => {
                let mut f =
                    Feature3D::new(fid(), FeatureType::Hole).with_param("diameter", diameter);
                if let Some(z) = depth {
                    f = f.with_param("depth", z);
                }
                features.push(f);
            }
            Component::Note(text) => entities.push(entity(text.to_string(), EntityType::Note, rng)),
        }
    }
    PartInput {
        part_id: part_id.to_string(),
        features,
        entities,
        truth: GroundTruth {
            part_id: part_id.to_string(),
            links,
        },
    }
}

/// Deterministic in `seed`: the same arguments always produce the same parts.
pub fn generate_synthetic_corpus(
    seed: u64,
    n_parts: usize,
    profile: CorpusProfile,
) -> Vec<PartInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_parts)
        .map(|i| {
            let components = plan(&mut rng, profile);
            realize(&format!("part-{:03}", i + 1), components, &mut rng)
        })
        .collect()
}
