//! Seeded synthetic datasets with a layered hierarchy, Zipf-skewed leaf
//! popularity, per-entity "condition" subtrees, and an outcome whose odds
//! depend on which subtrees an entity touches.
//!
//! Generated codes: chapters `C00`, `C01`, ...; a node's children append a
//! dotted index (`C03.2`, `C03.2.11`). The outcome is a separate leaf
//! `OUTCOME` under the root, dated after each positive entity's last event,
//! so the query `inclusion = [ROOT], outcome = [OUTCOME]` labels exactly the
//! chosen entities.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{Days, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, Zipf};
use serde::{Deserialize, Serialize};

use crate::ingest::{Dataset, IngestError};
use crate::model::{
    AttributeValue, EntitySequence, Event, HierarchyEdge, NodeId, TypeHierarchy, ROOT_CODE,
};
use crate::query::{OutcomeSpec, QuerySpec};

pub const OUTCOME_CODE: &str = "OUTCOME";

/// Odds multiplier applied when an entity has any event in a subtree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtreeEffect {
    pub code: String,
    pub odds_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub dataset_id: String,
    pub n_entities: usize,
    /// Hierarchy size including the root and the outcome leaf.
    pub n_event_types: usize,
    /// Growth factor between internal levels.
    pub branching: f64,
    /// Depth of the leaves (the root has depth 0).
    pub depth: u32,
    pub mean_sequence_length: f64,
    pub outcome_prevalence: f64,
    /// Explicit effects by code.
    pub effects: Vec<SubtreeEffect>,
    /// Additional effects on randomly chosen nodes at this depth.
    pub random_effects: usize,
    pub random_effect_depth: u32,
    /// Random effects draw odds multipliers from `[1/max, max]`.
    pub max_odds_multiplier: f64,
    /// Skew of leaf popularity.
    pub zipf_exponent: f64,
    /// Subtrees (at `condition_depth`) each entity concentrates on.
    pub conditions_per_entity: usize,
    pub condition_depth: u32,
    /// Share of events drawn from the entity's conditions.
    pub condition_share: f64,
    pub start_date: NaiveDate,
    pub span_days: u32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            dataset_id: "synthetic".into(),
            n_entities: 1_000,
            n_event_types: 500,
            branching: 6.0,
            depth: 3,
            mean_sequence_length: 20.0,
            outcome_prevalence: 0.1,
            effects: Vec::new(),
            random_effects: 4,
            random_effect_depth: 2,
            max_odds_multiplier: 4.0,
            zipf_exponent: 1.1,
            conditions_per_entity: 2,
            condition_depth: 2,
            condition_share: 0.6,
            start_date: NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date"),
            span_days: 1_095,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    /// Names accepted by [`SyntheticSpec::preset`].
    pub const PRESETS: [&'static str; 4] = ["small", "large-hierarchy", "busiest", "typical"];

    /// Named configurations:
    /// * `small`: the defaults.
    /// * `large-hierarchy`: 13,118 leaves (plus the outcome leaf) under a
    ///   four-level tree with branching 12, 8,360 entities.
    /// * `busiest`: 8,360 entities, 15,376 event types, about 1.14 million
    ///   events.
    /// * `typical`: 4,936 entities with mean sequence length 151 over
    ///   13,997 event types.
    pub fn preset(name: &str) -> Option<Self> {
        let spec = match name {
            "small" => SyntheticSpec::default(),
            "large-hierarchy" => SyntheticSpec {
                dataset_id: name.into(),
                n_entities: 8_360,
                n_event_types: 15_003,
                branching: 12.0,
                depth: 4,
                mean_sequence_length: 60.0,
                random_effects: 100,
                random_effect_depth: 2,
                condition_depth: 1,
                ..SyntheticSpec::default()
            },
            "busiest" => SyntheticSpec {
                dataset_id: name.into(),
                n_entities: 8_360,
                n_event_types: 15_376,
                branching: 12.0,
                depth: 4,
                mean_sequence_length: 1_136_681.0 / 8_360.0,
                random_effects: 100,
                ..SyntheticSpec::default()
            },
            "typical" => SyntheticSpec {
                dataset_id: name.into(),
                n_entities: 4_936,
                n_event_types: 13_997,
                branching: 12.0,
                depth: 4,
                mean_sequence_length: 151.0,
                random_effects: 100,
                ..SyntheticSpec::default()
            },
            _ => return None,
        };
        Some(spec)
    }

    /// Node counts per depth (root first, leaves last), excluding the
    /// outcome leaf.
    pub fn level_sizes(&self) -> Result<Vec<usize>, IngestError> {
        self.validate()?;
        let mut sizes = vec![1usize];
        for k in 1..self.depth {
            let prev = *sizes.last().unwrap();
            sizes.push((self.branching.powi(k as i32).round() as usize).max(prev));
        }
        let internal: usize = sizes.iter().sum();
        let leaves = self
            .n_event_types
            .checked_sub(internal + 1)
            .filter(|&l| l >= *sizes.last().unwrap())
            .ok_or_else(|| {
                IngestError::InvalidSpec(format!(
                    "{} event types cannot fill {} internal nodes with at least one leaf each",
                    self.n_event_types, internal
                ))
            })?;
        sizes.push(leaves);
        Ok(sizes)
    }

    fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: &str| Err(IngestError::InvalidSpec(m.to_owned()));
        if self.n_entities == 0 {
            return bad("n_entities must be positive");
        }
        if self.depth == 0 {
            return bad("depth must be positive");
        }
        if !(self.branching >= 1.0) {
            return bad("branching must be at least 1");
        }
        if !(self.mean_sequence_length >= 1.0) {
            return bad("mean_sequence_length must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.outcome_prevalence) {
            return bad("outcome_prevalence must lie in [0, 1]");
        }
        if !(self.zipf_exponent > 0.0) {
            return bad("zipf_exponent must be positive");
        }
        if !(0.0..=1.0).contains(&self.condition_share) {
            return bad("condition_share must lie in [0, 1]");
        }
        if !(self.max_odds_multiplier >= 1.0) {
            return bad("max_odds_multiplier must be at least 1");
        }
        if self.span_days == 0 {
            return bad("span_days must be positive");
        }
        if self.effects.iter().any(|e| !(e.odds_multiplier > 0.0)) {
            return bad("odds multipliers must be positive");
        }
        Ok(())
    }

    /// Query that selects every entity and labels the outcome leaf.
    pub fn query(&self) -> QuerySpec {
        QuerySpec {
            inclusion: vec![ROOT_CODE.to_owned()],
            attribute_constraints: Vec::new(),
            lookback_days: 0,
            outcome: OutcomeSpec { codes: vec![OUTCOME_CODE.to_owned()], relation: Default::default() },
        }
    }
}

/// Layered hierarchy: every internal node gets at least one child and the
/// remaining nodes of each level are spread at random.
fn build_hierarchy(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<TypeHierarchy, IngestError> {
    let sizes = spec.level_sizes()?;
    let mut edges = vec![HierarchyEdge::new(ROOT_CODE, None, "All event types")];
    let mut level: Vec<String> = vec![ROOT_CODE.to_owned()];
    for (k, &size) in sizes.iter().enumerate().skip(1) {
        let mut counts = vec![1usize; level.len()];
        for _ in level.len()..size {
            counts[rng.random_range(0..level.len())] += 1;
        }
        let mut next = Vec::with_capacity(size);
        for (parent, &c) in level.iter().zip(&counts) {
            for i in 0..c {
                let code = if k == 1 { format!("C{i:02}") } else { format!("{parent}.{i}") };
                let label = if k == sizes.len() - 1 { format!("Event {code}") } else { format!("Group {code}") };
                edges.push(HierarchyEdge::new(code.clone(), Some(parent), label));
                next.push(code);
            }
        }
        level = next;
    }
    edges.push(HierarchyEdge::new(OUTCOME_CODE, Some(ROOT_CODE), "Outcome event"));
    Ok(TypeHierarchy::build(edges)?)
}

/// Weighted sampling of `k` indexes without replacement (exponential keys).
pub fn weighted_sample(rng: &mut ChaCha8Rng, weights: &[f64], k: usize) -> Vec<usize> {
    let mut keys: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            (u.ln() / w, i)
        })
        .collect();
    keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<usize> = keys.into_iter().take(k).map(|(_, i)| i).collect();
    out.sort_unstable();
    out
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset, IngestError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let h = Arc::new(build_hierarchy(spec, &mut rng)?);
    let outcome = h.id(OUTCOME_CODE).expect("outcome leaf present");
    let leaves: Vec<NodeId> = h.leaves().filter(|&l| l != outcome).collect();

    // leaf popularity: Zipf over a random ranking
    let mut ranked = leaves.clone();
    ranked.shuffle(&mut rng);
    let zipf = Zipf::new(ranked.len() as f64, spec.zipf_exponent)
        .map_err(|e| IngestError::InvalidSpec(e.to_string()))?;

    let condition_roots: Vec<NodeId> = h.ids().filter(|&id| h.depth(id) == spec.condition_depth.min(spec.depth)).collect();

    let mut effects: Vec<(NodeId, f64)> = Vec::new();
    for e in &spec.effects {
        let id = h
            .id(&e.code)
            .ok_or_else(|| IngestError::InvalidSpec(format!("effect code `{}` is not in the hierarchy", e.code)))?;
        effects.push((id, e.odds_multiplier));
    }
    let effect_pool: Vec<NodeId> = h.ids().filter(|&id| h.depth(id) == spec.random_effect_depth).collect();
    for &id in effect_pool.choose_multiple(&mut rng, spec.random_effects.min(effect_pool.len())) {
        let log_max = spec.max_odds_multiplier.ln();
        effects.push((id, rng.random_range(-log_max..=log_max).exp()));
    }

    let extra = Poisson::new(spec.mean_sequence_length - 1.0).ok();
    let mut sequences = Vec::with_capacity(spec.n_entities);
    let mut weights = Vec::with_capacity(spec.n_entities);
    let width = (spec.n_entities.max(2) - 1).to_string().len();
    for e in 0..spec.n_entities {
        let len = 1 + extra.map_or(0, |p| p.sample(&mut rng) as usize);
        let conditions: Vec<NodeId> =
            condition_roots.choose_multiple(&mut rng, spec.conditions_per_entity).copied().collect();
        let mut day = rng.random_range(0..spec.span_days) as u64;
        let start = spec.start_date;
        let mut events = Vec::with_capacity(len + 1);
        for _ in 0..len {
            let node = if !conditions.is_empty() && rng.random_bool(spec.condition_share) {
                let root = conditions[rng.random_range(0..conditions.len())];
                let range = h.subtree_range(root);
                // a random leaf of the condition subtree
                loop {
                    let id = NodeId(rng.random_range(range.clone()) as u32);
                    if h.is_leaf(id) {
                        break id;
                    }
                }
            } else {
                ranked[zipf.sample(&mut rng) as usize - 1]
            };
            day += rng.random_range(0..15);
            events.push(Event { date: start + Days::new(day), node });
        }
        let mut odds = 1.0;
        for &(id, mult) in &effects {
            if events.iter().any(|ev| h.in_subtree(id, ev.node)) {
                odds *= mult;
            }
        }
        weights.push(odds);
        let mut attributes = BTreeMap::new();
        attributes.insert("age".to_owned(), AttributeValue::Numeric(rng.random_range(18..=90) as f64));
        let sex = if rng.random_bool(0.5) { "F" } else { "M" };
        attributes.insert("sex".to_owned(), AttributeValue::Categorical(sex.to_owned()));
        sequences.push(EntitySequence { id: format!("S{e:0width$}"), attributes, events });
    }

    let positives = (spec.outcome_prevalence * spec.n_entities as f64).round() as usize;
    for i in weighted_sample(&mut rng, &weights, positives) {
        let s = &mut sequences[i];
        let last = s.events.last().expect("at least one event").date;
        s.events.push(Event { date: last + Days::new(rng.random_range(1..=60)), node: outcome });
    }

    let mut ds = Dataset::from_sequences(spec.dataset_id.clone(), h, sequences)?;
    ds.ingested_at = format!("{}T00:00:00Z", spec.start_date);
    Ok(ds)
}
