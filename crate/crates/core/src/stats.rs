//! Occurrence vectors and per-node association statistics.
//!
//! For every hierarchy node `j` the occurrence vector marks the entities
//! whose active window contains `j` or any descendant. Vectors are packed
//! bitsets built bottom-up: direct occurrences first, then each node's bits
//! are OR-ed into its parent in reverse preorder.

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::model::{NodeId, TypeHierarchy};
use crate::query::AnalyticContext;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("cohort is empty")]
    EmptyCohort,
}

/// 2x2 table of event presence (first index) against outcome (second).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub n00: u64,
    pub n01: u64,
    pub n10: u64,
    pub n11: u64,
}

impl ContingencyTable {
    pub fn new(n00: u64, n01: u64, n10: u64, n11: u64) -> Self {
        ContingencyTable { n00, n01, n10, n11 }
    }

    /// Table from cohort size, outcome positives, entities with the event,
    /// and entities with both.
    pub fn from_counts(n: u64, positives: u64, with_event: u64, both: u64) -> Self {
        let n10 = with_event - both;
        let n01 = positives - both;
        ContingencyTable { n00: n - with_event - n01, n01, n10, n11: both }
    }

    pub fn n(&self) -> u64 {
        self.n00 + self.n01 + self.n10 + self.n11
    }

    /// Row margins `n0.`, `n1.` (event absent / present).
    pub fn rows(&self) -> (u64, u64) {
        (self.n00 + self.n01, self.n10 + self.n11)
    }

    /// Column margins `n.0`, `n.1` (outcome absent / present).
    pub fn cols(&self) -> (u64, u64) {
        (self.n00 + self.n10, self.n01 + self.n11)
    }

    fn cross(&self) -> i128 {
        self.n00 as i128 * self.n11 as i128 - self.n01 as i128 * self.n10 as i128
    }

    fn margin_product(&self) -> f64 {
        let (r0, r1) = self.rows();
        let (c0, c1) = self.cols();
        r0 as f64 * r1 as f64 * c0 as f64 * c1 as f64
    }
}

/// Yates-corrected chi-square statistic; 0 when any margin is empty.
pub fn chi_square_yates(t: &ContingencyTable) -> f64 {
    let denom = t.margin_product();
    if denom == 0.0 {
        return 0.0;
    }
    let n = t.n() as f64;
    let excess = (t.cross().unsigned_abs() as f64 - n / 2.0).max(0.0);
    n * excess * excess / denom
}

/// Signed phi coefficient; 0 when any margin is empty.
pub fn correlation(t: &ContingencyTable) -> f64 {
    let denom = t.margin_product();
    if denom == 0.0 {
        return 0.0;
    }
    (t.cross() as f64 / denom.sqrt()).clamp(-1.0, 1.0)
}

/// Upper tail of the chi-square distribution with one degree of freedom.
pub fn p_value(chi2: f64) -> f64 {
    if chi2 <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(1.0).expect("one degree of freedom").sf(chi2)
}

/// Occurrence bitsets and in-window event counts for every node.
#[derive(Debug, Clone)]
pub struct OccurrenceVectors {
    bits: Vec<FixedBitSet>,
    occ: Vec<u64>,
    n: usize,
}

impl OccurrenceVectors {
    pub fn bits(&self, id: NodeId) -> &FixedBitSet {
        &self.bits[id.index()]
    }

    /// Entities with the node (or a descendant) in their window.
    pub fn seq_count(&self, id: NodeId) -> usize {
        self.bits[id.index()].count_ones(..)
    }

    /// In-window events in the node's subtree.
    pub fn occ_count(&self, id: NodeId) -> u64 {
        self.occ[id.index()]
    }

    pub fn entities(&self) -> usize {
        self.n
    }

    /// Bit vector as booleans, aligned with cohort order.
    pub fn to_vec(&self, id: NodeId) -> Vec<bool> {
        let b = &self.bits[id.index()];
        (0..self.n).map(|i| b.contains(i)).collect()
    }
}

pub fn occurrence_vectors(ctx: &AnalyticContext) -> OccurrenceVectors {
    let h = ctx.cohort.hierarchy.as_ref();
    let n = ctx.cohort.len();
    let mut bits = vec![FixedBitSet::with_capacity(n); h.len()];
    let mut occ = vec![0u64; h.len()];
    for i in 0..n {
        for ev in ctx.events(i) {
            let j = ev.node.index();
            bits[j].insert(i);
            occ[j] += 1;
        }
    }
    // preorder ids: every parent precedes its children
    for j in h.ids().rev() {
        if let Some(p) = h.parent(j) {
            let (head, tail) = bits.split_at_mut(j.index());
            head[p.index()].union_with(&tail[0]);
            occ[p.index()] += occ[j.index()];
        }
    }
    OccurrenceVectors { bits, occ, n }
}

/// Per-node association summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTypeStats {
    pub code: String,
    pub label: String,
    pub depth: u32,
    pub seq_count: u64,
    pub occ_count: u64,
    pub prevalence: f64,
    pub chi2: f64,
    pub p_value: f64,
    pub correlation: f64,
    pub table: ContingencyTable,
}

/// Statistics for every node of the hierarchy under one analytic context,
/// indexed by [`NodeId`].
#[derive(Debug, Clone, PartialEq)]
pub struct StatsTable {
    pub context: String,
    pub n: usize,
    pub positives: usize,
    pub nodes: Vec<EventTypeStats>,
}

impl StatsTable {
    pub fn get(&self, id: NodeId) -> &EventTypeStats {
        &self.nodes[id.index()]
    }

    pub fn chi2(&self) -> Vec<f64> {
        self.nodes.iter().map(|s| s.chi2).collect()
    }

    pub fn correlations(&self) -> Vec<f64> {
        self.nodes.iter().map(|s| s.correlation).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["code", "label", "seq_count", "occ_count", "prevalence", "chi2", "p_value", "correlation"])
            .expect("in-memory write");
        for s in &self.nodes {
            w.write_record([
                s.code.clone(),
                s.label.clone(),
                s.seq_count.to_string(),
                s.occ_count.to_string(),
                s.prevalence.to_string(),
                s.chi2.to_string(),
                s.p_value.to_string(),
                s.correlation.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

pub fn stats_for_all_types(ctx: &AnalyticContext) -> Result<StatsTable, StatsError> {
    let cohort = ctx.cohort.as_ref();
    if cohort.is_empty() {
        return Err(StatsError::EmptyCohort);
    }
    let occ = occurrence_vectors(ctx);
    Ok(stats_from_vectors(ctx.key(), &cohort.hierarchy, &occ, &cohort.outcome_vector))
}

/// Builds the table from precomputed occurrence vectors and outcomes.
pub fn stats_from_vectors(
    context: String,
    h: &TypeHierarchy,
    occ: &OccurrenceVectors,
    outcome: &[bool],
) -> StatsTable {
    let n = outcome.len();
    let mut outcome_bits = FixedBitSet::with_capacity(n);
    for (i, _) in outcome.iter().enumerate().filter(|(_, &v)| v) {
        outcome_bits.insert(i);
    }
    let positives = outcome_bits.count_ones(..);
    let nodes = h
        .ids()
        .map(|j| {
            let bits = occ.bits(j);
            let with_event = bits.count_ones(..) as u64;
            let both = bits.intersection_count(&outcome_bits) as u64;
            let table = ContingencyTable::from_counts(n as u64, positives as u64, with_event, both);
            let chi2 = chi_square_yates(&table);
            let t = h.get(j);
            EventTypeStats {
                code: t.code.clone(),
                label: t.label.clone(),
                depth: t.depth,
                seq_count: with_event,
                occ_count: occ.occ_count(j),
                prevalence: with_event as f64 / n as f64,
                chi2,
                p_value: p_value(chi2),
                correlation: correlation(&table),
                table,
            }
        })
        .collect();
    StatsTable { context, n, positives, nodes }
}
