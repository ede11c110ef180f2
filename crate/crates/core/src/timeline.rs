//! Milestone timeline: inclusion anchors become milestones, consecutive
//! milestones are joined by time edges, and adding a milestone to an edge
//! splits its members into a path through the new milestone and a bypass.
//!
//! Every cohort entity follows exactly one path. Milestones and edges may be
//! shared by several paths; their statistics are taken over the union of the
//! members of those paths.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{Cohort, NodeId};
use crate::query::{ActiveWindow, OutcomeRelation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimelineError {
    #[error("unknown time edge `{0}`")]
    UnknownEdge(EdgeId),
    #[error("unknown selection `{0}`")]
    UnknownSelection(String),
    #[error("unknown event type code `{0}`")]
    UnknownCode(String),
    #[error("no entity on edge {edge} has a `{code}` event inside the edge window")]
    NoMatchingEntities { edge: EdgeId, code: String },
    #[error("cohort is empty")]
    EmptyCohort,
    #[error("timeline belongs to cohort `{expected}`, not `{found}`")]
    CohortMismatch { expected: String, found: String },
}

macro_rules! prefixed_id {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }

        impl FromStr for $name {
            type Err = TimelineError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                s.strip_prefix($prefix)
                    .and_then(|n| n.parse().ok())
                    .map($name)
                    .ok_or_else(|| TimelineError::UnknownSelection(s.to_owned()))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

prefixed_id!(MilestoneId, "M");
prefixed_id!(EdgeId, "E");

/// A timeline element whose events define the analytic context.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Selection {
    WholeRecord,
    Milestone(MilestoneId),
    Edge(EdgeId),
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selection::WholeRecord => f.write_str("whole"),
            Selection::Milestone(m) => write!(f, "{m}"),
            Selection::Edge(e) => write!(f, "{e}"),
        }
    }
}

impl FromStr for Selection {
    type Err = TimelineError;

    /// Accepts `whole`, `M3`, `E2`, `milestone:M3` and `edge:E2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let body = s
            .strip_prefix("milestone:")
            .or_else(|| s.strip_prefix("edge:"))
            .unwrap_or(s);
        if body == "whole" {
            return Ok(Selection::WholeRecord);
        }
        if body.starts_with('M') {
            return body.parse().map(Selection::Milestone);
        }
        if body.starts_with('E') {
            return body.parse().map(Selection::Edge);
        }
        Err(TimelineError::UnknownSelection(s.to_owned()))
    }
}

impl Serialize for Selection {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Selection {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Where a time edge starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    /// The start of the lookback window (first anchor minus lookback days).
    LookbackStart,
    Milestone(MilestoneId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Lookback,
    Sequence,
    Bypass,
}

/// Member count, share of the cohort and mean outcome of a group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub members: usize,
    pub proportion: f64,
    pub avg_outcome: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Milestone {
    pub id: MilestoneId,
    pub code: String,
    pub label: String,
    #[serde(skip)]
    pub node: NodeId,
    #[serde(flatten)]
    pub stats: GroupStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeEdge {
    pub id: EdgeId,
    pub from: Endpoint,
    pub to: MilestoneId,
    pub kind: EdgeKind,
    #[serde(flatten)]
    pub stats: GroupStats,
    /// Mean calendar days between the two anchors over members.
    pub avg_days: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelinePath {
    pub milestones: Vec<MilestoneId>,
    pub edges: Vec<EdgeId>,
    pub members: usize,
}

/// One immutable version of a cohort's timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineModel {
    pub cohort_id: String,
    pub version: u64,
    pub lookback_days: u32,
    pub milestones: Vec<Milestone>,
    pub edges: Vec<TimeEdge>,
    pub paths: Vec<TimelinePath>,
    /// Milestone anchoring the lookback window (the first inclusion anchor).
    index_milestone: MilestoneId,
    entity_path: Vec<usize>,
    entity_anchors: Vec<BTreeMap<MilestoneId, NaiveDate>>,
    next_milestone: u32,
    next_edge: u32,
}

impl TimelineModel {
    /// One milestone per inclusion constraint, joined by edges, with every
    /// entity on a single path. A positive lookback adds a leading edge from
    /// the lookback start to the first milestone.
    pub fn build(cohort: &Cohort) -> Self {
        let h = cohort.hierarchy.as_ref();
        let milestones: Vec<Milestone> = cohort
            .source_query
            .inclusion
            .iter()
            .enumerate()
            .map(|(i, code)| {
                let node = h.id(code).expect("cohort codes were validated by the query");
                Milestone {
                    id: MilestoneId(i as u32),
                    code: code.clone(),
                    label: h.label(node).to_owned(),
                    node,
                    stats: GroupStats::default(),
                }
            })
            .collect();

        let mut edges = Vec::new();
        let lookback_days = cohort.source_query.lookback_days;
        if lookback_days > 0 {
            edges.push(TimeEdge {
                id: EdgeId(0),
                from: Endpoint::LookbackStart,
                to: MilestoneId(0),
                kind: EdgeKind::Lookback,
                stats: GroupStats::default(),
                avg_days: 0.0,
            });
        }
        for pair in milestones.windows(2) {
            edges.push(TimeEdge {
                id: EdgeId(edges.len() as u32),
                from: Endpoint::Milestone(pair[0].id),
                to: pair[1].id,
                kind: EdgeKind::Sequence,
                stats: GroupStats::default(),
                avg_days: 0.0,
            });
        }

        let path = TimelinePath {
            milestones: milestones.iter().map(|m| m.id).collect(),
            edges: edges.iter().map(|e| e.id).collect(),
            members: cohort.len(),
        };
        let entity_anchors = cohort
            .entities
            .iter()
            .map(|e| {
                e.anchors
                    .iter()
                    .enumerate()
                    .map(|(i, &d)| (MilestoneId(i as u32), d))
                    .collect()
            })
            .collect();

        let mut t = TimelineModel {
            cohort_id: cohort.id.clone(),
            version: 1,
            lookback_days,
            next_milestone: milestones.len() as u32,
            next_edge: edges.len() as u32,
            milestones,
            edges,
            paths: vec![path],
            index_milestone: MilestoneId(0),
            entity_path: vec![0; cohort.len()],
            entity_anchors,
        };
        t.refresh_stats(cohort);
        t
    }

    pub fn milestone(&self, id: MilestoneId) -> Option<&Milestone> {
        self.milestones.iter().find(|m| m.id == id)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&TimeEdge> {
        self.edges.iter().find(|e| e.id == id)
    }

    /// Path index followed by entity `i`.
    pub fn path_of(&self, i: usize) -> usize {
        self.entity_path[i]
    }

    pub fn anchor(&self, i: usize, m: MilestoneId) -> Option<NaiveDate> {
        self.entity_anchors[i].get(&m).copied()
    }

    /// Entity indexes whose path visits milestone `m`.
    pub fn milestone_members(&self, m: MilestoneId) -> Vec<usize> {
        (0..self.entity_path.len())
            .filter(|&i| self.paths[self.entity_path[i]].milestones.contains(&m))
            .collect()
    }

    /// Entity indexes whose path traverses edge `e`.
    pub fn edge_members(&self, e: EdgeId) -> Vec<usize> {
        (0..self.entity_path.len())
            .filter(|&i| self.paths[self.entity_path[i]].edges.contains(&e))
            .collect()
    }

    fn start_date(&self, i: usize, edge: &TimeEdge) -> NaiveDate {
        match edge.from {
            Endpoint::Milestone(m) => self.entity_anchors[i][&m],
            Endpoint::LookbackStart => self.entity_anchors[i][&self.index_milestone]
                .checked_sub_days(Days::new(self.lookback_days as u64))
                .unwrap_or(NaiveDate::MIN),
        }
    }

    fn edge_window(&self, i: usize, edge: &TimeEdge) -> ActiveWindow {
        let to = self.entity_anchors[i][&edge.to];
        let from = self.start_date(i, edge);
        match edge.from {
            Endpoint::Milestone(_) => ActiveWindow::between(from, to),
            Endpoint::LookbackStart => ActiveWindow::from_start(from, to),
        }
    }

    /// Per-entity windows for a selection; entities off the selected element
    /// get [`ActiveWindow::Empty`].
    pub fn windows(&self, cohort: &Cohort, selection: &Selection) -> Result<Vec<ActiveWindow>, TimelineError> {
        self.check_cohort(cohort)?;
        let n = self.entity_path.len();
        match selection {
            Selection::WholeRecord => Ok(vec![ActiveWindow::whole(); n]),
            Selection::Milestone(m) => {
                if self.milestone(*m).is_none() {
                    return Err(TimelineError::UnknownSelection(m.to_string()));
                }
                Ok((0..n)
                    .map(|i| match self.paths[self.entity_path[i]].milestones.contains(m) {
                        true => ActiveWindow::day(self.entity_anchors[i][m]),
                        false => ActiveWindow::Empty,
                    })
                    .collect())
            }
            Selection::Edge(e) => {
                let edge = self
                    .edge(*e)
                    .ok_or_else(|| TimelineError::UnknownSelection(e.to_string()))?;
                Ok((0..n)
                    .map(|i| match self.paths[self.entity_path[i]].edges.contains(e) {
                        true => self.edge_window(i, edge),
                        false => ActiveWindow::Empty,
                    })
                    .collect())
            }
        }
    }

    fn check_cohort(&self, cohort: &Cohort) -> Result<(), TimelineError> {
        if cohort.id != self.cohort_id || cohort.len() != self.entity_path.len() {
            return Err(TimelineError::CohortMismatch {
                expected: self.cohort_id.clone(),
                found: cohort.id.clone(),
            });
        }
        Ok(())
    }

    /// Returns a new version in which members of `edge_id` with a `code`
    /// subtree event inside their edge window pass through a new milestone
    /// (anchored at the first such event) and the rest take a bypass edge.
    pub fn add_milestone(&self, cohort: &Cohort, edge_id: EdgeId, code: &str) -> Result<TimelineModel, TimelineError> {
        self.check_cohort(cohort)?;
        let h = cohort.hierarchy.as_ref();
        let edge = self.edge(edge_id).ok_or(TimelineError::UnknownEdge(edge_id))?.clone();
        let node = h.id(code).ok_or_else(|| TimelineError::UnknownCode(code.to_owned()))?;

        let mut hits: BTreeMap<usize, NaiveDate> = BTreeMap::new();
        let mut misses = 0usize;
        for i in self.edge_members(edge_id) {
            let window = self.edge_window(i, &edge);
            let first = window
                .slice(&cohort.entities[i].events)
                .iter()
                .find(|ev| h.in_subtree(node, ev.node));
            match first {
                Some(ev) => {
                    hits.insert(i, ev.date);
                }
                None => misses += 1,
            }
        }
        if hits.is_empty() {
            return Err(TimelineError::NoMatchingEntities { edge: edge_id, code: code.to_owned() });
        }

        let mut next = self.clone();
        next.version += 1;
        let mid = MilestoneId(next.next_milestone);
        next.next_milestone += 1;
        next.milestones.push(Milestone {
            id: mid,
            code: code.to_owned(),
            label: h.label(node).to_owned(),
            node,
            stats: GroupStats::default(),
        });

        let mut alloc_edge = |from: Endpoint, to: MilestoneId, kind: EdgeKind| {
            let id = EdgeId(next.next_edge);
            next.next_edge += 1;
            next.edges.push(TimeEdge { id, from, to, kind, stats: GroupStats::default(), avg_days: 0.0 });
            id
        };
        let first_kind = match edge.kind {
            EdgeKind::Lookback => EdgeKind::Lookback,
            _ => EdgeKind::Sequence,
        };
        let into_new = alloc_edge(edge.from, mid, first_kind);
        let out_of_new = alloc_edge(Endpoint::Milestone(mid), edge.to, EdgeKind::Sequence);
        let bypass = (misses > 0).then(|| alloc_edge(edge.from, edge.to, EdgeKind::Bypass));
        next.edges.retain(|e| e.id != edge_id);

        // Split every path through the edge into a "with" and a "without"
        // variant; empty variants are dropped.
        let mut new_paths: Vec<TimelinePath> = Vec::new();
        let mut remap: Vec<(Option<usize>, Option<usize>)> = Vec::with_capacity(self.paths.len());
        for p in &self.paths {
            let Some(pos) = p.edges.iter().position(|&e| e == edge_id) else {
                new_paths.push(p.clone());
                remap.push((Some(new_paths.len() - 1), None));
                continue;
            };
            let mut with = p.clone();
            with.edges.splice(pos..=pos, [into_new, out_of_new]);
            let to_pos = with
                .milestones
                .iter()
                .position(|&m| m == edge.to)
                .expect("edge target lies on its path");
            with.milestones.insert(to_pos, mid);
            new_paths.push(with);
            let with_idx = new_paths.len() - 1;
            let without_idx = bypass.map(|b| {
                let mut without = p.clone();
                without.edges[pos] = b;
                new_paths.push(without);
                new_paths.len() - 1
            });
            remap.push((Some(with_idx), without_idx));
        }

        for i in 0..next.entity_path.len() {
            let (with, without) = remap[self.entity_path[i]];
            next.entity_path[i] = match (hits.get(&i), without) {
                (Some(&date), _) => {
                    next.entity_anchors[i].insert(mid, date);
                    with.expect("with-variant always exists")
                }
                (None, Some(w)) if self.paths[self.entity_path[i]].edges.contains(&edge_id) => w,
                _ => with.expect("untouched path kept"),
            };
        }

        // drop variants nobody follows and compact indexes
        let mut counts = vec![0usize; new_paths.len()];
        for &p in &next.entity_path {
            counts[p] += 1;
        }
        let mut index = vec![usize::MAX; new_paths.len()];
        let mut kept = Vec::new();
        for (k, p) in new_paths.into_iter().enumerate() {
            if counts[k] > 0 {
                index[k] = kept.len();
                kept.push(p);
            }
        }
        for p in next.entity_path.iter_mut() {
            *p = index[*p];
        }
        next.paths = kept;
        next.refresh_stats(cohort);
        Ok(next)
    }

    fn refresh_stats(&mut self, cohort: &Cohort) {
        let n = cohort.len();
        let outcome = &cohort.outcome_vector;
        let group = |members: &[usize]| {
            let pos = members.iter().filter(|&&i| outcome[i]).count();
            GroupStats {
                members: members.len(),
                proportion: if n == 0 { 0.0 } else { members.len() as f64 / n as f64 },
                avg_outcome: if members.is_empty() { 0.0 } else { pos as f64 / members.len() as f64 },
            }
        };
        for k in 0..self.milestones.len() {
            let members = self.milestone_members(self.milestones[k].id);
            self.milestones[k].stats = group(&members);
        }
        for k in 0..self.edges.len() {
            let members = self.edge_members(self.edges[k].id);
            let edge = &self.edges[k];
            let total_days: i64 = members
                .iter()
                .map(|&i| (self.entity_anchors[i][&edge.to] - self.start_date(i, edge)).num_days())
                .sum();
            let avg_days = if members.is_empty() { 0.0 } else { total_days as f64 / members.len() as f64 };
            let stats = group(&members);
            let edge = &mut self.edges[k];
            edge.stats = stats;
            edge.avg_days = avg_days;
        }
        let mut counts = vec![0usize; self.paths.len()];
        for &p in &self.entity_path {
            counts[p] += 1;
        }
        for (p, c) in self.paths.iter_mut().zip(counts) {
            p.members = c;
        }
    }

    /// Serializable view; member lists are included when `detail` is set.
    pub fn summary(&self, detail: bool) -> TimelineSummary {
        TimelineSummary {
            cohort_id: self.cohort_id.clone(),
            version: self.version,
            lookback_days: self.lookback_days,
            entities: self.entity_path.len(),
            milestones: self.milestones.clone(),
            edges: self.edges.clone(),
            paths: self.paths.clone(),
            members: detail.then(|| {
                let mut m = BTreeMap::new();
                for ms in &self.milestones {
                    m.insert(ms.id.to_string(), self.milestone_members(ms.id));
                }
                for e in &self.edges {
                    m.insert(e.id.to_string(), self.edge_members(e.id));
                }
                m
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineSummary {
    pub cohort_id: String,
    pub version: u64,
    pub lookback_days: u32,
    pub entities: usize,
    pub milestones: Vec<Milestone>,
    pub edges: Vec<TimeEdge>,
    pub paths: Vec<TimelinePath>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<BTreeMap<String, Vec<usize>>>,
}

/// One step of a survival curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub time: i64,
    pub survival: f64,
    pub at_risk: usize,
    pub events: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensorMark {
    pub time: i64,
    pub survival: f64,
}

/// Right-continuous product-limit step function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub n: usize,
    pub points: Vec<SurvivalPoint>,
    pub censored: Vec<CensorMark>,
}

impl SurvivalCurve {
    pub fn survival_at(&self, t: i64) -> f64 {
        self.points
            .iter()
            .take_while(|p| p.time <= t)
            .last()
            .map_or(1.0, |p| p.survival)
    }
}

/// Kaplan-Meier estimate from `(time, event_observed)` pairs with times in
/// days (non-negative). Censored observations at an event time count as at
/// risk at that time.
pub fn product_limit(samples: &[(i64, bool)]) -> SurvivalCurve {
    let mut sorted: Vec<(i64, bool)> = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let mut points = Vec::new();
    if sorted.first().is_none_or(|&(t, e)| !(t == 0 && e)) {
        points.push(SurvivalPoint { time: 0, survival: 1.0, at_risk: n, events: 0 });
    }
    let mut censored = Vec::new();
    let mut surv = 1.0;
    let mut at_risk = n;
    let mut k = 0;
    while k < n {
        let t = sorted[k].0;
        let end = k + sorted[k..].partition_point(|s| s.0 == t);
        let deaths = sorted[k..end].iter().filter(|s| s.1).count();
        if deaths > 0 {
            surv *= 1.0 - deaths as f64 / at_risk as f64;
            points.push(SurvivalPoint { time: t, survival: surv, at_risk, events: deaths });
        }
        for _ in sorted[k..end].iter().filter(|s| !s.1) {
            censored.push(CensorMark { time: t, survival: surv });
        }
        at_risk -= end - k;
        k = end;
    }
    SurvivalCurve { n, points, censored }
}

/// Time from the reference anchor to the first outcome event (outcome = 1),
/// or to the last observed event (outcome = 0, censored, never below zero).
/// The reference anchor is the one the cohort's outcome relation counts
/// from.
pub fn survival_samples(cohort: &Cohort) -> Vec<(i64, bool)> {
    cohort
        .entities
        .iter()
        .map(|e| {
            let origin = match cohort.source_query.outcome.relation {
                OutcomeRelation::AfterFinalAnchor => e.final_anchor(),
                OutcomeRelation::AfterFirstAnchor => e.anchors[0],
            };
            match e.outcome_date {
                Some(d) => ((d - origin).num_days(), true),
                None => {
                    let last = e.last_event_date().unwrap_or(origin);
                    ((last - origin).num_days().max(0), false)
                }
            }
        })
        .collect()
}

pub fn kaplan_meier(cohort: &Cohort) -> Result<SurvivalCurve, TimelineError> {
    if cohort.is_empty() {
        return Err(TimelineError::EmptyCohort);
    }
    Ok(product_limit(&survival_samples(cohort)))
}
