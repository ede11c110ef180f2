//! Cohort queries: ordered inclusion constraints, attribute predicates,
//! lookback context and outcome labeling; plus the per-entity analytic
//! windows that a timeline selection implies.

use std::ops::{Bound, RangeBounds};
use std::sync::Arc;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::Dataset;
use crate::model::{AttributeValue, Cohort, EntityRecord, Event, NodeId, TypeHierarchy};
use crate::timeline::{Selection, TimelineError, TimelineModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("invalid query: {0}")]
    InvalidSpec(String),
    #[error("unknown event type code `{0}`")]
    UnknownCode(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("dataset `{0}` is empty")]
    EmptyDataset(String),
    #[error(transparent)]
    Selection(#[from] TimelineError),
}

/// When outcome events count toward the label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeRelation {
    /// Strictly after the last inclusion anchor.
    #[default]
    AfterFinalAnchor,
    /// Strictly after the first inclusion anchor, so occurrences between
    /// anchors also label the entity.
    AfterFirstAnchor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    /// Any event in the subtree of any of these codes is an outcome event.
    pub codes: Vec<String>,
    #[serde(default)]
    pub relation: OutcomeRelation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "value", rename_all = "snake_case")]
pub enum Predicate {
    Eq(AttributeValue),
    Ne(AttributeValue),
    Lt(f64),
    Le(f64),
    Gt(f64),
    Ge(f64),
    /// Half-open numeric interval `[lo, hi)`.
    Between(f64, f64),
    In(Vec<AttributeValue>),
}

impl Predicate {
    /// A missing attribute never satisfies a predicate.
    pub fn matches(&self, value: Option<&AttributeValue>) -> bool {
        let Some(value) = value else { return false };
        let num = value.as_f64();
        match self {
            Predicate::Eq(v) => value == v,
            Predicate::Ne(v) => value != v,
            Predicate::Lt(t) => num.is_some_and(|x| x < *t),
            Predicate::Le(t) => num.is_some_and(|x| x <= *t),
            Predicate::Gt(t) => num.is_some_and(|x| x > *t),
            Predicate::Ge(t) => num.is_some_and(|x| x >= *t),
            Predicate::Between(lo, hi) => num.is_some_and(|x| x >= *lo && x < *hi),
            Predicate::In(vs) => vs.contains(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeConstraint {
    pub attribute: String,
    #[serde(flatten)]
    pub predicate: Predicate,
}

impl AttributeConstraint {
    pub fn new(attribute: impl Into<String>, predicate: Predicate) -> Self {
        Self { attribute: attribute.into(), predicate }
    }
}

/// A cohort definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    /// Ordered event-type codes; each matches its whole subtree.
    pub inclusion: Vec<String>,
    #[serde(default)]
    pub attribute_constraints: Vec<AttributeConstraint>,
    /// Days of history kept before the first inclusion anchor.
    #[serde(default)]
    pub lookback_days: u32,
    pub outcome: OutcomeSpec,
}

impl QuerySpec {
    pub fn validate(&self, hierarchy: &TypeHierarchy) -> Result<ResolvedQuery, QueryError> {
        if self.inclusion.is_empty() {
            return Err(QueryError::InvalidSpec("at least one inclusion constraint is required".into()));
        }
        if self.outcome.codes.is_empty() {
            return Err(QueryError::InvalidSpec("outcome needs at least one code".into()));
        }
        let resolve = |c: &String| hierarchy.id(c).ok_or_else(|| QueryError::UnknownCode(c.clone()));
        Ok(ResolvedQuery {
            inclusion: self.inclusion.iter().map(resolve).collect::<Result<_, _>>()?,
            outcome: self.outcome.codes.iter().map(resolve).collect::<Result<_, _>>()?,
        })
    }
}

/// Inclusion and outcome codes resolved to hierarchy nodes.
#[derive(Debug, Clone)]
pub struct ResolvedQuery {
    pub inclusion: Vec<NodeId>,
    pub outcome: Vec<NodeId>,
}

/// Greedy anchoring: constraint `k` anchors at the earliest not-yet-used
/// event in its subtree dated on or after anchor `k - 1`. Returns the event
/// positions of the anchors, or `None` when some constraint cannot be met.
pub fn find_anchors(h: &TypeHierarchy, events: &[Event], inclusion: &[NodeId]) -> Option<Vec<usize>> {
    let mut used: Vec<usize> = Vec::with_capacity(inclusion.len());
    let mut floor: Option<NaiveDate> = None;
    for &code in inclusion {
        let start = floor.map_or(0, |d| events.partition_point(|e| e.date < d));
        let pos = (start..events.len())
            .find(|&k| !used.contains(&k) && h.in_subtree(code, events[k].node))?;
        floor = Some(events[pos].date);
        used.push(pos);
    }
    Some(used)
}

fn hash_id(prefix: &str, parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p.as_bytes());
    }
    let digest = hasher.finalize();
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    format!("{prefix}-{hex}")
}

/// Runs `spec` against `dataset`. An empty result is returned with
/// [`Cohort::empty_warning`] set rather than as an error.
pub fn execute_query(dataset: &Dataset, spec: &QuerySpec) -> Result<Cohort, QueryError> {
    if dataset.entities.is_empty() {
        return Err(QueryError::EmptyDataset(dataset.id.clone()));
    }
    let h = dataset.hierarchy.as_ref();
    let resolved = spec.validate(h)?;
    let in_outcome = |n: NodeId| resolved.outcome.iter().any(|&o| h.in_subtree(o, n));

    let mut entities = Vec::new();
    for seq in &dataset.entities {
        let attrs_ok = spec
            .attribute_constraints
            .iter()
            .all(|c| c.predicate.matches(seq.attributes.get(&c.attribute)));
        if !attrs_ok {
            continue;
        }
        let Some(positions) = find_anchors(h, &seq.events, &resolved.inclusion) else {
            continue;
        };
        let anchors: Vec<NaiveDate> = positions.iter().map(|&k| seq.events[k].date).collect();
        let after = match spec.outcome.relation {
            OutcomeRelation::AfterFinalAnchor => *anchors.last().expect("non-empty inclusion"),
            OutcomeRelation::AfterFirstAnchor => anchors[0],
        };
        let outcome_date = seq
            .events
            .iter()
            .find(|e| e.date > after && in_outcome(e.node))
            .map(|e| e.date);
        let start = anchors[0]
            .checked_sub_days(Days::new(spec.lookback_days as u64))
            .unwrap_or(NaiveDate::MIN);
        let from = seq.events.partition_point(|e| e.date < start);
        entities.push(EntityRecord {
            id: seq.id.clone(),
            attributes: seq.attributes.clone(),
            events: seq.events[from..].to_vec(),
            outcome: outcome_date.is_some(),
            anchors,
            outcome_date,
        });
    }

    let spec_json = serde_json::to_string(spec).expect("query spec serializes");
    Ok(Cohort::new(
        hash_id("c", &[&dataset.id, &spec_json]),
        dataset.id.clone(),
        dataset.hierarchy.clone(),
        entities,
        spec.clone(),
        dataset.attribute_names.clone(),
    ))
}

/// Returns a new cohort with only the entities satisfying `constraint`.
pub fn apply_attribute_filter(cohort: &Cohort, constraint: &AttributeConstraint) -> Result<Cohort, QueryError> {
    if !cohort.attribute_names.contains(&constraint.attribute) {
        return Err(QueryError::UnknownAttribute(constraint.attribute.clone()));
    }
    let entities: Vec<EntityRecord> = cohort
        .entities
        .iter()
        .filter(|e| constraint.predicate.matches(e.attributes.get(&constraint.attribute)))
        .cloned()
        .collect();
    let mut spec = cohort.source_query.clone();
    spec.attribute_constraints.push(constraint.clone());
    let constraint_json = serde_json::to_string(constraint).expect("constraint serializes");
    Ok(Cohort::new(
        hash_id("c", &[&cohort.id, &constraint_json]),
        cohort.dataset_id.clone(),
        cohort.hierarchy.clone(),
        entities,
        spec,
        cohort.attribute_names.clone(),
    ))
}

/// Per-entity time window in which events are analyzed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActiveWindow {
    Empty,
    Range(Bound<NaiveDate>, Bound<NaiveDate>),
}

impl ActiveWindow {
    pub fn whole() -> Self {
        ActiveWindow::Range(Bound::Unbounded, Bound::Unbounded)
    }

    /// Events on the milestone's calendar day.
    pub fn day(d: NaiveDate) -> Self {
        ActiveWindow::Range(Bound::Included(d), Bound::Included(d))
    }

    /// Events strictly after `from` up to and including `to`.
    pub fn between(from: NaiveDate, to: NaiveDate) -> Self {
        ActiveWindow::Range(Bound::Excluded(from), Bound::Included(to))
    }

    /// Edge leaving the lookback start: `[start, to]`.
    pub fn from_start(start: NaiveDate, to: NaiveDate) -> Self {
        ActiveWindow::Range(Bound::Included(start), Bound::Included(to))
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        match self {
            ActiveWindow::Empty => false,
            ActiveWindow::Range(lo, hi) => (*lo, *hi).contains(&d),
        }
    }

    /// The sub-slice of date-sorted `events` that falls in the window.
    pub fn slice<'a>(&self, events: &'a [Event]) -> &'a [Event] {
        let ActiveWindow::Range(lo, hi) = *self else {
            return &[];
        };
        let from = match lo {
            Bound::Unbounded => 0,
            Bound::Included(d) => events.partition_point(|e| e.date < d),
            Bound::Excluded(d) => events.partition_point(|e| e.date <= d),
        };
        let to = match hi {
            Bound::Unbounded => events.len(),
            Bound::Included(d) => events.partition_point(|e| e.date <= d),
            Bound::Excluded(d) => events.partition_point(|e| e.date < d),
        };
        if from >= to {
            &[]
        } else {
            &events[from..to]
        }
    }
}

/// The analysis scope implied by a timeline selection: one window per
/// cohort entity, aligned with cohort order.
#[derive(Debug, Clone)]
pub struct AnalyticContext {
    pub cohort: Arc<Cohort>,
    pub windows: Vec<ActiveWindow>,
    pub selection: Selection,
    pub timeline_version: u64,
}

impl AnalyticContext {
    pub fn whole_record(cohort: Arc<Cohort>) -> Self {
        let windows = vec![ActiveWindow::whole(); cohort.len()];
        AnalyticContext { cohort, windows, selection: Selection::WholeRecord, timeline_version: 0 }
    }

    /// Events of entity `i` inside its window.
    pub fn events(&self, i: usize) -> &[Event] {
        self.windows[i].slice(&self.cohort.entities[i].events)
    }

    /// Number of entities with a non-empty window.
    pub fn active_entities(&self) -> usize {
        self.windows.iter().filter(|w| !matches!(w, ActiveWindow::Empty)).count()
    }

    /// Stable key for caches: cohort, timeline version and selection.
    pub fn key(&self) -> String {
        format!("{}/v{}/{}", self.cohort.id, self.timeline_version, self.selection)
    }
}

/// Builds the analytic context for a milestone or time-edge selection.
pub fn context_window(
    cohort: &Arc<Cohort>,
    timeline: &TimelineModel,
    selection: &Selection,
) -> Result<AnalyticContext, QueryError> {
    let windows = timeline.windows(cohort, selection)?;
    Ok(AnalyticContext {
        cohort: cohort.clone(),
        windows,
        selection: selection.clone(),
        timeline_version: timeline.version,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ingest, DataSource, DatasetManifest};

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, day).unwrap()
    }

    /// e1=[A@1,B@5,X@9], e2=[A@2,B@1], e3=[B@3], e4=[A@4,B@6]
    pub(crate) fn toy_dataset() -> Dataset {
        let hierarchy = "code,parent,label\nROOT,,all\nA,ROOT,a\nB,ROOT,b\nX,ROOT,x\n";
        let events = "entity_id,type_code,timestamp\n\
            e1,A,2020-01-01\ne1,B,2020-01-05\ne1,X,2020-01-09\n\
            e2,A,2020-01-02\ne2,B,2020-01-01\n\
            e3,B,2020-01-03\n\
            e4,A,2020-01-04\ne4,B,2020-01-06\n";
        let attributes = "entity_id,age\ne1,60\ne2,70\ne3,75\ne4,80\n";
        ingest(&DatasetManifest {
            dataset_id: "toy".into(),
            hierarchy: DataSource::Inline(hierarchy.into()),
            events: DataSource::Inline(events.into()),
            attributes: Some(DataSource::Inline(attributes.into())),
        })
        .unwrap()
    }

    fn spec(inclusion: &[&str], outcome: &[&str]) -> QuerySpec {
        QuerySpec {
            inclusion: inclusion.iter().map(|s| s.to_string()).collect(),
            attribute_constraints: vec![],
            lookback_days: 0,
            outcome: OutcomeSpec {
                codes: outcome.iter().map(|s| s.to_string()).collect(),
                relation: OutcomeRelation::AfterFinalAnchor,
            },
        }
    }

    #[test]
    fn toy_query_matches_hand_trace() {
        let ds = toy_dataset();
        let c = execute_query(&ds, &spec(&["A", "B"], &["X"])).unwrap();
        let ids: Vec<&str> = c.entities.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, vec!["e1", "e4"]);
        assert_eq!(c.outcome_vector, vec![true, false]);
        assert_eq!(c.entities[0].anchors, vec![d(1), d(5)]);
        assert_eq!(c.entities[0].outcome_date, Some(d(9)));
        assert!(!c.empty_warning);
    }

    #[test]
    fn root_inclusion_matches_everyone_at_first_event() {
        let ds = toy_dataset();
        let c = execute_query(&ds, &spec(&["ROOT"], &["X"])).unwrap();
        assert_eq!(c.len(), 4);
        for (e, seq) in c.entities.iter().zip(&ds.entities) {
            assert_eq!(e.anchors, vec![seq.events[0].date]);
        }
    }

    #[test]
    fn repeated_constraint_needs_distinct_events() {
        let ds = toy_dataset();
        let c = execute_query(&ds, &spec(&["A", "A"], &["X"])).unwrap();
        assert!(c.is_empty());
        assert!(c.empty_warning);
    }

    #[test]
    fn outcome_relation_switch() {
        let ds = toy_dataset();
        // X@9 comes after B@5, so both relations label e1 positive; with
        // inclusion [A, X] only the first-anchor relation can see X.
        let mut s = spec(&["A", "X"], &["X"]);
        let c = execute_query(&ds, &s).unwrap();
        assert_eq!(c.outcome_vector, vec![false]);
        s.outcome.relation = OutcomeRelation::AfterFirstAnchor;
        let c = execute_query(&ds, &s).unwrap();
        assert_eq!(c.outcome_vector, vec![true]);
    }

    #[test]
    fn lookback_trims_history() {
        let ds = toy_dataset();
        let mut s = spec(&["B"], &["X"]);
        s.lookback_days = 1;
        let c = execute_query(&ds, &s).unwrap();
        let e1 = c.entities.iter().find(|e| e.id == "e1").unwrap();
        // anchor B@5, keep from day 4: A@1 dropped
        assert_eq!(e1.events.len(), 2);
        assert_eq!(e1.events[0].date, d(5));
        let e2 = c.entities.iter().find(|e| e.id == "e2").unwrap();
        assert_eq!(e2.events.len(), 2);
    }

    #[test]
    fn rejects_bad_specs() {
        let ds = toy_dataset();
        assert!(matches!(execute_query(&ds, &spec(&[], &["X"])), Err(QueryError::InvalidSpec(_))));
        assert_eq!(
            execute_query(&ds, &spec(&["Q"], &["X"])).unwrap_err(),
            QueryError::UnknownCode("Q".into())
        );
    }

    #[test]
    fn deterministic_ids() {
        let ds = toy_dataset();
        let a = execute_query(&ds, &spec(&["A", "B"], &["X"])).unwrap();
        let b = execute_query(&ds, &spec(&["A", "B"], &["X"])).unwrap();
        assert_eq!(a.id, b.id);
        assert_eq!(a.entities, b.entities);
        let c = execute_query(&ds, &spec(&["A"], &["X"])).unwrap();
        assert_ne!(a.id, c.id);
    }

    #[test]
    fn attribute_filters() {
        let ds = toy_dataset();
        // inclusion [A] keeps e1, e2, e4 with ages 60, 70, 80
        let c = execute_query(&ds, &spec(&["A"], &["X"])).unwrap();
        assert_eq!(c.len(), 3);
        let older = apply_attribute_filter(&c, &AttributeConstraint::new("age", Predicate::Ge(65.0))).unwrap();
        assert_eq!(older.len(), 2);
        assert_eq!(c.len(), 3, "source cohort untouched");

        let all = apply_attribute_filter(&c, &AttributeConstraint::new("age", Predicate::Ge(f64::MIN))).unwrap();
        assert_eq!(all.len(), c.len());
        assert_ne!(all.id, c.id);

        let none = apply_attribute_filter(&c, &AttributeConstraint::new("age", Predicate::Lt(f64::MIN))).unwrap();
        assert!(none.is_empty() && none.empty_warning);

        let err = apply_attribute_filter(&c, &AttributeConstraint::new("height", Predicate::Ge(1.0))).unwrap_err();
        assert_eq!(err, QueryError::UnknownAttribute("height".into()));
    }

    #[test]
    fn predicate_json_shape() {
        let c = AttributeConstraint::new("age", Predicate::Ge(65.0));
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(json, r#"{"attribute":"age","op":"ge","value":65.0}"#);
        let back: AttributeConstraint = serde_json::from_str(r#"{"attribute":"sex","op":"eq","value":"F"}"#).unwrap();
        assert_eq!(back.predicate, Predicate::Eq(AttributeValue::Categorical("F".into())));
    }

    #[test]
    fn window_slicing() {
        let ev = |day| Event { date: d(day), node: NodeId(0) };
        let events = [ev(1), ev(5), ev(5), ev(9)];
        assert_eq!(ActiveWindow::between(d(1), d(5)).slice(&events).len(), 2);
        assert_eq!(ActiveWindow::day(d(5)).slice(&events).len(), 2);
        assert_eq!(ActiveWindow::from_start(d(1), d(5)).slice(&events).len(), 3);
        assert_eq!(ActiveWindow::whole().slice(&events).len(), 4);
        assert!(ActiveWindow::Empty.slice(&events).is_empty());
        assert!(ActiveWindow::between(d(10), d(20)).contains(d(20)));
        assert!(!ActiveWindow::between(d(10), d(20)).contains(d(10)));
    }
}
