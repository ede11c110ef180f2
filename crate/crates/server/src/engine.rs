//! Analysis state shared by the HTTP handlers and the CLI.
//!
//! An [`Analysis`] pins one cohort, one timeline version and one selection;
//! every view is a pure function of it plus request parameters.

use std::sync::Arc;

use eventscope_core::cut::{informative_cut, CutError, CutParams};
use eventscope_core::layout::{focus_layout, FocusLayout, FocusParams, LayoutError};
use eventscope_core::stats::{stats_for_all_types, EventTypeStats, StatsError, StatsTable};
use eventscope_core::timeline::{kaplan_meier, Selection, SurvivalCurve, TimelineError, TimelineSummary};
use eventscope_core::views::{
    attribute_summaries, event_table, scatter_from_cut, AttributeSummary, ScatterParams, ScatterView, SortKey,
};
use eventscope_core::{context_window, AnalyticContext, Cohort, IngestError, QueryError, TimelineModel};
use moka::sync::Cache;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unknown {kind} `{id}`")]
    NotFound { kind: &'static str, id: String },
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Timeline(#[from] TimelineError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Cut(#[from] CutError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

impl EngineError {
    pub fn not_found(kind: &'static str, id: impl Into<String>) -> Self {
        EngineError::NotFound { kind, id: id.into() }
    }

    /// The unknown identifier or code, when the error is about one.
    pub fn echo(&self) -> Option<String> {
        match self {
            EngineError::NotFound { id, .. } => Some(id.clone()),
            EngineError::Query(QueryError::UnknownCode(c) | QueryError::UnknownAttribute(c)) => Some(c.clone()),
            EngineError::Timeline(TimelineError::UnknownCode(c) | TimelineError::UnknownSelection(c)) => {
                Some(c.clone())
            }
            EngineError::Timeline(TimelineError::UnknownEdge(e)) => Some(e.to_string()),
            EngineError::Layout(LayoutError::UnknownCode(c)) => Some(c.clone()),
            _ => None,
        }
    }

    pub fn is_not_found(&self) -> bool {
        matches!(
            self,
            EngineError::NotFound { .. }
                | EngineError::Query(QueryError::UnknownCode(_) | QueryError::UnknownAttribute(_))
                | EngineError::Timeline(
                    TimelineError::UnknownCode(_) | TimelineError::UnknownEdge(_) | TimelineError::UnknownSelection(_)
                )
                | EngineError::Layout(LayoutError::UnknownCode(_))
        )
    }
}

/// Stats tables keyed by analytic context (cohort, timeline version,
/// selection).
#[derive(Clone)]
pub struct StatsCache(Cache<String, Arc<StatsTable>>);

impl StatsCache {
    pub fn new(capacity: u64) -> Self {
        StatsCache(Cache::new(capacity))
    }
}

/// One cohort at one timeline version with one active selection.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub cohort: Arc<Cohort>,
    pub timeline: Arc<TimelineModel>,
    pub selection: Selection,
}

/// Cut members with their statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutReport {
    pub context: String,
    pub r: f64,
    pub pre_filter: Vec<String>,
    pub post_filter: Vec<String>,
    pub rows: Vec<EventTypeStats>,
}

/// Focus layout together with the context it was computed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusView {
    pub context: String,
    #[serde(flatten)]
    pub layout: FocusLayout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTableView {
    pub context: String,
    pub sort: SortKey,
    pub rows: Vec<EventTypeStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub cohort_id: String,
    pub dataset_id: String,
    pub entities: usize,
    pub positives: usize,
    pub outcome_rate: f64,
    pub empty_warning: bool,
}

impl CohortSummary {
    pub fn of(c: &Cohort) -> Self {
        CohortSummary {
            cohort_id: c.id.clone(),
            dataset_id: c.dataset_id.clone(),
            entities: c.len(),
            positives: c.positives(),
            outcome_rate: c.outcome_rate(),
            empty_warning: c.empty_warning,
        }
    }
}

pub fn parse_r(r: f64) -> Result<CutParams, EngineError> {
    CutParams::new(r).map_err(|e| EngineError::BadRequest(e.to_string()))
}

impl Analysis {
    pub fn new(cohort: Arc<Cohort>) -> Self {
        let timeline = Arc::new(TimelineModel::build(&cohort));
        Analysis { cohort, timeline, selection: Selection::WholeRecord }
    }

    pub fn context(&self) -> Result<AnalyticContext, EngineError> {
        match self.selection {
            Selection::WholeRecord => Ok(AnalyticContext::whole_record(self.cohort.clone())),
            _ => Ok(context_window(&self.cohort, &self.timeline, &self.selection)?),
        }
    }

    /// Context key; unique per (cohort, timeline version, selection).
    pub fn key(&self) -> String {
        format!("{}/v{}/{}", self.cohort.id, self.timeline.version, self.selection)
    }

    /// Checks that the selection exists in the current timeline.
    pub fn validate_selection(&self) -> Result<(), EngineError> {
        self.timeline.windows(&self.cohort, &self.selection)?;
        Ok(())
    }

    pub fn stats(&self, cache: &StatsCache) -> Result<Arc<StatsTable>, EngineError> {
        let key = self.key();
        if let Some(hit) = cache.0.get(&key) {
            return Ok(hit);
        }
        let table = Arc::new(stats_for_all_types(&self.context()?)?);
        cache.0.insert(key, table.clone());
        Ok(table)
    }

    pub fn scatter(&self, cache: &StatsCache, r: f64, params: &ScatterParams) -> Result<ScatterView, EngineError> {
        let stats = self.stats(cache)?;
        let cut = informative_cut(&self.cohort.hierarchy, &stats.chi2(), parse_r(r)?);
        Ok(scatter_from_cut(&self.cohort.hierarchy, &stats, &cut, params)?)
    }

    pub fn cut(&self, cache: &StatsCache, r: f64) -> Result<CutReport, EngineError> {
        let stats = self.stats(cache)?;
        let h = &self.cohort.hierarchy;
        let cut = informative_cut(h, &stats.chi2(), parse_r(r)?);
        let codes = |post| cut.codes(h, post).into_iter().map(String::from).collect();
        Ok(CutReport {
            context: stats.context.clone(),
            r,
            pre_filter: codes(false),
            post_filter: codes(true),
            rows: cut.pre_filter.iter().map(|&id| stats.get(id).clone()).collect(),
        })
    }

    pub fn focus(&self, cache: &StatsCache, code: &str, params: &FocusParams) -> Result<FocusView, EngineError> {
        let h = &self.cohort.hierarchy;
        if h.id(code).is_none() {
            return Err(EngineError::not_found("event type code", code));
        }
        let stats = self.stats(cache)?;
        Ok(FocusView { context: stats.context.clone(), layout: focus_layout(h, &stats, code, params)? })
    }

    pub fn event_table(&self, cache: &StatsCache, sort: SortKey) -> Result<EventTableView, EngineError> {
        let stats = self.stats(cache)?;
        Ok(EventTableView {
            context: stats.context.clone(),
            sort,
            rows: event_table(&self.cohort.hierarchy, &stats, sort),
        })
    }

    pub fn attributes(&self) -> Vec<AttributeSummary> {
        attribute_summaries(&self.cohort)
    }

    pub fn survival(&self) -> Result<SurvivalCurve, EngineError> {
        Ok(kaplan_meier(&self.cohort)?)
    }

    pub fn timeline_summary(&self, detail: bool) -> TimelineSummary {
        self.timeline.summary(detail)
    }

    /// New timeline version with `code` added on `edge`.
    pub fn add_milestone(&self, edge: &str, code: &str) -> Result<Analysis, EngineError> {
        let edge_id = match edge.parse::<Selection>() {
            Ok(Selection::Edge(e)) => e,
            _ => return Err(EngineError::not_found("time edge", edge)),
        };
        if self.cohort.hierarchy.id(code).is_none() {
            return Err(EngineError::not_found("event type code", code));
        }
        let timeline = Arc::new(self.timeline.add_milestone(&self.cohort, edge_id, code)?);
        // a selection that no longer exists falls back to the whole record
        let selection = if timeline.windows(&self.cohort, &self.selection).is_ok() {
            self.selection.clone()
        } else {
            Selection::WholeRecord
        };
        Ok(Analysis { cohort: self.cohort.clone(), timeline, selection })
    }
}
