//! Serializable payloads shared by the HTTP service and the CLI: the
//! overview scatter, the sortable event table and attribute summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cut::{informative_cut, CutParams, CutResult};
use crate::layout::{hexbin, AxisDomain, HexBinGrid, LayoutError};
use crate::model::{AttributeValue, Cohort, TypeHierarchy};
use crate::query::{AttributeConstraint, Predicate};
use crate::stats::{EventTypeStats, StatsTable};

/// Screen geometry of the overview scatter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterParams {
    pub width: f64,
    pub height: f64,
    /// Hexagon radius in screen units.
    pub hex_radius: f64,
}

impl Default for ScatterParams {
    fn default() -> Self {
        ScatterParams { width: 640.0, height: 360.0, hex_radius: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterMark {
    pub code: String,
    pub label: String,
    pub depth: u32,
    pub leaf: bool,
    pub seq_count: u64,
    pub occ_count: u64,
    pub prevalence: f64,
    pub correlation: f64,
    pub chi2: f64,
    pub p_value: f64,
    /// Screen position from the axis domains.
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutSummary {
    pub r: f64,
    pub pre_filter: Vec<String>,
    pub post_filter: Vec<String>,
}

/// Cut marks over a hexagonal density map of every non-root event type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterView {
    pub context: String,
    pub n: usize,
    pub positives: usize,
    pub params: ScatterParams,
    /// Correlation domain, symmetric around zero.
    pub x_domain: AxisDomain,
    /// Prevalence domain.
    pub y_domain: AxisDomain,
    pub cut: CutSummary,
    pub marks: Vec<ScatterMark>,
    pub hexbins: HexBinGrid,
}

fn mark(h: &TypeHierarchy, s: &EventTypeStats, id: crate::model::NodeId, x: f64, y: f64) -> ScatterMark {
    ScatterMark {
        code: s.code.clone(),
        label: s.label.clone(),
        depth: s.depth,
        leaf: h.is_leaf(id),
        seq_count: s.seq_count,
        occ_count: s.occ_count,
        prevalence: s.prevalence,
        correlation: s.correlation,
        chi2: s.chi2,
        p_value: s.p_value,
        x,
        y,
    }
}

/// Overview scatter for a precomputed stats table and cut.
pub fn scatter_from_cut(
    h: &TypeHierarchy,
    stats: &StatsTable,
    cut: &CutResult,
    params: &ScatterParams,
) -> Result<ScatterView, LayoutError> {
    let others = || h.ids().filter(|&id| id != h.root()).map(|id| stats.get(id));
    let half = (others().map(|s| s.correlation.abs()).fold(0.0, f64::max) * 1.1).max(0.01);
    let top = (others().map(|s| s.prevalence).fold(0.0, f64::max) * 1.05).max(0.01);
    let x_domain = AxisDomain { min: -half, max: half };
    let y_domain = AxisDomain { min: 0.0, max: top };
    let to_x = |rho: f64| (rho + half) / (2.0 * half) * params.width;
    // screen y grows downward
    let to_y = |prev: f64| (1.0 - prev / top) * params.height;

    let points: Vec<(f64, f64)> = others().map(|s| (to_x(s.correlation), to_y(s.prevalence))).collect();
    let hexbins = hexbin(&points, params.hex_radius)?;
    let marks = cut
        .post_filter
        .iter()
        .map(|&id| {
            let s = stats.get(id);
            mark(h, s, id, to_x(s.correlation), to_y(s.prevalence))
        })
        .collect();
    let codes = |ids: &[crate::model::NodeId]| ids.iter().map(|&id| h.code(id).to_owned()).collect();
    Ok(ScatterView {
        context: stats.context.clone(),
        n: stats.n,
        positives: stats.positives,
        params: *params,
        x_domain,
        y_domain,
        cut: CutSummary { r: cut.params.r, pre_filter: codes(&cut.pre_filter), post_filter: codes(&cut.post_filter) },
        marks,
        hexbins,
    })
}

pub fn scatter_view(
    h: &TypeHierarchy,
    stats: &StatsTable,
    cut: CutParams,
    params: &ScatterParams,
) -> Result<ScatterView, LayoutError> {
    let cut = informative_cut(h, &stats.chi2(), cut);
    scatter_from_cut(h, stats, &cut, params)
}

/// Sort key of the event table; rows are always in descending order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    #[default]
    SeqCount,
    OccCount,
    Correlation,
}

impl fmt::Display for SortKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SortKey::SeqCount => "seq_count",
            SortKey::OccCount => "occ_count",
            SortKey::Correlation => "correlation",
        })
    }
}

impl FromStr for SortKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seq_count" => Ok(SortKey::SeqCount),
            "occ_count" => Ok(SortKey::OccCount),
            "correlation" => Ok(SortKey::Correlation),
            other => Err(format!("unknown sort key `{other}` (expected seq_count, occ_count or correlation)")),
        }
    }
}

/// Event types with at least one in-window occurrence, sorted descending by
/// `key` with ties broken by code. The root is omitted.
pub fn event_table(h: &TypeHierarchy, stats: &StatsTable, key: SortKey) -> Vec<EventTypeStats> {
    let mut rows: Vec<EventTypeStats> = h
        .ids()
        .filter(|&id| id != h.root())
        .map(|id| stats.get(id))
        .filter(|s| s.seq_count > 0)
        .cloned()
        .collect();
    rows.sort_by(|a, b| {
        let by_key = match key {
            SortKey::SeqCount => b.seq_count.cmp(&a.seq_count),
            SortKey::OccCount => b.occ_count.cmp(&a.occ_count),
            SortKey::Correlation => b.correlation.total_cmp(&a.correlation),
        };
        by_key.then_with(|| a.code.cmp(&b.code))
    });
    rows
}

/// One histogram bar; `filter` selects exactly the bar's members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeBin {
    pub label: String,
    pub count: usize,
    pub positives: usize,
    pub filter: AttributeConstraint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSummary {
    pub name: String,
    pub kind: AttributeKind,
    /// Entities without a value.
    pub missing: usize,
    pub bins: Vec<AttributeBin>,
}

pub const NUMERIC_BINS: usize = 10;

/// Histograms of every attribute over the cohort: equal-width bins for
/// numeric attributes, one bar per value otherwise. An attribute with any
/// non-numeric value is treated as categorical.
pub fn attribute_summaries(cohort: &Cohort) -> Vec<AttributeSummary> {
    cohort.attribute_names.iter().map(|name| summarize(cohort, name)).collect()
}

fn summarize(cohort: &Cohort, name: &str) -> AttributeSummary {
    let values: Vec<(Option<&AttributeValue>, bool)> =
        cohort.entities.iter().map(|e| (e.attributes.get(name), e.outcome)).collect();
    let missing = values.iter().filter(|v| v.0.is_none()).count();
    let present = || values.iter().filter_map(|&(v, o)| v.map(|v| (v, o)));
    let numeric: Option<Vec<(f64, bool)>> = present().map(|(v, o)| v.as_f64().map(|x| (x, o))).collect();

    let (kind, bins) = match numeric {
        Some(nums) if !nums.is_empty() => (AttributeKind::Numeric, numeric_bins(name, &nums)),
        _ => {
            let mut counts: BTreeMap<String, (AttributeValue, usize, usize)> = BTreeMap::new();
            for (v, o) in present() {
                let slot = counts.entry(v.to_string()).or_insert_with(|| (v.clone(), 0, 0));
                slot.1 += 1;
                slot.2 += usize::from(o);
            }
            let bins = counts
                .into_iter()
                .map(|(label, (value, count, positives))| AttributeBin {
                    label,
                    count,
                    positives,
                    filter: AttributeConstraint::new(name, Predicate::Eq(value)),
                })
                .collect();
            (AttributeKind::Categorical, bins)
        }
    };
    AttributeSummary { name: name.to_owned(), kind, missing, bins }
}

fn numeric_bins(name: &str, values: &[(f64, bool)]) -> Vec<AttributeBin> {
    let lo = values.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let hi = values.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
    let k = if hi > lo { NUMERIC_BINS } else { 1 };
    let width = (hi - lo) / k as f64;
    let edge = |i: usize| if i == k { hi.next_up() } else { lo + width * i as f64 };
    (0..k)
        .map(|i| {
            let (a, b) = (edge(i), edge(i + 1));
            let inside = values.iter().filter(|v| v.0 >= a && v.0 < b);
            AttributeBin {
                label: format!("[{a}, {})", if i + 1 == k { hi } else { b }),
                count: inside.clone().count(),
                positives: inside.filter(|v| v.1).count(),
                filter: AttributeConstraint::new(name, Predicate::Between(a, b)),
            }
        })
        .collect()
}
