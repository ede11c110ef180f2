//! Analytics over outcome-labeled event sequences whose event types form a
//! hierarchy: cohort queries, per-node association statistics, informative
//! hierarchy cuts, focus layouts and milestone timelines.

pub mod cut;
pub mod fixtures;
pub mod ingest;
pub mod layout;
pub mod model;
pub mod query;
pub mod stats;
pub mod synth;
pub mod timeline;
pub mod views;

pub use cut::{comparison_ratio, informative_cut, scent, CutError, CutParams, CutResult};
pub use ingest::{ingest, Dataset, DatasetManifest, DataSource, IngestError};
pub use layout::{focus_layout, hexbin, optimize_y, overlap, FocusLayout, FocusParams, HexBinGrid, LayoutError, Mark};
pub use model::{Cohort, EntityRecord, Event, HierarchyEdge, ModelError, NodeId, TypeHierarchy};
pub use query::{
    apply_attribute_filter, context_window, execute_query, ActiveWindow, AnalyticContext, QueryError, QuerySpec,
};
pub use stats::{chi_square_yates, correlation, stats_for_all_types, ContingencyTable, StatsError, StatsTable};
pub use timeline::{kaplan_meier, EdgeId, MilestoneId, Selection, SurvivalCurve, TimelineError, TimelineModel};
