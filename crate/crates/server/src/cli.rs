//! Command-line interface. Every HTTP view has a matching subcommand; a
//! cohort is a small JSON file (dataset snapshot, query, filters and
//! milestone additions) that is replayed deterministically on each call.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eventscope_core::layout::FocusParams;
use eventscope_core::query::{apply_attribute_filter, AttributeConstraint, OutcomeRelation, OutcomeSpec};
use eventscope_core::synth::{generate_synthetic, SyntheticSpec};
use eventscope_core::timeline::Selection;
use eventscope_core::views::{ScatterParams, SortKey};
use eventscope_core::{execute_query, fixtures, ingest, DataSource, Dataset, DatasetManifest, QuerySpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Analysis, CohortSummary, EngineError, StatsCache};
use crate::http::{serve, ServeConfig, ServeError, DEFAULT_R};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Serve(#[from] ServeError),
}

impl From<eventscope_core::IngestError> for CliError {
    fn from(e: eventscope_core::IngestError) -> Self {
        CliError::Engine(e.into())
    }
}

impl From<eventscope_core::QueryError> for CliError {
    fn from(e: eventscope_core::QueryError) -> Self {
        CliError::Engine(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "eventscope", version, about = "Outcome analytics over hierarchical event sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest CSV tables into a dataset snapshot.
    Ingest {
        #[arg(long)]
        id: String,
        #[arg(long)]
        hierarchy: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        attributes: Option<PathBuf>,
        /// Snapshot directory to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset snapshot.
    Synth {
        /// One of: small, large-hierarchy, busiest, typical.
        #[arg(long, conflicts_with = "spec")]
        preset: Option<String>,
        /// JSON synthetic spec; missing fields take defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a built-in demo dataset and its query (`query.json`).
    Fixture {
        #[arg(value_enum)]
        name: FixtureName,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a cohort query and write the cohort file.
    Query(QueryArgs),
    /// Print the cohort's current timeline.
    Timeline {
        #[arg(long)]
        cohort: PathBuf,
        /// Include member indices of every milestone and edge.
        #[arg(long)]
        detail: bool,
    },
    /// Add a milestone on a time edge and update the cohort file.
    AddMilestone {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        edge: String,
        #[arg(long)]
        code: String,
    },
    /// Overview scatter: cut marks, hexbins and axis domains.
    Scatter {
        #[command(flatten)]
        ctx: ContextArgs,
        #[arg(long, default_value_t = DEFAULT_R)]
        r: f64,
    },
    /// Informative cut with per-member statistics.
    Cut {
        #[command(flatten)]
        ctx: ContextArgs,
        #[arg(long, default_value_t = DEFAULT_R)]
        r: f64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Focus layout of one event type.
    Focus {
        #[command(flatten)]
        ctx: ContextArgs,
        #[arg(long)]
        code: String,
    },
    /// Event table sorted by seq_count, occ_count or correlation.
    Table {
        #[command(flatten)]
        ctx: ContextArgs,
        #[arg(long, default_value = "seq_count")]
        sort: String,
    },
    /// Attribute histograms.
    Attributes {
        #[arg(long)]
        cohort: PathBuf,
    },
    /// Kaplan-Meier curve of the outcome.
    Survival {
        #[arg(long)]
        cohort: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory of dataset snapshots to load.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        cache_size: u64,
        /// Also load the built-in demo datasets.
        #[arg(long)]
        fixtures: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FixtureName {
    UseCase,
    HeartFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Relation {
    AfterFinal,
    AfterFirst,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Dataset snapshot directory.
    #[arg(long)]
    dataset: PathBuf,
    /// JSON query spec; overrides the flags below.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Ordered inclusion codes, comma separated.
    #[arg(long, value_delimiter = ',')]
    inclusion: Vec<String>,
    /// Outcome codes, comma separated.
    #[arg(long, value_delimiter = ',')]
    outcome: Vec<String>,
    #[arg(long, default_value_t = 0)]
    lookback: u32,
    #[arg(long, value_enum, default_value_t = Relation::AfterFinal)]
    relation: Relation,
    /// Attribute filter as JSON, e.g. `{"attribute":"age","op":"ge","value":65}`; repeatable.
    #[arg(long)]
    filter: Vec<String>,
    /// Cohort file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ContextArgs {
    #[arg(long)]
    cohort: PathBuf,
    /// `whole`, a milestone (`M1`) or a time edge (`E1`).
    #[arg(long, default_value = "whole")]
    selection: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilestoneOp {
    pub edge: String,
    pub code: String,
}

/// Replayable cohort definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortFile {
    pub dataset: PathBuf,
    pub query: QuerySpec,
    #[serde(default)]
    pub filters: Vec<AttributeConstraint>,
    #[serde(default)]
    pub milestones: Vec<MilestoneOp>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.to_owned(), source })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("values serialize") + "\n";
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(p).map_err(|source| CliError::Io { path: p.to_owned(), source })
}

impl CohortFile {
    /// Rebuilds the cohort and its timeline.
    pub fn replay(&self) -> Result<Analysis, CliError> {
        let ds = Dataset::load(&self.dataset)?;
        let mut cohort = execute_query(&ds, &self.query)?;
        for f in &self.filters {
            cohort = apply_attribute_filter(&cohort, f)?;
        }
        let mut analysis = Analysis::new(Arc::new(cohort));
        for op in &self.milestones {
            analysis = analysis.add_milestone(&op.edge, &op.code)?;
        }
        Ok(analysis)
    }
}

fn load_context(args: &ContextArgs) -> Result<Analysis, CliError> {
    let mut analysis = read_json::<CohortFile>(&args.cohort)?.replay()?;
    analysis.selection = args.selection.parse().map_err(EngineError::from)?;
    analysis.validate_selection()?;
    Ok(analysis)
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("values serialize");
    writeln!(out, "{text}").map_err(|source| CliError::Io { path: "<stdout>".into(), source })
}

#[derive(Serialize)]
struct QueryOutput {
    cohort: CohortSummary,
    timeline: eventscope_core::timeline::TimelineSummary,
}

fn build_query(args: &QueryArgs) -> Result<QuerySpec, CliError> {
    if let Some(p) = &args.spec {
        return read_json(p);
    }
    let mut constraints = Vec::new();
    for f in &args.filter {
        constraints.push(
            serde_json::from_str(f).map_err(|e| CliError::Usage(format!("bad --filter `{f}`: {e}")))?,
        );
    }
    Ok(QuerySpec {
        inclusion: args.inclusion.clone(),
        attribute_constraints: constraints,
        lookback_days: args.lookback,
        outcome: OutcomeSpec {
            codes: args.outcome.clone(),
            relation: match args.relation {
                Relation::AfterFinal => OutcomeRelation::AfterFinalAnchor,
                Relation::AfterFirst => OutcomeRelation::AfterFirstAnchor,
            },
        },
    })
}

/// Runs one command, writing its output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cache = StatsCache::new(16);
    match cli.command {
        Command::Ingest { id, hierarchy, events, attributes, out: dir } => {
            let ds = ingest(&DatasetManifest {
                dataset_id: id,
                hierarchy: DataSource::Path(hierarchy),
                events: DataSource::Path(events),
                attributes: attributes.map(DataSource::Path),
            })?;
            print_json(out, &ds.save(&dir)?)
        }
        Command::Synth { preset, spec, seed, out: dir } => {
            let mut spec = match (preset, spec) {
                (Some(name), _) => SyntheticSpec::preset(&name).ok_or_else(|| {
                    CliError::Usage(format!("unknown preset `{name}` (expected one of {:?})", SyntheticSpec::PRESETS))
                })?,
                (None, Some(path)) => read_json(&path)?,
                (None, None) => SyntheticSpec::default(),
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            print_json(out, &generate_synthetic(&spec)?.save(&dir)?)
        }
        Command::Fixture { name, out: dir } => {
            let (ds, query) = match name {
                FixtureName::UseCase => (fixtures::use_case()?, fixtures::use_case_query()),
                FixtureName::HeartFailure => (fixtures::heart_failure()?, fixtures::heart_failure_query()),
            };
            let manifest = ds.save(&dir)?;
            write_json(&dir.join("query.json"), &query)?;
            print_json(out, &manifest)
        }
        Command::Query(args) => {
            let file = CohortFile {
                dataset: absolute(&args.dataset)?,
                query: build_query(&args)?,
                filters: Vec::new(),
                milestones: Vec::new(),
            };
            let analysis = file.replay()?;
            write_json(&args.out, &file)?;
            print_json(
                out,
                &QueryOutput { cohort: CohortSummary::of(&analysis.cohort), timeline: analysis.timeline_summary(false) },
            )
        }
        Command::Timeline { cohort, detail } => {
            let analysis = read_json::<CohortFile>(&cohort)?.replay()?;
            print_json(out, &analysis.timeline_summary(detail))
        }
        Command::AddMilestone { cohort, edge, code } => {
            let mut file: CohortFile = read_json(&cohort)?;
            let analysis = file.replay()?.add_milestone(&edge, &code)?;
            file.milestones.push(MilestoneOp { edge, code });
            write_json(&cohort, &file)?;
            print_json(out, &analysis.timeline_summary(false))
        }
        Command::Scatter { ctx, r } => {
            let analysis = load_context(&ctx)?;
            print_json(out, &analysis.scatter(&cache, r, &ScatterParams::default())?)
        }
        Command::Cut { ctx, r, format } => {
            let report = load_context(&ctx)?.cut(&cache, r)?;
            match format {
                Format::Json => print_json(out, &report),
                Format::Csv => {
                    let shown: std::collections::BTreeSet<&str> =
                        report.post_filter.iter().map(String::as_str).collect();
                    let io = |source| CliError::Io { path: "<stdout>".into(), source };
                    writeln!(out, "code,label,shown,seq_count,occ_count,prevalence,chi2,p_value,correlation").map_err(io)?;
                    for s in &report.rows {
                        writeln!(
                            out,
                            "{},{},{},{},{},{},{},{},{}",
                            csv_field(&s.code),
                            csv_field(&s.label),
                            shown.contains(s.code.as_str()),
                            s.seq_count,
                            s.occ_count,
                            s.prevalence,
                            s.chi2,
                            s.p_value,
                            s.correlation
                        )
                        .map_err(io)?;
                    }
                    Ok(())
                }
            }
        }
        Command::Focus { ctx, code } => {
            let analysis = load_context(&ctx)?;
            print_json(out, &analysis.focus(&cache, &code, &FocusParams::default())?)
        }
        Command::Table { ctx, sort } => {
            let sort: SortKey = sort.parse().map_err(CliError::Usage)?;
            print_json(out, &load_context(&ctx)?.event_table(&cache, sort)?)
        }
        Command::Attributes { cohort } => {
            print_json(out, &read_json::<CohortFile>(&cohort)?.replay()?.attributes())
        }
        Command::Survival { cohort } => print_json(out, &read_json::<CohortFile>(&cohort)?.replay()?.survival()?),
        Command::Serve { addr, data_dir, cache_size, fixtures } => {
            let config = ServeConfig { addr, data_dir, cache_size, fixtures };
            let rt = tokio::runtime::Runtime::new().map_err(|source| CliError::Io { path: "<runtime>".into(), source })?;
            Ok(rt.block_on(serve(config))?)
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Selection parsing shared with the HTTP layer, exposed for scripts.
pub fn parse_selection(s: &str) -> Result<Selection, CliError> {
    Ok(s.parse().map_err(EngineError::from)?)
}
