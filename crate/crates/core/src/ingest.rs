//! Dataset ingestion and on-disk snapshots.
//!
//! Input files are UTF-8 CSV with a header row:
//!
//! * hierarchy: `code,parent,label` (empty parent marks a top-level code)
//! * events: `entity_id,type_code,timestamp` (ISO-8601 date; time parts are
//!   truncated to the day)
//! * attributes (optional): `entity_id` followed by one column per attribute
//!
//! A snapshot directory holds one file per field so reloading does not need
//! to re-parse or re-validate text:
//!
//! ```text
//! manifest.json       dataset id, row counts, ingest timestamp
//! hierarchy.csv       code,parent,label in preorder
//! entities.csv        entity ids in cohort order
//! events.offsets.bin  u64 LE, entities + 1 offsets into the event columns
//! events.node.bin     u32 LE hierarchy preorder index
//! events.date.bin     i32 LE days since 0001-01-01
//! attributes.json     column per attribute, aligned to entities.csv
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{Datelike, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AttributeValue, EntitySequence, Event, HierarchyEdge, ModelError, NodeId, TypeHierarchy};

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}: parse error at line {line}: {message}")]
    Parse { file: String, line: u64, message: String },
    #[error("unknown event type code `{code}` at events line {line}")]
    UnknownTypeCode { code: String, line: u64 },
    #[error("dataset contains no events")]
    EmptyDataset,
    #[error("invalid hierarchy: {0}")]
    Hierarchy(#[from] ModelError),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("corrupt snapshot: {0}")]
    Snapshot(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io { path: path.to_owned(), source }
}

/// Where a table comes from: a file on disk or an embedded payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Path(PathBuf),
    Inline(String),
}

impl DataSource {
    fn read(&self) -> Result<String, IngestError> {
        match self {
            DataSource::Inline(s) => Ok(s.clone()),
            DataSource::Path(p) => {
                let mut s = String::new();
                fs::File::open(p)
                    .and_then(|mut f| f.read_to_string(&mut s))
                    .map_err(io_err(p))?;
                Ok(s)
            }
        }
    }
}

/// Ingest request, as accepted by `POST /datasets` and built by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub hierarchy: DataSource,
    pub events: DataSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<DataSource>,
}

/// Summary written next to a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub format_version: u32,
    pub dataset_id: String,
    pub entities: usize,
    pub events: usize,
    pub event_types: usize,
    pub attributes: Vec<String>,
    pub ingested_at: String,
    /// Attribute rows dropped because the entity had no events.
    pub dropped_entities: usize,
}

/// An immutable, validated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub id: String,
    pub hierarchy: Arc<TypeHierarchy>,
    /// Sorted by entity id; every entity has at least one event.
    pub entities: Vec<EntitySequence>,
    pub attribute_names: BTreeSet<String>,
    pub ingested_at: String,
    pub dropped_entities: usize,
}

impl Dataset {
    /// Assembles a dataset from already-resolved sequences. Events are
    /// sorted, entities ordered by id, and entities without events dropped.
    pub fn from_sequences(
        id: impl Into<String>,
        hierarchy: Arc<TypeHierarchy>,
        sequences: impl IntoIterator<Item = EntitySequence>,
    ) -> Result<Self, IngestError> {
        let mut dropped = 0;
        let mut by_id: BTreeMap<String, EntitySequence> = BTreeMap::new();
        for mut s in sequences {
            if s.events.is_empty() {
                dropped += 1;
                continue;
            }
            s.events.sort_unstable();
            match by_id.get_mut(&s.id) {
                Some(existing) => {
                    existing.events.extend(s.events);
                    existing.events.sort_unstable();
                    existing.attributes.extend(s.attributes);
                }
                None => {
                    by_id.insert(s.id.clone(), s);
                }
            }
        }
        if by_id.is_empty() {
            return Err(IngestError::EmptyDataset);
        }
        let entities: Vec<EntitySequence> = by_id.into_values().collect();
        let attribute_names = entities
            .iter()
            .flat_map(|e| e.attributes.keys().cloned())
            .collect();
        Ok(Dataset {
            id: id.into(),
            hierarchy,
            entities,
            attribute_names,
            ingested_at: Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            dropped_entities: dropped,
        })
    }

    pub fn n_events(&self) -> usize {
        self.entities.iter().map(|e| e.events.len()).sum()
    }

    /// Number of distinct hierarchy nodes that occur as raw event codes.
    pub fn distinct_event_codes(&self) -> usize {
        let mut seen = vec![false; self.hierarchy.len()];
        for e in self.entities.iter().flat_map(|s| &s.events) {
            seen[e.node.index()] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }

    pub fn manifest(&self) -> SnapshotManifest {
        SnapshotManifest {
            format_version: SNAPSHOT_FORMAT_VERSION,
            dataset_id: self.id.clone(),
            entities: self.entities.len(),
            events: self.n_events(),
            event_types: self.hierarchy.len(),
            attributes: self.attribute_names.iter().cloned().collect(),
            ingested_at: self.ingested_at.clone(),
            dropped_entities: self.dropped_entities,
        }
    }

    /// Writes a self-contained snapshot into `dir` (created if missing).
    pub fn save(&self, dir: &Path) -> Result<SnapshotManifest, IngestError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let manifest = self.manifest();

        write_file(&dir.join("manifest.json"), &pretty_json(&manifest)?)?;

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["code", "parent", "label"]).map_err(csv_write)?;
        for e in self.hierarchy.edges() {
            w.write_record([e.code.as_str(), e.parent.as_deref().unwrap_or(""), e.label.as_str()])
                .map_err(csv_write)?;
        }
        write_file(&dir.join("hierarchy.csv"), &w.into_inner().map_err(|e| csv_write(e.into_error().into()))?)?;

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["entity_id"]).map_err(csv_write)?;
        for e in &self.entities {
            w.write_record([e.id.as_str()]).map_err(csv_write)?;
        }
        write_file(&dir.join("entities.csv"), &w.into_inner().map_err(|e| csv_write(e.into_error().into()))?)?;

        let n_events = manifest.events;
        let mut offsets = Vec::with_capacity((self.entities.len() + 1) * 8);
        let mut nodes = Vec::with_capacity(n_events * 4);
        let mut dates = Vec::with_capacity(n_events * 4);
        let mut off = 0u64;
        offsets.extend_from_slice(&off.to_le_bytes());
        for e in &self.entities {
            for ev in &e.events {
                nodes.extend_from_slice(&ev.node.0.to_le_bytes());
                dates.extend_from_slice(&ev.date.num_days_from_ce().to_le_bytes());
            }
            off += e.events.len() as u64;
            offsets.extend_from_slice(&off.to_le_bytes());
        }
        write_file(&dir.join("events.offsets.bin"), &offsets)?;
        write_file(&dir.join("events.node.bin"), &nodes)?;
        write_file(&dir.join("events.date.bin"), &dates)?;

        let mut columns: BTreeMap<&str, Vec<Option<&AttributeValue>>> = BTreeMap::new();
        for name in &self.attribute_names {
            columns.insert(
                name.as_str(),
                self.entities.iter().map(|e| e.attributes.get(name)).collect(),
            );
        }
        write_file(&dir.join("attributes.json"), &pretty_json(&columns)?)?;
        Ok(manifest)
    }

    /// Loads a snapshot written by [`Dataset::save`].
    pub fn load(dir: &Path) -> Result<Self, IngestError> {
        let manifest: SnapshotManifest = read_json(&dir.join("manifest.json"))?;
        if manifest.format_version != SNAPSHOT_FORMAT_VERSION {
            return Err(IngestError::Snapshot(format!(
                "unsupported format version {}",
                manifest.format_version
            )));
        }
        let hierarchy_text = DataSource::Path(dir.join("hierarchy.csv")).read()?;
        let hierarchy = parse_hierarchy(&hierarchy_text)?;

        let ids_text = DataSource::Path(dir.join("entities.csv")).read()?;
        let mut ids = Vec::with_capacity(manifest.entities);
        for rec in csv::Reader::from_reader(ids_text.as_bytes()).records() {
            let rec = rec.map_err(|e| IngestError::Snapshot(e.to_string()))?;
            ids.push(rec.get(0).unwrap_or_default().to_owned());
        }

        let offsets = read_le::<8>(&dir.join("events.offsets.bin"))?
            .into_iter()
            .map(u64::from_le_bytes)
            .collect::<Vec<_>>();
        let nodes = read_le::<4>(&dir.join("events.node.bin"))?;
        let dates = read_le::<4>(&dir.join("events.date.bin"))?;
        if offsets.len() != ids.len() + 1
            || nodes.len() != dates.len()
            || offsets.last().copied() != Some(nodes.len() as u64)
            || ids.len() != manifest.entities
        {
            return Err(IngestError::Snapshot("event columns do not line up".into()));
        }

        let columns: BTreeMap<String, Vec<Option<AttributeValue>>> =
            read_json(&dir.join("attributes.json"))?;
        for (name, col) in &columns {
            if col.len() != ids.len() {
                return Err(IngestError::Snapshot(format!("attribute column `{name}` has wrong length")));
            }
        }

        let mut entities = Vec::with_capacity(ids.len());
        for (i, id) in ids.into_iter().enumerate() {
            let range = offsets[i] as usize..offsets[i + 1] as usize;
            let mut events = Vec::with_capacity(range.len());
            for k in range {
                let node = u32::from_le_bytes(nodes[k]);
                if node as usize >= hierarchy.len() {
                    return Err(IngestError::Snapshot(format!("node index {node} out of range")));
                }
                let days = i32::from_le_bytes(dates[k]);
                let date = NaiveDate::from_num_days_from_ce_opt(days)
                    .ok_or_else(|| IngestError::Snapshot(format!("bad day number {days}")))?;
                events.push(Event { date, node: NodeId(node) });
            }
            let attributes = columns
                .iter()
                .filter_map(|(name, col)| col[i].clone().map(|v| (name.clone(), v)))
                .collect();
            entities.push(EntitySequence { id, attributes, events });
        }

        Ok(Dataset {
            id: manifest.dataset_id,
            hierarchy: Arc::new(hierarchy),
            entities,
            attribute_names: manifest.attributes.into_iter().collect(),
            ingested_at: manifest.ingested_at,
            dropped_entities: manifest.dropped_entities,
        })
    }

    /// Renders the dataset back into the three ingest tables.
    pub fn to_tables(&self) -> (String, String, String) {
        let mut hw = csv::Writer::from_writer(Vec::new());
        hw.write_record(["code", "parent", "label"]).expect("in-memory write");
        for e in self.hierarchy.edges() {
            hw.write_record([e.code.as_str(), e.parent.as_deref().unwrap_or(""), e.label.as_str()])
                .expect("in-memory write");
        }
        let mut ew = csv::Writer::from_writer(Vec::new());
        ew.write_record(["entity_id", "type_code", "timestamp"]).expect("in-memory write");
        for s in &self.entities {
            for ev in &s.events {
                let date = ev.date.format("%Y-%m-%d").to_string();
                ew.write_record([s.id.as_str(), self.hierarchy.code(ev.node), date.as_str()])
                    .expect("in-memory write");
            }
        }
        let mut aw = csv::Writer::from_writer(Vec::new());
        let names: Vec<&String> = self.attribute_names.iter().collect();
        let mut header = vec!["entity_id".to_owned()];
        header.extend(names.iter().map(|s| s.to_string()));
        aw.write_record(&header).expect("in-memory write");
        for s in &self.entities {
            let mut row = vec![s.id.clone()];
            row.extend(
                names
                    .iter()
                    .map(|n| s.attributes.get(*n).map(|v| v.to_string()).unwrap_or_default()),
            );
            aw.write_record(&row).expect("in-memory write");
        }
        let done = |w: csv::Writer<Vec<u8>>| String::from_utf8(w.into_inner().expect("flush")).expect("utf8");
        (done(hw), done(ew), done(aw))
    }
}

/// Parses and validates the tables named in `manifest`.
pub fn ingest(manifest: &DatasetManifest) -> Result<Dataset, IngestError> {
    let hierarchy = Arc::new(parse_hierarchy(&manifest.hierarchy.read()?)?);
    let events_text = manifest.events.read()?;
    let attrs_text = manifest.attributes.as_ref().map(DataSource::read).transpose()?;
    ingest_tables(&manifest.dataset_id, hierarchy, &events_text, attrs_text.as_deref())
}

/// Parses an events table (and optional attributes table) against a
/// hierarchy.
pub fn ingest_tables(
    dataset_id: &str,
    hierarchy: Arc<TypeHierarchy>,
    events_csv: &str,
    attributes_csv: Option<&str>,
) -> Result<Dataset, IngestError> {
    let mut seqs: BTreeMap<String, EntitySequence> = BTreeMap::new();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(events_csv.as_bytes());
    expect_headers(&mut rdr, "events", &["entity_id", "type_code", "timestamp"])?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_parse("events", e))?;
        let line = line_of(&rec);
        if rec.len() < 3 {
            return Err(IngestError::Parse {
                file: "events".into(),
                line,
                message: format!("expected 3 columns, found {}", rec.len()),
            });
        }
        let code = &rec[1];
        let node = hierarchy.id(code).ok_or_else(|| IngestError::UnknownTypeCode {
            code: code.to_owned(),
            line,
        })?;
        let date = parse_day(&rec[2]).ok_or_else(|| IngestError::Parse {
            file: "events".into(),
            line,
            message: format!("bad timestamp `{}`", &rec[2]),
        })?;
        seqs.entry(rec[0].to_owned())
            .or_insert_with(|| EntitySequence {
                id: rec[0].to_owned(),
                attributes: BTreeMap::new(),
                events: Vec::new(),
            })
            .events
            .push(Event { date, node });
    }

    let mut dropped = 0;
    let mut names = BTreeSet::new();
    if let Some(text) = attributes_csv {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| csv_parse("attributes", e))?.clone();
        if headers.get(0) != Some("entity_id") {
            return Err(IngestError::Parse {
                file: "attributes".into(),
                line: 1,
                message: "first column must be `entity_id`".into(),
            });
        }
        names.extend(headers.iter().skip(1).map(str::to_owned));
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_parse("attributes", e))?;
            let Some(seq) = seqs.get_mut(&rec[0]) else {
                dropped += 1;
                continue;
            };
            for (name, raw) in headers.iter().zip(rec.iter()).skip(1) {
                if !raw.is_empty() {
                    seq.attributes.insert(name.to_owned(), AttributeValue::parse(raw));
                }
            }
        }
    }

    let mut ds = Dataset::from_sequences(dataset_id, hierarchy, seqs.into_values())?;
    ds.attribute_names.extend(names);
    ds.dropped_entities += dropped;
    Ok(ds)
}

/// Parses a `code,parent,label` table. Several top-level codes are gathered
/// under a synthetic root.
pub fn parse_hierarchy(text: &str) -> Result<TypeHierarchy, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    expect_headers(&mut rdr, "hierarchy", &["code", "parent"])?;
    let mut edges = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_parse("hierarchy", e))?;
        if rec.len() < 2 || rec[0].is_empty() {
            return Err(IngestError::Parse {
                file: "hierarchy".into(),
                line: line_of(&rec),
                message: "missing code".into(),
            });
        }
        let label = rec.get(2).unwrap_or_default();
        edges.push(HierarchyEdge::new(&rec[0], Some(&rec[1]), label));
    }
    Ok(TypeHierarchy::build_rooted(edges)?)
}

/// Accepts `YYYY-MM-DD` optionally followed by a time part (`T...` or
/// ` ...`), which is discarded.
pub fn parse_day(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    let head = match raw.get(10..11) {
        Some("T") | Some(" ") => &raw[..10],
        Some(_) => return None,
        None => raw,
    };
    NaiveDate::parse_from_str(head, "%Y-%m-%d").ok()
}

fn expect_headers(
    rdr: &mut csv::Reader<&[u8]>,
    file: &str,
    expected: &[&str],
) -> Result<(), IngestError> {
    let headers = rdr.headers().map_err(|e| csv_parse(file, e))?;
    let ok = expected
        .iter()
        .enumerate()
        .all(|(i, name)| headers.get(i) == Some(*name));
    if ok {
        Ok(())
    } else {
        Err(IngestError::Parse {
            file: file.into(),
            line: 1,
            message: format!("expected header starting with {}", expected.join(",")),
        })
    }
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn csv_parse(file: &str, e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    IngestError::Parse { file: file.into(), line, message: e.to_string() }
}

fn csv_write(e: csv::Error) -> IngestError {
    IngestError::Snapshot(e.to_string())
}

fn pretty_json<T: Serialize>(value: &T) -> Result<Vec<u8>, IngestError> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| IngestError::Snapshot(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IngestError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| IngestError::Snapshot(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IngestError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn read_le<const W: usize>(path: &Path) -> Result<Vec<[u8; W]>, IngestError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() % W != 0 {
        return Err(IngestError::Snapshot(format!("{} has a truncated record", path.display())));
    }
    Ok(bytes
        .chunks_exact(W)
        .map(|c| c.try_into().expect("exact chunk"))
        .collect())
}
