//! End-to-end flows over the store: ingest, dataset materialization,
//! reindexing, quality reports and lineage replay.
//!
//! Lineage written per flow:
//!
//! | flow        | events (config digest)                                              |
//! |-------------|---------------------------------------------------------------------|
//! | ingest      | capture (empty), map (mapping spec), validate (schema or empty), store (empty) |
//! | workflow    | capture (empty), store (empty); the raw bytes are the canonical record |
//! | materialize | clean (cleaning rules), categorize (category rules), materialize (dataset spec) |
//! | reindex     | anonymise (policy, hospital records only), index (empty)            |
//!
//! Ingest stops after the first failing stage, so a rejected document
//! leaves only its raw entry and lineage behind.

mod replay;

pub use replay::{replay, ReplayError, ReplayOutcome};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::capture::{
    apply_mapping, detect_structure, is_binary_magic, parse_delimited, parse_tree, sniff_delimiter, tree_units, CaptureError,
    MappingInput, MappingSpec, RawDocument, SourceFormat, DELIMITED, OPAQUE,
};
use crate::config::{canonical_json_digest_of, Config};
use crate::hospital::{anonymise, PolicyError};
use crate::model::{
    canonical_json, empty_config_digest, Digest, FieldPath, LineageEvent, MetaRecord, RawId, RecordId, Stage,
    StructureClass, SubDomain, Timestamp,
};
use crate::processing::{apply_tags, categorize, CategoryRule, Cleaner, CleaningRule, DatasetSpec, IndexBuilder, InvertedIndex, RuleError};
use crate::quality::{has_errors, summarize, validate, IssueKind, QualityReport, SchemaConstraint, ValidationIssue};
use crate::store::{Store, StoreError};

pub const INDEX_ARTIFACT: &str = "index/index.json";
pub const DATASET_SCHEMA_PREFIX: &str = "dataset/";

/// Store copy of a mapping spec that is not part of the config directory.
pub fn spec_artifact(d: &Digest) -> String {
    format!("specs/{d}.json")
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("unknown schema {0:?}")]
    UnknownSchema(String),
    #[error("no search index; run reindex first")]
    IndexMissing,
    #[error("corrupt artifact {path}: {message}")]
    Artifact { path: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestStatus {
    Stored,
    RawOnly,
    Duplicate,
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub raw_id: RawId,
    pub structure_class: StructureClass,
    pub format: String,
    pub records_produced: u64,
    pub record_ids: Vec<RecordId>,
    pub issues: Vec<ValidationIssue>,
    pub status: IngestStatus,
}

/// Result of [`ingest`]: the report plus the records it wrote.
#[derive(Clone, Debug)]
pub struct Ingested {
    pub report: IngestReport,
    pub stored: Vec<MetaRecord>,
}

fn event(stage: Stage, inputs: Vec<Digest>, outputs: Vec<Digest>, config: Digest, now: Timestamp) -> LineageEvent {
    LineageEvent::new(stage, inputs, outputs, config, now)
}

fn ids(records: &[MetaRecord]) -> Vec<RecordId> {
    records.iter().map(MetaRecord::id).collect()
}

fn capture_issue(unit: Option<usize>, e: CaptureError) -> Vec<ValidationIssue> {
    let prefix = unit.map_or(String::new(), |i| format!("unit {i}: "));
    match e {
        CaptureError::Mapping { missing } => missing
            .into_iter()
            .map(|src| match FieldPath::parse(&src) {
                Ok(p) => ValidationIssue::error(IssueKind::MissingRequired, Some(p), format!("{prefix}missing source {src:?}")),
                Err(_) => ValidationIssue::encoding(format!("{prefix}missing source {src:?}")),
            })
            .collect(),
        CaptureError::Coercion { path, value } => {
            let msg = format!("{prefix}cannot coerce {value:?} at {path:?}");
            vec![match FieldPath::parse(&path) {
                Ok(p) => ValidationIssue::error(IssueKind::WrongKind, Some(p), msg),
                Err(_) => ValidationIssue::encoding(msg),
            }]
        }
        other => vec![ValidationIssue::encoding(format!("{prefix}{other}"))],
    }
}

/// Parses a document and maps every logical unit: one per delimited row,
/// one per tree unit (see [`MappingSpec::record_path`]). All units must map
/// or the whole document fails.
pub fn map_document(
    doc: &RawDocument,
    spec: &MappingSpec,
    class: StructureClass,
    label: &str,
) -> Result<Vec<MetaRecord>, Vec<ValidationIssue>> {
    let mut issues = Vec::new();
    let mut out = Vec::new();
    match (spec.source_format, label) {
        (SourceFormat::Delimited, DELIMITED) => {
            let text = std::str::from_utf8(&doc.bytes).map_err(|e| {
                vec![ValidationIssue::encoding(format!("invalid UTF-8 at byte {}", e.valid_up_to()))]
            })?;
            let text = text.strip_prefix('\u{feff}').unwrap_or(text);
            let delim = sniff_delimiter(text).unwrap_or(',');
            let rows = parse_delimited(&doc.bytes, delim).map_err(|e| capture_issue(None, e))?;
            for (i, row) in rows.iter().enumerate() {
                match apply_mapping(MappingInput::Row(row), spec, doc, class) {
                    Ok(r) => out.push(r),
                    Err(e) => issues.extend(capture_issue(Some(i + 1), e)),
                }
            }
        }
        (SourceFormat::Tree, l) if l != DELIMITED && l != OPAQUE => {
            let root = parse_tree(&doc.bytes, l).map_err(|e| capture_issue(None, e))?;
            for (i, unit) in tree_units(&root, spec.record_path.as_ref()).into_iter().enumerate() {
                match apply_mapping(MappingInput::Tree(unit), spec, doc, class) {
                    Ok(r) => out.push(r),
                    Err(e) => issues.extend(capture_issue(Some(i + 1), e)),
                }
            }
        }
        (fmt, l) => {
            return Err(vec![ValidationIssue::encoding(format!(
                "mapping spec {} expects {} input, document is {l}",
                spec.spec_id,
                match fmt {
                    SourceFormat::Delimited => "delimited",
                    SourceFormat::Tree => "tree",
                }
            ))])
        }
    }
    if issues.is_empty() {
        Ok(out)
    } else {
        Err(issues)
    }
}

/// Validates mapped records against `schema`; no schema, no issues.
pub fn validate_all(
    records: &[MetaRecord],
    schema: Option<&SchemaConstraint>,
) -> Vec<ValidationIssue> {
    let Some(schema) = schema else {
        return Vec::new();
    };
    let multi = records.len() > 1;
    records
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            validate(r, schema).into_iter().map(move |mut issue| {
                if multi {
                    issue.message = format!("unit {}: {}", i + 1, issue.message);
                }
                issue
            })
        })
        .collect()
}

fn schema_digest(schema: Option<&SchemaConstraint>) -> Digest {
    schema.map_or_else(empty_config_digest, SchemaConstraint::digest)
}

/// Unstructured input is fine as text or as a known binary format;
/// anything else is a non-UTF-8 text encoding, which is rejected.
fn acceptable_unstructured(bytes: &[u8]) -> bool {
    std::str::from_utf8(bytes).is_ok() || is_binary_magic(bytes)
}

/// Runs put_raw, detect, parse, map, validate and put_record for one
/// document. Content problems never fail the call; they are reported in
/// the returned [`IngestReport`].
pub fn ingest(
    store: &mut Store,
    config: &Config,
    doc: &RawDocument,
    spec: Option<&MappingSpec>,
    now: Timestamp,
) -> Result<Ingested, StoreError> {
    let (class, label) = detect_structure(&doc.bytes);
    let mut report = IngestReport {
        raw_id: doc.raw_id,
        structure_class: class,
        format: label.to_owned(),
        records_produced: 0,
        record_ids: Vec::new(),
        issues: Vec::new(),
        status: IngestStatus::RawOnly,
    };
    let (raw_id, was_new) = store.put_raw(doc)?;
    if !was_new {
        report.status = IngestStatus::Duplicate;
        return Ok(Ingested { report, stored: Vec::new() });
    }
    let empty = empty_config_digest();
    store.append_lineage(event(Stage::Capture, vec![raw_id], vec![], empty, now))?;
    let done = |report| Ok(Ingested { report, stored: Vec::new() });
    if class == StructureClass::Unstructured {
        if !acceptable_unstructured(&doc.bytes) {
            let bad = std::str::from_utf8(&doc.bytes).err().map_or(0, |e| e.valid_up_to());
            report.issues.push(ValidationIssue::encoding(format!("input is not UTF-8 (invalid byte at {bad})")));
            report.status = IngestStatus::Rejected;
        }
        return done(report);
    }
    let Some(spec) = spec else {
        return done(report);
    };
    let mapped = map_document(doc, spec, class, label);
    let records = match mapped {
        Ok(records) => {
            store.append_lineage(event(Stage::Map, vec![raw_id], ids(&records), spec.digest(), now))?;
            records
        }
        Err(issues) => {
            store.append_lineage(event(Stage::Map, vec![raw_id], vec![], spec.digest(), now))?;
            report.issues = issues;
            report.status = IngestStatus::Rejected;
            return done(report);
        }
    };
    let schema = config.schema(&spec.schema_ref);
    report.issues = validate_all(&records, schema);
    let rejected = has_errors(&report.issues);
    let accepted = if rejected { vec![] } else { ids(&records) };
    store.append_lineage(event(Stage::Validate, ids(&records), accepted, schema_digest(schema), now))?;
    if rejected {
        report.status = IngestStatus::Rejected;
        return done(report);
    }
    let mut stored = Vec::new();
    for r in &records {
        if store.put_record(r)?.1 {
            stored.push(r.clone());
        }
    }
    store.append_lineage(event(Stage::Store, vec![raw_id], ids(&records), empty, now))?;
    report.records_produced = records.len() as u64;
    report.record_ids = ids(&records);
    report.status = IngestStatus::Stored;
    Ok(Ingested { report, stored })
}

/// Persists a record produced by a workflow: its canonical bytes go to the
/// raw zone first, so replay can restore it from there.
pub fn store_via_raw(store: &mut Store, record: &MetaRecord, now: Timestamp) -> Result<bool, StoreError> {
    let doc = RawDocument::new(record.canonical_bytes(), None, now, record.source().provider.clone());
    let (raw_id, raw_new) = store.put_raw(&doc)?;
    let empty = empty_config_digest();
    if raw_new {
        store.append_lineage(event(Stage::Capture, vec![raw_id], vec![], empty, now))?;
    }
    let (_, new) = store.put_record(record)?;
    if new {
        store.append_lineage(event(Stage::Store, vec![raw_id], vec![record.id()], empty, now))?;
    }
    Ok(new)
}

pub fn is_dataset_record(r: &MetaRecord) -> bool {
    r.schema_ref().is_some_and(|s| s.starts_with(DATASET_SCHEMA_PREFIX))
}

/// Records a dataset filter considers: everything but dataset outputs.
pub fn dataset_sources<'a>(store: &'a Store, spec: &'a DatasetSpec) -> impl Iterator<Item = &'a MetaRecord> + 'a {
    store.scan(&spec.filter).filter(|r| !is_dataset_record(r))
}

/// Relabels a processed record as a member of `dataset_id`.
pub fn as_dataset_member(record: &MetaRecord, dataset_id: &str) -> Result<MetaRecord, RuleError> {
    let mut draft = record.draft().clone();
    draft.schema_ref = Some(format!("{DATASET_SCHEMA_PREFIX}{dataset_id}"));
    draft.seal().map_err(|e| RuleError::new("dataset", e.to_string()))
}

/// The three processing steps of materialization, as produced in order.
#[derive(Clone, Debug)]
pub struct Processed {
    pub cleaned: Vec<MetaRecord>,
    pub tagged: Vec<MetaRecord>,
    pub members: Vec<MetaRecord>,
}

pub fn process<'a>(
    sources: impl IntoIterator<Item = &'a MetaRecord>,
    cleaning: &[CleaningRule],
    categories: &[CategoryRule],
    dataset_id: &str,
) -> Result<Processed, RuleError> {
    let cleaner = Cleaner::new(cleaning)?;
    let mut p = Processed {
        cleaned: Vec::new(),
        tagged: Vec::new(),
        members: Vec::new(),
    };
    for r in sources {
        let (c, _log) = cleaner.clean(r)?;
        let tags = categorize(&c, categories)?;
        let t = apply_tags(&c, &tags)?;
        p.members.push(as_dataset_member(&t, dataset_id)?);
        p.cleaned.push(c);
        p.tagged.push(t);
    }
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub spec_digest: Digest,
    pub result_id: Digest,
    /// Sorted, without duplicates.
    pub members: Vec<RecordId>,
}

impl DatasetManifest {
    pub fn new(dataset_id: &str, spec_digest: Digest, members: &[MetaRecord]) -> Self {
        let members: Vec<RecordId> = members.iter().map(MetaRecord::id).collect::<BTreeSet<_>>().into_iter().collect();
        #[derive(Serialize)]
        struct Key<'a> {
            spec_digest: Digest,
            members: &'a [RecordId],
        }
        let result_id = Digest::of(&canonical_json(&Key {
            spec_digest,
            members: &members,
        }));
        DatasetManifest {
            dataset_id: dataset_id.to_owned(),
            spec_digest,
            result_id,
            members,
        }
    }
}

fn manifest_path(dataset_id: &str) -> String {
    format!("datasets/{dataset_id}.json")
}

pub fn load_manifest(store: &Store, dataset_id: &str) -> Result<DatasetManifest, PipelineError> {
    if DatasetSpec::check_id(dataset_id).is_err() {
        return Err(PipelineError::UnknownDataset(dataset_id.to_owned()));
    }
    let path = manifest_path(dataset_id);
    let bytes = store
        .read_artifact(&path)?
        .ok_or_else(|| PipelineError::UnknownDataset(dataset_id.to_owned()))?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::Artifact {
        path,
        message: e.to_string(),
    })
}

/// Records of a materialized dataset, in manifest order.
pub fn dataset_members<'a>(store: &'a Store, dataset_id: &str) -> Result<Vec<&'a MetaRecord>, PipelineError> {
    let manifest = load_manifest(store, dataset_id)?;
    manifest
        .members
        .iter()
        .map(|id| {
            store.record(id).ok_or_else(|| PipelineError::Artifact {
                path: manifest_path(dataset_id),
                message: format!("member {id} missing from the typed zone"),
            })
        })
        .collect()
}

/// Filters, cleans and categorizes into dataset `dataset_id`.
pub fn materialize(store: &mut Store, config: &Config, dataset_id: &str, now: Timestamp) -> Result<DatasetManifest, PipelineError> {
    let spec = config
        .dataset(dataset_id)
        .ok_or_else(|| PipelineError::UnknownDataset(dataset_id.to_owned()))?;
    let cleaning = config.cleaning_bundle(spec)?;
    let categories = config.category_bundle(spec)?;
    let sources: Vec<MetaRecord> = dataset_sources(store, spec).cloned().collect();
    let p = process(&sources, &cleaning, &categories, dataset_id)?;
    store.append_lineage(event(Stage::Clean, ids(&sources), ids(&p.cleaned), canonical_json_digest_of(&cleaning), now))?;
    store.append_lineage(event(Stage::Categorize, ids(&p.cleaned), ids(&p.tagged), canonical_json_digest_of(&categories), now))?;
    for m in &p.members {
        store.put_record(m)?;
    }
    store.append_lineage(event(Stage::Materialize, ids(&p.tagged), ids(&p.members), spec.digest(), now))?;
    let manifest = DatasetManifest::new(dataset_id, spec.digest(), &p.members);
    store.write_artifact(&manifest_path(dataset_id), &canonical_json(&manifest))?;
    Ok(manifest)
}

/// Quality report over a materialized dataset, against the dataset's
/// `quality_schema` (no constraints when it names none).
pub fn quality_report(store: &Store, config: &Config, dataset_id: &str) -> Result<QualityReport, PipelineError> {
    let members = dataset_members(store, dataset_id)?;
    let empty;
    let schema = match config.dataset(dataset_id).and_then(|s| s.quality_schema.as_deref()) {
        Some(name) => config.schema(name).ok_or_else(|| PipelineError::UnknownSchema(name.to_owned()))?,
        None => {
            empty = SchemaConstraint {
                schema_ref: String::new(),
                required_paths: vec![],
                range_checks: vec![],
                cross_field_checks: vec![],
            };
            &empty
        }
    };
    Ok(summarize(dataset_id, members, schema))
}

const BOOKKEEPING: [&str; 5] = ["hospital/user", "hospital/form", "hospital/assignment", "hospital/subscription", "hospital/alert"];

/// Search covers collected data: not dataset copies, not workflow
/// bookkeeping.
pub fn is_indexable(r: &MetaRecord) -> bool {
    !is_dataset_record(r) && !(r.sub_domain() == SubDomain::Hospital && r.schema_ref().is_some_and(|s| BOOKKEEPING.contains(&s)))
}

/// Latest version of each workflow entity; other records pass through.
fn current_versions<'a>(records: impl Iterator<Item = &'a MetaRecord>) -> Vec<&'a MetaRecord> {
    use std::collections::HashMap;
    let mut latest: HashMap<(String, String), (i64, usize)> = HashMap::new();
    let records: Vec<&MetaRecord> = records.collect();
    let mut keep = vec![true; records.len()];
    for (i, r) in records.iter().enumerate() {
        let (Some(schema), Some(id), Some(v)) = (
            r.schema_ref(),
            r.text("entity_id"),
            r.fields().get("version").and_then(|v| v.as_i64()),
        ) else {
            continue;
        };
        if r.sub_domain() != SubDomain::Hospital {
            continue;
        }
        let key = (schema.to_owned(), id.to_owned());
        match latest.get(&key) {
            Some(&(best, _)) if best >= v => keep[i] = false,
            Some(&(_, j)) => {
                keep[j] = false;
                latest.insert(key, (v, i));
            }
            None => {
                latest.insert(key, (v, i));
            }
        }
    }
    records.into_iter().zip(keep).filter_map(|(r, k)| k.then_some(r)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSummary {
    pub doc_count: u64,
    pub term_count: u64,
    pub built_at_snapshot: Digest,
    /// Hospital records left out because no pseudonym key was set.
    pub skipped_hospital: u64,
}

/// Rebuilds the search index and swaps it in atomically. Hospital records
/// are indexed only in anonymised form, and only when `key` is set.
pub fn reindex(
    store: &mut Store,
    config: &Config,
    key: Option<&[u8]>,
    now: Timestamp,
) -> Result<IndexSummary, PipelineError> {
    let candidates = current_versions(store.records().iter().filter(|r| is_indexable(r)));
    let mut builder = IndexBuilder::default();
    let (mut hospital_in, mut hospital_out, mut indexed) = (Vec::new(), Vec::new(), Vec::new());
    let mut skipped = 0;
    for r in candidates {
        if r.sub_domain() == SubDomain::Hospital {
            let Some(key) = key else {
                skipped += 1;
                continue;
            };
            let anon = anonymise(r, &config.policy, key)?;
            builder.add(r.id(), anon.fields());
            hospital_in.push(r.id());
            hospital_out.push(anon.id());
        } else {
            builder.add(r.id(), r.fields());
        }
        indexed.push(r.id());
    }
    let index = builder.finish(store.snapshot_id());
    if !hospital_in.is_empty() {
        store.append_lineage(event(Stage::Anonymise, hospital_in, hospital_out, config.policy.digest(), now))?;
    }
    store.append_lineage(event(Stage::Index, indexed, vec![], empty_config_digest(), now))?;
    store.write_artifact(INDEX_ARTIFACT, &canonical_json(&index))?;
    Ok(IndexSummary {
        doc_count: index.doc_count,
        term_count: index.postings.len() as u64,
        built_at_snapshot: index.built_at_snapshot,
        skipped_hospital: skipped,
    })
}

pub fn load_index(store: &Store) -> Result<InvertedIndex, PipelineError> {
    let bytes = store.read_artifact(INDEX_ARTIFACT)?.ok_or(PipelineError::IndexMissing)?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::Artifact {
        path: INDEX_ARTIFACT.into(),
        message: e.to_string(),
    })
}
