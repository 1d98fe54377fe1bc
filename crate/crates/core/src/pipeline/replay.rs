//! Lineage replay into a scratch store.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::capture::{detect_structure, MappingSpec};
use crate::config::Config;
use crate::hospital::anonymise;
use crate::model::{canonical_parse, Digest, LineageEvent, MetaRecord, RecordId, Stage};
use crate::processing::Cleaner;
use crate::quality::has_errors;
use crate::store::{Store, StoreError};

use super::{as_dataset_member, map_document, validate_all};
use crate::processing::{apply_tags, categorize};

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("replay failed at event {seq} ({stage}): {reason}")]
    Event { seq: u64, stage: Stage, reason: String },
    #[error("reconstructed typed zone differs: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub events: u64,
    pub records: u64,
    pub segments: u64,
    pub identical: bool,
}

struct Replayer<'a> {
    source: &'a Store,
    config: &'a Config,
    key: Option<&'a [u8]>,
    target: Store,
    pending: HashMap<RecordId, MetaRecord>,
}

type Step = Result<(), String>;

fn same_ids(expected: &[Digest], got: impl IntoIterator<Item = Digest>) -> Step {
    let got: Vec<Digest> = got.into_iter().collect();
    if got == expected {
        Ok(())
    } else {
        Err(format!("re-execution produced {} outputs that differ from the {} logged", got.len(), expected.len()))
    }
}

fn unresolved(what: &str, d: &Digest) -> String {
    format!("config digest mismatch: no {what} with digest {d}")
}

impl Replayer<'_> {
    /// A spec loaded from outside the config directory, kept by the store.
    fn kept_spec(&self, cd: &Digest) -> Result<MappingSpec, String> {
        let bytes = self.source.read_artifact(&super::spec_artifact(cd)).map_err(|e| e.to_string())?;
        let spec: MappingSpec = bytes
            .and_then(|b| crate::config::parse_canonical(&b).ok())
            .ok_or_else(|| unresolved("mapping spec", cd))?;
        if spec.digest() != *cd {
            return Err(unresolved("mapping spec", cd));
        }
        Ok(spec)
    }

    fn pending(&self, id: &RecordId) -> Result<&MetaRecord, String> {
        self.pending.get(id).ok_or_else(|| format!("input {id} was not produced by an earlier event"))
    }

    fn stored(&self, id: &RecordId) -> Result<&MetaRecord, String> {
        self.target.record(id).ok_or_else(|| format!("input record {id} is not in the reconstructed zone"))
    }

    fn step(&mut self, ev: &LineageEvent) -> Step {
        let cd = &ev.config_digest;
        match ev.stage {
            Stage::Capture => {
                for id in &ev.input_ids {
                    let doc = self.source.get_raw(id).map_err(|e| e.to_string())?;
                    let doc = doc.ok_or_else(|| format!("raw input {id} missing"))?;
                    self.target.put_raw(&doc).map_err(|e| e.to_string())?;
                }
                Ok(())
            }
            Stage::Map => {
                let spec = match self.config.mapping_by_digest(cd) {
                    Some(s) => s.clone(),
                    None => self.kept_spec(cd)?,
                };
                let [raw] = ev.input_ids.as_slice() else {
                    return Err("map event must have exactly one raw input".into());
                };
                let doc = self.source.get_raw(raw).map_err(|e| e.to_string())?;
                let doc = doc.ok_or_else(|| format!("raw input {raw} missing"))?;
                let (class, label) = detect_structure(&doc.bytes);
                let records = map_document(&doc, &spec, class, label).unwrap_or_default();
                same_ids(&ev.output_ids, records.iter().map(MetaRecord::id))?;
                for r in records {
                    self.pending.insert(r.id(), r);
                }
                Ok(())
            }
            Stage::Validate => {
                let schema = self.config.schema_by_digest(cd).ok_or_else(|| unresolved("schema", cd))?;
                let inputs: Vec<MetaRecord> = ev.input_ids.iter().map(|id| self.pending(id).cloned()).collect::<Result<_, _>>()?;
                let issues = validate_all(&inputs, schema);
                let accepted = if has_errors(&issues) { vec![] } else { ev.input_ids.clone() };
                same_ids(&ev.output_ids, accepted)
            }
            Stage::Store => {
                for id in &ev.output_ids {
                    let record = match self.pending.get(id) {
                        Some(r) => r.clone(),
                        None => self.remap_raw(&ev.input_ids, id)?,
                    };
                    self.target.put_record(&record).map_err(|e| e.to_string())?;
                }
                Ok(())
            }
            Stage::Clean => {
                let rules = self.config.cleaning_by_digest(cd).ok_or_else(|| unresolved("cleaning rule set", cd))?;
                let cleaner = Cleaner::new(&rules).map_err(|e| e.to_string())?;
                let mut out = Vec::new();
                for id in &ev.input_ids {
                    let (c, _) = cleaner.clean(self.stored(id)?).map_err(|e| e.to_string())?;
                    out.push(c);
                }
                self.settle(&ev.output_ids, out)
            }
            Stage::Categorize => {
                let rules = self.config.categories_by_digest(cd).ok_or_else(|| unresolved("category rule set", cd))?;
                let mut out = Vec::new();
                for id in &ev.input_ids {
                    let r = self.pending(id)?;
                    let tags = categorize(r, &rules).map_err(|e| e.to_string())?;
                    out.push(apply_tags(r, &tags).map_err(|e| e.to_string())?);
                }
                self.settle(&ev.output_ids, out)
            }
            Stage::Materialize => {
                let spec = self.config.dataset_by_digest(cd).ok_or_else(|| unresolved("dataset spec", cd))?;
                let mut out = Vec::new();
                for id in &ev.input_ids {
                    out.push(as_dataset_member(self.pending(id)?, &spec.dataset_id).map_err(|e| e.to_string())?);
                }
                same_ids(&ev.output_ids, out.iter().map(MetaRecord::id))?;
                for r in &out {
                    self.target.put_record(r).map_err(|e| e.to_string())?;
                }
                Ok(())
            }
            Stage::Anonymise => {
                if *cd != self.config.policy.digest() {
                    return Err(unresolved("anonymisation policy", cd));
                }
                let mut out = Vec::new();
                for id in &ev.input_ids {
                    let r = self.stored(id)?;
                    if let Some(key) = self.key {
                        out.push(anonymise(r, &self.config.policy, key).map_err(|e| e.to_string())?.id());
                    }
                }
                if self.key.is_some() {
                    same_ids(&ev.output_ids, out)?;
                }
                Ok(())
            }
            Stage::Index => {
                for id in &ev.input_ids {
                    self.stored(id)?;
                }
                Ok(())
            }
        }
    }

    fn settle(&mut self, expected: &[Digest], out: Vec<MetaRecord>) -> Step {
        same_ids(expected, out.iter().map(MetaRecord::id))?;
        for r in out {
            self.pending.insert(r.id(), r);
        }
        Ok(())
    }

    /// Workflow records travel through the raw zone as canonical bytes.
    fn remap_raw(&self, inputs: &[Digest], id: &RecordId) -> Result<MetaRecord, String> {
        for raw in inputs {
            if let Some(doc) = self.source.get_raw(raw).map_err(|e| e.to_string())? {
                if let Ok(r) = canonical_parse(&doc.bytes) {
                    if r.id() == *id {
                        return Ok(r);
                    }
                }
            }
        }
        Err(format!("output {id} cannot be reconstructed from its inputs"))
    }
}

fn segments(store: &Store) -> Result<Vec<(String, Vec<u8>)>, StoreError> {
    store
        .segment_files()?
        .into_iter()
        .map(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            fs::read(&p)
                .map(|b| (name, b))
                .map_err(|source| StoreError::Io { path: p, source })
        })
        .collect()
}

/// Re-executes `source`'s lineage in seq order into a fresh store at
/// `scratch` using configs resolved by digest, then compares the typed
/// zone segment files byte for byte.
///
/// Without a pseudonym key, anonymise events are checked for inputs and
/// policy digest only.
pub fn replay(source: &Store, config: &Config, scratch: &Path, key: Option<&[u8]>) -> Result<ReplayOutcome, ReplayError> {
    let mut r = Replayer {
        source,
        config,
        key,
        target: Store::open(scratch)?,
        pending: HashMap::new(),
    };
    let events = source.read_lineage()?;
    for ev in &events {
        r.step(ev).map_err(|reason| ReplayError::Event {
            seq: ev.seq,
            stage: ev.stage,
            reason,
        })?;
    }
    let (want, got) = (segments(source)?, segments(&r.target)?);
    if want.len() != got.len() {
        return Err(ReplayError::Mismatch(format!("{} segment files, reconstructed {}", want.len(), got.len())));
    }
    for ((wn, wb), (gn, gb)) in want.iter().zip(&got) {
        if wn != gn {
            return Err(ReplayError::Mismatch(format!("segment {wn} reconstructed as {gn}")));
        }
        if wb != gb {
            let at = wb.iter().zip(gb).position(|(a, b)| a != b).unwrap_or(wb.len().min(gb.len()));
            return Err(ReplayError::Mismatch(format!("{wn} differs at byte {at}")));
        }
    }
    Ok(ReplayOutcome {
        events: events.len() as u64,
        records: r.target.records().len() as u64,
        segments: got.len() as u64,
        identical: true,
    })
}
