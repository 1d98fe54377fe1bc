//! The platform facade: one store, one config, a clock and the hospital
//! view, with every operation the API and the CLI expose.

mod workflows;

pub use workflows::{CaseView, ResearchCase};

use std::path::Path;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::capture::{MappingSpec, RawDocument};
use crate::clock::Clock;
use crate::config::Config;
use crate::error::CdpError;
use crate::hospital::{entity_record, topics_of, Alert, Entity, HospitalState, Topic};
use crate::model::{MetaRecord, RecordId, Timestamp};
use crate::pipeline::{self, DatasetManifest, IndexSummary, IngestReport, ReplayOutcome};
use crate::processing::SearchHit;
use crate::quality::QualityReport;
use crate::store::Store;
use crate::strain::{self, ConsistencyReport, Neighbor, StrainError, StrainProfile, PROFILE_SCHEMA};

pub const DEFAULT_LIMIT: usize = 50;
pub const MAX_LIMIT: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchPage {
    pub query: String,
    pub offset: usize,
    pub limit: usize,
    pub total: usize,
    pub hits: Vec<SearchHit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarStrains {
    pub sample_id: String,
    pub k: usize,
    pub neighbors: Vec<Neighbor>,
}

pub struct Platform {
    store: Store,
    config: Config,
    clock: Arc<dyn Clock>,
    key: Option<Vec<u8>>,
    state: HospitalState,
    rng: StdRng,
}

impl Platform {
    pub fn new(store: Store, config: Config, clock: Arc<dyn Clock>, key: Option<Vec<u8>>) -> Self {
        let state = HospitalState::load(store.records());
        Platform {
            store,
            config,
            clock,
            key: key.filter(|k| !k.is_empty()),
            state,
            rng: StdRng::from_entropy(),
        }
    }

    pub fn open(root: &Path, config: Config, clock: Arc<dyn Clock>, key: Option<Vec<u8>>) -> Result<Self, CdpError> {
        Ok(Self::new(Store::open(root)?, config, clock, key))
    }

    /// Read-only view; writes fail with `StoreError::ReadOnly`.
    pub fn open_read_only(root: &Path, config: Config, clock: Arc<dyn Clock>, key: Option<Vec<u8>>) -> Result<Self, CdpError> {
        Ok(Self::new(Store::open_read_only(root)?, config, clock, key))
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn state(&self) -> &HospitalState {
        &self.state
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn key(&self) -> Option<&[u8]> {
        self.key.as_deref()
    }

    pub(crate) fn new_id(&mut self, prefix: &str) -> String {
        format!("{prefix}_{:032x}", self.rng.gen::<u128>())
    }

    pub(crate) fn rng(&mut self) -> &mut StdRng {
        &mut self.rng
    }

    /// Writes the next version of a workflow object and folds it into the
    /// hospital view.
    pub(crate) fn save<T: Entity>(&mut self, entity: &T) -> Result<MetaRecord, CdpError> {
        let now = self.now();
        let record = entity_record(entity, now)?;
        pipeline::store_via_raw(&mut self.store, &record, now)?;
        self.state.apply(&record);
        Ok(record)
    }

    /// Raises alerts for every subscription matching `topic`, at most once
    /// per (subscription, event).
    pub fn evaluate_subscriptions(&mut self, topic: &Topic, event_ref: &RecordId) -> Result<Vec<Alert>, CdpError> {
        let event_ref = event_ref.to_hex();
        let subs: Vec<(String, String)> = self
            .state
            .pending_alerts(topic, &event_ref)
            .into_iter()
            .map(|s| (s.sub_id.clone(), s.user_id.clone()))
            .collect();
        let mut out = Vec::new();
        for (sub_id, user_id) in subs {
            let alert = Alert {
                alert_id: self.new_id("al"),
                version: 1,
                sub_id,
                user_id,
                event_ref: event_ref.clone(),
                created_at: self.now(),
                delivered: false,
            };
            self.save(&alert)?;
            out.push(alert);
        }
        Ok(out)
    }

    pub(crate) fn notify(&mut self, records: &[MetaRecord]) -> Result<Vec<Alert>, CdpError> {
        let mut out = Vec::new();
        for r in records {
            for topic in topics_of(r) {
                out.extend(self.evaluate_subscriptions(&topic, &r.id())?);
            }
        }
        Ok(out)
    }

    /// Ingests one document; `spec` names a configured mapping spec.
    pub fn ingest(&mut self, doc: &RawDocument, spec: Option<&str>) -> Result<IngestReport, CdpError> {
        let spec = match spec {
            Some(id) => Some(
                self.config
                    .mapping(id)
                    .cloned()
                    .ok_or_else(|| CdpError::NotFound(format!("mapping spec {id:?}")))?,
            ),
            None => None,
        };
        self.ingest_with(doc, spec.as_ref())
    }

    pub fn ingest_with(&mut self, doc: &RawDocument, spec: Option<&MappingSpec>) -> Result<IngestReport, CdpError> {
        if let Some(spec) = spec.filter(|s| self.config.mapping_by_digest(&s.digest()).is_none()) {
            self.store.write_artifact(&pipeline::spec_artifact(&spec.digest()), &spec.canonical_bytes())?;
        }
        let now = self.now();
        let done = pipeline::ingest(&mut self.store, &self.config, doc, spec, now)?;
        for r in &done.stored {
            self.state.apply(r);
        }
        self.notify(&done.stored)?;
        Ok(done.report)
    }

    pub fn materialize(&mut self, dataset_id: &str) -> Result<DatasetManifest, CdpError> {
        let before = self.store.records().len();
        let now = self.now();
        let manifest = pipeline::materialize(&mut self.store, &self.config, dataset_id, now)?;
        let fresh: Vec<MetaRecord> = self.store.records()[before..].to_vec();
        self.notify(&fresh)?;
        Ok(manifest)
    }

    pub fn reindex(&mut self) -> Result<IndexSummary, CdpError> {
        let now = self.now();
        Ok(pipeline::reindex(&mut self.store, &self.config, self.key.as_deref(), now)?)
    }

    pub fn report(&self, dataset_id: &str) -> Result<QualityReport, CdpError> {
        Ok(pipeline::quality_report(&self.store, &self.config, dataset_id)?)
    }

    pub fn replay(&self, scratch: &Path) -> Result<ReplayOutcome, CdpError> {
        Ok(pipeline::replay(&self.store, &self.config, scratch, self.key.as_deref())?)
    }

    /// Ranked search over the last built index.
    pub fn search(&self, query: &str, offset: usize, limit: usize) -> Result<SearchPage, CdpError> {
        let index = pipeline::load_index(&self.store)?;
        let limit = limit.min(MAX_LIMIT);
        let all = index.search(query, usize::MAX);
        Ok(SearchPage {
            query: query.to_owned(),
            offset,
            limit,
            total: all.len(),
            hits: all.into_iter().skip(offset).take(limit).collect(),
        })
    }

    /// Strain profiles of a dataset, or of all collected `strain/profile`
    /// records.
    pub fn profiles(&self, dataset: Option<&str>) -> Result<Vec<StrainProfile>, CdpError> {
        let records: Vec<&MetaRecord> = match dataset {
            Some(id) => pipeline::dataset_members(&self.store, id)?,
            None => self
                .store
                .records()
                .iter()
                .filter(|r| r.schema_ref() == Some(PROFILE_SCHEMA))
                .collect(),
        };
        Ok(strain::profiles_of(records)?)
    }

    pub fn similar_strains(&self, sample_id: &str, k: usize, dataset: Option<&str>) -> Result<SimilarStrains, CdpError> {
        let corpus = self.profiles(dataset)?;
        let query = corpus
            .iter()
            .find(|p| p.sample_id == sample_id)
            .ok_or_else(|| StrainError::UnknownSample(sample_id.to_owned()))?;
        Ok(SimilarStrains {
            sample_id: sample_id.to_owned(),
            k,
            neighbors: strain::nearest(query, &corpus, k)?,
        })
    }

    pub fn strain_consistency(&self, dataset: Option<&str>) -> Result<ConsistencyReport, CdpError> {
        Ok(strain::name_consistency(&self.profiles(dataset)?)?)
    }
}
