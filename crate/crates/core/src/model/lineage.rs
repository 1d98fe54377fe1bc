use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::digest::Digest;
use super::record::Timestamp;
use super::{canonical_json, ModelError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Capture,
    Map,
    Validate,
    Clean,
    Categorize,
    Index,
    Materialize,
    Anonymise,
    Store,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Capture => "capture",
            Stage::Map => "map",
            Stage::Validate => "validate",
            Stage::Clean => "clean",
            Stage::Categorize => "categorize",
            Stage::Index => "index",
            Stage::Materialize => "materialize",
            Stage::Anonymise => "anonymise",
            Stage::Store => "store",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| ModelError::InvariantViolation(format!("unknown stage {s:?}")))
    }
}

/// One processing step in the append-only lineage log.
///
/// `input_ids` may name raw blobs or records; `output_ids` are records.
/// `seq` is assigned by the store on append.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineageEvent {
    pub seq: u64,
    pub stage: Stage,
    pub input_ids: Vec<Digest>,
    pub output_ids: Vec<Digest>,
    pub config_digest: Digest,
    pub timestamp: Timestamp,
}

impl LineageEvent {
    pub fn new(
        stage: Stage,
        input_ids: Vec<Digest>,
        output_ids: Vec<Digest>,
        config_digest: Digest,
        timestamp: Timestamp,
    ) -> Self {
        LineageEvent {
            seq: 0,
            stage,
            input_ids,
            output_ids,
            config_digest,
            timestamp,
        }
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical_json(self)
    }

    pub fn parse(line: &[u8]) -> Result<Self, ModelError> {
        let event: LineageEvent = serde_json::from_slice(line)
            .map_err(|e| ModelError::InvariantViolation(format!("lineage event: {e}")))?;
        Ok(event)
    }
}

/// Digest of the empty configuration `{}`, used by stages that carry no rules.
pub fn empty_config_digest() -> Digest {
    Digest::of(b"{}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_bytes_are_sorted_and_compact() {
        let ev = LineageEvent {
            seq: 3,
            stage: Stage::Store,
            input_ids: vec![Digest::of(b"a")],
            output_ids: vec![],
            config_digest: empty_config_digest(),
            timestamp: Timestamp::from_unix(0).unwrap(),
        };
        let text = String::from_utf8(ev.canonical_bytes()).unwrap();
        assert!(text.starts_with("{\"config_digest\":\"44136fa3"));
        assert!(text.contains("\"seq\":3,\"stage\":\"store\",\"timestamp\":\"1970-01-01T00:00:00Z\"}"));
        assert_eq!(LineageEvent::parse(text.as_bytes()).unwrap(), ev);
    }

    #[test]
    fn stage_names_round_trip() {
        assert_eq!("anonymise".parse::<Stage>().unwrap(), Stage::Anonymise);
        assert!("bake".parse::<Stage>().is_err());
    }
}
