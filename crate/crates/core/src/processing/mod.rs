//! Cleaning, categorization and search indexing.
//!
//! Dataset materialization is in [`crate::pipeline`] since it writes to
//! the store and the lineage log.

mod categorize;
mod clean;
mod index;

use serde::{Deserialize, Serialize};

use crate::model::{canonical_json, Digest};
use crate::store::ScanFilter;

pub use categorize::{apply_tags, categorize, CategoryRule, Condition, Operator};
pub use clean::{clean, Change, Cleaner, CleaningKind, CleaningRule};
pub use index::{build_index, search, text_of, tokenize, IndexBuilder, InvertedIndex, SearchHit};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("rule {rule_id}: {message}")]
pub struct RuleError {
    pub rule_id: String,
    pub message: String,
}

impl RuleError {
    pub fn new(rule_id: &str, message: impl Into<String>) -> Self {
        RuleError {
            rule_id: rule_id.to_owned(),
            message: message.into(),
        }
    }
}

/// A purpose-specific processed record set: filter, then clean, then
/// categorize.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub dataset_id: String,
    pub filter: ScanFilter,
    #[serde(default)]
    pub cleaning: Vec<String>,
    #[serde(default)]
    pub categorization: Vec<String>,
    /// Schema used by quality reports over this dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_schema: Option<String>,
}

impl DatasetSpec {
    pub fn digest(&self) -> Digest {
        Digest::of(&canonical_json(self))
    }

    /// Dataset ids become file names, so they are restricted to
    /// `[a-z0-9_-]+`.
    pub fn check_id(id: &str) -> Result<(), String> {
        if !id.is_empty() && id.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-' || b == b'_') {
            Ok(())
        } else {
            Err(format!("dataset id {id:?} must match [a-z0-9_-]+"))
        }
    }
}
