//! The canonical meta-format: field values, records, content identity and
//! lineage events.

mod digest;
pub mod json;
mod lineage;
mod path;
mod record;
mod value;

pub use digest::{Digest, RawId, RecordId};
pub use lineage::{empty_config_digest, LineageEvent, Stage};
pub use path::{FieldPath, Segment};
pub use record::{
    canonical_parse, canonical_serialize, check_provider, field_get, record_id, MetaRecord,
    RecordDraft, SourceDescriptor, StructureClass, SubDomain, Timestamp,
};
pub use value::{
    check_field_name, tree_get, tree_remove, tree_set, FieldTree, FieldValue, ValueKind,
};

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("parse error at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("path syntax error: {0}")]
    PathSyntax(String),
    #[error("malformed id: {0}")]
    MalformedId(String),
}

/// Compact JSON with object keys in code-point order.
///
/// Used for every non-record artifact (configs, reports, lineage lines);
/// decimals render exactly as in record serialization.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let v = serde_json::to_value(value).expect("serializable value");
    serde_json::to_vec(&v).expect("value serializes")
}

pub fn canonical_json_digest<T: Serialize + ?Sized>(value: &T) -> Digest {
    Digest::of(&canonical_json(value))
}
