//! Data capture: structure detection, format readers and field mapping.
//!
//! The end-to-end ingest pipeline lives in [`crate::pipeline`] because it
//! also touches storage and validation.

mod delimited;
mod mapping;
mod tree;

pub use delimited::{parse_delimited, sniff_delimiter, Row};
pub use mapping::{
    apply_mapping, coerce, tree_units, Coercion, MappingInput, MappingRule, MappingSpec,
    SourceFormat,
};
pub use tree::{parse_tree, TREE_JSON, TREE_XML};

use crate::model::{json, Digest, ModelError, RawId, StructureClass, Timestamp};

pub const DELIMITED: &str = "delimited";
pub const OPAQUE: &str = "opaque";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CaptureError {
    #[error("parse error at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("input is not valid UTF-8 (first bad byte at {offset})")]
    Encoding { offset: usize },
    #[error("delimited input has no header row")]
    MissingHeader,
    #[error("duplicate header {0:?}")]
    DuplicateHeader(String),
    #[error("row starting on line {line} has {found} fields, header has {expected}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("unsupported tree format {0:?}")]
    UnsupportedFormat(String),
    #[error("missing required source paths: {}", missing.join(", "))]
    Mapping { missing: Vec<String> },
    #[error("cannot coerce {value:?} at {path}")]
    Coercion { path: String, value: String },
    #[error("invalid mapping spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Bytes received from a provider, identified by their digest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawDocument {
    pub raw_id: RawId,
    pub bytes: Vec<u8>,
    pub declared_name: Option<String>,
    pub received_at: Timestamp,
    pub provider: String,
}

impl RawDocument {
    pub fn new(
        bytes: Vec<u8>,
        declared_name: Option<String>,
        received_at: Timestamp,
        provider: impl Into<String>,
    ) -> Self {
        RawDocument {
            raw_id: Digest::of(&bytes),
            bytes,
            declared_name,
            received_at,
            provider: provider.into(),
        }
    }
}

const BINARY_MAGICS: &[&[u8]] = &[
    b"%PDF",
    b"PK\x03\x04",
    b"\xD0\xCF\x11\xE0\xA1\xB1\x1A\xE1",
    b"\x89PNG\r\n\x1a\n",
    b"\xFF\xD8\xFF",
    b"GIF87a",
    b"GIF89a",
    b"II*\x00",
    b"MM\x00*",
    b"{\\rtf",
];

/// Whether `data` starts with the signature of a known binary format
/// (PDF, office documents, images).
pub fn is_binary_magic(data: &[u8]) -> bool {
    BINARY_MAGICS.iter().any(|m| data.starts_with(m))
}

/// Classifies bytes by sniffing. Tree formats are tried first, then
/// delimited text; everything else (including known binary formats) is
/// opaque.
pub fn detect_structure(data: &[u8]) -> (StructureClass, &'static str) {
    let opaque = (StructureClass::Unstructured, OPAQUE);
    if is_binary_magic(data) {
        return opaque;
    }
    let Ok(text) = std::str::from_utf8(data) else {
        return opaque;
    };
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    match text.trim_start().as_bytes().first() {
        Some(b'{' | b'[') if json::parse(text.as_bytes(), false).is_ok() => {
            return (StructureClass::SemiStructured, TREE_JSON);
        }
        Some(b'<') if roxmltree::Document::parse(text).is_ok() => {
            return (StructureClass::SemiStructured, TREE_XML);
        }
        _ => {}
    }
    if sniff_delimiter(text).is_some() {
        return (StructureClass::Structured, DELIMITED);
    }
    opaque
}
