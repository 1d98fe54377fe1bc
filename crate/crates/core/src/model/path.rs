use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ModelError;

/// A dot-separated path into a field tree. Segments made only of digits
/// index lists; on maps they are ordinary keys.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldPath {
    raw: String,
    segments: Vec<Segment>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Segment {
    key: String,
    index: Option<usize>,
}

impl Segment {
    pub fn as_str(&self) -> &str {
        &self.key
    }

    pub fn index(&self) -> Option<usize> {
        self.index
    }
}

impl FieldPath {
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        if s.is_empty() {
            return Err(ModelError::PathSyntax("empty path".into()));
        }
        let mut segments = Vec::new();
        for (i, part) in s.split('.').enumerate() {
            if part.is_empty() {
                return Err(ModelError::PathSyntax(format!(
                    "empty segment {i} in path {s:?}"
                )));
            }
            let index = if part.bytes().all(|b| b.is_ascii_digit()) {
                if part.len() > 1 && part.starts_with('0') {
                    return Err(ModelError::PathSyntax(format!(
                        "malformed index {part:?} in path {s:?}"
                    )));
                }
                Some(part.parse::<usize>().map_err(|_| {
                    ModelError::PathSyntax(format!("index {part:?} out of range in path {s:?}"))
                })?)
            } else {
                None
            };
            segments.push(Segment {
                key: part.to_owned(),
                index,
            });
        }
        Ok(FieldPath {
            raw: s.to_owned(),
            segments,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    /// Path of a sibling field: same parent, last segment replaced.
    pub fn sibling(&self, name: &str) -> Result<FieldPath, ModelError> {
        match self.raw.rsplit_once('.') {
            Some((parent, _)) => FieldPath::parse(&format!("{parent}.{name}")),
            None => FieldPath::parse(name),
        }
    }

    pub fn last(&self) -> &str {
        self.segments.last().map(Segment::as_str).unwrap_or("")
    }
}

impl fmt::Display for FieldPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl fmt::Debug for FieldPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FieldPath({:?})", self.raw)
    }
}

impl FromStr for FieldPath {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FieldPath::parse(s)
    }
}

impl Serialize for FieldPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.raw)
    }
}

impl<'de> Deserialize<'de> for FieldPath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        FieldPath::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_segments() {
        let p = FieldPath::parse("doses.0.amount").unwrap();
        assert_eq!(p.segments().len(), 3);
        assert_eq!(p.segments()[1].index(), Some(0));
        assert_eq!(p.segments()[2].index(), None);
    }

    #[test]
    fn rejects_empty_segments_and_bad_indices() {
        for bad in ["", "a..b", ".a", "a.", "a.01"] {
            assert!(
                matches!(FieldPath::parse(bad), Err(ModelError::PathSyntax(_))),
                "{bad:?}"
            );
        }
        assert!(FieldPath::parse("a.99999999999999999999999").is_err());
    }

    #[test]
    fn sibling_replaces_last_segment() {
        let p = FieldPath::parse("treatment.dose").unwrap();
        assert_eq!(p.sibling("dose_unit").unwrap().as_str(), "treatment.dose_unit");
        assert_eq!(FieldPath::parse("dose").unwrap().sibling("dose_unit").unwrap().as_str(), "dose_unit");
    }
}
