//! Configuration registry.
//!
//! ```text
//! config/mappings/*.json   MappingSpec, one per file
//! config/schemas/*.json    SchemaConstraint, one per file
//! config/rules/*.json      {"categories":[CategoryRule],"cleaning":[CleaningRule]}
//! config/datasets/*.json   DatasetSpec, one per file
//! config/anonymise.policy  AnonymisePolicy
//! config/platform.json     PlatformConfig
//! ```
//!
//! Every file must be in canonical form (sorted keys, no whitespace; one
//! trailing newline is allowed). Lineage cites configs by the digest of
//! that form, so replay can pin them exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::capture::MappingSpec;
use crate::hospital::{treatment_schema, AnonymisePolicy};
use crate::model::{canonical_json, empty_config_digest, Digest};
use crate::processing::{CategoryRule, CleaningRule, DatasetSpec, RuleError};
use crate::quality::SchemaConstraint;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn at(path: &Path, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.display().to_string(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdminFixture {
    pub username: String,
    /// As produced by [`crate::hospital::hash_password`].
    pub password_digest: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformConfig {
    #[serde(default)]
    pub admins: Vec<AdminFixture>,
    pub pbkdf2_iterations: u32,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        PlatformConfig {
            admins: Vec::new(),
            pbkdf2_iterations: 100_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleFile {
    #[serde(default)]
    pub categories: Vec<CategoryRule>,
    #[serde(default)]
    pub cleaning: Vec<CleaningRule>,
}

#[derive(Clone, Debug, Default)]
pub struct Config {
    pub mappings: BTreeMap<String, MappingSpec>,
    pub schemas: BTreeMap<String, SchemaConstraint>,
    pub cleaning: BTreeMap<String, CleaningRule>,
    pub categories: BTreeMap<String, CategoryRule>,
    pub datasets: BTreeMap<String, DatasetSpec>,
    pub policy: AnonymisePolicy,
    pub platform: PlatformConfig,
}

/// Parses `bytes` and insists they are the canonical form of the value.
pub fn parse_canonical<T: DeserializeOwned + Serialize>(bytes: &[u8]) -> Result<T, String> {
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    let value: T = serde_json::from_slice(body).map_err(|e| e.to_string())?;
    let canonical = canonical_json(&value);
    if canonical != body {
        let at = canonical.iter().zip(body).position(|(a, b)| a != b).unwrap_or(canonical.len().min(body.len()));
        return Err(format!("not in canonical form (first difference at byte {at})"));
    }
    Ok(value)
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>, ConfigError> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(ConfigError::at(dir, e.to_string())),
    };
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn read_file<T: DeserializeOwned + Serialize>(path: &Path) -> Result<T, ConfigError> {
    let bytes = fs::read(path).map_err(|e| ConfigError::at(path, e.to_string()))?;
    parse_canonical(&bytes).map_err(|m| ConfigError::at(path, m))
}

fn read_optional<T: DeserializeOwned + Serialize>(path: &Path) -> Result<Option<T>, ConfigError> {
    if path.exists() {
        read_file(path).map(Some)
    } else {
        Ok(None)
    }
}

impl Config {
    /// Built-in defaults only: the hospital treatment schema, the default
    /// anonymisation policy and platform settings.
    pub fn builtin() -> Self {
        let mut c = Config::default();
        let t = treatment_schema();
        c.schemas.insert(t.schema_ref.clone(), t);
        c
    }

    /// Loads `dir`, failing on the first bad file.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let (config, errors) = Self::load_lenient(dir);
        match errors.into_iter().next() {
            Some(e) => Err(e),
            None => Ok(config),
        }
    }

    /// Loads `dir`, skipping bad files and returning their errors. Replay
    /// uses this so a broken file surfaces at the event that needs it.
    pub fn load_lenient(dir: impl AsRef<Path>) -> (Self, Vec<ConfigError>) {
        let dir = dir.as_ref();
        let mut c = Config::builtin();
        let mut errors = Vec::new();
        let mut collect = |r: Result<(), ConfigError>| {
            if let Err(e) = r {
                errors.push(e);
            }
        };
        collect(c.load_dir(&dir.join("mappings"), |c, path, spec: MappingSpec| {
            spec.validate().map_err(|e| ConfigError::at(path, e.to_string()))?;
            insert_unique(&mut c.mappings, spec.spec_id.clone(), spec, path)
        }));
        collect(c.load_dir(&dir.join("schemas"), |c, path, schema: SchemaConstraint| {
            schema.check().map_err(|m| ConfigError::at(path, m))?;
            c.schemas.insert(schema.schema_ref.clone(), schema);
            Ok(())
        }));
        collect(c.load_dir(&dir.join("rules"), |c, path, rules: RuleFile| {
            for rule in rules.cleaning {
                crate::processing::Cleaner::new(std::slice::from_ref(&rule)).map_err(|e| ConfigError::at(path, e.to_string()))?;
                insert_unique(&mut c.cleaning, rule.rule_id.clone(), rule, path)?;
            }
            for rule in rules.categories {
                rule.check().map_err(|e| ConfigError::at(path, e.to_string()))?;
                insert_unique(&mut c.categories, rule.rule_id.clone(), rule, path)?;
            }
            Ok(())
        }));
        collect(c.load_dir(&dir.join("datasets"), |c, path, spec: DatasetSpec| {
            DatasetSpec::check_id(&spec.dataset_id).map_err(|m| ConfigError::at(path, m))?;
            insert_unique(&mut c.datasets, spec.dataset_id.clone(), spec, path)
        }));
        let policy_path = dir.join("anonymise.policy");
        match read_optional::<AnonymisePolicy>(&policy_path) {
            Ok(Some(p)) => match p.check() {
                Ok(()) => c.policy = p,
                Err(e) => errors.push(ConfigError::at(&policy_path, e.to_string())),
            },
            Ok(None) => {}
            Err(e) => errors.push(e),
        }
        match read_optional::<PlatformConfig>(&dir.join("platform.json")) {
            Ok(Some(p)) => c.platform = p,
            Ok(None) => {}
            Err(e) => errors.push(e),
        }
        (c, errors)
    }

    fn load_dir<T: DeserializeOwned + Serialize>(
        &mut self,
        dir: &Path,
        mut add: impl FnMut(&mut Self, &Path, T) -> Result<(), ConfigError>,
    ) -> Result<(), ConfigError> {
        let mut first_err = None;
        for path in json_files(dir)? {
            let r = read_file::<T>(&path).and_then(|v| add(self, &path, v));
            if let Err(e) = r {
                first_err.get_or_insert(e);
            }
        }
        first_err.map_or(Ok(()), Err)
    }

    /// A mapping spec file outside the config directory.
    pub fn mapping_file(path: impl AsRef<Path>) -> Result<MappingSpec, ConfigError> {
        let path = path.as_ref();
        let spec: MappingSpec = read_file(path)?;
        spec.validate().map_err(|e| ConfigError::at(path, e.to_string()))?;
        Ok(spec)
    }

    pub fn mapping(&self, spec_id: &str) -> Option<&MappingSpec> {
        self.mappings.get(spec_id)
    }

    pub fn mapping_by_digest(&self, d: &Digest) -> Option<&MappingSpec> {
        self.mappings.values().find(|m| m.digest() == *d)
    }

    pub fn schema(&self, schema_ref: &str) -> Option<&SchemaConstraint> {
        self.schemas.get(schema_ref)
    }

    /// The schema cited by a validate event; the empty digest means none.
    pub fn schema_by_digest(&self, d: &Digest) -> Option<Option<&SchemaConstraint>> {
        if *d == empty_config_digest() {
            return Some(None);
        }
        self.schemas.values().find(|s| s.digest() == *d).map(Some)
    }

    pub fn dataset(&self, id: &str) -> Option<&DatasetSpec> {
        self.datasets.get(id)
    }

    pub fn dataset_by_digest(&self, d: &Digest) -> Option<&DatasetSpec> {
        self.datasets.values().find(|s| s.digest() == *d)
    }

    pub fn cleaning_bundle(&self, spec: &DatasetSpec) -> Result<Vec<CleaningRule>, RuleError> {
        spec.cleaning
            .iter()
            .map(|id| self.cleaning.get(id).cloned().ok_or_else(|| RuleError::new(id, "unknown cleaning rule")))
            .collect()
    }

    pub fn category_bundle(&self, spec: &DatasetSpec) -> Result<Vec<CategoryRule>, RuleError> {
        spec.categorization
            .iter()
            .map(|id| self.categories.get(id).cloned().ok_or_else(|| RuleError::new(id, "unknown category rule")))
            .collect()
    }

    /// Cleaning rules whose bundle digest is `d`, searched over datasets.
    pub fn cleaning_by_digest(&self, d: &Digest) -> Option<Vec<CleaningRule>> {
        self.datasets
            .values()
            .filter_map(|s| self.cleaning_bundle(s).ok())
            .find(|b| canonical_json_digest_of(b) == *d)
    }

    pub fn categories_by_digest(&self, d: &Digest) -> Option<Vec<CategoryRule>> {
        self.datasets
            .values()
            .filter_map(|s| self.category_bundle(s).ok())
            .find(|b| canonical_json_digest_of(b) == *d)
    }
}

/// Digest of a resolved rule list as logged by clean and categorize events.
pub fn canonical_json_digest_of<T: Serialize>(rules: &[T]) -> Digest {
    Digest::of(&canonical_json(rules))
}

fn insert_unique<T>(map: &mut BTreeMap<String, T>, key: String, value: T, path: &Path) -> Result<(), ConfigError> {
    if map.contains_key(&key) {
        return Err(ConfigError::at(path, format!("duplicate id {key:?}")));
    }
    map.insert(key, value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form_is_enforced() {
        let ok: Result<PlatformConfig, _> = parse_canonical(br#"{"admins":[],"pbkdf2_iterations":10}"#);
        assert_eq!(ok.unwrap().pbkdf2_iterations, 10);
        let spaced: Result<PlatformConfig, _> = parse_canonical(br#"{"admins": [],"pbkdf2_iterations":10}"#);
        assert!(spaced.is_err());
        let unsorted: Result<PlatformConfig, _> = parse_canonical(br#"{"pbkdf2_iterations":10,"admins":[]}"#);
        assert!(unsorted.is_err());
        let unknown: Result<PlatformConfig, _> = parse_canonical(br#"{"admins":[],"extra":1,"pbkdf2_iterations":10}"#);
        assert!(unknown.is_err());
    }

    #[test]
    fn missing_dir_gives_builtins() {
        let c = Config::load("/nonexistent/cdp-config").unwrap();
        assert!(c.schema("hospital/treatment").is_some());
        assert!(c.mappings.is_empty());
    }
}
