//! A self-contained config directory and the scripted pipeline run used by
//! the reproducibility checks.
//!
//! Every file written here is cited by some lineage event of the scripted
//! run, so changing any byte of any of them must break replay.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cdp_core::capture::{Coercion, MappingRule, MappingSpec, RawDocument, SourceFormat};
use cdp_core::clock::ManualClock;
use cdp_core::config::Config;
use cdp_core::hospital::{AnonymisePolicy, PseudonymRule};
use cdp_core::model::{canonical_json, FieldPath, SubDomain, ValueKind};
use cdp_core::processing::DatasetSpec;
use cdp_core::quality::{RequiredPath, SchemaConstraint};
use cdp_core::store::{Pattern, ScanFilter, Store};
use cdp_core::{CdpError, Platform};

use crate::{repo_dir, t0};

pub const KEY: &[u8] = b"fixture-pseudonym-key";

pub const PATIENTS_CSV: &str = "\
patient_id,name,email,phone,dob,insurance_no,condition,formulation
pt-001,Maria Keller,maria.keller@example.org,+41 79 555 01 01,1971-04-09,INS-4471,chronic back pain,CBD oil 10%
pt-002,Jonas Brandt,j.brandt@example.org,+41 79 555 01 02,1985-11-23,INS-9012,epilepsy,Harlequin flower
pt-003,Lea Moser,lea.moser@example.org,+41 79 555 01 03,1990-02-14,INS-3320,insomnia,THC:CBD 1:1 spray
";

fn path(s: &str) -> FieldPath {
    FieldPath::parse(s).unwrap()
}

fn rule(src: &str, target: &str, coercion: Coercion, required: bool) -> MappingRule {
    MappingRule {
        source_path: src.into(),
        target_path: path(target),
        coercion,
        required,
    }
}

fn write(dir: &Path, rel: &str, bytes: &[u8]) {
    let p = dir.join(rel);
    fs::create_dir_all(p.parent().unwrap()).unwrap();
    let mut b = bytes.to_vec();
    if !b.ends_with(b"\n") {
        b.push(b'\n');
    }
    fs::write(p, b).unwrap();
}

/// The anonymisation policy of the fixture. It differs from the built-in
/// default, so a policy file that fails to load also changes the digest.
pub fn policy() -> AnonymisePolicy {
    AnonymisePolicy {
        remove: vec![
            "profile.name".into(),
            "profile.contact.*".into(),
            "profile.insurance_no".into(),
            "username".into(),
        ],
        pseudonymize: vec![PseudonymRule {
            path: path("patient_id"),
            into: path("pseudonym"),
        }],
        generalize_year: vec![path("profile.dob")],
    }
}

pub fn intake_spec() -> MappingSpec {
    use Coercion::{None as Keep, TrimText};
    MappingSpec {
        spec_id: "hospital/intake".into(),
        source_format: SourceFormat::Delimited,
        rules: vec![
            rule("patient_id", "patient_id", TrimText, true),
            rule("name", "profile.name", TrimText, true),
            rule("email", "profile.contact.email", TrimText, false),
            rule("phone", "profile.contact.phone", TrimText, false),
            rule("dob", "profile.dob", TrimText, false),
            rule("insurance_no", "profile.insurance_no", Keep, false),
            rule("condition", "condition", TrimText, true),
            rule("formulation", "formulation", TrimText, false),
        ],
        target_sub_domain: SubDomain::Hospital,
        schema_ref: "hospital/intake".into(),
        record_path: None,
    }
}

/// Writes the fixture config into `dir` and returns the paths of all files.
pub fn write_config(dir: &Path) -> Vec<PathBuf> {
    let repo = repo_dir().join("config");
    for rel in [
        "mappings/strain-profile.json",
        "mappings/lab-result.json",
        "schemas/strain-profile.json",
        "schemas/lab-raw.json",
        "rules/potency.json",
        "rules/lab.json",
        "datasets/high-potency.json",
    ] {
        write(dir, rel, &fs::read(repo.join(rel)).unwrap());
    }
    let lab_clean = DatasetSpec {
        dataset_id: "lab-clean".into(),
        filter: ScanFilter {
            sub_domain: Some(SubDomain::Research),
            schema_ref: Some(Pattern::new("research/*")),
            provider: None,
        },
        cleaning: vec!["percent".into(), "trim-notes".into()],
        categorization: vec!["pain".into()],
        quality_schema: None,
    };
    write(dir, "datasets/lab-clean.json", &canonical_json(&lab_clean));
    write(dir, "mappings/hospital-intake.json", &canonical_json(&intake_spec()));
    let schema = SchemaConstraint {
        schema_ref: "hospital/intake".into(),
        required_paths: vec![
            RequiredPath {
                path: path("patient_id"),
                kind: ValueKind::Text,
            },
            RequiredPath {
                path: path("condition"),
                kind: ValueKind::Text,
            },
        ],
        range_checks: vec![],
        cross_field_checks: vec![],
    };
    write(dir, "schemas/hospital-intake.json", &canonical_json(&schema));
    write(dir, "anonymise.policy", &canonical_json(&policy()));
    files(dir)
}

/// All regular files under `dir`, sorted.
pub fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

/// (file name, bytes, spec id, provider) of the three fixture documents.
pub fn documents() -> Vec<(&'static str, Vec<u8>, &'static str, &'static str)> {
    let samples = repo_dir().join("samples");
    vec![
        ("strains.csv", fs::read(samples.join("strains.csv")).unwrap(), "strain/profile", "grower:farm-1"),
        ("lab.csv", fs::read(samples.join("lab.csv")).unwrap(), "research/lab-result", "research:lab-7"),
        ("patients.csv", PATIENTS_CSV.as_bytes().to_vec(), "hospital/intake", "hospital:intake"),
    ]
}

pub fn open(store: &Path, config: Config) -> Result<Platform, CdpError> {
    Platform::open(store, config, Arc::new(ManualClock::new(t0())), Some(KEY.to_vec()))
}

/// ingest the three documents, materialize both datasets, reindex.
pub fn scripted_run(p: &mut Platform) -> Result<(), CdpError> {
    for (name, bytes, spec, provider) in documents() {
        let doc = RawDocument::new(bytes, Some(name.into()), p.now(), provider);
        let report = p.ingest(&doc, Some(spec))?;
        assert_eq!(report.status, cdp_core::pipeline::IngestStatus::Stored, "{name}: {report:?}");
    }
    p.materialize("high-potency")?;
    p.materialize("lab-clean")?;
    p.reindex()?;
    Ok(())
}

/// Raw bytes of the typed zone: every record segment, concatenated.
pub fn typed_zone(store: &Store) -> Vec<u8> {
    store.segment_files().unwrap().iter().flat_map(|f| fs::read(f).unwrap()).collect()
}

#[derive(Debug, Default)]
pub struct Sweep {
    pub flips: usize,
    /// `file@offset` of flips that replay did not reject.
    pub survived: Vec<String>,
}

/// Flips one bit in every byte of every config file in turn, reloading
/// the config leniently and replaying `store` each time.
pub fn tamper_sweep(store: &Store, config_dir: &Path) -> Sweep {
    let mut sweep = Sweep::default();
    for f in files(config_dir) {
        let original = fs::read(&f).unwrap();
        for i in 0..original.len() {
            let mut b = original.clone();
            b[i] ^= 0x01;
            fs::write(&f, &b).unwrap();
            let (config, _) = Config::load_lenient(config_dir);
            let scratch = tempfile::tempdir().unwrap();
            sweep.flips += 1;
            if cdp_core::pipeline::replay(store, &config, scratch.path(), Some(KEY)).is_ok() {
                sweep.survived.push(format!("{}@{i}", f.strip_prefix(config_dir).unwrap().display()));
            }
        }
        fs::write(&f, &original).unwrap();
    }
    sweep
}
