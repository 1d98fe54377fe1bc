use std::collections::BTreeSet;

use cdp_core::capture::RawDocument;
use cdp_core::config::Config;
use cdp_core::model::{FieldPath, FieldValue, MetaRecord, RecordId, Stage, SubDomain};
use cdp_core::pipeline::{self, IngestStatus};
use cdp_core::store::{ScanFilter, Store};
use cdp_core::Platform;
use cdp_testkit::fixture::{self, documents, scripted_run, tamper_sweep, typed_zone, write_config};
use cdp_testkit::t0;
use tempfile::TempDir;

struct Env {
    config_dir: TempDir,
    store_dir: TempDir,
}

impl Env {
    fn new() -> Self {
        let config_dir = tempfile::tempdir().unwrap();
        write_config(config_dir.path());
        Env {
            config_dir,
            store_dir: tempfile::tempdir().unwrap(),
        }
    }

    fn config(&self) -> Config {
        Config::load(self.config_dir.path()).unwrap()
    }

    fn platform(&self) -> Platform {
        fixture::open(self.store_dir.path(), self.config()).unwrap()
    }
}

fn doc(bytes: &[u8], provider: &str) -> RawDocument {
    RawDocument::new(bytes.to_vec(), None, t0(), provider)
}

#[test]
fn three_row_ingest() {
    let env = Env::new();
    let mut p = env.platform();
    let (_, bytes, spec, provider) = documents().remove(0);
    let report = p.ingest(&doc(&bytes, provider), Some(spec)).unwrap();
    assert_eq!(report.status, IngestStatus::Stored);
    assert_eq!(report.records_produced, 3);

    // cross-check by scanning the store
    let filter = ScanFilter::schema("strain/profile");
    let found: Vec<&MetaRecord> = p.store().scan(&filter).collect();
    assert_eq!(found.len(), 3);
    let ids: BTreeSet<RecordId> = found.iter().map(|r| r.id()).collect();
    assert_eq!(ids, report.record_ids.iter().copied().collect());
    let names: BTreeSet<&str> = found.iter().filter_map(|r| r.text("strain_name")).collect();
    assert_eq!(names, ["Blue Dream", "Harlequin", "OG Kush"].into());

    let stages: Vec<Stage> = p.store().read_lineage().unwrap().iter().map(|e| e.stage).collect();
    assert_eq!(stages, vec![Stage::Capture, Stage::Map, Stage::Validate, Stage::Store]);
}

#[test]
fn unstructured_duplicate_and_rejected_documents() {
    let env = Env::new();
    let mut p = env.platform();
    let pdf = p.ingest(&doc(b"%PDF-1.7\n%\xe2\xe3\xcf\xd3 trailer", "research:lab-7"), Some("research/lab-result")).unwrap();
    assert_eq!((pdf.status, pdf.records_produced), (IngestStatus::RawOnly, 0));

    let (_, bytes, spec, provider) = documents().remove(0);
    p.ingest(&doc(&bytes, provider), Some(spec)).unwrap();
    let before = p.store().stats().unwrap();
    let again = p.ingest(&doc(&bytes, provider), Some(spec)).unwrap();
    assert_eq!(again.status, IngestStatus::Duplicate);
    let after = p.store().stats().unwrap();
    assert_eq!((before.raw_count, before.record_count), (after.raw_count, after.record_count));

    // thc out of range: raw kept, no typed records
    let bad = b"sample_id,strain_name,thc,cbd,cbg\nX-1,Bad,140.0,0.1,0.1\nX-2,Fine,10.0,0.1,0.1\n";
    let records = p.store().records().len();
    let r = p.ingest(&doc(bad, "grower:farm-1"), Some("strain/profile")).unwrap();
    assert_eq!(r.status, IngestStatus::Rejected);
    assert!(r.issues.iter().any(|i| i.path.as_ref().map(|x| x.to_string()).as_deref() == Some("features.thc")), "{:?}", r.issues);
    assert_eq!(p.store().records().len(), records);
    assert!(p.store().has_raw(&r.raw_id));
}

#[test]
fn store_survives_reopen_and_lineage_is_gapless() {
    let env = Env::new();
    let (stats, bytes) = {
        let mut p = env.platform();
        scripted_run(&mut p).unwrap();
        (p.store().stats().unwrap(), typed_zone(p.store()))
    };
    let p = env.platform();
    let again = p.store().stats().unwrap();
    assert_eq!((stats.raw_count, stats.record_count, stats.lineage_count), (again.raw_count, again.record_count, again.lineage_count));
    assert_eq!(typed_zone(p.store()), bytes);
    let seqs: Vec<u64> = p.store().read_lineage().unwrap().iter().map(|e| e.seq).collect();
    assert_eq!(seqs, (1..=seqs.len() as u64).collect::<Vec<_>>());

    // scan(P) and scan(not P) partition scan(all)
    let hospital = ScanFilter::sub_domain(SubDomain::Hospital);
    let yes: BTreeSet<RecordId> = p.store().scan(&hospital).map(|r| r.id()).collect();
    let no: BTreeSet<RecordId> = p.store().scan_where(|r| !hospital.matches(r)).map(|r| r.id()).collect();
    let all: BTreeSet<RecordId> = p.store().scan(&ScanFilter::all()).map(|r| r.id()).collect();
    assert!(yes.is_disjoint(&no));
    assert_eq!(&yes | &no, all);
    assert!(!yes.is_empty() && !no.is_empty());
}

fn with(r: &MetaRecord, schema: &str, edit: impl FnOnce(&mut cdp_core::model::FieldTree)) -> RecordId {
    let mut d = r.draft().clone();
    d.schema_ref = Some(schema.to_owned());
    edit(&mut d.fields);
    d.seal().unwrap().id()
}

fn tags(list: &[&str]) -> FieldValue {
    FieldValue::List(list.iter().map(|t| FieldValue::text(*t)).collect())
}

/// Dataset members computed by hand from the source records and the rule
/// files' meaning.
#[test]
fn materialized_members_match_hand_computed_oracle() {
    let env = Env::new();
    let mut p = env.platform();
    scripted_run(&mut p).unwrap();

    let mut want: BTreeSet<RecordId> = BTreeSet::new();
    for r in p.store().scan(&ScanFilter::schema("strain/profile")) {
        let f = |k: &str| r.get(&FieldPath::parse(k).unwrap()).and_then(FieldValue::as_f64).unwrap();
        let mut t = Vec::new();
        if f("features.cbd") > 5.0 {
            t.push("high-cbd");
        }
        if f("features.thc") > 15.0 {
            t.push("high-thc");
        }
        want.insert(with(r, "dataset/high-potency", |fields| {
            fields.insert("tags".into(), tags(&t));
        }));
    }
    let manifest = pipeline::load_manifest(p.store(), "high-potency").unwrap();
    assert_eq!(manifest.members.iter().copied().collect::<BTreeSet<_>>(), want);
    assert_eq!(manifest.members.len(), 3);

    let mut want = BTreeSet::new();
    for r in p.store().scan(&ScanFilter::schema("research/lab-raw")) {
        let raw = r.text("concentration").unwrap();
        let value: f64 = raw.trim().trim_end_matches('%').trim().parse().unwrap();
        let notes = r.text("notes").map(|n| n.trim().to_owned());
        let pain = notes.as_deref().is_some_and(|n| n.contains("pain"));
        want.insert(with(r, "dataset/lab-clean", |fields| {
            fields.insert("concentration".into(), FieldValue::Decimal(value));
            fields.insert("concentration_unit".into(), FieldValue::text("percent"));
            if let Some(n) = notes {
                fields.insert("notes".into(), FieldValue::text(n));
            }
            fields.insert("tags".into(), tags(if pain { &["pain"] } else { &[] }));
        }));
    }
    let manifest = pipeline::load_manifest(p.store(), "lab-clean").unwrap();
    assert_eq!(manifest.members.iter().copied().collect::<BTreeSet<_>>(), want);
    assert_eq!(manifest.members.len(), 3);

    // same spec, unchanged store: same dataset id, nothing new written
    let records = p.store().records().len();
    let again = p.materialize("lab-clean").unwrap();
    assert_eq!(again, manifest);
    assert_eq!(p.store().records().len(), records);
}

#[test]
fn dataset_matching_nothing_is_empty() {
    let env = Env::new();
    let mut p = env.platform();
    let m = p.materialize("lab-clean").unwrap();
    assert!(m.members.is_empty());
}

#[test]
fn replay_reconstructs_typed_zone_byte_for_byte() {
    let env = Env::new();
    let mut p = env.platform();
    scripted_run(&mut p).unwrap();
    let events = p.store().read_lineage().unwrap();
    assert!(events.iter().any(|e| e.stage == Stage::Anonymise), "hospital records are anonymised on reindex");
    let scratch = tempfile::tempdir().unwrap();
    let outcome = p.replay(scratch.path()).unwrap();
    assert!(outcome.identical);
    let rebuilt = Store::open_read_only(scratch.path()).unwrap();
    assert_eq!(typed_zone(&rebuilt), typed_zone(p.store()));
    assert!(!typed_zone(&rebuilt).is_empty());
}

#[test]
fn replay_of_empty_lineage_is_empty() {
    let env = Env::new();
    let p = env.platform();
    let scratch = tempfile::tempdir().unwrap();
    let o = p.replay(scratch.path()).unwrap();
    assert_eq!((o.events, o.records, o.identical), (0, 0, true));
}

#[test]
fn replay_with_wrong_key_fails_at_anonymise() {
    let env = Env::new();
    let mut p = env.platform();
    scripted_run(&mut p).unwrap();
    drop(p);
    let store = Store::open_read_only(env.store_dir.path()).unwrap();
    let scratch = tempfile::tempdir().unwrap();
    match pipeline::replay(&store, &env.config(), scratch.path(), Some(b"another-key")) {
        Err(pipeline::ReplayError::Event { stage, .. }) => assert_eq!(stage, Stage::Anonymise),
        other => panic!("{other:?}"),
    }
    // without a key the pseudonyms cannot be recomputed, only checked for inputs
    let scratch = tempfile::tempdir().unwrap();
    assert!(pipeline::replay(&store, &env.config(), scratch.path(), None).unwrap().identical);
}

#[test]
fn every_single_byte_config_tamper_breaks_replay() {
    let env = Env::new();
    let mut p = env.platform();
    scripted_run(&mut p).unwrap();
    drop(p);
    let store = Store::open_read_only(env.store_dir.path()).unwrap();
    let sweep = tamper_sweep(&store, env.config_dir.path());
    assert!(sweep.flips > 1000, "{}", sweep.flips);
    assert!(sweep.survived.is_empty(), "{} of {} flips replayed cleanly: {:?}", sweep.survived.len(), sweep.flips, sweep.survived);
    // and the untouched config still replays
    let scratch = tempfile::tempdir().unwrap();
    assert!(pipeline::replay(&store, &env.config(), scratch.path(), Some(fixture::KEY)).unwrap().identical);
}
