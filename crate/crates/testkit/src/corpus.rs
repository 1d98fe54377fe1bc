//! Seeded generators for records, profiles and tabular rows.

use std::collections::BTreeMap;

use cdp_core::model::{FieldTree, FieldValue, MetaRecord, RecordDraft, SourceDescriptor, StructureClass, SubDomain, Timestamp};
use cdp_core::strain::StrainProfile;
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::{t0, Rng};

const WORDS: &[&str] = &[
    "cbd", "thc", "cbg", "oil", "flower", "tincture", "pain", "chronic", "sleep", "anxiety", "seizure", "dose", "mg",
    "kush", "haze", "dream", "og", "blue", "sour", "diesel", "harlequin", "terpene", "myrcene", "limonene", "indica",
    "sativa", "hybrid", "extract", "vapor", "edible", "trial", "cohort", "placebo", "week", "daily", "nausea",
    "appetite", "spasm", "migraine", "relief", "café", "Übung", "straße", "naïve", "αβγ", "ünïcödé", "x1", "2024",
    "12", "5mg", "b12", "CBD", "Oil", "PAIN",
];

fn word(rng: &mut Rng) -> &'static str {
    // skewed towards the front so some terms are common
    let i = (rng.gen::<f64>().powi(2) * WORDS.len() as f64) as usize;
    WORDS[i.min(WORDS.len() - 1)]
}

const SEPARATORS: &[&str] = &[" ", " ", " ", ", ", "-", "; ", "/", "\n", " (", ") ", "!", "..."];

fn sentence(rng: &mut Rng, max_words: usize) -> String {
    let n = rng.gen_range(0..=max_words);
    let mut s = String::new();
    for i in 0..n {
        if i > 0 {
            s.push_str(SEPARATORS.choose(rng).unwrap());
        }
        s.push_str(word(rng));
    }
    s
}

fn record(provider: &str, sub: SubDomain, schema: Option<&str>, created_at: Timestamp, fields: FieldTree) -> MetaRecord {
    let mut d = RecordDraft::new(
        SourceDescriptor::new(provider, None),
        sub,
        StructureClass::SemiStructured,
        schema.map(str::to_owned),
        created_at,
    );
    d.fields = fields;
    d.seal().unwrap()
}

/// Documents with text spread over nested maps and lists, plus numeric
/// and boolean leaves that must not be indexed.
pub fn search_corpus(rng: &mut Rng, n: usize) -> Vec<MetaRecord> {
    (0..n)
        .map(|i| {
            let mut f = FieldTree::new();
            f.insert("title".into(), FieldValue::text(sentence(rng, 4)));
            f.insert("body".into(), FieldValue::text(sentence(rng, 30)));
            if rng.gen_bool(0.5) {
                let notes: Vec<FieldValue> = (0..rng.gen_range(0..4)).map(|_| FieldValue::text(sentence(rng, 6))).collect();
                f.insert("notes".into(), FieldValue::List(notes));
            }
            if rng.gen_bool(0.5) {
                let mut m = BTreeMap::new();
                m.insert("label".to_owned(), FieldValue::text(sentence(rng, 3)));
                m.insert("value".to_owned(), FieldValue::Decimal(rng.gen_range(0.0..30.0)));
                m.insert("flag".to_owned(), FieldValue::Bool(rng.gen()));
                f.insert("meta".into(), FieldValue::Map(m));
            }
            f.insert("n".into(), FieldValue::Integer(i as i64));
            record("research:corpus", SubDomain::Research, Some("research/note"), t0(), f)
        })
        .collect()
}

/// One to four words, random case and punctuation, sometimes with a term
/// no document contains.
pub fn search_query(rng: &mut Rng) -> String {
    let n = rng.gen_range(1..=4);
    let mut parts: Vec<String> = (0..n)
        .map(|_| {
            let w = word(rng);
            if rng.gen_bool(0.3) {
                w.to_uppercase()
            } else {
                w.to_owned()
            }
        })
        .collect();
    if rng.gen_bool(0.2) {
        parts.push("zzyzx".into());
    }
    parts.join(if rng.gen_bool(0.5) { " " } else { ", " })
}

pub const FEATURES: [&str; 3] = ["cbd", "cbg", "thc"];

fn names() -> Vec<String> {
    FEATURES.iter().map(|s| s.to_string()).collect()
}

/// Random profiles. With `coarse`, features are small integers so exact
/// similarity ties and duplicate vectors occur.
pub fn profiles(rng: &mut Rng, n: usize, strain_names: usize, coarse: bool) -> Vec<StrainProfile> {
    (0..n)
        .map(|i| loop {
            let f: Vec<f64> = (0..FEATURES.len())
                .map(|_| if coarse { rng.gen_range(0..4) as f64 } else { rng.gen_range(0.0..30.0) })
                .collect();
            let name = format!("strain-{}", rng.gen_range(0..strain_names.max(1)));
            if let Ok(p) = StrainProfile::new(format!("s{i:04}"), name, names(), f) {
                break p;
            }
        })
        .collect()
}

/// `2m` profiles in `m` tight pairs. Pairs are spread over a quarter
/// circle; within a pair the two vectors differ by a tiny angle and carry
/// different names, and every name occurs exactly twice. Each sample's
/// nearest neighbor is therefore its partner, whose name differs.
pub fn mislabeled(m: usize) -> Vec<StrainProfile> {
    assert!(m >= 2);
    let spacing = std::f64::consts::FRAC_PI_2 / m as f64;
    let mut out = Vec::new();
    for i in 0..m {
        let theta = (i as f64 + 0.25) * spacing;
        for (j, t) in [theta, theta + spacing / 1000.0].into_iter().enumerate() {
            let name = format!("name-{}", (i + j) % m);
            let f = vec![10.0 * t.cos(), 0.5, 10.0 * t.sin()];
            out.push(StrainProfile::new(format!("a{i:03}-{j}"), name, names(), f).unwrap());
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct StrainRow {
    pub sample_id: String,
    pub strain_name: String,
    /// Source text for thc, cbd, cbg.
    pub values: [String; 3],
}

const STRAIN_NAMES: &[&str] = &[
    "OG Kush", "Blue Dream", "Harlequin", "Sour Diesel", "Girl Scout Cookies", "Northern Lights", "Café \"Crema\"",
    "Jack, Herer", "  White Widow ", "Ñandú Haze", "AK-47",
];

fn number_text(rng: &mut Rng) -> String {
    let x: f64 = (rng.gen_range(0.0..30.0f64) * 100.0).round() / 100.0;
    match rng.gen_range(0..5) {
        0 => format!("{x}"),
        1 => format!("{x:.3}"),
        2 => format!("{x:e}"),
        3 => format!(" {x} "),
        _ => format!("{}", x.round() as i64),
    }
}

pub fn strain_rows(rng: &mut Rng, n: usize) -> Vec<StrainRow> {
    (0..n)
        .map(|i| StrainRow {
            sample_id: format!("H-{i:03}"),
            strain_name: STRAIN_NAMES.choose(rng).unwrap().to_string(),
            values: [number_text(rng), number_text(rng), number_text(rng)],
        })
        .collect()
}

/// The rows as comma-separated text with a header, quoted as needed.
pub fn rows_delimited(rows: &[StrainRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "strain_name", "thc", "cbd", "cbg"]).unwrap();
    for r in rows {
        w.write_record([&r.sample_id, &r.strain_name, &r.values[0], &r.values[1], &r.values[2]]).unwrap();
    }
    w.into_inner().unwrap()
}

fn json_str(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// The rows as `{"samples": [...]}`. Numbers are written as JSON numbers
/// where the text is a plain JSON number literal, otherwise as strings.
pub fn rows_tree(rows: &[StrainRow]) -> Vec<u8> {
    let items: Vec<String> = rows
        .iter()
        .map(|r| {
            let num = |s: &str| {
                let t = s.trim();
                let plain = !t.is_empty() && t.chars().all(|c| c.is_ascii_digit() || c == '.') && !t.starts_with('.');
                if plain && !t.ends_with('.') && !(t.len() > 1 && t.starts_with('0') && !t.starts_with("0.")) {
                    t.to_owned()
                } else {
                    json_str(s)
                }
            };
            format!(
                "{{\"cbd\": {}, \"cbg\": {}, \"sample_id\": {}, \"strain_name\": {}, \"thc\": {}}}",
                num(&r.values[1]),
                num(&r.values[2]),
                json_str(&r.sample_id),
                json_str(&r.strain_name),
                num(&r.values[0])
            )
        })
        .collect();
    format!("{{\"samples\": [\n  {}\n]}}\n", items.join(",\n  ")).into_bytes()
}

/// A hospital patient record and the identifying strings it carries.
pub struct Patient {
    pub record: MetaRecord,
    pub identifiers: Vec<String>,
}

/// Patient records with names, contact details, birth dates and user
/// names. `tag` is embedded in every identifier so leaks are easy to spot.
pub fn patients(rng: &mut Rng, n: usize, tag: &str) -> Vec<Patient> {
    const FIRST: &[&str] = &["Ana", "Ben", "Chloé", "Dmitri", "Eve", "Farid", "Grace", "Hiro"];
    const CONDITIONS: &[&str] = &["chronic pain", "epilepsy", "insomnia", "nausea after chemotherapy", "anxiety"];
    (0..n)
        .map(|i| {
            let first = FIRST.choose(rng).unwrap();
            let name = format!("{first} {tag}{i:04}");
            let email = format!("{}.{tag}{i:04}@example.org", first.to_lowercase());
            let phone = format!("+41{:09}", rng.gen_range(0..1_000_000_000u64));
            let username = format!("user{tag}{i:04}");
            let patient_id = format!("pt_{tag}{i:04}");
            let dob = format!("{}-{:02}-{:02}", rng.gen_range(1930..2006), rng.gen_range(1..13), rng.gen_range(1..29));
            let contact: BTreeMap<String, FieldValue> =
                [("email".to_owned(), FieldValue::text(&email)), ("phone".to_owned(), FieldValue::text(&phone))].into();
            let mut profile = BTreeMap::new();
            profile.insert("name".to_owned(), FieldValue::text(&name));
            profile.insert("contact".to_owned(), FieldValue::Map(contact));
            if rng.gen_bool(0.9) {
                profile.insert("dob".to_owned(), FieldValue::text(&dob));
            }
            profile.insert("sex".to_owned(), FieldValue::text(if rng.gen() { "f" } else { "m" }));
            let mut f = FieldTree::new();
            f.insert("patient_id".into(), FieldValue::text(&patient_id));
            f.insert("username".into(), FieldValue::text(&username));
            f.insert("profile".into(), FieldValue::Map(profile));
            f.insert("condition".into(), FieldValue::text(*CONDITIONS.choose(rng).unwrap()));
            f.insert("severity".into(), FieldValue::Integer(rng.gen_range(0..=10)));
            let record = record("hospital:intake", SubDomain::Hospital, Some("hospital/patient"), t0(), f);
            Patient {
                record,
                identifiers: vec![name, email, phone, username, patient_id, dob],
            }
        })
        .collect()
}
