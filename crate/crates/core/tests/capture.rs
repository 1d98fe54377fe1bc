use cdp_core::capture::{
    apply_mapping, coerce, detect_structure, parse_delimited, parse_tree, CaptureError, Coercion, MappingInput,
    MappingRule, MappingSpec, RawDocument, Row, SourceFormat, DELIMITED, TREE_JSON, TREE_XML,
};
use cdp_core::model::{FieldPath, FieldValue, StructureClass, SubDomain};
use cdp_testkit::{rng, t0, Rng};
use rand::seq::SliceRandom;
use rand::Rng as _;

const HEADERS: &[&str] = &[
    "sample_id", "strain", "thc", "cbd", "cbg", "batch", "grower", "date", "notes", "lab", "Patient ID", "dose mg",
    "THC%", "effect",
];

fn cell(rng: &mut Rng) -> String {
    match rng.gen_range(0..6) {
        0 => format!("{:.2}", rng.gen_range(0.0..40.0)),
        1 => rng.gen_range(0..1000).to_string(),
        2 => ["OG Kush", "Blue Dream", "Harlequin", "n/a", ""].choose(rng).unwrap().to_string(),
        3 => "contains, a comma; and | pipe".into(),
        4 => "line one\nline two".into(),
        _ => format!("2024-0{}-1{}", rng.gen_range(1..10), rng.gen_range(0..10)),
    }
}

fn table(rng: &mut Rng) -> Vec<u8> {
    let d = *b",\t;|".choose(rng).unwrap();
    let cols = rng.gen_range(2..=7);
    let mut header: Vec<&str> = HEADERS.to_vec();
    header.shuffle(rng);
    header.truncate(cols);
    let mut w = csv::WriterBuilder::new().delimiter(d).from_writer(Vec::new());
    w.write_record(&header).unwrap();
    for _ in 0..rng.gen_range(1..25) {
        let row: Vec<String> = (0..cols).map(|_| cell(rng)).collect();
        w.write_record(&row).unwrap();
    }
    w.into_inner().unwrap()
}

const SENTENCES: &[&str] = &[
    "The patient reported less pain after the second week.",
    "Dosage was increased to 10 mg, taken twice daily.",
    "No adverse effects were observed; sleep improved.",
    "Strain names are not reliable indicators of genetic identity.",
    "Samples were stored at 4 degrees, then analysed by HPLC.",
    "Follow-up is scheduled in three months.",
    "Why does the CBD ratio matter here?",
    "Results: inconclusive, see appendix B.",
];

fn non_table(rng: &mut Rng, kind: usize) -> Vec<u8> {
    match kind % 10 {
        0 | 1 => {
            // prose paragraphs
            let lines: Vec<String> = (0..rng.gen_range(1..8))
                .map(|_| {
                    let n = rng.gen_range(1..4);
                    (0..n).map(|_| *SENTENCES.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
                })
                .collect();
            lines.join("\n").into_bytes()
        }
        2 => {
            // one value per line
            let lines: Vec<String> = (0..rng.gen_range(2..20)).map(|_| format!("{:.1}", rng.gen_range(0.0..30.0))).collect();
            lines.join("\n").into_bytes()
        }
        3 => {
            // log output
            let lines: Vec<String> = (0..rng.gen_range(2..15))
                .map(|i| format!("2024-03-0{} 12:00:{i:02} INFO worker {} finished batch in {} ms", i % 9 + 1, rng.gen_range(1..9), rng.gen_range(5..500)))
                .collect();
            lines.join("\n").into_bytes()
        }
        4 => {
            let mut b = b"%PDF-1.7\n%\xe2\xe3\xcf\xd3\n1 0 obj\n<< /Type /Catalog >>\nendobj\n".to_vec();
            b.extend((0..rng.gen_range(10..200)).map(|_| rng.gen::<u8>()));
            b
        }
        5 => {
            let magic: &[u8] = [&b"PK\x03\x04"[..], b"\x89PNG\r\n\x1a\n", b"\xFF\xD8\xFF\xE0", b"GIF89a"].choose(rng).unwrap();
            let mut b = magic.to_vec();
            b.extend_from_slice(b"a,b,c\n1,2,3\n4,5,6\n");
            b
        }
        6 => (0..rng.gen_range(1..300)).map(|_| rng.gen::<u8>() | 0x80).collect(),
        7 => format!("{{\"sample\": \"S-{}\", \"thc\": 12.5,", rng.gen_range(0..99)).into_bytes(),
        8 => {
            // markdown
            format!(
                "# Notes {}\n\nSome *emphasis*, and a list:\n\n- first item\n- second, longer item\n",
                rng.gen_range(0..99)
            )
            .into_bytes()
        }
        _ => {
            // key: value settings
            let lines: Vec<String> = (0..rng.gen_range(2..10)).map(|i| format!("setting_{i}: {}", rng.gen_range(0..100))).collect();
            lines.join("\n").into_bytes()
        }
    }
}

#[test]
fn sniffer_separates_tables_from_non_tables() {
    let mut rng = rng(7);
    let mut misses = Vec::new();
    for i in 0..100 {
        let t = table(&mut rng);
        if detect_structure(&t) != (StructureClass::Structured, DELIMITED) {
            misses.push(format!("table {i}: {:?}", String::from_utf8_lossy(&t)));
        }
        let n = non_table(&mut rng, i);
        if detect_structure(&n).1 == DELIMITED {
            misses.push(format!("non-table {i}: {:?}", String::from_utf8_lossy(&n)));
        }
    }
    assert!(misses.is_empty(), "{} misclassified:\n{}", misses.len(), misses.join("\n"));
}

#[test]
fn detect_structure_examples() {
    assert_eq!(detect_structure(br#"{"a":1}"#), (StructureClass::SemiStructured, TREE_JSON));
    assert_eq!(detect_structure(b"%PDF-1.7 ..."), (StructureClass::Unstructured, "opaque"));
    assert_eq!(detect_structure(b"name,thc\nOG-1,12.5\nOG-2,11.0"), (StructureClass::Structured, DELIMITED));
    assert_eq!(detect_structure(b"<strain><thc>12</thc></strain>"), (StructureClass::SemiStructured, TREE_XML));
}

fn nasty_field(rng: &mut Rng, d: char) -> String {
    let pieces = ["a", "b c", "\"", "\"\"", "\n", "\r\n", " ", "é", "x\"y", "", "12.5"];
    let mut s: String = (0..rng.gen_range(0..4)).map(|_| *pieces.choose(rng).unwrap()).collect();
    if rng.gen_bool(0.3) {
        s.push(d);
    }
    s
}

/// The csv crate is the reference reader for the quoting convention.
#[test]
fn delimited_reader_agrees_with_csv_crate() {
    let mut rng = rng(11);
    for case in 0..200 {
        let d = *[',', ';', '\t', '|'].choose(&mut rng).unwrap();
        let cols = rng.gen_range(2..6);
        let header: Vec<String> = (0..cols).map(|i| format!("h{i}{}", if rng.gen_bool(0.3) { d.to_string() } else { String::new() })).collect();
        let mut w = csv::WriterBuilder::new().delimiter(d as u8).from_writer(Vec::new());
        w.write_record(&header).unwrap();
        for _ in 0..rng.gen_range(0..8) {
            let row: Vec<String> = (0..cols).map(|_| nasty_field(&mut rng, d)).collect();
            w.write_record(&row).unwrap();
        }
        let bytes = w.into_inner().unwrap();

        let mut r = csv::ReaderBuilder::new().delimiter(d as u8).from_reader(bytes.as_slice());
        let hdr: Vec<String> = r.headers().unwrap().iter().map(str::to_owned).collect();
        let expected: Vec<Row> = r
            .records()
            .map(|rec| hdr.iter().cloned().zip(rec.unwrap().iter().map(str::to_owned)).collect())
            .collect();
        let got = parse_delimited(&bytes, d).unwrap_or_else(|e| panic!("case {case}: {e}\n{:?}", String::from_utf8_lossy(&bytes)));
        assert_eq!(got, expected, "case {case}: {:?}", String::from_utf8_lossy(&bytes));
    }
}

#[test]
fn delimited_examples() {
    let row = |p: &[(&str, &str)]| p.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<Row>();
    assert_eq!(parse_delimited(b"a,b\n1,2", ',').unwrap(), vec![row(&[("a", "1"), ("b", "2")])]);
    assert_eq!(parse_delimited(b"a,b\n\"x,y\",2", ',').unwrap(), vec![row(&[("a", "x,y"), ("b", "2")])]);
    assert_eq!(parse_delimited(b"", ','), Err(CaptureError::MissingHeader));
    assert!(matches!(parse_delimited(b"a,b\n1,2\n3", ','), Err(CaptureError::RaggedRow { line: 3, .. })));
}

#[test]
fn tree_examples() {
    let m = |pairs: Vec<(&str, FieldValue)>| FieldValue::Map(pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect());
    assert_eq!(parse_tree(br#"{"a":1}"#, TREE_JSON).unwrap(), m(vec![("a", FieldValue::Integer(1))]));
    assert_eq!(
        parse_tree(b"<strain><thc>12</thc></strain>", TREE_XML).unwrap(),
        m(vec![("strain", m(vec![("thc", FieldValue::text("12"))]))])
    );
    match parse_tree(br#"{"a":"#, TREE_JSON) {
        Err(CaptureError::Parse { offset, .. }) => assert_eq!(offset, 5),
        other => panic!("{other:?}"),
    }
}

fn spec(rules: Vec<MappingRule>) -> MappingSpec {
    MappingSpec {
        spec_id: "t".into(),
        source_format: SourceFormat::Delimited,
        rules,
        target_sub_domain: SubDomain::Grower,
        schema_ref: "strain/profile".into(),
        record_path: None,
    }
}

fn rule(src: &str, target: &str, coercion: Coercion, required: bool) -> MappingRule {
    MappingRule {
        source_path: src.into(),
        target_path: FieldPath::parse(target).unwrap(),
        coercion,
        required,
    }
}

fn doc() -> RawDocument {
    RawDocument::new(b"x".to_vec(), None, t0(), "grower:farm-1")
}

#[test]
fn mapping_examples() {
    let row: Row = [("THC%".to_owned(), "12.5".to_owned())].into();
    let s = spec(vec![rule("THC%", "cannabinoids.thc_pct", Coercion::ToDecimal, true)]);
    let r = apply_mapping(MappingInput::Row(&row), &s, &doc(), StructureClass::Structured).unwrap();
    assert_eq!(r.get(&FieldPath::parse("cannabinoids.thc_pct").unwrap()), Some(&FieldValue::Decimal(12.5)));

    let empty = Row::new();
    match apply_mapping(MappingInput::Row(&empty), &s, &doc(), StructureClass::Structured) {
        Err(CaptureError::Mapping { missing }) => assert_eq!(missing, vec!["THC%".to_owned()]),
        other => panic!("{other:?}"),
    }

    let bad: Row = [("THC%".to_owned(), "twelve".to_owned())].into();
    assert!(matches!(
        apply_mapping(MappingInput::Row(&bad), &s, &doc(), StructureClass::Structured),
        Err(CaptureError::Coercion { .. })
    ));

    // identity mapping over a tree
    let tree = parse_tree(br#"{"a":{"b":[1,"x",null]},"c":true}"#, TREE_JSON).unwrap();
    let id = MappingSpec {
        source_format: SourceFormat::Tree,
        ..spec(vec![rule("a", "a", Coercion::None, true), rule("c", "c", Coercion::None, true)])
    };
    let r = apply_mapping(MappingInput::Tree(&tree), &id, &doc(), StructureClass::SemiStructured).unwrap();
    assert_eq!(FieldValue::Map(r.fields().clone()), tree);
}

/// Reference conversion: serde_json's correctly rounded float parser.
fn reference_decimal(s: &str) -> Option<f64> {
    serde_json::from_str::<f64>(s.trim()).ok()
}

#[test]
fn decimal_coercion_matches_reference_parser() {
    let mut rng = rng(3);
    for _ in 0..5000 {
        let x: f64 = match rng.gen_range(0..3) {
            0 => rng.gen_range(-1000.0..1000.0),
            1 => f64::from_bits(rng.gen::<u64>() & !(0x7ffu64 << 52) | ((rng.gen_range(900u64..1150)) << 52)),
            _ => rng.gen_range(0..100_000) as f64 / 100.0,
        };
        let text = match rng.gen_range(0..4) {
            0 => format!("{x}"),
            1 => format!("{x:e}"),
            2 => format!("{x:.4}"),
            _ => format!("  {x}\t"),
        };
        let got = coerce(&FieldValue::text(&text), Coercion::ToDecimal);
        let want = reference_decimal(&text).map(FieldValue::Decimal);
        assert_eq!(got, want, "{text:?}");
    }
    for s in ["", "abc", "1.2.3", "NaN", "inf", "1e999"] {
        assert_eq!(coerce(&FieldValue::text(s), Coercion::ToDecimal), None, "{s:?}");
    }
}

#[test]
fn integer_and_boolean_coercion() {
    let c = |s: &str, k| coerce(&FieldValue::text(s), k);
    assert_eq!(c(" 42 ", Coercion::ToInteger), Some(FieldValue::Integer(42)));
    assert_eq!(c("4.2", Coercion::ToInteger), None);
    assert_eq!(coerce(&FieldValue::Decimal(7.0), Coercion::ToInteger), Some(FieldValue::Integer(7)));
    assert_eq!(c("Yes", Coercion::ToBoolean), Some(FieldValue::Bool(true)));
    assert_eq!(c("0", Coercion::ToBoolean), Some(FieldValue::Bool(false)));
    assert_eq!(c("maybe", Coercion::ToBoolean), None);
    assert_eq!(c("  x ", Coercion::TrimText), Some(FieldValue::text("x")));
}

/// 50 rows as delimited text and as a tree document, through the two
/// configured strain specs: field trees must match pairwise.
#[test]
fn delimited_and_tree_sources_yield_equal_field_trees() {
    for seed in [1, 2, 3] {
        let bad = cdp_testkit::checks::heterogeneity(seed);
        assert!(bad.is_empty(), "seed {seed}: {bad:?}");
    }
}
