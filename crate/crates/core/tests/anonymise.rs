use cdp_core::hospital::{anonymise, pseudonym, AnonymisePolicy};
use cdp_core::model::{FieldPath, FieldValue};
use cdp_testkit::checks::anonymisation;
use cdp_testkit::corpus::patients;
use cdp_testkit::sha::{hex, hmac_sha256};

#[test]
fn five_hundred_patients() {
    let bad = anonymisation(31, 500, b"test-key");
    assert!(bad.is_empty(), "{} violations: {:?}", bad.len(), &bad[..bad.len().min(5)]);
}

#[test]
fn pseudonym_is_hmac_sha256() {
    // RFC 4231 test case 2
    assert_eq!(
        hex(&hmac_sha256(b"Jefe", b"what do ya want for nothing?")),
        "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"
    );
    assert_eq!(pseudonym(b"Jefe", "what do ya want for nothing?"), "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843");
    let long_key = [0xaau8; 131];
    assert_eq!(pseudonym(&long_key, "pt-1"), hex(&hmac_sha256(&long_key, b"pt-1")));
}

#[test]
fn birth_date_becomes_year() {
    let people = patients(&mut cdp_testkit::rng(1), 40, "Yr");
    for p in people {
        let a = anonymise(&p.record, &AnonymisePolicy::default(), b"k").unwrap();
        let year = FieldPath::parse("profile.dob_year").unwrap();
        match p.record.text("profile.dob") {
            Some(dob) => assert_eq!(a.get(&year), Some(&FieldValue::Integer(dob[..4].parse().unwrap()))),
            None => assert_eq!(a.get(&year), None),
        }
        assert_eq!(a.text("condition"), p.record.text("condition"));
        assert_eq!(a.get(&FieldPath::parse("profile.sex").unwrap()), p.record.get(&FieldPath::parse("profile.sex").unwrap()));
    }
}

#[test]
fn non_hospital_records_are_refused() {
    let docs = cdp_testkit::corpus::search_corpus(&mut cdp_testkit::rng(1), 1);
    assert!(anonymise(&docs[0], &AnonymisePolicy::default(), b"k").is_err());
}
