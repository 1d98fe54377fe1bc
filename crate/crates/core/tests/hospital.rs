use cdp_core::config::Config;
use cdp_core::hospital::{verify_password, Role};
use cdp_core::model::FieldTree;
use cdp_core::CdpError;
use cdp_testkit::clinic::{self, Clinic, ADMIN, ADMIN_PASSWORD, PASSWORD};
use cdp_testkit::fixture::{write_config, KEY};
use tempfile::TempDir;

fn clinic(key: Option<&[u8]>) -> (TempDir, Clinic) {
    let config_dir = tempfile::tempdir().unwrap();
    write_config(config_dir.path());
    let store = tempfile::tempdir().unwrap();
    let c = Clinic::open(store.path(), Config::load(config_dir.path()).unwrap(), key);
    (store, c)
}

#[test]
fn researcher_request_state_machine() {
    let (_d, mut c) = clinic(Some(KEY));
    clinic::researcher_request_scenario(&mut c);
    let (_d, mut c) = clinic(None);
    clinic::researcher_request_scenario(&mut c);
}

#[test]
fn weekly_forms_regenerate_seven_days_on() {
    let (_d, mut c) = clinic(None);
    clinic::weekly_form_scenario(&mut c);
}

#[test]
fn annotations_are_append_only() {
    let (_d, mut c) = clinic(None);
    clinic::annotation_scenario(&mut c);
}

#[test]
fn out_of_range_scales_are_rejected() {
    let (_d, mut c) = clinic(None);
    clinic::treatment_range_scenario(&mut c);
}

#[test]
fn state_is_rebuilt_from_the_store() {
    let config_dir = tempfile::tempdir().unwrap();
    write_config(config_dir.path());
    let store = tempfile::tempdir().unwrap();
    let (patient, case_id) = {
        let mut c = Clinic::open(store.path(), Config::load(config_dir.path()).unwrap(), None);
        clinic::annotation_scenario(&mut c);
        clinic::treatment_range_scenario(&mut c);
        (c.patient, c.case_id)
    };
    let c = Clinic::open(store.path(), Config::load(config_dir.path()).unwrap(), None);
    assert_eq!(c.patient, patient);
    let doctor = c.platform.authenticate("dr.weber", PASSWORD).unwrap();
    let view = c.platform.case_view(&doctor, &case_id).unwrap();
    assert_eq!(view.case.annotations.len(), 3);
    assert_eq!(c.platform.treatments(&patient, &patient.user_id).unwrap().len(), 3);
}

#[test]
fn registration_rules() {
    let (_d, mut c) = clinic(None);
    let p = &mut c.platform;
    assert!(matches!(p.register("p.huber", PASSWORD, Role::Patient, FieldTree::new()), Err(CdpError::DuplicateUsername(_))));
    assert!(matches!(p.register(ADMIN, PASSWORD, Role::Patient, FieldTree::new()), Err(CdpError::DuplicateUsername(_))));
    assert!(matches!(p.register("short", "123456789", Role::Patient, FieldTree::new()), Err(CdpError::WeakPassword)));
    assert!(matches!(p.register("adm", PASSWORD, Role::Admin, FieldTree::new()), Err(CdpError::RoleNotGrantable(_))));
    assert_eq!(p.authenticate(ADMIN, ADMIN_PASSWORD).unwrap().role, Role::Admin);
    assert!(matches!(p.authenticate(ADMIN, PASSWORD), Err(CdpError::Unauthorized)));
    assert!(matches!(p.authenticate("nobody", PASSWORD), Err(CdpError::Unauthorized)));
    assert!(matches!(p.authenticate("p.huber", "wrong-password"), Err(CdpError::Unauthorized)));
    let digest = &p.state().user_by_name("p.huber").unwrap().password_digest;
    assert!(digest.starts_with("pbkdf2-sha256$1000$"));
    assert!(verify_password(PASSWORD, digest));
}

#[test]
fn treatment_access() {
    let (_d, mut c) = clinic(None);
    let p = &mut c.platform;
    p.submit_treatment(&c.patient, &c.patient.user_id, clinic::treatment("Harlequin flower", 7, 4)).unwrap();
    let other = clinic::register(p, "p.other", Role::Patient, "Olga Other");
    let outsider = clinic::register(p, "dr.out", Role::Doctor, "Otto Out");
    assert_eq!(p.treatments(&c.patient, &c.patient.user_id).unwrap().len(), 1);
    assert_eq!(p.treatments(&c.doctor, &c.patient.user_id).unwrap().len(), 1);
    assert!(matches!(p.treatments(&other, &c.patient.user_id), Err(CdpError::Forbidden(_))));
    assert!(matches!(p.treatments(&outsider, &c.patient.user_id), Err(CdpError::Forbidden(_))));
    assert!(matches!(p.treatments(&c.admin, &c.patient.user_id), Err(CdpError::Forbidden(_))));
    assert!(matches!(p.treatments(&c.patient, "u_missing"), Err(CdpError::UnknownPatient(_))));
}
