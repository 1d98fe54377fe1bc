use std::collections::BTreeSet;

use cdp_api::policy::{self, Access};
use cdp_testkit::server::{documented_policy, plant, Planted, World, MATRIX_METHODS, PRINCIPALS};

#[test]
fn documented_table_is_the_enforced_table() {
    let documented: BTreeSet<(String, String, Option<Vec<&str>>)> = documented_policy()
        .into_iter()
        .map(|r| (r.method, r.path, r.roles.map(|s| s.iter().map(|x| x.as_str()).collect())))
        .collect();
    let enforced: BTreeSet<(String, String, Option<Vec<&str>>)> = policy::ENDPOINTS
        .iter()
        .map(|e| {
            let roles = match e.access {
                Access::Public => None,
                Access::Roles(r) => {
                    let mut v: Vec<_> = r.to_vec();
                    v.sort();
                    Some(v.iter().map(|x| x.as_str()).collect())
                }
            };
            (e.method.to_owned(), e.path.to_owned(), roles)
        })
        .collect();
    assert_eq!(documented, enforced);
    assert_eq!(policy::METHODS, MATRIX_METHODS);
}

#[tokio::test]
async fn exhaustive_role_path_method_matrix() {
    let w = World::new();
    let rules = documented_policy();
    let run = w.access_matrix(&rules).await;
    let paths: BTreeSet<&str> = rules.iter().map(|r| r.path.as_str()).collect();
    assert_eq!(run.cells, paths.len() * MATRIX_METHODS.len() * PRINCIPALS.len() + 6 * PRINCIPALS.len());
    assert!(run.violations.is_empty(), "{:#?}", run.violations);
}

#[tokio::test]
async fn researcher_reachable_responses_hold_no_planted_identifier() {
    let mut planted = Planted::default();
    let w = World::build(|c, researcher| planted = plant(c, researcher));
    let run = w.researcher_closure(&planted, 20_000).await;
    assert!(run.requests > 200, "{}", run.requests);
    assert!(run.requests < 20_000, "closure did not finish");
    assert!(run.leaks.is_empty(), "{:#?}", run.leaks);

    // the same data is there for the people entitled to it
    let doctor = w.token(cdp_core::hospital::Role::Doctor).await;
    let r = w.call("GET", "/cases?limit=500", Some(&doctor), None).await;
    assert_eq!(r.json["total"], 16);
}

#[tokio::test]
async fn research_cases_are_anonymised() {
    let mut planted = Planted::default();
    let w = World::build(|c, researcher| planted = plant(c, researcher));
    let token = w.token(cdp_core::hospital::Role::Researcher).await;
    let r = w.call("GET", "/research/cases?limit=500", Some(&token), None).await;
    let items = r.json["items"].as_array().unwrap();
    // fifteen planted patients, the seeded patient, and the researcher who
    // registered as a patient
    assert_eq!(items.len(), 17);
    let mut treatments = 0;
    for item in items {
        assert!(item["case"].get("patient_id").is_none());
        assert_eq!(item["case"]["pseudonym"].as_str().unwrap().len(), 64);
        for t in item["treatments"].as_array().unwrap() {
            treatments += 1;
            assert!(t.get("patient_id").is_none());
            assert_eq!(t["pseudonym"], item["case"]["pseudonym"]);
            assert!(t["severity"].is_i64() && t["formulation"].is_string());
        }
    }
    assert_eq!(treatments, 15);
}
