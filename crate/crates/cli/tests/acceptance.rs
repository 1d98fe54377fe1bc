//! One line per acceptance criterion, each at its stated tolerance. The
//! test fails if any criterion does.

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use cdp_api::policy::{self, Access};
use cdp_core::config::Config;
use cdp_core::hospital::Role;
use cdp_core::store::Store;
use cdp_testkit::checks;
use cdp_testkit::clinic::{self, Clinic};
use cdp_testkit::fixture::{self, documents, tamper_sweep, write_config};
use cdp_testkit::server::{documented_policy, plant, Planted, World, MATRIX_METHODS, PASSWORD};
use serde_json::{json, Value};

type Check = fn() -> Vec<String>;
type Scenario = fn(&mut Clinic);

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap()
}

fn timed(limit: Duration, f: impl FnOnce() -> Vec<String>) -> Vec<String> {
    let start = Instant::now();
    let mut bad = f();
    let took = start.elapsed();
    if took >= limit {
        bad.push(format!("took {took:?}, limit {limit:?}"));
    }
    bad
}

fn round_trip() -> Vec<String> {
    timed(Duration::from_secs(10), || checks::round_trip(1000))
}

fn heterogeneity() -> Vec<String> {
    checks::heterogeneity(50)
}

fn cdp(store: &Path, config: &Path, args: &[&str]) -> (Option<i32>, Value) {
    let out = Command::new(env!("CARGO_BIN_EXE_cdp"))
        .arg("--store")
        .arg(store)
        .arg("--config")
        .arg(config)
        .args(args)
        .env("CDP_PSEUDONYM_KEY", std::str::from_utf8(fixture::KEY).unwrap())
        .output()
        .unwrap();
    (out.status.code(), serde_json::from_slice(&out.stdout).unwrap_or(Value::Null))
}

fn reproducibility() -> Vec<String> {
    let mut bad = Vec::new();
    let config = tempfile::tempdir().unwrap();
    let files = write_config(config.path());
    let store = tempfile::tempdir().unwrap();
    let inputs = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| cdp(store.path(), config.path(), args);

    for (name, bytes, spec, provider) in documents() {
        let f = inputs.path().join(name);
        fs::write(&f, bytes).unwrap();
        let (code, report) = run(&["ingest", f.to_str().unwrap(), "--spec", spec, "--provider", provider]);
        if code != Some(0) || report["status"] != "stored" {
            bad.push(format!("ingest {name}: exit {code:?} {report}"));
        }
    }
    for dataset in ["high-potency", "lab-clean"] {
        if run(&["materialize", "--dataset", dataset]).0 != Some(0) {
            bad.push(format!("materialize {dataset} failed"));
        }
    }
    if run(&["reindex"]).0 != Some(0) {
        bad.push("reindex failed".into());
    }
    let (code, outcome) = run(&["replay", "--verify"]);
    if code != Some(0) || outcome["identical"] != true {
        bad.push(format!("replay --verify on the untouched config: exit {code:?} {outcome}"));
    }

    // one flip per file through the binary
    for f in &files {
        let original = fs::read(f).unwrap();
        let mut b = original.clone();
        b[original.len() / 2] ^= 0x01;
        fs::write(f, &b).unwrap();
        let (code, outcome) = run(&["replay", "--verify"]);
        if code == Some(0) || outcome["identical"] == true {
            bad.push(format!("{} tampered, replay still verified", f.display()));
        }
        fs::write(f, &original).unwrap();
    }

    // every byte of every file, in process
    let opened = Store::open_read_only(store.path()).unwrap();
    let sweep = tamper_sweep(&opened, config.path());
    if sweep.flips < 1000 {
        bad.push(format!("only {} flips", sweep.flips));
    }
    bad.extend(sweep.survived.iter().map(|s| format!("flip at {s} replayed cleanly")));
    bad
}

fn search() -> Vec<String> {
    timed(Duration::from_secs(30), || checks::search_oracle(7))
}

fn documented_matches_enforced() -> Vec<String> {
    let documented: BTreeSet<String> = documented_policy()
        .into_iter()
        .map(|r| format!("{} {} {:?}", r.method, r.path, r.roles.map(|s| s.into_iter().collect::<Vec<_>>())))
        .collect();
    let enforced: BTreeSet<String> = policy::ENDPOINTS
        .iter()
        .map(|e| {
            let roles = match e.access {
                Access::Public => None,
                Access::Roles(r) => Some(r.iter().copied().collect::<BTreeSet<Role>>().into_iter().collect::<Vec<_>>()),
            };
            format!("{} {} {roles:?}", e.method, e.path)
        })
        .collect();
    let mut bad: Vec<String> = documented.symmetric_difference(&enforced).map(|r| format!("documented and enforced differ: {r}")).collect();
    if policy::METHODS != MATRIX_METHODS {
        bad.push("method set differs".into());
    }
    bad
}

fn access() -> Vec<String> {
    let mut bad = documented_matches_enforced();
    runtime().block_on(async {
        let w = World::new();
        bad.extend(w.access_matrix(&documented_policy()).await.violations);

        let mut planted = Planted::default();
        let w = World::build(|c, researcher| planted = plant(c, researcher));
        if planted.identifiers.len() != 100 {
            bad.push(format!("{} identifiers planted", planted.identifiers.len()));
        }
        let run = w.researcher_closure(&planted, 20_000).await;
        if run.requests >= 20_000 {
            bad.push("closure did not finish".into());
        }
        bad.extend(run.leaks);
    });
    bad
}

fn anonymisation() -> Vec<String> {
    checks::anonymisation(11, 500, fixture::KEY)
}

fn hospital() -> Vec<String> {
    let scenarios: [(&str, Scenario); 4] = [
        ("researcher request", clinic::researcher_request_scenario),
        ("weekly form", clinic::weekly_form_scenario),
        ("annotations", clinic::annotation_scenario),
        ("treatment range", clinic::treatment_range_scenario),
    ];
    let mut bad = Vec::new();
    for (name, scenario) in scenarios {
        let config = tempfile::tempdir().unwrap();
        write_config(config.path());
        let store = tempfile::tempdir().unwrap();
        let result = catch_unwind(AssertUnwindSafe(|| {
            let mut c = Clinic::open(store.path(), Config::load(config.path()).unwrap(), Some(fixture::KEY));
            scenario(&mut c);
        }));
        if let Err(e) = result {
            bad.push(format!("{name}: {}", panic_text(&e)));
        }
    }
    bad
}

fn strain() -> Vec<String> {
    let mut bad = checks::strain_similarity_properties(3, 10_000);
    bad.extend(checks::strain_oracles(5));
    bad.extend(checks::strain_mislabeled(20));
    bad
}

fn auth() -> Vec<String> {
    let mut bad = Vec::new();
    runtime().block_on(async {
        let w = World::new();
        let first = w.login("p.huber", PASSWORD).await;
        let refresh = |t: &str| json!({ "refresh_token": t });
        let r = w.call("POST", "/auth/refresh", None, Some(&refresh(&first.refresh_token))).await;
        if r.status.as_u16() != 200 {
            bad.push(format!("refresh: {}", r.status));
        }
        let r = w.call("POST", "/auth/refresh", None, Some(&refresh(&first.refresh_token))).await;
        if r.status.as_u16() != 401 {
            bad.push(format!("replayed refresh token: {}", r.status));
        }

        let pair = w.login("dr.weber", PASSWORD).await;
        w.clock.advance(cdp_api::ACCESS_TTL_SECS - 1);
        let r = w.call("GET", "/users/me", Some(&pair.access_token), None).await;
        if r.status.as_u16() != 200 {
            bad.push(format!("access token one second before expiry: {}", r.status));
        }
        w.clock.advance(1);
        let r = w.call("GET", "/users/me", Some(&pair.access_token), None).await;
        if r.status.as_u16() != 401 || r.json["error"] != "token_expired" {
            bad.push(format!("access token at expiry: {} {}", r.status, r.text));
        }

        let attempts = [
            json!({"username": "p.huber", "password": "wrong-password"}),
            json!({"username": "nobody-here", "password": PASSWORD}),
            json!({"username": "admin", "password": PASSWORD}),
            json!({"username": "", "password": ""}),
        ];
        let mut bodies = BTreeSet::new();
        for a in &attempts {
            let r = w.call("POST", "/auth/login", None, Some(a)).await;
            if r.status.as_u16() != 401 {
                bad.push(format!("login {a}: {}", r.status));
            }
            bodies.insert(r.text);
        }
        if bodies.len() != 1 {
            bad.push(format!("{} distinct login failure bodies", bodies.len()));
        }
    });
    bad
}

fn panic_text(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

#[test]
fn acceptance() {
    let criteria: [(&str, Check); 9] = [
        ("meta-format round-trip", round_trip),
        ("heterogeneity equivalence", heterogeneity),
        ("reproducibility", reproducibility),
        ("search oracle", search),
        ("access matrix and leak closure", access),
        ("anonymisation", anonymisation),
        ("hospital workflow", hospital),
        ("strain analytics", strain),
        ("auth", auth),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let start = Instant::now();
        let bad = match catch_unwind(check) {
            Ok(bad) => bad,
            Err(e) => vec![format!("panicked: {}", panic_text(&e))],
        };
        let took = start.elapsed();
        if bad.is_empty() {
            println!("PASS {name} ({took:.2?})");
        } else {
            println!("FAIL {name} ({took:.2?}): {} violation(s)", bad.len());
            for b in bad.iter().take(10) {
                println!("     {b}");
            }
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
