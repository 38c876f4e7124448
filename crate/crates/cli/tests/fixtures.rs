//! The committed fixture files must stay in lockstep with the builder in
//! the core crate — drift here would make the walkthrough in the README
//! silently exercise a different network than the tests do.

use std::path::PathBuf;

use gammasort_core::model::fixture::reference_fixture;
use gammasort_core::model::{evidence_to_json, network_to_json, Evidence};

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn expected_network() -> String {
    network_to_json(&reference_fixture().net)
}

fn expected_evidence() -> String {
    let line = reference_fixture();
    evidence_to_json(&line.net, &Evidence::none().with_value(line.assay, -2.4))
}

#[test]
fn committed_network_matches_the_builder() {
    let committed = std::fs::read_to_string(fixtures_dir().join("sorting-line.json")).unwrap();
    assert_eq!(
        committed,
        expected_network(),
        "fixtures/sorting-line.json is stale; rerun the ignored \
         regenerate_fixture_files test"
    );
}

#[test]
fn committed_evidence_matches_the_builder() {
    let committed = std::fs::read_to_string(fixtures_dir().join("assay.json")).unwrap();
    assert_eq!(committed, expected_evidence(), "fixtures/assay.json is stale");
}

#[test]
fn committed_config_parses_and_points_at_the_fixtures() {
    let text = std::fs::read_to_string(fixtures_dir().join("run.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["network"], "sorting-line.json");
    assert_eq!(doc["evidence"], "assay.json");
    assert_eq!(doc["sensor"], "SS");
    assert_eq!(doc["target"], "SCD");
    assert_eq!(doc["assay"], "ACD");
    assert!(doc["policy"]["error_cost"].as_f64().unwrap() > 0.0);
}

/// Rewrites the committed fixture files from the builder. Run manually:
/// `cargo test -p gammasort-cli --test fixtures -- --ignored`
#[test]
#[ignore = "writes the committed fixture files"]
fn regenerate_fixture_files() {
    let dir = fixtures_dir();
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("sorting-line.json"), expected_network()).unwrap();
    std::fs::write(dir.join("assay.json"), expected_evidence()).unwrap();
}
