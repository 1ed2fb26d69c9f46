use std::path::{Path, PathBuf};

use polarlens::config::{Analysis, RunConfig};
use polarlens::pipeline::{output_digests, run_pipeline, RunManifest, StageStatus, MANIFEST_FILE};
use polarlens::report::header_hash;

fn config(out: &Path) -> (RunConfig, String) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/run.json");
    let (mut cfg, hash) = RunConfig::load(&path).unwrap();
    cfg.output_dir = out.to_path_buf();
    (cfg, hash)
}

fn read_manifest(out: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(out.join(MANIFEST_FILE)).unwrap()).unwrap()
}

#[test]
fn full_run_is_byte_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (cfg_a, hash) = config(a.path());
    let (cfg_b, hash_b) = config(b.path());
    assert_eq!(hash, hash_b, "output_dir must not enter the hash");

    let started = std::time::Instant::now();
    let m1 = run_pipeline(&cfg_a, &hash, &Analysis::ALL).unwrap();
    assert!(started.elapsed().as_secs() < 300);
    let m2 = run_pipeline(&cfg_b, &hash, &Analysis::ALL).unwrap();

    assert!(!m1.partial);
    assert_eq!(read_manifest(a.path()), m1);
    let tables = m1.outputs().filter(|p| p.starts_with("tables/") && p.ends_with(".csv")).count();
    assert!(tables >= 6, "{tables} tables");
    assert_eq!(output_digests(a.path(), &m1).unwrap(), output_digests(b.path(), &m2).unwrap());
    let artifacts = |m: &RunManifest| m.stages.iter().flat_map(|s| s.artifacts.clone()).collect::<Vec<_>>();
    assert_eq!(artifacts(&m1), artifacts(&m2));
    for rel in m1.outputs() {
        assert_eq!(header_hash(&a.path().join(rel)).as_deref(), Some(hash.as_str()), "{rel}");
    }
}

#[test]
fn empty_selection_writes_an_empty_manifest() {
    let out = tempfile::tempdir().unwrap();
    let (cfg, hash) = config(out.path());
    let m = run_pipeline(&cfg, &hash, &[]).unwrap();
    assert_eq!(m.outputs().count(), 0);
    assert!(m.stages.is_empty());
    assert_eq!(read_manifest(out.path()), m);
}

#[test]
fn failing_stage_is_named_and_flags_the_manifest() {
    let out = tempfile::tempdir().unwrap();
    let (mut cfg, _) = config(out.path());
    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    cfg.probe.scorer.url = Some(format!("http://{dead}"));
    let hash = cfg.hash();
    let err = run_pipeline(&cfg, &hash, &[Analysis::Stance, Analysis::Probe, Analysis::Export]).unwrap_err();
    assert_eq!(err.stage, "probe");

    let m = read_manifest(out.path());
    assert!(m.partial);
    let status: Vec<_> = m.stages.iter().map(|s| (s.name.as_str(), s.status)).collect();
    assert_eq!(status, [("load", StageStatus::Ok), ("stance", StageStatus::Ok), ("probe", StageStatus::Failed)]);
    assert!(m.stages[2].error.as_deref().unwrap().contains("transport"), "{:?}", m.stages[2].error);
}

#[test]
fn selection_runs_in_canonical_order() {
    let out = tempfile::tempdir().unwrap();
    let (cfg, hash) = config(out.path());
    let m = run_pipeline(&cfg, &hash, &[Analysis::Migration, Analysis::Stance]).unwrap();
    let names: Vec<_> = m.stages.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["load", "stance", "migration"]);
    let migration = std::fs::read_to_string(out.path().join("tables/migration.csv")).unwrap();
    assert!(migration.lines().any(|l| l.starts_with("fox,newsmax,23,T_before,0.885000,0.115000")), "{migration}");
}
