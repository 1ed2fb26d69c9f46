use std::path::PathBuf;
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn polarlens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polarlens")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn stance_prints_its_table() {
    let dir = tempfile::tempdir().unwrap();
    let archive = fixtures().join("mini2020");
    let out = polarlens(&["stance", "--archive", archive.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let stdout = ok(&out);
    assert!(stdout.starts_with("channel,window,president_elect_videos,biden_videos,stance\n"), "{stdout}");
    assert!(stdout.contains("msnbc,postcall,4,5,0.800000"), "{stdout}");
    assert!(stdout.contains("cnn,postcall,0,0,NA"), "{stdout}");
    assert!(dir.path().join("tables/stance.md").is_file());
}

#[test]
fn embed_train_then_neighbors_and_align() {
    let dir = tempfile::tempdir().unwrap();
    let archive = fixtures().join("mini2020");
    let mut files = Vec::new();
    for ch in ["oann", "newsmax"] {
        let file = dir.path().join(format!("{ch}.vec"));
        let out = polarlens(&[
            "embed", "train", "--archive", archive.to_str().unwrap(), "--channel", ch, "--out",
            file.to_str().unwrap(), "--dim", "16", "--min-count", "3", "--epochs", "3",
        ]);
        assert!(ok(&out).contains("vocabulary"));
        files.push(file);
    }
    let out = polarlens(&["neighbors", files[0].to_str().unwrap(), "fraud", "--k", "3"]);
    assert_eq!(ok(&out).lines().count(), 4);

    let out = polarlens(&[
        "align", files[0].to_str().unwrap(), files[1].to_str().unwrap(), "--min-seeds", "10",
        "--eval-min-count", "10", "--translate", "fraud",
    ]);
    let stdout = ok(&out);
    assert!(stdout.contains("similarity="), "{stdout}");
    assert!(stdout.contains("translate fraud -> "), "{stdout}");
}

#[test]
fn probe_commands_against_a_stub_table() {
    let table = fixtures().join("stub_scorer.json");
    let t = table.to_str().unwrap();
    let out = polarlens(&["election-score", "--stub-table", t, "--models", "oann-after,cnn-after"]);
    assert_eq!(ok(&out), "oann-after\ttrump=0.818182\tbiden=0.181818\ncnn-after\ttrump=0.076923\tbiden=0.923077\n");

    let out = polarlens(&["cloze", "--stub-table", t, "--model", "fox-after", "--top-k", "2"]);
    assert_eq!(ok(&out), "1\tsocialism\t0.150000\n2\tchina\t0.140000\n");

    let out = polarlens(&["nli", "--stub-table", t, "--model", "oann-after", "--premise", "Stop the steal!", "--hypothesis", "h1"]);
    assert!(ok(&out).ends_with("entailed=true\n"));

    let out = polarlens(&["cloze", "--stub-table", t, "--model", "nobody"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nobody"));
}

#[test]
fn bad_input_fails_with_a_message() {
    let out = polarlens(&["run", "--config", "/nonexistent/run.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/run.json"));
    let out = polarlens(&["run", "--config", fixtures().join("run.json").to_str().unwrap(), "--only", "bogus"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown analysis"));
}
