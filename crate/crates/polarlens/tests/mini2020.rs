//! The bundled mini2020 archive against the values its oracle script wrote.

use std::collections::BTreeSet;
use std::path::PathBuf;

use polarlens::io::load_archive;
use polarlens_core::migration::{select_cohort, temporal_share, CohortSpec, ShareWeighting};
use polarlens_core::ngram::{default_stance_variants, stance_measure};
use polarlens_core::textnorm::normalize;
use polarlens_core::{ChannelArchive, TimeWindow};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn archive() -> ChannelArchive {
    load_archive(&fixture("mini2020")).expect("mini2020 loads")
}

fn json(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

fn strings(v: &Value) -> Vec<String> {
    v.as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect()
}

#[test]
fn per_channel_totals_match_manifest() {
    let a = archive();
    let manifest = json("mini2020/manifest.json");
    let totals = &manifest["totals"];
    assert_eq!(a.channels().len() as u64, totals["channels"].as_u64().unwrap());
    assert_eq!(a.videos().len(), 60);
    assert_eq!(a.comments().len(), 3000);
    for (ch, want) in manifest["channels"].as_object().unwrap() {
        let videos: Vec<_> = a.channel_videos(ch).unwrap().collect();
        let comments: usize = videos.iter().map(|v| a.video_comments(v).count()).sum();
        let transcripts = videos.iter().filter(|v| v.transcript.is_some()).count();
        let snapshots = a.subscribers().iter().filter(|s| &s.channel_id == ch).count();
        assert_eq!(videos.len() as u64, want["videos"].as_u64().unwrap(), "{ch} videos");
        assert_eq!(comments as u64, want["comments"].as_u64().unwrap(), "{ch} comments");
        assert_eq!(transcripts as u64, want["transcripts"].as_u64().unwrap(), "{ch} transcripts");
        assert_eq!(snapshots as u64, want["subscriber_snapshots"].as_u64().unwrap(), "{ch} snapshots");
    }
}

#[test]
fn fox_after_slice_matches_date_filter() {
    let a = archive();
    let expected = json("mini2020/expected.json");
    let slice = a.slice_window("fox", &TimeWindow::after()).unwrap();
    let videos: BTreeSet<String> = slice.videos.iter().map(|v| v.video_id.clone()).collect();
    let comments: BTreeSet<String> = slice.comments.iter().map(|c| c.comment_id.clone()).collect();
    assert_eq!(videos, strings(&expected["fox_after"]["video_ids"]).into_iter().collect());
    assert_eq!(comments, strings(&expected["fox_after"]["comment_ids"]).into_iter().collect());

    let before = a.slice_window("fox", &TimeWindow::before()).unwrap();
    assert!(before.videos.iter().all(|v| !videos.contains(&v.video_id)));
}

#[test]
fn stance_matches_hand_count() {
    let a = archive();
    let expected = json("mini2020/expected.json");
    let variants = default_stance_variants();
    for (ch, want) in expected["stance_postcall"].as_object().unwrap() {
        let den = want["biden_videos"].as_u64().unwrap() as usize;
        let num = want["president_elect_videos"].as_u64().unwrap() as usize;
        match stance_measure(&a, ch, &TimeWindow::postcall(), &variants) {
            Ok(r) => assert_eq!((r.numerator, r.denominator), (num, den), "{ch}"),
            Err(e) => {
                assert_eq!(den, 0, "{ch}: {e}");
                assert!(matches!(e, polarlens_core::Error::UndefinedMeasure(_)));
            }
        }
    }
}

#[test]
fn cohort_matches_brute_force_tally() {
    let a = archive();
    let expected = &json("mini2020/expected.json")["cohort_fox_newsmax"];
    let spec = CohortSpec::new("fox", "newsmax").unwrap();
    assert_eq!(spec.min_total as u64, expected["min_total"].as_u64().unwrap());
    let cohort = select_cohort(&a, &spec, &TimeWindow::t128()).unwrap();
    assert_eq!(cohort, strings(&expected["users"]).into_iter().collect());

    let (before, after) =
        temporal_share(&a, &cohort, &spec, &TimeWindow::before(), &TimeWindow::after(), ShareWeighting::Comments)
            .unwrap();
    for (report, label) in [(before, "before"), (after, "after")] {
        let want = &expected["comment_counts"][label];
        assert_eq!(report.count_a as u64, want["fox"].as_u64().unwrap());
        assert_eq!(report.count_b as u64, want["newsmax"].as_u64().unwrap());
        let share = report.shares.unwrap().0;
        assert!((share - want["fox_share"].as_f64().unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn normalized_tokens_match_reference_tokenizer() {
    let a = archive();
    let expected = json("mini2020/expected.json");
    let want = expected["first_100_comment_tokens"].as_array().unwrap();
    assert_eq!(want.len(), 100);
    for (c, w) in a.comments().iter().zip(want) {
        assert_eq!(normalize(&c.text), strings(w), "{}", c.comment_id);
    }
}
