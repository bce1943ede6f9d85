use std::fs;
use std::path::{Path, PathBuf};

use eduqa::error::Error;
use eduqa::formats::{load_cvqa, load_tqa, load_videos, save_cvqa, save_tqa, save_videos};
use eduqa_core::corpus::{count_by_type, QuestionType};
use proptest::prelude::*;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn golden_fixture_loads() {
    let (corpus, warnings) = load_videos(&fixture("golden/videos.jsonl")).unwrap();
    assert!(warnings.is_empty(), "{warnings:?}");
    assert_eq!(corpus.len(), 20);
    let tqa = load_tqa(&fixture("golden/tqa.json")).unwrap();
    assert_eq!(tqa.topics().len(), 20);
    assert_eq!(tqa.questions().len(), 40);
    for ch in corpus.channels() {
        let n = corpus.videos().iter().filter(|v| v.channel_id == ch.channel_id).count();
        assert_eq!(ch.n_videos(), n);
    }
}

#[test]
fn earth_science_lesson_has_24_questions() {
    let tqa = load_tqa(&fixture("tqa/earth_science.json")).unwrap();
    assert_eq!(tqa.lessons().len(), 1);
    assert_eq!(tqa.lessons()[0].title, "Earth science and its branches");
    assert_eq!(tqa.topics().len(), 5);
    assert_eq!(tqa.questions().len(), 24);
    assert_eq!(
        tqa.question_counts(),
        vec![("earth_science_and_its_branches".to_string(), 24)]
    );
    let q = tqa.question("es01").unwrap();
    assert_eq!(q.text, "A geologist would be most likely to investigate how");
    assert_eq!(q.gold(), "mountains form.");
}

#[test]
fn labeled_row_parses_timestamp() {
    let recs = load_cvqa(&fixture("cvqa/labeled.jsonl")).unwrap();
    assert_eq!(recs.len(), 4);
    let r = &recs[0];
    assert_eq!(
        (r.video_id.as_str(), r.question.as_str(), r.answer.as_str(), r.time_s),
        ("QP0uqR7A1WQ", "What is at the center of an atom?", "Nucleus", 35)
    );
    assert_eq!(recs[3].time_s, 120);
}

#[test]
fn category_fixture_counts() {
    let recs = load_cvqa(&fixture("cvqa/categories_622.jsonl")).unwrap();
    let counts = count_by_type(&recs);
    assert_eq!(counts[&QuestionType::Simple], 502);
    assert_eq!(counts[&QuestionType::Complex], 120);
}

#[test]
fn round_trips_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = load_videos(&fixture("golden/videos.jsonl")).unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    save_videos(&corpus, &a).unwrap();
    save_videos(&load_videos(&a).unwrap().0, &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let tqa = load_tqa(&fixture("golden/tqa.json")).unwrap();
    save_tqa(&tqa, &a).unwrap();
    save_tqa(&load_tqa(&a).unwrap(), &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let recs = load_cvqa(&fixture("cvqa/categories_622.jsonl")).unwrap();
    save_cvqa(&recs, &a).unwrap();
    save_cvqa(&load_cvqa(&a).unwrap(), &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(load_cvqa(&a).unwrap(), recs);
}

#[test]
fn video_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ok = r#"{"video_id":"a","channel_id":"c","transcript":"t","captions":["x","y"],"duration_min":3}"#;
    let p = write(dir.path(), "w.jsonl", &format!("{ok}\n"));
    let (c, w) = load_videos(&p).unwrap();
    assert_eq!(c.len(), 1);
    assert_eq!(w.len(), 1);
    assert!(w[0].message.contains("2 captions for a 3-minute video"));

    let missing = write(
        dir.path(),
        "m.jsonl",
        &format!("{ok}\n{{\"video_id\":\"b\",\"channel_id\":\"c\"}}\n"),
    );
    let e = load_videos(&missing).unwrap_err();
    assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
    assert!(e.to_string().contains("transcript"), "{e}");

    let dup = write(dir.path(), "d.jsonl", &format!("{ok}\n{ok}\n"));
    assert!(load_videos(&dup).unwrap_err().to_string().contains("duplicate"));

    let empty = write(
        dir.path(),
        "e.jsonl",
        r#"{"video_id":"a","channel_id":"c","transcript":"  "}"#,
    );
    let e = load_videos(&empty).unwrap_err();
    assert!(matches!(e, Error::Parse { line: 1, .. }), "{e}");
}

#[test]
fn tqa_and_cvqa_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let q = |idx: i64| {
        format!(
            r#"{{"lessons":[{{"lesson_id":"l","topics":[{{"topic_id":"t","context":"c","questions":[{{"question_id":"q","text":"?","choices":["a","b","c","d"],"correct_index":{idx}}}]}}]}}]}}"#
        )
    };
    assert!(load_tqa(&write(dir.path(), "ok.json", &q(3))).is_ok());
    assert!(load_tqa(&write(dir.path(), "hi.json", &q(4))).is_err());
    assert!(load_tqa(&write(dir.path(), "neg.json", &q(-1))).is_err());
    let dangling = q(0).replace(r#""question_id":"q","#, r#""question_id":"q","topic_id":"other","#);
    assert!(load_tqa(&write(dir.path(), "dang.json", &dangling)).is_err());

    let line = |qtype: &str, rating: i64| {
        format!(
            r#"{{"video_id":"v","time":"00:35","question":"q","answer":"a","qtype":"{qtype}","modality":"visual","quality_rating":{rating}}}"#
        )
    };
    assert!(load_cvqa(&write(dir.path(), "c.jsonl", &line("simple", 3))).is_ok());
    let e = load_cvqa(&write(
        dir.path(),
        "m.jsonl",
        &format!("{}\n{}\n", line("simple", 3), line("medium", 3)),
    ))
    .unwrap_err();
    assert!(
        e.to_string().contains("medium") && matches!(e, Error::Parse { line: 2, .. }),
        "{e}"
    );
    assert!(load_cvqa(&write(dir.path(), "r.jsonl", &line("complex", 6))).is_err());
    assert!(load_cvqa(&write(
        dir.path(),
        "t.jsonl",
        &line("simple", 3).replace("00:35", "0:75")
    ))
    .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn malformed_input_is_an_error_not_a_crash(body in "[\\{\\}\\[\\]\":,a-z0-9 \n]{0,120}") {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "x", &body);
        let _ = load_videos(&p);
        let _ = load_tqa(&p);
        let _ = load_cvqa(&p);
    }
}
