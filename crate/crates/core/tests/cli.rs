use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn ambispot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ambispot"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn assert_error(out: &Output, code: i32, kind: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    assert_eq!(err["error"], kind);
    assert!(err["message"].as_str().is_some_and(|m| !m.is_empty()));
}

fn sha(path: &Path) -> Vec<u8> {
    Sha256::digest(fs::read(path).unwrap()).to_vec()
}

/// gen -> lm-train -> spot; returns the working directory.
fn prepared(n: &str, seed: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ambispot(&["gen", "--n", n, "--seed", seed, "--out-dir", p(d)]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["scenes"], n.parse::<u64>().unwrap());
    let out = ambispot(&[
        "lm-train",
        "--corpus",
        p(&d.join("corpus.txt")),
        "--out",
        p(&d.join("model.json")),
    ]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["n"], 3);
    let out = ambispot(&[
        "spot",
        "--detections",
        p(&d.join("detections.json")),
        "--model",
        p(&d.join("model.json")),
        "--out",
        p(&d.join("spotted.json")),
    ]);
    assert!(out.status.success());
    dir
}

#[test]
fn full_workflow() {
    let dir = prepared("12", "5");
    let d = dir.path();
    let out = ambispot(&[
        "eval",
        "--spotted",
        p(&d.join("spotted.json")),
        "--gt",
        p(&d.join("gt.json")),
        "--out",
        p(&d.join("eval.json")),
    ]);
    assert!(out.status.success());
    let report = stdout_json(&out);
    assert_eq!(report["per_image"].as_array().unwrap().len(), 12);
    assert!(report["global"]["f_measure"].as_f64().unwrap() > 0.5);
    assert!(d.join("eval.json").exists());

    let out = ambispot(&[
        "eval",
        "--spotted",
        p(&d.join("spotted.json")),
        "--gt",
        p(&d.join("gt.json")),
        "--table",
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("1-NED"));

    let out = ambispot(&[
        "curate",
        "--gt",
        p(&d.join("gt.json")),
        "--n",
        "5",
        "--seed",
        "3",
        "--out-ids",
        p(&d.join("ids.txt")),
        "--out-stats",
        p(&d.join("stats.json")),
    ]);
    assert!(out.status.success());
    assert_eq!(
        fs::read_to_string(d.join("ids.txt"))
            .unwrap()
            .lines()
            .count(),
        5
    );

    let out = ambispot(&["stats", "--gt", p(&d.join("gt.json"))]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["total_images"], 12);
}

#[test]
fn reruns_are_byte_identical() {
    let a = prepared("8", "42");
    let b = prepared("8", "42");
    for name in [
        "gt.json",
        "detections.json",
        "corpus.txt",
        "model.json",
        "spotted.json",
    ] {
        assert_eq!(
            sha(&a.path().join(name)),
            sha(&b.path().join(name)),
            "{name}"
        );
    }
    let c = prepared("8", "43");
    assert_ne!(
        sha(&a.path().join("gt.json")),
        sha(&c.path().join("gt.json"))
    );
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = prepared("10", "9");
    let d = dir.path();
    let out = Command::new(env!("CARGO_BIN_EXE_ambispot"))
        .args([
            "spot",
            "--detections",
            p(&d.join("detections.json")),
            "--model",
            p(&d.join("model.json")),
            "--out",
            p(&d.join("one.json")),
        ])
        .env("AMBISPOT_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(sha(&d.join("one.json")), sha(&d.join("spotted.json")));
}

#[test]
fn empty_corpus_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("empty.txt");
    fs::write(&corpus, "\n\n").unwrap();
    let out = ambispot(&[
        "lm-train",
        "--corpus",
        p(&corpus),
        "--out",
        p(&dir.path().join("m.json")),
    ]);
    assert_error(&out, 2, "input");
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn empty_detections_spot_to_an_empty_document() {
    let dir = tempfile::tempdir().unwrap();
    let det = dir.path().join("det.json");
    fs::write(&det, r#"{"images": []}"#).unwrap();
    let out = ambispot(&[
        "spot",
        "--detections",
        p(&det),
        "--no-lm",
        "--out",
        p(&dir.path().join("s.json")),
    ]);
    assert!(out.status.success());
    let doc: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    assert_eq!(doc["images"].as_array().unwrap().len(), 0);
}

#[test]
fn no_lm_matches_lambda_one_selection() {
    let dir = prepared("10", "11");
    let d = dir.path();
    let (det, model) = (d.join("detections.json"), d.join("model.json"));
    let (det, model) = (p(&det), p(&model));
    assert!(ambispot(&[
        "spot",
        "--detections",
        det,
        "--no-lm",
        "--out",
        p(&d.join("a.json"))
    ])
    .status
    .success());
    assert!(ambispot(&[
        "spot",
        "--detections",
        det,
        "--model",
        model,
        "--lambda",
        "1.0",
        "--out",
        p(&d.join("b.json"))
    ])
    .status
    .success());
    let load = |n: &str| -> Value {
        serde_json::from_str(&fs::read_to_string(d.join(n)).unwrap()).unwrap()
    };
    let strip = |v: Value| -> Vec<Vec<(Value, Value, Value)>> {
        v["images"]
            .as_array()
            .unwrap()
            .iter()
            .map(|i| {
                i["lines"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|l| {
                        (
                            l["polygon"].clone(),
                            l["transcript"].clone(),
                            l["s"].clone(),
                        )
                    })
                    .collect()
            })
            .collect()
    };
    assert_eq!(strip(load("a.json")), strip(load("b.json")));
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bad = d.join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let out = d.join("o.json");

    assert_error(
        &ambispot(&["spot", "--detections", p(&bad), "--no-lm", "--out", p(&out)]),
        2,
        "input",
    );
    assert_error(
        &ambispot(&[
            "spot",
            "--detections",
            p(&d.join("missing.json")),
            "--no-lm",
            "--out",
            p(&out),
        ]),
        2,
        "input",
    );

    let det = d.join("det.json");
    fs::write(&det, r#"{"images": [{"image_id": "a", "chars": [], "lines": [{"id": 0, "polygon": [[0,0],[1,0],[1,1],[0,1]], "score": 1.5}]}]}"#).unwrap();
    let res = ambispot(&["spot", "--detections", p(&det), "--no-lm", "--out", p(&out)]);
    assert_error(&res, 2, "input");
    assert!(String::from_utf8_lossy(&res.stderr).contains("a.lines[0].score"));

    fs::write(&det, r#"{"images": []}"#).unwrap();
    assert_error(
        &ambispot(&["spot", "--detections", p(&det), "--out", p(&out)]),
        2,
        "input",
    );
    assert_error(
        &ambispot(&[
            "spot",
            "--detections",
            p(&det),
            "--no-lm",
            "--lambda",
            "1.5",
            "--out",
            p(&out),
        ]),
        2,
        "input",
    );
    assert_error(&ambispot(&["spot", "--bogus"]), 2, "input");

    let cfg = d.join("cfg.json");
    fs::write(&cfg, r#"{"lambdaa": 0.5}"#).unwrap();
    assert_error(
        &ambispot(&[
            "spot",
            "--detections",
            p(&det),
            "--no-lm",
            "--config",
            p(&cfg),
            "--out",
            p(&out),
        ]),
        2,
        "input",
    );
}

#[test]
fn mismatched_image_sets_and_short_curation_are_input_errors() {
    let dir = prepared("4", "1");
    let d = dir.path();
    let other = tempfile::tempdir().unwrap();
    assert!(ambispot(&[
        "gen",
        "--n",
        "5",
        "--seed",
        "1",
        "--out-dir",
        p(other.path())
    ])
    .status
    .success());
    assert_error(
        &ambispot(&[
            "eval",
            "--spotted",
            p(&d.join("spotted.json")),
            "--gt",
            p(&other.path().join("gt.json")),
        ]),
        2,
        "input",
    );
    assert_error(
        &ambispot(&[
            "curate",
            "--gt",
            p(&d.join("gt.json")),
            "--n",
            "50",
            "--out-ids",
            p(&d.join("i.txt")),
            "--out-stats",
            p(&d.join("s.json")),
        ]),
        2,
        "input",
    );
}

#[test]
fn unwritable_output_is_an_internal_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = ambispot(&[
        "corpus",
        "--lines",
        "10",
        "--out",
        p(&blocker.join("sub").join("c.txt")),
    ]);
    assert_error(&out, 1, "internal");
}
