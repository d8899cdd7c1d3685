//! Drives the `acfp` binary end to end on a tiny synthetic corpus.

use std::path::Path;
use std::process::{Command, Output};

use acfp::cli::exit;
use acfp::config::Config;
use acfp::corpus::Corpus;

fn acfp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acfp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = acfp(dir, args);
    assert!(
        out.status.success(),
        "acfp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> u8 {
    out.status.code().expect("exited normally") as u8
}

#[test]
fn three_clip_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // 3 × 60 s gives enough windows to fit the projection.
    Corpus::synthetic(3, 60.0, 40).write(&dir.join("clips")).unwrap();
    let manifest = "clips/manifest.json";

    ok(dir, &["train-pca", "--corpus", manifest, "--out", "model.acpc"]);
    ok(dir, &["build-db", "--kind", "proposed", "--skip", "5", "--corpus", manifest, "--pca", "model.acpc", "--out", "p.acdb"]);
    ok(dir, &["build-index", "--db", "p.acdb", "--type", "ivf", "--nlist", "16", "--nprobe", "16", "--out", "p.acix"]);
    ok(dir, &["build-db", "--kind", "minhash", "--corpus", manifest, "--out", "h.acdb"]);
    ok(dir, &["build-index", "--db", "h.acdb", "--out", "h.acix"]);

    for id in ["clip0000", "clip0001", "clip0002"] {
        let wav = format!("clips/{id}.wav");
        for (db, ix) in [("p.acdb", "p.acix"), ("h.acdb", "h.acix")] {
            let text = ok(dir, &["query", "--db", db, "--index", ix, "--audio", &wav, "--seg-len", "1.25"]);
            let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
            assert!(lines.len() >= 40, "{db} {id}: {} segments", lines.len());
            for l in &lines {
                assert_eq!(l["decision"], "matched", "{db} {id}: {l}");
                assert_eq!(l["content_id"], id);
            }
        }
    }

    let info = ok(dir, &["inspect", "p.acdb"]);
    assert!(info.contains("kind: proposed"));
    assert!(info.contains("skip: 5"));
    assert!(info.contains("contents: 3"));
    let count = |text: &str| -> usize {
        text.lines().find_map(|l| l.strip_prefix("fingerprints: ")).unwrap().parse().unwrap()
    };
    // Same windows for both kinds; equal-length clips.
    let dense = count(&ok(dir, &["inspect", "h.acdb"])) / 3;
    assert_eq!(count(&info), 3 * dense.div_ceil(6));
    assert!(ok(dir, &["inspect", "p.acix"]).contains("nlist: 16"));
    assert!(ok(dir, &["inspect", "model.acpc"]).contains("out_dims: 32"));

    // Identical invocations give identical artifacts.
    ok(dir, &["build-db", "--kind", "proposed", "--skip", "5", "--corpus", manifest, "--pca", "model.acpc", "--out", "p2.acdb", "--threads", "1"]);
    assert_eq!(std::fs::read(dir.join("p.acdb")).unwrap(), std::fs::read(dir.join("p2.acdb")).unwrap());
}

#[test]
fn fingerprint_without_model_names_train_pca() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    Corpus::synthetic(1, 3.0, 2).write(dir).unwrap();
    let out = acfp(dir, &["fingerprint", "--kind", "proposed", "clip0000.wav"]);
    assert_eq!(code(&out), exit::USAGE);
    assert!(String::from_utf8_lossy(&out.stderr).contains("train-pca"));

    let text = ok(dir, &["fingerprint", "--kind", "minhash", "clip0000.wav"]);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["kind"], "minhash");
    assert_eq!(first["value"].as_str().unwrap().len(), 144);
}

#[test]
fn config_init_round_trips_and_bad_configs_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["config", "init", "--out", "cfg.json"]);
    assert_eq!(Config::load(dir.join("cfg.json")).unwrap(), Config::default());
    let again = acfp(dir, &["config", "init", "--out", "cfg.json"]);
    assert_eq!(code(&again), exit::USAGE);

    std::fs::write(dir.join("bad.json"), r#"{"surprise": true}"#).unwrap();
    assert_eq!(code(&acfp(dir, &["--config", "bad.json", "config", "init"])), exit::CONFIG);
    assert_eq!(code(&acfp(dir, &["--config", "missing.json", "config", "init"])), exit::IO);
}

#[test]
fn exit_codes_by_failure_class() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&acfp(dir, &["inspect", "absent.acdb"])), exit::IO);
    std::fs::write(dir.join("junk.acdb"), b"ACDB\x01\x00garbage").unwrap();
    assert_eq!(code(&acfp(dir, &["inspect", "junk.acdb"])), exit::FORMAT);
    assert_eq!(code(&acfp(dir, &["query", "--unknown-flag"])), exit::USAGE);

    Corpus::synthetic(1, 2.0, 3).write(dir).unwrap();
    let bad = acfp(dir, &["degrade", "--noise", "gaussian", "--param=-1", "clip0000.wav", "o.wav"]);
    assert_eq!(code(&bad), exit::INPUT);
    ok(dir, &["degrade", "--noise", "volume", "--param=-6", "--seed", "1", "clip0000.wav", "o.wav"]);
    assert!(dir.join("o.wav").exists());
}

#[test]
fn every_subcommand_has_help() {
    let tmp = tempfile::tempdir().unwrap();
    for sub in [
        "fingerprint",
        "train-pca",
        "build-db",
        "build-index",
        "degrade",
        "query",
        "eval",
        "bench",
        "inspect",
        "config",
    ] {
        let text = ok(tmp.path(), &[sub, "--help"]);
        assert!(text.contains("Usage"), "{sub}");
    }
}
