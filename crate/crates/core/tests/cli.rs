mod common;

use std::path::Path;

use common::{fixtures, solaudit};
use serde_json::Value;

fn stderr_json(out: &std::process::Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no JSON error in {text}"));
    serde_json::from_str(line).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("solaudit.toml");
    std::fs::write(&p, format!("out = \"{}\"\n{body}", dir.join("out").display())).unwrap();
    p.display().to_string()
}

#[test]
fn missing_config_exits_2_and_names_the_path() {
    let out = solaudit(&["--config", "/definitely/not/here.toml", "score", "--preds", "x.jsonl"], &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("/definitely/not/here.toml"));
}

#[test]
fn config_env_var_is_the_fallback() {
    let out = solaudit(&["score", "--preds", "x.jsonl"], &[("SOLAUDIT_CONFIG", "/from/env.toml")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["error"]["message"].as_str().unwrap().contains("/from/env.toml"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(solaudit(&["no-such-command"], &[]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = solaudit(&["--config", &cfg, "detect", "--strategy", "oracle"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "usage");
    let out = solaudit(&["--config", &cfg, "detect", "--strategy", "zeroshot"], &[]);
    assert_eq!(out.status.code(), Some(2), "zeroshot without --model");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sede = 3\n");
    let out = solaudit(&["--config", &cfg, "score", "--preds", "x"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["error"]["message"].as_str().unwrap().contains("sede"));
}

#[test]
fn score_writes_report_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "seed = 11\n");
    let fx = fixtures().join("cli");
    let out = solaudit(
        &[
            "--config",
            &cfg,
            "score",
            "--preds",
            fx.join("preds.jsonl").to_str().unwrap(),
            "--gold",
            fx.join("gold.jsonl").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let reports = tmp.path().join("out/reports");
    for f in ["report.txt", "report.csv", "report.jsonl", "manifest.json"] {
        assert!(reports.join(f).is_file(), "{f} missing");
    }
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("Per-class F1"));
    assert!(stdout.contains("gpt-4"));

    let csv = std::fs::read_to_string(reports.join("report.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    // Gold support 4 (RENT, DOS, UE, ARTHM one each); RENT and UE have F1 1.
    assert_eq!(row[0], "gpt-4");
    assert_eq!(row[3], "0.500");

    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(reports.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "score");
    assert_eq!(manifest["seed"], 11);
    let inputs = manifest["inputs"].as_object().unwrap();
    assert_eq!(inputs.len(), 2);
    assert!(inputs.values().all(|h| h.as_str().unwrap().starts_with("sha256:")));

    // `report` re-renders stored metrics.
    let out = solaudit(
        &["--config", &cfg, "report", "--metrics", reports.join("report.jsonl").to_str().unwrap(), "--format", "csv"],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), csv);
}

#[test]
fn score_with_missing_gold_is_a_pipeline_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let gold = tmp.path().join("gold.jsonl");
    std::fs::write(&gold, "{\"address\":\"0x0000000000000000000000000000000000000001\",\"labels\":[]}\n").unwrap();
    let preds = fixtures().join("cli/preds.jsonl");
    let out = solaudit(&["--config", &cfg, "score", "--preds", preds.to_str().unwrap(), "--gold", gold.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "pipeline");
}

const SECRET: &[(&str, &str)] = &[("E2E_SECRET_PATH", "hunter2-token")];

fn offline_corpus(tmp: &Path, extra: &str) -> String {
    let sources = fixtures().join("strip");
    let cfg = write_config(tmp, &format!("seed = 5\n{extra}\n[corpus]\nsources_dir = \"{}\"\n", sources.display()));
    let run = |args: &[&str]| {
        let mut full = vec!["--config", cfg.as_str()];
        full.extend_from_slice(args);
        let out = solaudit(&full, SECRET);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    // Sources named by file stem need address-shaped names; copy them over.
    let dir = tmp.join("sources");
    std::fs::create_dir_all(&dir).unwrap();
    let mut files: Vec<_> = std::fs::read_dir(&sources).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    for (i, f) in files.iter().enumerate() {
        std::fs::copy(f, dir.join(format!("0x{:040x}.sol", i + 1))).unwrap();
    }
    run(&["ingest", "--sources-dir", dir.to_str().unwrap()]);
    cfg
}

#[test]
fn random_detection_is_byte_deterministic_and_secret_free() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = offline_corpus(tmp.path(), "[endpoints.default]\nbase_url = \"https://llm.example/${E2E_SECRET_PATH}/v1\"\n");
    let detect = || {
        let out = solaudit(&["--config", &cfg, "detect", "--strategy", "random"], SECRET);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let dir = tmp.path().join("out/runs/seed-5");
        (
            std::fs::read(dir.join("predictions-random-random-seed-5.jsonl")).unwrap(),
            std::fs::read_to_string(dir.join("predictions-random-random-seed-5.manifest.json")).unwrap(),
        )
    };
    let (preds_a, manifest_a) = detect();
    let (preds_b, manifest_b) = detect();
    assert_eq!(preds_a, preds_b);
    assert_eq!(manifest_a, manifest_b);
    assert_eq!(String::from_utf8(preds_a).unwrap().lines().count(), 20);
    assert!(!manifest_a.contains("hunter2-token"));
    assert!(manifest_a.contains("${E2E_SECRET_PATH}"));
    let manifest: Value = serde_json::from_str(&manifest_a).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["details"]["spec"]["strategy"], "random");

    // The sequential path gives the same bytes.
    let out = solaudit(&["--config", &cfg, "--sequential", "--run-id", "seq", "detect", "--strategy", "random"], SECRET);
    assert_eq!(out.status.code(), Some(0));
    let seq = std::fs::read(tmp.path().join("out/runs/seq/predictions-random-random-seed-5.jsonl")).unwrap();
    assert_eq!(seq, preds_b);
}

#[test]
fn prompts_and_export_from_local_sources() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = offline_corpus(tmp.path(), "");
    let out_dir = tmp.path().join("out");
    let ingest_manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("corpus/manifest.json")).unwrap()).unwrap();
    assert_eq!(ingest_manifest["details"]["kept"], 20);
    assert_eq!(ingest_manifest["inputs"].as_object().unwrap().len(), 20);

    // No reports configured: label needs at least one.
    let out = solaudit(&["--config", &cfg, "label"], &[]);
    assert_eq!(out.status.code(), Some(2));

    let empty = tmp.path().join("slither.jsonl");
    let first = "0x0000000000000000000000000000000000000001";
    std::fs::write(&empty, format!("{{\"address\":\"{first}\",\"detector_id\":\"reentrancy-eth\"}}\n")).unwrap();
    let report = format!("Slither={}", empty.display());
    for args in [
        vec!["label", "--report", report.as_str()],
        vec!["build-prompts"],
        vec!["export", "--rendering", "chat"],
        vec!["export", "--rendering", "alpaca", "--cap", "10"],
    ] {
        let mut full = vec!["--config", cfg.as_str()];
        full.extend(args.iter().copied());
        let out = solaudit(&full, &[]);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let gold = std::fs::read_to_string(out_dir.join("labels/gold.jsonl")).unwrap();
    assert_eq!(gold.lines().count(), 20);
    // Slither is the only supporting tool that reported, out of four.
    assert!(gold.lines().all(|l| l.ends_with("\"labels\":[]}")));
    let chat = std::fs::read_to_string(out_dir.join("prompts/dataset-chat.jsonl")).unwrap();
    assert_eq!(chat.lines().count(), 40);
    for line in chat.lines() {
        solaudit::prompts::validate_chat_line(line).unwrap();
    }
    let alpaca = std::fs::read_to_string(out_dir.join("prompts/dataset-alpaca.jsonl")).unwrap();
    assert_eq!(alpaca.lines().count(), 10);
    let m: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("prompts/dataset-alpaca.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["details"]["cap"], 10);
}

#[test]
fn explorer_ingest_without_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let addrs = tmp.path().join("addresses.txt");
    std::fs::write(&addrs, "0x0000000000000000000000000000000000000001\n").unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("[corpus]\napi_key_env = \"SOLAUDIT_TEST_UNSET_KEY\"\naddresses_file = \"{}\"\n", addrs.display()),
    );
    let out = solaudit(&["--config", &cfg, "ingest"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["error"]["message"].as_str().unwrap().contains("SOLAUDIT_TEST_UNSET_KEY"));
}

#[test]
fn replay_by_fingerprint_misses_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = solaudit(&["--config", &cfg, "replay", "--fingerprint", "abc"], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_json(&out)["error"]["message"].as_str().unwrap().contains("abc"));
}
