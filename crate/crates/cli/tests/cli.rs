use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fig3(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures/fig3")
        .join(name)
        .display()
        .to_string()
}

fn cadmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cadmap"))
        .args(args)
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn read(p: &str) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn map_fig3(out: &str, extra: &[&str]) -> Output {
    let (f, e, t, c) = (
        fig3("features.json"),
        fig3("entities.json"),
        fig3("truth.json"),
        fig3("compat.json"),
    );
    let mut args = vec![
        "map",
        "--features",
        &f,
        "--entities",
        &e,
        "--truth",
        &t,
        "--compat",
        &c,
        "--escalation-policy",
        "oracle",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    cadmap(&args)
}

#[test]
fn map_fig3_matches_golden() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path(tmp.path(), "spec.json");
    let o = map_fig3(&out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(&out).unwrap(),
        std::fs::read(fig3("expected_spec.json")).unwrap()
    );
}

#[test]
fn now_and_source_date_epoch_stamp_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path(tmp.path(), "a.json");
    assert!(map_fig3(&out, &["--now", "2024-05-01T12:00:00+02:00"])
        .status
        .success());
    let spec = read(&out);
    assert_eq!(
        spec["mappings"][0]["provenance"][0]["timestamp"],
        "2024-05-01T10:00:00Z"
    );

    let (f, e) = (fig3("features.json"), fig3("entities.json"));
    let out_b = path(tmp.path(), "b.json");
    let o = Command::new(env!("CARGO_BIN_EXE_cadmap"))
        .args(["map", "--features", &f, "--entities", &e, "--out", &out_b])
        .env("SOURCE_DATE_EPOCH", "86400")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(
        read(&out_b)["mappings"][0]["provenance"][0]["timestamp"],
        "1970-01-02T00:00:00Z"
    );

    assert_eq!(
        map_fig3(&out, &["--now", "tomorrow"]).status.code(),
        Some(2)
    );
}

#[test]
fn ablation_snapshot_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let out = path(tmp.path(), "spec.json");
    assert!(map_fig3(&out, &["--ablate", "no_context"]).status.success());
    let spec = read(&out);
    assert_eq!(spec["config_snapshot"]["context_enabled"], false);
    assert_eq!(spec["config_snapshot"]["variant"], "no_context");
    for m in spec["mappings"].as_array().unwrap() {
        let c = m["confidence"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&c));
    }
    assert_eq!(
        map_fig3(&out, &["--ablate", "no_such_variant"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn malformed_input_reports_position_and_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = path(tmp.path(), "features.json");
    std::fs::write(
        &bad,
        "{\n  \"features\": [\n    {\"id\": \"F1\",, }\n  ]\n}\n",
    )
    .unwrap();
    let e = fig3("entities.json");
    let out = path(tmp.path(), "spec.json");
    let o = cadmap(&["map", "--features", &bad, "--entities", &e, "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("3:"), "{stderr}");
    assert!(!Path::new(&out).exists());

    let missing = path(tmp.path(), "missing.json");
    assert_eq!(
        cadmap(&[
            "map",
            "--features",
            &missing,
            "--entities",
            &e,
            "--out",
            &out
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn oracle_policy_requires_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let (f, e) = (fig3("features.json"), fig3("entities.json"));
    let out = path(tmp.path(), "spec.json");
    let o = cadmap(&[
        "map",
        "--features",
        &f,
        "--entities",
        &e,
        "--escalation-policy",
        "oracle",
        "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn online_mode_needs_endpoint_and_credential() {
    let tmp = tempfile::tempdir().unwrap();
    let (f, e) = (fig3("features.json"), fig3("entities.json"));
    let out = path(tmp.path(), "spec.json");
    let o = cadmap(&[
        "map",
        "--features",
        &f,
        "--entities",
        &e,
        "--online",
        "--out",
        &out,
    ]);
    assert!(!o.status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_cadmap"))
        .args([
            "map",
            "--features",
            &f,
            "--entities",
            &e,
            "--online",
            "--endpoint",
            "http://127.0.0.1:9",
            "--credential-env",
            "CADMAP_TEST_UNSET",
        ])
        .args(["--out", &out])
        .env_remove("CADMAP_TEST_UNSET")
        .output()
        .unwrap();
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn eval_single_spec_and_unknown_ids() {
    let tmp = tempfile::tempdir().unwrap();
    let report = path(tmp.path(), "report.json");
    let (spec, truth) = (fig3("expected_spec.json"), fig3("truth.json"));
    let o = cadmap(&["eval", "--spec", &spec, "--truth", &truth, "--out", &report]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read(&report);
    assert_eq!(r["metrics"]["f1"], 1.0);
    assert!(Path::new(&path(tmp.path(), "report.txt")).exists());

    let bad_truth = path(tmp.path(), "truth.json");
    std::fs::write(
        &bad_truth,
        r#"{"part_id": "fig3", "links": [["F1", "E1"], ["F9", "E1"]]}"#,
    )
    .unwrap();
    let o = cadmap(&["eval", "--spec", &spec, "--truth", &bad_truth]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("F9"));
}

#[test]
fn gen_is_seed_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        path(tmp.path(), "a"),
        path(tmp.path(), "b"),
        path(tmp.path(), "c"),
    );
    for (out, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        assert!(
            cadmap(&["gen", "--seed", seed, "--parts", "3", "--out", out])
                .status
                .success()
        );
    }
    let f = |d: &str| std::fs::read(Path::new(d).join("part-002/entities.json")).unwrap();
    assert_eq!(f(&a), f(&b));
    assert_ne!(f(&a), f(&c));
    assert_eq!(read(&format!("{a}/corpus.json"))["seed"], 5);
    assert_eq!(
        cadmap(&["gen", "--profile", "nope", "--out", &a])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn corpus_eval_reports_aggregate() {
    let tmp = tempfile::tempdir().unwrap();
    let (corpus, specs, report) = (
        path(tmp.path(), "corpus"),
        path(tmp.path(), "specs"),
        path(tmp.path(), "report.json"),
    );
    assert!(cadmap(&["gen", "--parts", "4", "--out", &corpus])
        .status
        .success());
    assert!(cadmap(&[
        "map",
        "--corpus",
        &corpus,
        "--escalation-policy",
        "oracle",
        "--out",
        &specs
    ])
    .status
    .success());
    let o = cadmap(&[
        "eval", "--corpus", &corpus, "--specs", &specs, "--out", &report,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read(&report);
    assert_eq!(r["parts"].as_array().unwrap().len(), 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("F1"));

    let o = cadmap(&[
        "eval",
        "--corpus",
        &corpus,
        "--ablate",
        "full,deterministic_only",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
