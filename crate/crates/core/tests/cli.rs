use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gapdiag(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gapdiag"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const CONFIG: &str = r#"{"n_videos": 60, "n_layers": 6, "d_hidden": 24, "d_text": 6,
  "signal_layers": [3], "vision_signal_strength": 5, "audio_signal_strength": 5,
  "text_leak_strength": 0.5, "behavioral_coupling": 0.0, "seed": 4}"#;

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = gapdiag(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(gapdiag(&["probe-sweep", "--manifest", "m.json", "--out", "x", "--task", "text"], dir.path()).status.code(), Some(2));
}

#[test]
fn missing_manifest_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = gapdiag(&["validate", "nope.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_then_analyses_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), CONFIG).unwrap();
    assert!(gapdiag(&["synth", "--config", "cfg.json", "--out", "ds"], d).status.success());
    let ok = gapdiag(&["validate", "ds/manifest.json", "--out", "validate.json"], d);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));

    let sweep = |jobs: &str, out: &str| {
        let o = gapdiag(
            &["--jobs", jobs, "probe-sweep", "--manifest", "ds/manifest.json", "--task", "vision", "--k", "4", "--seed", "2", "--out", out],
            d,
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    sweep("1", "sweep1.json");
    sweep("4", "sweep4.json");
    let a = std::fs::read(d.join("sweep1.json")).unwrap();
    assert_eq!(a, std::fs::read(d.join("sweep4.json")).unwrap(), "report depends on --jobs");
    let report = json(&d.join("sweep1.json"));
    let truth = json(&d.join("ds/ground_truth.json"));
    assert_eq!(report["result"]["sweep"]["peak_layer"], truth["config"]["signal_layers"][0]);
    assert_eq!(report["tool"], "gapdiag");
    assert_eq!(report["seeds"]["folds"], 2);
    assert_eq!(report["inputs"]["manifest"].as_str().unwrap().len(), 64);

    for args in [
        vec!["residualize", "--manifest", "ds/manifest.json", "--task", "audio", "--baselines", "--out", "res.json"],
        vec!["lens", "--manifest", "ds/manifest.json", "--out", "lens.json"],
        vec!["pgla", "--manifest", "ds/manifest.json", "--layer", "3", "--budgets", "1,3", "--out", "pgla.json"],
    ] {
        let o = gapdiag(&args, d);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let pgla = json(&d.join("pgla.json"));
    assert_eq!(pgla["result"]["pareto"].as_array().unwrap().len(), 3);
    assert_eq!(pgla["result"]["pareto"][2]["budget"], "unconstrained");

    let o = gapdiag(
        &["report", "--inputs", "sweep1.json", "res.json", "lens.json", "pgla.json", "--out", "report.md"],
        d,
    );
    assert!(o.status.success());
    let md = std::fs::read_to_string(d.join("report.md")).unwrap();
    for heading in ["Layer sweeps", "Residualized probes", "Logit lens peaks", "Standard-accuracy budgets"] {
        assert!(md.contains(heading), "missing {heading}");
    }
}

#[test]
fn stats_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("rows.json"),
        r#"[{"model": "OLA", "acc": {"std_v": 71.0, "std_a": 71.6, "mis_v": 6.8, "mis_a": 0.0}},
            {"model": "Qwen2.5-Omni", "acc": {"std_v": 64.4, "std_a": 69.0, "mis_v": 16.0, "mis_a": 0.6}}]"#,
    )
    .unwrap();
    assert!(gapdiag(&["stats", "balanced", "--input", "rows.json", "--out", "bal.json", "--markdown", "bal.md"], d).status.success());
    let bal = json(&d.join("bal.json"));
    assert!((bal["result"][0]["bal"].as_f64().unwrap() - 37.35).abs() < 1e-9);
    assert!(std::fs::read_to_string(d.join("bal.md")).unwrap().contains("| OLA | 71.0 | 71.6 | 6.8 | 0.0 | 37.4 |"));

    std::fs::write(d.join("single.json"), r#"{"acc": {"std_v": 64.4, "std_a": 69.0, "mis_v": 22.2, "mis_a": 0.6}}"#).unwrap();
    let o = gapdiag(&["stats", "interference", "--av", "bal.json", "--single", "single.json", "--direction", "A->V", "--out", "i.json"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // The first row of bal.json is OLA: 22.2 - 6.8.
    assert!((json(&d.join("i.json"))["result"]["delta_pp"].as_f64().unwrap() - 15.4).abs() < 1e-9);

    std::fs::write(
        d.join("judge.jsonl"),
        "{\"pred_correct\": true, \"explanation_correct\": true}\n{\"pred_correct\": true, \"explanation_correct\": false}\n\
         {\"pred_correct\": false, \"explanation_correct\": false}\n{\"pred_correct\": false, \"explanation_correct\": false}\n",
    )
    .unwrap();
    assert!(gapdiag(&["stats", "judge", "--records", "judge.jsonl", "--out", "j.json"], d).status.success());
    let j = json(&d.join("j.json"));
    assert_eq!(j["result"]["p_acc"], 50.0);
    assert_eq!(j["result"]["r_plus_w"], 25.0);

    std::fs::write(d.join("a.json"), r#"{"s1": false, "s2": false, "s3": false}"#).unwrap();
    std::fs::write(d.join("b.json"), r#"{"s1": true, "s2": true, "s3": true}"#).unwrap();
    assert!(gapdiag(&["stats", "paired", "--a", "a.json", "--b", "b.json", "--resamples", "1000", "--out", "p.json"], d).status.success());
    assert_eq!(json(&d.join("p.json"))["result"]["p"], "p<0.001");
    assert_eq!(gapdiag(&["stats", "interference", "--av", "bal.json", "--single", "single.json", "--direction", "X", "--out", "x.json"], d).status.code(), Some(2));
}

#[test]
fn shuffle_and_consistency_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), CONFIG).unwrap();
    assert!(gapdiag(&["synth", "--config", "cfg.json", "--out", "ds"], d).status.success());
    assert!(gapdiag(&["stats", "shuffle", "--manifest", "ds/manifest.json", "--out", "sh.json"], d).status.success());
    let sh = json(&d.join("sh.json"));
    let perms = sh["result"]["permutations"].as_array().unwrap();
    assert_eq!(perms.len(), 240 * 3);

    // A model that always answers with the displayed position of the gold letter.
    let manifest = json(&d.join("ds/manifest.json"));
    let mut files = Vec::new();
    for k in 0..3 {
        let mut preds = serde_json::Map::new();
        for s in manifest["samples"].as_array().unwrap() {
            let id = s["sample_id"].as_str().unwrap();
            let p = perms.iter().find(|p| p["sample_id"] == id && p["shuffle_id"] == k).unwrap();
            let displayed = p["displayed"].as_str().unwrap();
            let gold = s["correct_letter"].as_str().unwrap().chars().next().unwrap();
            let pos = displayed.chars().position(|c| c == gold).unwrap();
            let answer = (b'A' + pos as u8) as char;
            preds.insert(id.to_string(), Value::String(format!("The answer is ({answer}).")));
        }
        let name = format!("pred{k}.json");
        std::fs::write(d.join(&name), serde_json::to_string(&preds).unwrap()).unwrap();
        files.push(name);
    }
    let mut args = vec!["stats", "consistency", "--manifest", "ds/manifest.json", "--out", "c.json", "--predictions"];
    args.extend(files.iter().map(String::as_str));
    let o = gapdiag(&args, d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&d.join("c.json"))["result"]["overall"]["always_pct"], 100.0);
}
