//! JSON report envelope and markdown rendering of collected reports.
//!
//! Every report carries the tool version, the fully resolved configuration,
//! every seed and a SHA-256 of every input file, and nothing time-dependent,
//! so rerunning a report's configuration reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::stats::round1;
use crate::store::Manifest;

pub const TOOL: &str = "gapdiag";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Report<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &str, config: Value, result: T) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            command: command.to_string(),
            config,
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            result,
        }
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Digests of the manifest, its assets and embeddings, and one combined digest
/// over every bundle file in manifest order.
pub fn dataset_digests(manifest_path: &Path, manifest: &Manifest) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    out.insert("manifest".to_string(), sha256_file(manifest_path)?);
    if let Some(p) = &manifest.assets_path {
        out.insert("assets".to_string(), sha256_file(&manifest.resolve(p))?);
    }
    if let Some(p) = &manifest.embeddings_path {
        out.insert("embeddings".to_string(), sha256_file(&manifest.resolve(p))?);
    }
    let mut all = Sha256::new();
    for s in &manifest.samples {
        all.update(sha256_file(&manifest.resolve(&s.bundle_path))?.as_bytes());
    }
    out.insert("bundles".to_string(), hex::encode(all.finalize()));
    Ok(out)
}

fn num(v: &Value) -> Option<f64> {
    v.as_f64()
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", round1(x)))
}

fn frac_pct(v: Option<f64>) -> String {
    pct(v.map(|x| 100.0 * x))
}

fn model_of(r: &Value) -> String {
    r.pointer("/config/model_name")
        .and_then(Value::as_str)
        .unwrap_or("-")
        .to_string()
}

fn table(out: &mut String, title: &str, header: &[&str], rows: &[Vec<String>]) {
    if rows.is_empty() {
        return;
    }
    let _ = writeln!(out, "## {title}\n");
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

const SPLITS: [&str; 4] = ["std_v", "std_a", "mis_v", "mis_a"];

/// Renders a set of reports (parsed JSON) as markdown tables: per-split
/// accuracy, probe summary, PGLA results, budget curve, residualization and
/// layer sweeps. Reports of other kinds are listed by command only.
pub fn render_markdown(reports: &[Value]) -> Result<String> {
    let mut out = String::from("# gapdiag report\n\n");
    let mut accuracy = Vec::new();
    let mut probes = Vec::new();
    let mut pgla = Vec::new();
    let mut pareto = Vec::new();
    let mut residual = Vec::new();
    let mut sweeps = Vec::new();
    let mut lens = Vec::new();
    let mut other = Vec::new();
    for r in reports {
        let command = r
            .get("command")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Schema("report without a command field".into()))?;
        let res = r.get("result").unwrap_or(&Value::Null);
        let model = model_of(r);
        match command {
            "stats balanced" => {
                for row in res.as_array().into_iter().flatten() {
                    let mut cells = vec![row.get("model").and_then(Value::as_str).unwrap_or("-").to_string()];
                    cells.extend(SPLITS.iter().map(|s| pct(row.pointer(&format!("/acc/{s}")).and_then(num))));
                    cells.push(pct(row.get("bal").and_then(num)));
                    accuracy.push(cells);
                }
            }
            "probe-sweep" => {
                let sw = &res["sweep"];
                sweeps.push(vec![
                    model.clone(),
                    res["task_name"].as_str().unwrap_or("-").to_string(),
                    sw["peak_layer"].to_string(),
                    frac_pct(sw["peak_acc"].as_f64()),
                    frac_pct(sw["final_layer_acc"].as_f64()),
                    frac_pct(sw["peak_acc"].as_f64().zip(sw["final_layer_acc"].as_f64()).map(|(p, f)| f - p)),
                ]);
                probes.push(vec![
                    model,
                    sw["peak_layer"].to_string(),
                    frac_pct(res.pointer("/modality/vision").and_then(num)),
                    frac_pct(res.pointer("/modality/audio").and_then(num)),
                    frac_pct(res.pointer("/binary_at_peak").and_then(num)),
                ]);
            }
            "residualize" => {
                let o = res.pointer("/probe/original/accuracy").and_then(num);
                let z = res.pointer("/probe/residualized/accuracy").and_then(num);
                residual.push(vec![
                    model,
                    res["task_name"].as_str().unwrap_or("-").to_string(),
                    res.pointer("/probe/layer").map_or("-".into(), Value::to_string),
                    frac_pct(o),
                    frac_pct(z),
                    frac_pct(o.zip(z).map(|(a, b)| b - a)),
                    frac_pct(res.pointer("/tfidf/cv/accuracy").and_then(num)),
                    frac_pct(res.pointer("/external/cv/accuracy").and_then(num)),
                ]);
            }
            "pgla" => {
                let sw = &res["sweep"];
                let mut cells = vec![model.clone()];
                cells.extend(SPLITS.iter().map(|s| pct(sw.pointer(&format!("/mean_test_acc/{s}")).and_then(num))));
                cells.push(pct(sw["mean_test_bal"].as_f64()));
                cells.push(format!("{:+.1}", round1(sw["mean_delta_bal"].as_f64().unwrap_or(0.0))));
                cells.push(format!("{:.1}", round1(sw["tune_test_gap"].as_f64().unwrap_or(0.0))));
                pgla.push(cells);
                for p in res["pareto"].as_array().into_iter().flatten() {
                    let budget = match &p["budget"] {
                        Value::String(s) => s.clone(),
                        b => format!("<={}pp", b.as_f64().unwrap_or(f64::NAN)),
                    };
                    pareto.push(vec![
                        model.clone(),
                        budget,
                        pct(p["std_acc"].as_f64()),
                        pct(p["mis_acc"].as_f64()),
                        pct(p["bal_acc"].as_f64()),
                        format!("{:+.1}", round1(p["delta_bal"].as_f64().unwrap_or(0.0))),
                    ]);
                }
            }
            "lens" => {
                let mut cells = vec![model];
                for s in SPLITS {
                    cells.push(
                        res.pointer(&format!("/per_split_peak/{s}/prob"))
                            .and_then(num)
                            .map_or("-".into(), |p| format!("{p:.3}")),
                    );
                }
                cells.push(res["regime"].as_str().unwrap_or("-").to_string());
                lens.push(cells);
            }
            c => other.push(vec![c.to_string(), model]),
        }
    }
    table(&mut out, "Per-split accuracy", &["Model", "std_v", "std_a", "mis_v", "mis_a", "Bal"], &accuracy);
    table(&mut out, "Probe accuracy at the peak layer", &["Model", "l*", "Vision", "Audio", "Binary"], &probes);
    table(&mut out, "Logit lens peaks", &["Model", "std_v", "std_a", "mis_v", "mis_a", "Regime"], &lens);
    table(
        &mut out,
        "Probe-guided logit adjustment (mean over test folds)",
        &["Model", "std_v", "std_a", "mis_v", "mis_a", "Bal", "dBal", "Tune-test gap"],
        &pgla,
    );
    table(&mut out, "Standard-accuracy budgets", &["Model", "Budget", "Std", "Mis", "Bal", "dBal"], &pareto);
    table(
        &mut out,
        "Residualized probes",
        &["Model", "Task", "l*", "Original", "Residualized", "Delta", "TF-IDF", "Embeddings"],
        &residual,
    );
    table(&mut out, "Layer sweeps", &["Model", "Task", "l*", "Peak", "Final", "Decay"], &sweeps);
    table(&mut out, "Other reports", &["Command", "Model"], &other);
    Ok(out)
}
