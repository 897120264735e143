//! The `gapdiag` command line. Every analysis writes one JSON report; exit
//! code 0 on success, 1 on validation or runtime failure, 2 on usage errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::folds::make_folds;
use crate::lens::lens_trajectory;
use crate::pgla::{
    auc, default_grid, grid_sweep_scores, pareto_curve, train_enhanced_probe, train_mlp_probe, Budget,
    DEFAULT_TRAIN_FRACTION,
};
use crate::probe::{layer_sweep, probe_layer, NegativePolicy, ProbeTask};
use crate::report::{dataset_digests, render_markdown, sha256_file, Report};
use crate::residual::{residualized_probe_cv, text_baseline_probe, ResidualOptions, TextFeatures};
use crate::stats::shuffle::shuffle_seed;
use crate::stats::{
    bootstrap_ci, consistency_analysis, interference_delta, judge_aggregate,
    paired_bootstrap_p, parse_answer_letter, shuffle_permutation, temporal_logit_diagnostic, temporal_stratify,
    InterferenceDirection, JudgeRecord, SplitReport, DEFAULT_RESAMPLES,
};
use crate::store::{load_manifest, read_assets, read_embeddings, validate_dataset, Dataset, Letter};
use crate::synth::{generate_synthetic, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "gapdiag", version, about = "Hidden-state versus behavior diagnostics for audio-visual models")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a manifest and every file it references.
    Validate(ValidateArgs),
    /// Generate a synthetic dataset with planted directions.
    Synth(SynthArgs),
    /// Per-layer linear probe sweep.
    ProbeSweep(ProbeSweepArgs),
    /// Probe accuracy before and after projecting out question-text information.
    Residualize(ResidualizeArgs),
    /// Logit-lens trajectories of the correct-answer token.
    Lens(LensArgs),
    /// Probe-guided logit adjustment with cross-validated tuning.
    Pgla(PglaArgs),
    /// Scoring and resampling statistics.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Render report JSON files as one markdown document.
    Report(ReportArgs),
}

/// Destinations only; kept out of the embedded config.
#[derive(Debug, Args)]
struct Output {
    /// Report JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Also render the report as markdown to this path.
    #[arg(long)]
    markdown: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ValidateArgs {
    manifest: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ProbeSweepArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// binary, vision or audio.
    #[arg(long, default_value = "binary")]
    task: String,
    #[arg(long, default_value = "within_modality")]
    negatives: String,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    reg_c: f64,
    #[command(flatten)]
    #[serde(skip)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct ResidualizeArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Text embedding table; defaults to the one named in the manifest.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// vision or audio.
    #[arg(long)]
    task: String,
    #[arg(long, default_value = "within_modality")]
    negatives: String,
    /// Probe layer; defaults to the peak of a binary layer sweep on the same folds.
    #[arg(long)]
    layer: Option<usize>,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = crate::residual::DEFAULT_RIDGE_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = crate::residual::DEFAULT_REL_TOL)]
    rel_tol: f64,
    #[arg(long, default_value_t = 1.0)]
    reg_c: f64,
    /// Also run the TF-IDF and embedding-only text baselines.
    #[arg(long)]
    baselines: bool,
    #[command(flatten)]
    #[serde(skip)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct LensArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Model assets; defaults to the ones named in the manifest.
    #[arg(long)]
    assets: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct PglaArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Probe layer; defaults to the peak of a binary layer sweep.
    #[arg(long)]
    layer: Option<usize>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard-accuracy budgets in pp; the unconstrained budget is always added.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,10")]
    budgets: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    /// Use the stacked multi-layer probe instead of the single-layer MLP.
    #[arg(long)]
    enhanced: bool,
    #[command(flatten)]
    #[serde(skip)]
    output: Output,
}

#[derive(Debug, Subcommand)]
enum StatsCommand {
    /// Balanced accuracy from per-split accuracies or from per-sample results.
    Balanced(BalancedArgs),
    /// Percentile bootstrap CI of accuracy.
    Bootstrap(BootstrapArgs),
    /// Paired bootstrap test of B minus A over shared samples.
    Paired(PairedArgs),
    /// Option permutations for K shuffled presentations of every sample.
    Shuffle(ShuffleArgs),
    /// Never / always / sometimes correct across shuffled presentations.
    Consistency(ConsistencyArgs),
    /// Accuracy by clip duration and evidence position.
    Temporal(TemporalArgs),
    /// Logistic diagnostic of correctness on sample properties.
    TemporalDiag(TemporalDiagArgs),
    /// Single-modality minus audio-visual accuracy on a misleading split.
    Interference(InterferenceArgs),
    /// Aggregate judged explanation records.
    Judge(JudgeArgs),
}

#[derive(Debug, Args, Serialize)]
struct BalancedArgs {
    /// JSON list of `{model, acc: {std_v, std_a, mis_v, mis_a}}`.
    #[arg(long, conflicts_with_all = ["manifest", "results"])]
    input: Option<PathBuf>,
    #[arg(long, requires = "results")]
    manifest: Option<PathBuf>,
    /// JSON object mapping sample_id to correctness.
    #[arg(long, requires = "manifest")]
    results: Option<PathBuf>,
    #[arg(long, default_value = "model")]
    model: String,
    #[command(flatten)]
    #[serde(skip)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct BootstrapArgs {
    #[arg(long)]
    results: PathBuf,
    /// Adds one interval per split.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    resamples: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct PairedArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    resamples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct ShuffleArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long = "shuffles", default_value_t = 3)]
    k: u64,
    #[command(flatten)]
    #[serde(skip)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct ConsistencyArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// One file per shuffle, in shuffle-id order: JSON object mapping
    /// sample_id to the raw response (letters as displayed).
    #[arg(long, num_args = 1.., required = true)]
    predictions: Vec<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct TemporalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    results: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct TemporalDiagArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    results: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct InterferenceArgs {
    /// Audio-visual split report (a `stats balanced` output or a bare split report).
    #[arg(long)]
    av: PathBuf,
    /// Single-modality split report.
    #[arg(long)]
    single: PathBuf,
    /// A->V or V->A.
    #[arg(long)]
    direction: String,
    #[command(flatten)]
    #[serde(skip)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct JudgeArgs {
    /// JSON array or JSON lines of `{pred_correct, extraction_correct, explanation_correct}`.
    #[arg(long)]
    records: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    /// Markdown output path.
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return 2;
        }
        // Fails only when a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(Error::Usage(m)) => {
            eprintln!("usage error: {m}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Validate(a) => validate(a),
        Command::Synth(a) => synth(a),
        Command::ProbeSweep(a) => probe_sweep(a).map(|_| 0),
        Command::Residualize(a) => residualize(a).map(|_| 0),
        Command::Lens(a) => lens(a).map(|_| 0),
        Command::Pgla(a) => pgla(a).map(|_| 0),
        Command::Stats(s) => stats(s).map(|_| 0),
        Command::Report(a) => report(a).map(|_| 0),
    }
}

fn config_of<A: Serialize>(args: &A, extra: &[(&str, Value)]) -> Value {
    let mut v = serde_json::to_value(args).unwrap_or(Value::Null);
    if let Value::Object(m) = &mut v {
        for (k, x) in extra {
            m.insert((*k).to_string(), x.clone());
        }
    }
    v
}

fn emit<T: Serialize>(report: &Report<T>, output: &Output) -> Result<()> {
    report.write(&output.out)?;
    if let Some(md) = &output.markdown {
        let value: Value = serde_json::from_str(&report.to_json()?).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(md, render_markdown(&[value])?).map_err(|e| Error::io(md, e))?;
    }
    eprintln!("wrote {}", output.out.display());
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn file_digests(paths: &[(&str, &Path)]) -> Result<BTreeMap<String, String>> {
    paths.iter().map(|(k, p)| Ok(((*k).to_string(), sha256_file(p)?))).collect()
}

fn parse_task(task: &str, negatives: &str) -> Result<ProbeTask> {
    let negatives: NegativePolicy = negatives.parse()?;
    match task {
        "binary" => Ok(ProbeTask::Binary),
        "vision" => Ok(ProbeTask::vision(negatives)),
        "audio" => Ok(ProbeTask::audio(negatives)),
        other => Err(Error::Usage(format!("unknown task {other:?}; expected binary, vision or audio"))),
    }
}

fn validate(a: ValidateArgs) -> Result<i32> {
    let manifest = load_manifest(&a.manifest)?;
    let report = validate_dataset(&manifest);
    for v in &report.violations {
        println!(
            "{}\t{}\t{}\t{}",
            v.check,
            v.sample_id.as_deref().unwrap_or("-"),
            v.kind,
            v.message
        );
    }
    println!("{} samples, {} failures", report.n_samples, report.n_failures());
    if let Some(out) = &a.out {
        let mut r = Report::new("validate", config_of(&a, &[]), &report);
        r.inputs.insert("manifest".into(), sha256_file(&a.manifest)?);
        r.write(out)?;
    }
    Ok(report.exit_code())
}

fn synth(a: SynthArgs) -> Result<i32> {
    let cfg: SynthConfig = read_json(&a.config)?;
    let ds = generate_synthetic(&cfg)?;
    let manifest = ds.write(&a.out)?;
    println!("{}", manifest.display());
    Ok(0)
}

fn probe_sweep(a: ProbeSweepArgs) -> Result<()> {
    let task = parse_task(&a.task, &a.negatives)?;
    let ds = Dataset::load(&a.manifest)?;
    let folds = make_folds(ds.samples(), a.k, a.seed)?;
    let sweep = layer_sweep(&ds, task, &folds, a.reg_c)?;
    let l = sweep.peak_layer;
    let negatives: NegativePolicy = a.negatives.parse()?;
    let at_peak = |t: ProbeTask| probe_layer(&ds, t, l, &folds, a.reg_c).map(|r| r.accuracy());
    let result = json!({
        "task_name": task.to_string(),
        "sweep": sweep,
        "modality": {
            "vision": at_peak(ProbeTask::vision(negatives))?,
            "audio": at_peak(ProbeTask::audio(negatives))?,
        },
        "binary_at_peak": at_peak(ProbeTask::Binary)?,
    });
    let config = config_of(&a, &[("model_name", json!(ds.manifest.model_name))]);
    let mut r = Report::new("probe-sweep", config, result).seed("folds", a.seed);
    r.inputs = dataset_digests(&a.manifest, &ds.manifest)?;
    println!("peak layer {l} ({:.1}%)", 100.0 * r.result["sweep"]["peak_acc"].as_f64().unwrap_or(0.0));
    emit(&r, &a.output)
}

fn binary_peak(ds: &Dataset, folds: &crate::folds::FoldAssignment, reg_c: f64) -> Result<usize> {
    Ok(layer_sweep(ds, ProbeTask::Binary, folds, reg_c)?.peak_layer)
}

fn residualize(a: ResidualizeArgs) -> Result<()> {
    if a.task == "binary" {
        return Err(Error::Usage("residualize takes --task vision or audio".into()));
    }
    let task = parse_task(&a.task, &a.negatives)?;
    let ds = Dataset::load(&a.manifest)?;
    let mut inputs = dataset_digests(&a.manifest, &ds.manifest)?;
    let table = match &a.embeddings {
        Some(p) => {
            inputs.insert("embeddings".into(), sha256_file(p)?);
            read_embeddings(p)?
        }
        None => ds
            .embeddings
            .clone()
            .ok_or_else(|| Error::Usage("no --embeddings given and the manifest names none".into()))?,
    };
    let folds = make_folds(ds.samples(), a.k, a.seed)?;
    let (layer, source) = match a.layer {
        Some(l) => (l, "override"),
        None => (binary_peak(&ds, &folds, a.reg_c)?, "binary-sweep"),
    };
    let opts = ResidualOptions {
        alpha: a.alpha,
        rel_tol: a.rel_tol,
        reg_c: a.reg_c,
    };
    let probe = residualized_probe_cv(&ds, &table, task, layer, &folds, opts)?;
    let (tfidf, external) = if a.baselines {
        let tfidf = text_baseline_probe(TextFeatures::Tfidf, &ds, task, &folds, a.reg_c)?;
        let mut with_table = ds.clone();
        with_table.embeddings = Some(table);
        let ext = text_baseline_probe(TextFeatures::ExternalEmbeddings, &with_table, task, &folds, a.reg_c)?;
        (Some(tfidf), Some(ext))
    } else {
        (None, None)
    };
    println!(
        "layer {layer}: original {:.1}%, residualized {:.1}%",
        100.0 * probe.original.accuracy,
        100.0 * probe.residualized.accuracy
    );
    let result = json!({
        "task_name": task.to_string(),
        "layer_source": source,
        "probe": probe,
        "tfidf": tfidf,
        "external": external,
    });
    let config = config_of(
        &a,
        &[("model_name", json!(ds.manifest.model_name)), ("resolved_layer", json!(layer))],
    );
    let mut r = Report::new("residualize", config, result).seed("folds", a.seed);
    r.inputs = inputs;
    emit(&r, &a.output)
}

fn lens(a: LensArgs) -> Result<()> {
    let ds = Dataset::load(&a.manifest)?;
    let mut inputs = dataset_digests(&a.manifest, &ds.manifest)?;
    let assets = match &a.assets {
        Some(p) => {
            inputs.insert("assets".into(), sha256_file(p)?);
            Some(read_assets(p)?)
        }
        None => None,
    };
    let traj = lens_trajectory(&ds, assets.as_ref())?;
    println!("regime {}", serde_json::to_value(traj.regime).unwrap_or(Value::Null));
    let config = config_of(&a, &[("model_name", json!(ds.manifest.model_name))]);
    let mut r = Report::new("lens", config, traj);
    r.inputs = inputs;
    emit(&r, &a.output)
}

fn pgla(a: PglaArgs) -> Result<()> {
    let mut budgets: Vec<Budget> = a.budgets.iter().map(|b| b.parse()).collect::<Result<_>>()?;
    if !budgets.contains(&Budget::Unconstrained) {
        budgets.push(Budget::Unconstrained);
    }
    let ds = Dataset::load(&a.manifest)?;
    let (layer, source) = match a.layer {
        Some(l) => (l, "override"),
        None => {
            let folds = make_folds(ds.samples(), a.k, a.seed)?;
            (binary_peak(&ds, &folds, 1.0)?, "binary-sweep")
        }
    };
    let (eval, p_mis, kind) = if a.enhanced {
        let probe = train_enhanced_probe(&ds, layer, a.seed)?;
        let eval = probe.eval_indices(&ds);
        let p = probe.p_mis(&ds, &eval);
        (eval, p, "enhanced")
    } else {
        let probe = train_mlp_probe(&ds, layer, a.train_fraction, a.seed)?;
        let eval = probe.eval_indices(&ds);
        let p = probe.p_mis(&ds, &eval);
        (eval, p, "mlp")
    };
    let labels: Vec<bool> = eval.iter().map(|&i| ds.samples()[i].split.is_misleading()).collect();
    let probe_auc = auc(&p_mis, &labels)?;
    let grid = default_grid();
    let sweep = grid_sweep_scores(&ds, &eval, &p_mis, &grid, a.k, a.seed)?;
    let pareto = pareto_curve(&sweep, &budgets)?;
    println!(
        "layer {layer}: mean dBal {:+.1}pp, tune-test gap {:.1}pp",
        sweep.mean_delta_bal, sweep.tune_test_gap
    );
    let result = json!({
        "layer_source": source,
        "probe": {"kind": kind, "layer": layer, "eval_auc": probe_auc, "n_eval": eval.len()},
        "sweep": sweep,
        "pareto": pareto,
    });
    let config = config_of(
        &a,
        &[("model_name", json!(ds.manifest.model_name)), ("resolved_layer", json!(layer))],
    );
    let mut r = Report::new("pgla", config, result)
        .seed("folds", a.seed)
        .seed("probe", a.seed);
    r.inputs = dataset_digests(&a.manifest, &ds.manifest)?;
    emit(&r, &a.output)
}

fn correctness_map(path: &Path) -> Result<BTreeMap<String, bool>> {
    read_json(path)
}

fn split_report_for(manifest: &crate::store::Manifest, results: &BTreeMap<String, bool>) -> Result<SplitReport> {
    let mut splits = Vec::new();
    let mut hits = Vec::new();
    for s in &manifest.samples {
        if let Some(&c) = results.get(&s.sample_id) {
            splits.push(s.split);
            hits.push(c);
        }
    }
    SplitReport::from_predictions(&splits, &hits)
}

/// A split report from a bare `{acc, ...}` object, a report envelope, or the
/// first row of a `stats balanced` report.
fn load_split_report(path: &Path) -> Result<SplitReport> {
    let v: Value = read_json(path)?;
    let mut node = v.get("result").cloned().unwrap_or(v);
    if let Value::Array(rows) = node {
        node = rows
            .into_iter()
            .next()
            .ok_or_else(|| Error::Schema(format!("{}: empty report", path.display())))?;
    }
    let acc: BTreeMap<String, f64> = serde_json::from_value(node.get("acc").cloned().unwrap_or(Value::Null))
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    SplitReport::from_accuracies(acc)
}

#[derive(serde::Deserialize)]
struct AccRow {
    model: String,
    acc: BTreeMap<String, f64>,
}

fn stats(command: StatsCommand) -> Result<()> {
    match command {
        StatsCommand::Balanced(a) => {
            let (rows, inputs) = match (&a.input, &a.manifest, &a.results) {
                (Some(p), _, _) => {
                    let rows: Vec<AccRow> = read_json(p)?;
                    let rows = rows
                        .into_iter()
                        .map(|r| {
                            let rep = SplitReport::from_accuracies(r.acc)?;
                            Ok(json!({"model": r.model, "acc": rep.acc, "bal": rep.bal, "n": rep.n}))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    (rows, file_digests(&[("input", p)])?)
                }
                (None, Some(m), Some(res)) => {
                    let manifest = load_manifest(m)?;
                    let rep = split_report_for(&manifest, &correctness_map(res)?)?;
                    (
                        vec![json!({"model": a.model, "acc": rep.acc, "bal": rep.bal, "n": rep.n})],
                        file_digests(&[("manifest", m), ("results", res)])?,
                    )
                }
                _ => return Err(Error::Usage("give --input, or --manifest with --results".into())),
            };
            for r in &rows {
                println!("{}\tBal {:.1}", r["model"].as_str().unwrap_or("-"), r["bal"].as_f64().unwrap_or(0.0));
            }
            let mut r = Report::new("stats balanced", config_of(&a, &[]), rows);
            r.inputs = inputs;
            emit(&r, &a.output)
        }
        StatsCommand::Bootstrap(a) => {
            let results = correctness_map(&a.results)?;
            let all: Vec<bool> = results.values().copied().collect();
            let (lo, hi) = bootstrap_ci(&all, a.resamples, a.level, a.seed)?;
            let mut per_split = BTreeMap::new();
            let mut inputs = file_digests(&[("results", &a.results)])?;
            if let Some(m) = &a.manifest {
                inputs.insert("manifest".into(), sha256_file(m)?);
                let manifest = load_manifest(m)?;
                for split in crate::store::SplitLabel::ALL {
                    let xs: Vec<bool> = manifest
                        .samples
                        .iter()
                        .filter(|s| s.split == split)
                        .filter_map(|s| results.get(&s.sample_id).copied())
                        .collect();
                    if !xs.is_empty() {
                        let (l, h) = bootstrap_ci(&xs, a.resamples, a.level, a.seed)?;
                        let acc = 100.0 * xs.iter().filter(|&&c| c).count() as f64 / xs.len() as f64;
                        per_split.insert(split.as_str(), json!({"n": xs.len(), "acc": acc, "lo": l, "hi": h}));
                    }
                }
            }
            let acc = 100.0 * all.iter().filter(|&&c| c).count() as f64 / all.len() as f64;
            println!("accuracy {acc:.1}% [{lo:.1}, {hi:.1}]");
            let result = json!({"n": all.len(), "acc": acc, "lo": lo, "hi": hi, "per_split": per_split});
            let mut r = Report::new("stats bootstrap", config_of(&a, &[]), result).seed("bootstrap", a.seed);
            r.inputs = inputs;
            emit(&r, &a.output)
        }
        StatsCommand::Paired(a) => {
            let ra = correctness_map(&a.a)?;
            let rb = correctness_map(&a.b)?;
            let diffs: Vec<f64> = ra
                .iter()
                .filter_map(|(id, &x)| rb.get(id).map(|&y| f64::from(u8::from(y)) - f64::from(u8::from(x))))
                .collect();
            let p = paired_bootstrap_p(&diffs, a.resamples, a.seed)?;
            let mean = 100.0 * diffs.iter().sum::<f64>() / diffs.len().max(1) as f64;
            println!("mean diff {mean:+.1}pp, p {}", serde_json::to_value(p).unwrap_or(Value::Null));
            let result = json!({"n": diffs.len(), "mean_diff_pp": mean, "p": p});
            let mut r = Report::new("stats paired", config_of(&a, &[]), result).seed("bootstrap", a.seed);
            r.inputs = file_digests(&[("a", &a.a), ("b", &a.b)])?;
            emit(&r, &a.output)
        }
        StatsCommand::Shuffle(a) => {
            if a.k == 0 {
                return Err(Error::Usage("--shuffles must be at least 1".into()));
            }
            let manifest = load_manifest(&a.manifest)?;
            let mut position_counts = [0usize; 6];
            let mut perms = Vec::new();
            for s in &manifest.samples {
                let gold = s.correct_letter.to_string();
                for k in 0..a.k {
                    let p = shuffle_permutation(&s.video_id, &gold, k);
                    position_counts[p.apply(s.correct_letter).index()] += 1;
                    perms.push(json!({
                        "sample_id": s.sample_id,
                        "shuffle_id": k,
                        "seed": shuffle_seed(&s.video_id, &gold, k),
                        "displayed": p.displayed.iter().map(|l| l.as_char()).collect::<String>(),
                    }));
                }
            }
            let total = position_counts.iter().sum::<usize>().max(1) as f64;
            let freq: BTreeMap<String, f64> = Letter::ALL
                .iter()
                .map(|l| (l.to_string(), 100.0 * position_counts[l.index()] as f64 / total))
                .collect();
            let result = json!({"gold_position_pct": freq, "permutations": perms});
            let mut r = Report::new("stats shuffle", config_of(&a, &[]), result);
            r.inputs = file_digests(&[("manifest", &a.manifest)])?;
            emit(&r, &a.output)
        }
        StatsCommand::Consistency(a) => {
            let manifest = load_manifest(&a.manifest)?;
            let mut preds = Vec::with_capacity(a.predictions.len());
            let mut inputs = file_digests(&[("manifest", &a.manifest)])?;
            for (k, path) in a.predictions.iter().enumerate() {
                inputs.insert(format!("predictions_{k}"), sha256_file(path)?);
                let raw: BTreeMap<String, Option<String>> = read_json(path)?;
                let mapped = manifest
                    .samples
                    .iter()
                    .map(|s| {
                        let text = raw.get(&s.sample_id).ok_or_else(|| {
                            Error::ShuffleCountMismatch(format!("{} lacks sample {}", path.display(), s.sample_id))
                        })?;
                        let perm = shuffle_permutation(&s.video_id, &s.correct_letter.to_string(), k as u64);
                        Ok(text.as_deref().and_then(parse_answer_letter).map(|y| perm.invert(y)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                preds.push(mapped);
            }
            let gold: Vec<Letter> = manifest.samples.iter().map(|s| s.correct_letter).collect();
            let splits: Vec<_> = manifest.samples.iter().map(|s| s.split).collect();
            let rep = consistency_analysis(&preds, &gold, &splits)?;
            println!("never {:.1}%, always {:.1}%", rep.overall.never_pct, rep.overall.always_pct);
            let mut r = Report::new("stats consistency", config_of(&a, &[]), rep);
            r.inputs = inputs;
            emit(&r, &a.output)
        }
        StatsCommand::Temporal(a) => {
            let manifest = load_manifest(&a.manifest)?;
            let rep = temporal_stratify(&correctness_map(&a.results)?, &manifest.samples)?;
            let mut r = Report::new("stats temporal", config_of(&a, &[]), rep);
            r.inputs = file_digests(&[("manifest", &a.manifest), ("results", &a.results)])?;
            emit(&r, &a.output)
        }
        StatsCommand::TemporalDiag(a) => {
            let manifest = load_manifest(&a.manifest)?;
            let rep = temporal_logit_diagnostic(&correctness_map(&a.results)?, &manifest.samples, a.k, a.seed)?;
            println!("cv accuracy {:.1}% +- {:.1}", rep.cv_accuracy, rep.cv_std);
            let mut r = Report::new("stats temporal-diag", config_of(&a, &[]), rep).seed("folds", a.seed);
            r.inputs = file_digests(&[("manifest", &a.manifest), ("results", &a.results)])?;
            emit(&r, &a.output)
        }
        StatsCommand::Interference(a) => {
            let direction = match a.direction.as_str() {
                "A->V" | "a2v" | "av" => InterferenceDirection::AudioToVision,
                "V->A" | "v2a" | "va" => InterferenceDirection::VisionToAudio,
                d => return Err(Error::Usage(format!("unknown direction {d:?}; expected A->V or V->A"))),
            };
            let av = load_split_report(&a.av)?;
            let single = load_split_report(&a.single)?;
            let delta = interference_delta(&av, &single, direction)?;
            println!("{delta:+.1}pp");
            let result = json!({"direction": direction, "delta_pp": delta});
            let mut r = Report::new("stats interference", config_of(&a, &[]), result);
            r.inputs = file_digests(&[("av", &a.av), ("single", &a.single)])?;
            emit(&r, &a.output)
        }
        StatsCommand::Judge(a) => {
            let text = fs::read_to_string(&a.records).map_err(|e| Error::io(&a.records, e))?;
            let records: Vec<JudgeRecord> = if text.trim_start().starts_with('[') {
                serde_json::from_str(&text).map_err(|e| Error::Parse(format!("judge records: {e}")))?
            } else {
                text.lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(|l| serde_json::from_str(l).map_err(|e| Error::Parse(format!("judge record: {e}"))))
                    .collect::<Result<_>>()?
            };
            let rep = judge_aggregate(&records)?;
            println!(
                "P-Acc {:.1} E-Acc {:.1} R+R {:.1} R+W {:.1}",
                rep.p_acc, rep.e_acc, rep.r_plus_r, rep.r_plus_w
            );
            let mut r = Report::new("stats judge", config_of(&a, &[]), rep);
            r.inputs = file_digests(&[("records", &a.records)])?;
            emit(&r, &a.output)
        }
    }
}

fn report(a: ReportArgs) -> Result<()> {
    let values = a.inputs.iter().map(|p| read_json::<Value>(p)).collect::<Result<Vec<_>>>()?;
    let md = render_markdown(&values)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&a.out, md).map_err(|e| Error::io(&a.out, e))?;
    eprintln!("wrote {}", a.out.display());
    Ok(())
}
