use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use dialrel::baselines::{self, CosineVariant, FedAggregate, ScoredExample};
use dialrel::config::Settings;
use dialrel::corpus::{self, AdapterConfig, Corpus, Dataset, Split};
use dialrel::experiment::{self, AblationPlan, EvalSet, GridSpec, RunManifest, TrainSource};
use dialrel::featurestore::{self, FeatureKind, FeatureStore, NspHead, ResponseFilter};
use dialrel::idk::{self, Loss, Regularizer, RelevanceModel, TrainConfig, DEFAULT_NEGATIVE};
use dialrel::nspprobe;
use dialrel::report::{self, ReportFormat};
use dialrel::stats::{self, CorrelationReport, DEFAULT_PERMUTATIONS};
use dialrel::{jsonl, Error, Result};

#[derive(Parser)]
#[command(
    name = "dialrel",
    version,
    about = "Dialogue-relevance metrics and evaluation"
)]
struct Cli {
    /// INI-style settings file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a raw dataset export into the corpus schema and assign splits.
    Ingest(IngestArgs),
    /// Write the feature extraction requests for a corpus.
    Manifest(ManifestArgs),
    /// Train an IDK head on pair features.
    Train(TrainArgs),
    /// Score a corpus with a trained head.
    Score(ScoreArgs),
    /// Score a corpus with a closed-form baseline metric.
    Baseline(BaselineArgs),
    /// Correlate scores with human ratings.
    Eval(EvalArgs),
    /// Combine per-seed reports into mean (std) aggregates.
    Aggregate(ReportsArgs),
    /// Train and evaluate the ablation grid over several seeds.
    Ablate(AblateArgs),
    /// Best-to-worst Spearman ratio per metric.
    Sensitivity(ReportsArgs),
    /// NSP accuracy with features masked to the top-k head weights.
    MaskNsp(MaskArgs),
    /// Render reports as a table.
    Report(ReportsArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    dataset: String,
    /// Raw export (JSONL, CSV or TSV).
    #[arg(long)]
    raw: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Adapter setting `key=value`; repeatable. Overrides `[adapter]` in the settings file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Keep every example in the test split.
    #[arg(long)]
    no_splits: bool,
}

#[derive(Args)]
struct ManifestArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated feature kinds, e.g. PAIR_NSP,PAIR_NSP_NEG.
    #[arg(long, value_delimiter = ',', required = true)]
    kinds: Vec<String>,
    #[arg(long)]
    split: Option<String>,
    /// Negative text for PAIR_NSP_NEG; repeatable.
    #[arg(long = "negative-text")]
    negative_texts: Vec<String>,
    /// Follow-up utterance for FOLLOWUP_LOGPROBS; repeatable.
    #[arg(long)]
    followup: Vec<String>,
    /// Only request gold (human) responses.
    #[arg(long)]
    gold_only: bool,
    /// Also request shuffled-negative pairs for the training contexts.
    #[arg(long)]
    shuffled: bool,
    #[arg(long)]
    shuffle_window: Option<usize>,
    #[arg(long)]
    shuffle_seed: Option<u64>,
}

#[derive(Args)]
struct TrainOpts {
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    reg: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    /// `fixed:<text>[|<text>...]` or `shuffled`.
    #[arg(long)]
    negatives: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    shuffle_window: Option<usize>,
    #[arg(long)]
    shuffle_seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    features: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    opts: TrainOpts,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    features: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    metric: Option<String>,
    /// Map scores linearly onto the dataset's Likert range.
    #[arg(long)]
    rescale: bool,
    /// Skip examples without features instead of failing.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct BaselineArgs {
    /// COS-FT, COS-MAX-BERT, COS-NSP-BERT, NORM-PROB or FED[-<name>].
    #[arg(long)]
    metric: String,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    features: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    split: Option<String>,
    /// FED follow-up utterance to include; repeatable (default: all stored).
    #[arg(long)]
    followup: Vec<String>,
    /// FED aggregation over follow-ups: sum or mean.
    #[arg(long)]
    aggregate: Option<String>,
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    n_perm: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReportsArgs {
    /// Report JSON files (one report or an array per file).
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// markdown, csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Restrict to one metric.
    #[arg(long)]
    metric: Option<String>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long, default_value = "standard")]
    grid: String,
    /// Training source `LABEL=CORPUS,FEATURES`; repeatable.
    #[arg(long = "train-data", required = true)]
    train_data: Vec<String>,
    /// Evaluation set `CORPUS,FEATURES`; repeatable.
    #[arg(long = "eval-data", required = true)]
    eval_data: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Restrict the losses of the grid, e.g. `bce`.
    #[arg(long, value_delimiter = ',')]
    losses: Option<Vec<String>>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    n_perm: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    opts: TrainOpts,
}

#[derive(Args)]
struct MaskArgs {
    #[arg(long)]
    model: PathBuf,
    /// Exported NSP head JSON.
    #[arg(long)]
    head: PathBuf,
    /// SOLO_NSP features of the evaluation pairs.
    #[arg(long)]
    features: Vec<PathBuf>,
    /// Gold-label sidecar JSONL.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn load_features(paths: &[PathBuf]) -> Result<FeatureStore> {
    if paths.is_empty() {
        return Err(usage("--features is required"));
    }
    let mut store = FeatureStore::new();
    for p in paths {
        store.merge(featurestore::read_store(p)?)?;
    }
    Ok(store)
}

fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// `<out>.run.json` next to the primary output.
fn manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        return out.join("run_manifest.json");
    }
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".run.json");
    out.with_file_name(name)
}

fn read_reports(paths: &[PathBuf]) -> Result<Vec<CorrelationReport>> {
    let mut out = Vec::new();
    for p in paths {
        let v: serde_json::Value = jsonl::read_json(p)?;
        let parsed = if v.is_array() {
            serde_json::from_value::<Vec<CorrelationReport>>(v)
        } else {
            serde_json::from_value::<CorrelationReport>(v).map(|r| vec![r])
        };
        out.extend(parsed.map_err(|e| Error::Malformed {
            context: p.display().to_string(),
            line: 1,
            detail: e.to_string(),
        })?);
    }
    Ok(out)
}

fn parse_split(s: Option<&str>, default: Split) -> Result<Split> {
    s.map(str::parse).transpose().map(|v| v.unwrap_or(default))
}

fn train_config(
    settings: &Settings,
    section: &str,
    opts: &TrainOpts,
    seed: Option<u64>,
) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let loss: Loss = match &opts.loss {
        Some(s) => s.parse()?,
        None => settings.parsed(section, "loss")?.unwrap_or(d.loss),
    };
    let regularizer: Regularizer = match &opts.reg {
        Some(s) => s.parse()?,
        None => settings.parsed(section, "reg")?.unwrap_or(d.regularizer),
    };
    let window = settings.resolve(opts.shuffle_window, section, "shuffle_window", 3750usize)?;
    let shuffle_seed = settings.resolve(opts.shuffle_seed, section, "shuffle_seed", 0u64)?;
    let negatives = match opts
        .negatives
        .clone()
        .or_else(|| settings.get(section, "negatives").map(str::to_string))
    {
        Some(s) => idk::parse_negatives(&s, window, shuffle_seed)?,
        None => d.negatives.clone(),
    };
    let config = TrainConfig {
        feature_kind: d.feature_kind,
        loss,
        regularizer,
        lambda: settings.resolve(opts.lambda, section, "lambda", d.lambda)?,
        negatives,
        epochs: settings.resolve(opts.epochs, section, "epochs", d.epochs)?,
        batch_size: settings.resolve(opts.batch, section, "batch", d.batch_size)?,
        learning_rate: settings.resolve(opts.lr, section, "lr", d.learning_rate)?,
        seed: settings.resolve(seed, section, "seed", d.seed)?,
        margin: settings.resolve(opts.margin, section, "margin", d.margin)?,
        adam: d.adam,
    };
    config.validate()?;
    Ok(config)
}

fn cmd_ingest(settings: &Settings, a: IngestArgs) -> Result<()> {
    let dataset: Dataset = a.dataset.parse()?;
    let mut map = settings.section("adapter");
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        map.insert(k.trim().to_string(), v.to_string());
    }
    let adapter = AdapterConfig::from_map(dataset, &map)?;
    let mut corpus = corpus::ingest(dataset, &a.raw, &adapter)?;
    if !a.no_splits {
        corpus = corpus::make_splits(corpus);
    }
    for w in corpus.validate()? {
        log::warn!("{w}");
    }
    corpus::write_corpus(&a.out, &corpus)?;
    for (split, (contexts, examples)) in corpus.split_counts() {
        eprintln!("{split}: {contexts} contexts, {examples} examples");
    }
    RunManifest::new(
        "ingest",
        &[&a.raw],
        json!({"dataset": dataset, "adapter": map, "splits": !a.no_splits}),
        vec![],
    )?
    .write(&manifest_path(&a.out))
}

fn cmd_manifest(settings: &Settings, a: ManifestArgs) -> Result<()> {
    let corpus_all = corpus::read_corpus(&a.corpus)?;
    let corpus = match &a.split {
        Some(s) => corpus_all.filter_split(s.parse()?),
        None => corpus_all.clone(),
    };
    let kinds: BTreeSet<FeatureKind> = a.kinds.iter().map(|k| k.parse()).collect::<Result<_>>()?;
    let filter = if a.gold_only {
        ResponseFilter::Gold
    } else {
        ResponseFilter::All
    };
    let mut manifest =
        featurestore::emit_manifest(&corpus, &kinds, &a.negative_texts, &a.followup, filter)?;
    let window = settings.resolve(a.shuffle_window, "manifest", "shuffle_window", 3750usize)?;
    let seed = settings.resolve(a.shuffle_seed, "manifest", "shuffle_seed", 0u64)?;
    if a.shuffled {
        let negs = corpus::shuffle_negatives(&corpus_all, window, seed, true)?;
        manifest
            .requests
            .extend(featurestore::emit_shuffled_requests(&corpus_all, &negs, seed)?.requests);
    }
    manifest.write(&a.out)?;
    eprintln!("{} requests", manifest.len());
    RunManifest::new(
        "manifest",
        &[&a.corpus],
        json!({"kinds": kinds, "split": a.split, "negative_texts": a.negative_texts,
               "followups": a.followup, "gold_only": a.gold_only, "shuffled": a.shuffled,
               "shuffle_window": window, "shuffle_seed": seed}),
        vec![seed],
    )?
    .write(&manifest_path(&a.out))
}

fn cmd_train(settings: &Settings, a: TrainArgs) -> Result<()> {
    let config = train_config(settings, "train", &a.opts, a.seed)?;
    let corpus = corpus::read_corpus(&a.corpus)?;
    let store = load_features(&a.features)?;
    let pairs = idk::build_pairs(&corpus, &store, Split::Train, &config.negatives, true)?;
    let (model, trace) = idk::train_traced(&pairs.pairs, &config)?;
    model.write(&a.out)?;
    eprintln!(
        "trained on {} pairs, {} steps; final epoch objective {:.6}",
        pairs.pairs.len(),
        trace.steps,
        trace.epoch_loss.last().copied().unwrap_or(f64::NAN)
    );
    let mut inputs: Vec<&Path> = vec![&a.corpus];
    inputs.extend(a.features.iter().map(PathBuf::as_path));
    RunManifest::new(
        "train",
        &inputs,
        serde_json::to_value(&config).expect("config"),
        vec![config.seed],
    )?
    .write(&manifest_path(&a.out))
}

fn split_corpus(path: &Path, split: Option<&str>) -> Result<(Corpus, Split)> {
    let split = parse_split(split, Split::Test)?;
    let corpus = corpus::read_corpus(path)?;
    Ok((corpus.filter_split(split), split))
}

fn cmd_score(_settings: &Settings, a: ScoreArgs) -> Result<()> {
    let model = RelevanceModel::read(&a.model)?;
    let (corpus, split) = split_corpus(&a.corpus, a.split.as_deref())?;
    let store = load_features(&a.features)?;
    let metric = a
        .metric
        .clone()
        .unwrap_or_else(|| idk::IDK_METRIC.to_string());
    let scored = idk::score(&model, &corpus, &store, &metric, !a.lenient)?;
    let mut scores = scored.scores;
    if a.rescale {
        let (lo, hi) = corpus.dataset.likert_range();
        let raw: Vec<f64> = scores.iter().map(|s| s.score).collect();
        for (s, v) in scores.iter_mut().zip(idk::rescale(&raw, lo, hi)?) {
            s.score = v;
        }
    }
    if !scored.missing.is_empty() {
        log::warn!(
            "{} example(s) without features were skipped",
            scored.missing.len()
        );
    }
    baselines::write_scores(&a.out, &scores)?;
    let mut inputs: Vec<&Path> = vec![&a.model, &a.corpus];
    inputs.extend(a.features.iter().map(PathBuf::as_path));
    RunManifest::new(
        "score",
        &inputs,
        json!({"split": split, "metric": metric, "rescale": a.rescale}),
        vec![],
    )?
    .write(&manifest_path(&a.out))
}

fn cmd_baseline(settings: &Settings, a: BaselineArgs) -> Result<()> {
    let (corpus, split) = split_corpus(&a.corpus, a.split.as_deref())?;
    let store = load_features(&a.features)?;
    let strict = !a.lenient;
    let name = a.metric.trim().to_ascii_uppercase();
    let cosine = |v: CosineVariant| baselines::cosine_metric(&corpus, &store, v, strict);
    let scored = match name.as_str() {
        "COS-FT" => cosine(CosineVariant::CosFt)?,
        "COS-MAX-BERT" | "COS-MAX" => cosine(CosineVariant::CosMax)?,
        "COS-NSP-BERT" | "COS-NSP" => cosine(CosineVariant::CosNsp)?,
        "NORM-PROB" => {
            let (scored, stats) = baselines::norm_prob_metric(&corpus, &store, strict)?;
            eprintln!(
                "5th percentile {:.6}{}",
                stats.c5th,
                if stats.degenerate {
                    " (degenerate batch)"
                } else {
                    ""
                }
            );
            scored
        }
        n if n == "FED" || n.starts_with("FED-") => {
            let aggregate: FedAggregate = match &a.aggregate {
                Some(s) => s.parse()?,
                None => settings
                    .parsed("baseline", "aggregate")?
                    .unwrap_or_default(),
            };
            let utterances = (!a.followup.is_empty()).then_some(a.followup.as_slice());
            baselines::fed_metric(&corpus, &store, n, utterances, aggregate, strict)?
        }
        _ => return Err(usage(format!("unknown baseline metric `{}`", a.metric))),
    };
    if !scored.missing.is_empty() {
        log::warn!(
            "{} example(s) without features were skipped",
            scored.missing.len()
        );
    }
    baselines::write_scores(&a.out, &scored.scores)?;
    let mut inputs: Vec<&Path> = vec![&a.corpus];
    inputs.extend(a.features.iter().map(PathBuf::as_path));
    RunManifest::new(
        "baseline",
        &inputs,
        json!({"metric": name, "split": split, "followups": a.followup}),
        vec![],
    )?
    .write(&manifest_path(&a.out))
}

fn cmd_eval(settings: &Settings, a: EvalArgs) -> Result<()> {
    let split = parse_split(a.split.as_deref(), Split::Test)?;
    let corpus = corpus::read_corpus(&a.corpus)?;
    let scores: Vec<ScoredExample> = baselines::read_scores(&a.scores)?;
    let n_perm = settings.resolve(a.n_perm, "eval", "n_perm", DEFAULT_PERMUTATIONS)?;
    let seed = settings.resolve(a.seed, "eval", "seed", 0u64)?;
    let report = experiment::evaluate(&corpus, split, &scores, n_perm, seed)?;
    jsonl::write_json(&a.out, &report)?;
    eprintln!(
        "{} on {} {}: S {} (p {:.4}), P {} (p {:.4}), n {}",
        report.metric,
        report.dataset,
        split,
        report::fmt2(report.spearman),
        report.p_spearman,
        report::fmt2(report.pearson),
        report.p_pearson,
        report.n
    );
    RunManifest::new(
        "eval",
        &[&a.corpus, &a.scores],
        json!({"split": split, "n_perm": n_perm}),
        vec![seed],
    )?
    .write(&manifest_path(&a.out))
}

fn filtered_reports(a: &ReportsArgs) -> Result<Vec<CorrelationReport>> {
    let mut reports = read_reports(&a.reports)?;
    if let Some(m) = &a.metric {
        reports.retain(|r| &r.metric == m);
    }
    if reports.is_empty() {
        return Err(Error::Empty("no reports matched".into()));
    }
    Ok(reports)
}

fn output_format(
    settings: &Settings,
    section: &str,
    a: &ReportsArgs,
    default: ReportFormat,
) -> Result<ReportFormat> {
    match &a.format {
        Some(f) => f.parse(),
        None => Ok(settings.parsed(section, "format")?.unwrap_or(default)),
    }
}

fn cmd_aggregate(settings: &Settings, a: ReportsArgs) -> Result<()> {
    let aggregated = stats::aggregate_all(&filtered_reports(&a)?)?;
    let format = output_format(settings, "aggregate", &a, ReportFormat::Json)?;
    write_text(
        a.out.as_deref(),
        &report::render_report(&aggregated, format)?,
    )
}

fn cmd_report(settings: &Settings, a: ReportsArgs) -> Result<()> {
    let reports = filtered_reports(&a)?;
    let format = output_format(settings, "report", &a, ReportFormat::Markdown)?;
    write_text(a.out.as_deref(), &report::render_report(&reports, format)?)
}

fn cmd_sensitivity(settings: &Settings, a: ReportsArgs) -> Result<()> {
    let reports = filtered_reports(&a)?;
    let mut per_metric: BTreeMap<&str, BTreeMap<Dataset, f64>> = BTreeMap::new();
    for r in &reports {
        if per_metric
            .entry(&r.metric)
            .or_default()
            .insert(r.dataset, r.spearman)
            .is_some()
        {
            return Err(Error::Inconsistent(format!(
                "several reports for {} on {}; aggregate runs first",
                r.metric, r.dataset
            )));
        }
    }
    let out: Vec<_> = per_metric
        .iter()
        .map(|(m, d)| stats::sensitivity_ratio(m, d))
        .collect::<Result<_>>()?;
    let format = output_format(settings, "sensitivity", &a, ReportFormat::Markdown)?;
    write_text(a.out.as_deref(), &report::render_sensitivity(&out, format)?)
}

fn cmd_ablate(settings: &Settings, a: AblateArgs) -> Result<()> {
    let base = train_config(settings, "ablate", &a.opts, None)?;
    let mut grid = GridSpec::named(&a.grid)?;
    if let Some(losses) = &a.losses {
        grid.losses = losses.iter().map(|l| l.parse()).collect::<Result<_>>()?;
    }
    let seeds = match &a.seeds {
        Some(s) => s.clone(),
        None => match settings.get("ablate", "seeds") {
            Some(s) => s
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<u64>()
                        .map_err(|e| usage(format!("seeds: {e}")))
                })
                .collect::<Result<_>>()?,
            None => vec![0, 1, 2],
        },
    };
    let split = parse_split(a.split.as_deref(), Split::Test)?;
    let n_perm = settings.resolve(a.n_perm, "ablate", "n_perm", DEFAULT_PERMUTATIONS)?;
    let fixed_texts = match &base.negatives {
        idk::Negatives::Fixed { texts } => texts.clone(),
        idk::Negatives::Shuffled { .. } => vec![DEFAULT_NEGATIVE.to_string()],
    };
    let window = settings.resolve(a.opts.shuffle_window, "ablate", "shuffle_window", 3750usize)?;
    let shuffle_seed = settings.resolve(a.opts.shuffle_seed, "ablate", "shuffle_seed", 0u64)?;

    let mut inputs: Vec<PathBuf> = Vec::new();
    let mut train_loaded = Vec::new();
    for spec in &a.train_data {
        let (label, paths) = spec.split_once('=').ok_or_else(|| {
            usage(format!(
                "--train-data expects LABEL=CORPUS,FEATURES, got `{spec}`"
            ))
        })?;
        let (c, f) = paths.split_once(',').ok_or_else(|| {
            usage(format!(
                "--train-data expects LABEL=CORPUS,FEATURES, got `{spec}`"
            ))
        })?;
        let (c, f) = (PathBuf::from(c), PathBuf::from(f));
        train_loaded.push((
            label.to_string(),
            corpus::read_corpus(&c)?,
            featurestore::read_store(&f)?,
        ));
        inputs.extend([c, f]);
    }
    let mut eval_loaded = Vec::new();
    for spec in &a.eval_data {
        let (c, f) = spec
            .split_once(',')
            .ok_or_else(|| usage(format!("--eval-data expects CORPUS,FEATURES, got `{spec}`")))?;
        let (c, f) = (PathBuf::from(c), PathBuf::from(f));
        eval_loaded.push((corpus::read_corpus(&c)?, featurestore::read_store(&f)?));
        inputs.extend([c, f]);
    }
    let sources: Vec<TrainSource<'_>> = train_loaded
        .iter()
        .map(|(label, corpus, store)| TrainSource {
            label: label.clone(),
            corpus,
            store,
        })
        .collect();
    let evals: Vec<EvalSet<'_>> = eval_loaded
        .iter()
        .map(|(corpus, store)| EvalSet {
            corpus,
            store,
            split,
        })
        .collect();
    let plan = AblationPlan {
        grid,
        seeds: seeds.clone(),
        base,
        fixed_texts,
        shuffle_window: window,
        shuffle_seed,
        n_perm,
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let outcome = experiment::run_ablation(&sources, &evals, &plan, Some(&a.out))?;
    let runs: usize = outcome.cells.iter().map(|c| c.models.len()).sum();
    eprintln!("{} cells, {} models", outcome.cells.len(), runs);
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    RunManifest::new(
        "ablate",
        &input_refs,
        serde_json::to_value(&plan).expect("plan"),
        seeds,
    )?
    .write(&a.out.join("run_manifest.json"))
}

fn cmd_mask(settings: &Settings, a: MaskArgs) -> Result<()> {
    let model = RelevanceModel::read(&a.model)?;
    let head = NspHead::read(&a.head)?;
    let store = load_features(&a.features)?;
    let labels = nspprobe::read_labels(&a.labels)?;
    let pairs = nspprobe::labelled_features(&store, &labels)?;
    let k = settings.resolve(a.k, "mask-nsp", "k", 7usize)?;
    let report = nspprobe::mask_probe(&head, &model, &pairs, k)?;
    let mut text = serde_json::to_string_pretty(&report).expect("report");
    text.push('\n');
    write_text(a.out.as_deref(), &text)?;
    eprintln!(
        "NSP accuracy {:.1}% unmasked, {:.1}% with top-{k} mask",
        100.0 * report.unmasked_accuracy,
        100.0 * report.masked_accuracy
    );
    if let Some(out) = &a.out {
        let mut inputs: Vec<&Path> = vec![&a.model, &a.head, &a.labels];
        inputs.extend(a.features.iter().map(PathBuf::as_path));
        RunManifest::new("mask-nsp", &inputs, json!({"k": k}), vec![])?
            .write(&manifest_path(out))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let settings = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    let Some(command) = cli.command else {
        unreachable!("handled in main");
    };
    match command {
        Command::Ingest(a) => cmd_ingest(&settings, a),
        Command::Manifest(a) => cmd_manifest(&settings, a),
        Command::Train(a) => cmd_train(&settings, a),
        Command::Score(a) => cmd_score(&settings, a),
        Command::Baseline(a) => cmd_baseline(&settings, a),
        Command::Eval(a) => cmd_eval(&settings, a),
        Command::Aggregate(a) => cmd_aggregate(&settings, a),
        Command::Ablate(a) => cmd_ablate(&settings, a),
        Command::Sensitivity(a) => cmd_sensitivity(&settings, a),
        Command::MaskNsp(a) => cmd_mask(&settings, a),
        Command::Report(a) => cmd_report(&settings, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.command.is_none() {
        use clap::CommandFactory;
        let _ = Cli::command().print_help();
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
