//! Evaluation of scored examples against human ratings, the multi-seed
//! ablation grid, and the run manifest written next to every output.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::ScoredExample;
use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::featurestore::FeatureStore;
use crate::idk::{self, Loss, Negatives, Regularizer, RelevanceModel, TrainConfig};
use crate::jsonl;
use crate::report::{render_report, ReportFormat};
use crate::seeds::derive_seed;
use crate::stats::{aggregate_all, correlate, CorrelationReport};

/// Correlates `scores` with the mean human rating of the `split` examples.
///
/// Every scored id must belong to the split; examples without a score are
/// skipped. The permutation seed is derived from `seed`, the metric and the
/// dataset.
pub fn evaluate(
    corpus: &Corpus,
    split: Split,
    scores: &[ScoredExample],
    n_perm: usize,
    seed: u64,
) -> Result<CorrelationReport> {
    let Some(metric) = scores.first().map(|s| s.metric.clone()) else {
        return Err(Error::Empty("no scores to evaluate".into()));
    };
    if let Some(s) = scores.iter().find(|s| s.metric != metric) {
        return Err(Error::Inconsistent(format!(
            "scores mix metrics `{metric}` and `{}`",
            s.metric
        )));
    }
    let mut by_id: HashMap<&str, f64> = HashMap::with_capacity(scores.len());
    for s in scores {
        if !s.score.is_finite() {
            return Err(Error::NonFinite(format!("score of {}", s.example_id)));
        }
        if by_id.insert(&s.example_id, s.score).is_some() {
            return Err(Error::DuplicateKey(format!("score for {}", s.example_id)));
        }
    }
    let mut human = Vec::new();
    let mut metric_scores = Vec::new();
    for ex in corpus.examples.iter().filter(|e| e.split == split) {
        if let Some(s) = by_id.remove(ex.id.as_str()) {
            if !ex.response.mean_rating.is_finite() {
                return Err(Error::NonFinite(format!("mean rating of {}", ex.id)));
            }
            human.push(ex.response.mean_rating);
            metric_scores.push(s);
        }
    }
    if !by_id.is_empty() {
        let mut extra: Vec<String> = by_id.keys().map(|k| k.to_string()).collect();
        extra.sort();
        return Err(Error::Inconsistent(format!(
            "{} scored id(s) not in the {split} split of {}: {}",
            extra.len(),
            corpus.dataset,
            extra.iter().take(5).cloned().collect::<Vec<_>>().join(", ")
        )));
    }
    let perm_seed = derive_seed(seed, &format!("perm/{metric}/{}", corpus.dataset));
    correlate(
        &metric,
        corpus.dataset,
        split,
        &human,
        &metric_scores,
        n_perm,
        perm_seed,
    )
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to rerun a command: inputs with content hashes, the
/// resolved settings and the seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub inputs: Vec<InputFile>,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        inputs: &[&Path],
        config: serde_json::Value,
        seeds: Vec<u64>,
    ) -> Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(InputFile {
                    path: p.to_path_buf(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            inputs,
            config,
            seeds,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        jsonl::write_json(path, self)
    }
}

/// Negative scheme of a grid cell; the text and pool come from the plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeScheme {
    Fixed,
    Shuffled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub regularizers: Vec<Regularizer>,
    pub negatives: Vec<NegativeScheme>,
    pub losses: Vec<Loss>,
}

impl GridSpec {
    /// {l1, none} x {fixed, shuffled} x {bce, triplet}.
    pub fn standard() -> Self {
        GridSpec {
            regularizers: vec![Regularizer::L1, Regularizer::None],
            negatives: vec![NegativeScheme::Fixed, NegativeScheme::Shuffled],
            losses: vec![Loss::BceSigmoid, Loss::TripletMod],
        }
    }

    pub fn named(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "standard" => Ok(Self::standard()),
            other => Err(Error::InvalidArgument(format!("unknown grid `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub data: String,
    pub regularizer: Regularizer,
    pub negatives: NegativeScheme,
    pub loss: Loss,
}

impl Cell {
    /// Directory-safe identifier, e.g. `H_l1_fixed_bce`.
    pub fn slug(&self) -> String {
        let neg = match self.negatives {
            NegativeScheme::Fixed => "fixed",
            NegativeScheme::Shuffled => "shuffled",
        };
        let loss = match self.loss {
            Loss::BceSigmoid => "bce",
            Loss::BceSoftmax2 => "bce2",
            Loss::TripletMod => "triplet",
        };
        format!("{}_{}_{}_{}", self.data, self.regularizer, neg, loss)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IDK[{}]", self.slug())
    }
}

pub fn expand_grid(data_labels: &[String], grid: &GridSpec) -> Vec<Cell> {
    let mut cells = Vec::new();
    for data in data_labels {
        for &loss in &grid.losses {
            for &regularizer in &grid.regularizers {
                for &negatives in &grid.negatives {
                    cells.push(Cell {
                        data: data.clone(),
                        regularizer,
                        negatives,
                        loss,
                    });
                }
            }
        }
    }
    cells
}

/// A training corpus (all splits) with its features.
pub struct TrainSource<'a> {
    pub label: String,
    pub corpus: &'a Corpus,
    pub store: &'a FeatureStore,
}

/// An evaluation corpus restricted to `split`, with its features.
pub struct EvalSet<'a> {
    pub corpus: &'a Corpus,
    pub store: &'a FeatureStore,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPlan {
    pub grid: GridSpec,
    pub seeds: Vec<u64>,
    /// Settings shared by every cell; loss, regularizer, negatives and seed
    /// are overridden per cell.
    pub base: TrainConfig,
    pub fixed_texts: Vec<String>,
    pub shuffle_window: usize,
    pub shuffle_seed: u64,
    pub n_perm: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub cell: Cell,
    pub metric: String,
    pub models: Vec<RelevanceModel>,
    pub runs: Vec<CorrelationReport>,
    pub aggregated: Vec<CorrelationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationOutcome {
    pub cells: Vec<CellOutcome>,
}

impl AblationOutcome {
    pub fn aggregated(&self) -> Vec<CorrelationReport> {
        self.cells
            .iter()
            .flat_map(|c| c.aggregated.iter().cloned())
            .collect()
    }
}

fn cell_config(plan: &AblationPlan, cell: &Cell, seed: u64) -> TrainConfig {
    let mut c = plan.base.clone();
    c.loss = cell.loss;
    c.regularizer = cell.regularizer;
    c.seed = seed;
    c.negatives = match cell.negatives {
        NegativeScheme::Fixed => Negatives::Fixed {
            texts: plan.fixed_texts.clone(),
        },
        NegativeScheme::Shuffled => Negatives::Shuffled {
            window: plan.shuffle_window,
            seed: plan.shuffle_seed,
        },
    };
    c
}

fn run_one(
    source: &TrainSource<'_>,
    evals: &[EvalSet<'_>],
    plan: &AblationPlan,
    cell: &Cell,
    seed: u64,
) -> Result<(RelevanceModel, Vec<CorrelationReport>)> {
    let config = cell_config(plan, cell, seed);
    let pairs = idk::build_pairs(
        source.corpus,
        source.store,
        Split::Train,
        &config.negatives,
        true,
    )?;
    let model = idk::train(&pairs.pairs, &config)?;
    let metric = cell.to_string();
    let mut reports = Vec::with_capacity(evals.len());
    for ev in evals {
        let split_corpus = ev.corpus.filter_split(ev.split);
        let scored = idk::score(&model, &split_corpus, ev.store, &metric, true)?;
        reports.push(evaluate(
            ev.corpus,
            ev.split,
            &scored.scores,
            plan.n_perm,
            seed,
        )?);
    }
    Ok((model, reports))
}

/// Trains and evaluates every (cell, seed) combination.
///
/// Runs are independent and execute in parallel; results are collected in
/// grid order, so the outcome does not depend on scheduling. With `out_dir`,
/// each run writes `cells/<slug>/seed<k>/{model,reports}.json` and each cell
/// its `aggregate.json`; the grid writes `aggregate.json`, `table.md` and
/// `table.csv`.
pub fn run_ablation(
    sources: &[TrainSource<'_>],
    evals: &[EvalSet<'_>],
    plan: &AblationPlan,
    out_dir: Option<&Path>,
) -> Result<AblationOutcome> {
    if plan.seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "ablation needs at least one seed".into(),
        ));
    }
    if evals.is_empty() {
        return Err(Error::InvalidArgument(
            "ablation needs at least one evaluation set".into(),
        ));
    }
    if plan.fixed_texts.is_empty() && plan.grid.negatives.contains(&NegativeScheme::Fixed) {
        return Err(Error::InvalidArgument(
            "fixed-negative cells need a negative text".into(),
        ));
    }
    let labels: Vec<String> = sources.iter().map(|s| s.label.clone()).collect();
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = labels.iter().find(|l| !seen.insert(*l)) {
        return Err(Error::DuplicateKey(format!("training data label `{dup}`")));
    }
    let source_of: BTreeMap<&str, &TrainSource<'_>> =
        sources.iter().map(|s| (s.label.as_str(), s)).collect();
    let cells = expand_grid(&labels, &plan.grid);
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| plan.seeds.iter().map(move |&s| (c, s)))
        .collect();

    let results: Vec<Result<(RelevanceModel, Vec<CorrelationReport>)>> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let cell = &cells[c];
            log::info!("training {cell} seed {seed}");
            run_one(source_of[cell.data.as_str()], evals, plan, cell, seed)
        })
        .collect();

    let mut outcomes: Vec<CellOutcome> = cells
        .iter()
        .map(|cell| CellOutcome {
            cell: cell.clone(),
            metric: cell.to_string(),
            models: Vec::new(),
            runs: Vec::new(),
            aggregated: Vec::new(),
        })
        .collect();
    for (&(c, seed), res) in jobs.iter().zip(results) {
        let (model, reports) = res?;
        if let Some(dir) = out_dir {
            let run_dir = dir
                .join("cells")
                .join(cells[c].slug())
                .join(format!("seed{seed}"));
            std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
            model.write(&run_dir.join("model.json"))?;
            jsonl::write_json(&run_dir.join("reports.json"), &reports)?;
        }
        outcomes[c].models.push(model);
        outcomes[c].runs.extend(reports);
    }
    for o in &mut outcomes {
        o.aggregated = aggregate_all(&o.runs)?;
        if let Some(dir) = out_dir {
            jsonl::write_json(
                &dir.join("cells").join(o.cell.slug()).join("aggregate.json"),
                &o.aggregated,
            )?;
        }
    }
    let outcome = AblationOutcome { cells: outcomes };
    if let Some(dir) = out_dir {
        let all = outcome.aggregated();
        jsonl::write_json(&dir.join("aggregate.json"), &all)?;
        for (name, format) in [
            ("table.md", ReportFormat::Markdown),
            ("table.csv", ReportFormat::Csv),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, render_report(&all, format)?).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(outcome)
}
