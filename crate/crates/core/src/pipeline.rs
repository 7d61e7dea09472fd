//! Resumable stage orchestration.
//!
//! Every stage reads files and writes files under `paths.output_dir`. The
//! manifest records content hashes of each stage's inputs and outputs plus a
//! hash of its parameters; a stage whose record still matches is skipped.
//! The manifest holds no timestamps or absolute paths, so identical inputs
//! give identical manifests.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregate::{aggregate_embeddings, split_aligned_sets, AggregatedEmbeddings};
use crate::backtest::{form_portfolios, summarize, write_daily_csv, write_summary_csv};
use crate::config::PipelineConfig;
use crate::corpus::{bundle_stock_days, read_jsonl, read_raw_articles, write_jsonl, Cleaner};
use crate::embed_io::{group_by_stock_day, read_sentence_records, stack_bundle, EmbeddingMatrixPair};
use crate::error::{Error, Result};
use crate::ot::{align_pair, AlignmentRecord};
use crate::report::{
    correlation_matrix, coverage_series, heatmap_dump, similarity_table, write_correlation_csv,
    write_coverage_csv, write_similarity_csv,
};
use crate::scoring::{read_returns_csv, read_scores_csv, rolling_scores, write_scores_csv, ScoreRecord};

pub const MANIFEST_FILE: &str = "manifest.json";
const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Preprocess,
    Align,
    Aggregate,
    Score,
    Backtest,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Preprocess,
        Stage::Align,
        Stage::Aggregate,
        Stage::Score,
        Stage::Backtest,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Preprocess => "preprocess",
            Stage::Align => "align",
            Stage::Aggregate => "aggregate",
            Stage::Score => "score",
            Stage::Backtest => "backtest",
            Stage::Report => "report",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

/// Artifact file names, relative to the output directory.
pub mod artifacts {
    pub const BUNDLES: &str = "bundles.jsonl";
    pub const PREPROCESS_REPORT: &str = "preprocess_report.json";
    pub const ALIGNMENTS: &str = "alignments.jsonl";
    pub const ALIGN_REPORT: &str = "align_report.json";
    pub const AGGREGATES: &str = "aggregates.jsonl";
    pub const SCORES: &str = "scores.csv";
    pub const MODELS: &str = "models.json";
    pub const DAILY_LS: &str = "daily_ls.csv";
    pub const SUMMARY: &str = "summary.csv";
    pub const SIMILARITY: &str = "similarity.csv";
    pub const CORRELATIONS: &str = "correlations.csv";
    pub const COVERAGE: &str = "coverage.csv";
    pub const HEATMAP_DIR: &str = "heatmaps";
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub params_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub stages: BTreeMap<Stage, StageRecord>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Some(serde_json::from_slice(&bytes)?))
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub outcomes: Vec<(Stage, StageStatus)>,
    pub manifest: Manifest,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes).as_slice())
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn hash_params<T: Serialize>(params: &T) -> Result<String> {
    let mut bytes = CODE_VERSION.as_bytes().to_vec();
    bytes.extend(serde_json::to_vec(params)?);
    Ok(sha256_hex(&bytes))
}

fn missing(stage: Stage, what: impl Into<String>) -> Error {
    Error::StageDependency {
        stage: stage.name().into(),
        missing: what.into(),
    }
}

/// A raw input named by a config key, which must be set and exist.
fn raw_input(stage: Stage, key: &str, path: &Option<PathBuf>) -> Result<PathBuf> {
    let p = path.as_ref().ok_or_else(|| missing(stage, format!("{key} is not configured")))?;
    if !p.is_file() {
        return Err(missing(stage, format!("{key} file {} does not exist", p.display())));
    }
    Ok(p.clone())
}

/// An artifact of an earlier stage, which must exist.
fn upstream(stage: Stage, out: &Path, name: &str, producer: Stage) -> Result<PathBuf> {
    let p = out.join(name);
    if !p.is_file() {
        return Err(missing(stage, format!("{name} (run the {producer} stage first)")));
    }
    Ok(p)
}

struct StagePlan {
    inputs: Vec<(String, PathBuf)>,
    params_hash: String,
}

fn plan(stage: Stage, cfg: &PipelineConfig) -> Result<StagePlan> {
    let out = &cfg.paths.output_dir;
    let p = &cfg.paths;
    let (inputs, params_hash) = match stage {
        Stage::Preprocess => {
            let mut inputs = vec![("articles".to_string(), raw_input(stage, "paths.articles", &p.articles)?)];
            if p.calendar.is_some() {
                inputs.push(("calendar".into(), raw_input(stage, "paths.calendar", &p.calendar)?));
            } else if cfg.calendar.is_none() {
                return Err(missing(stage, "no calendar: set paths.calendar or a [calendar] table"));
            }
            (inputs, hash_params(&(&cfg.cleaning, &cfg.bundle, &cfg.calendar))?)
        }
        Stage::Align => (
            vec![("embeddings".into(), raw_input(stage, "paths.embeddings", &p.embeddings)?)],
            hash_params(&(&cfg.alignment, cfg.dim))?,
        ),
        Stage::Aggregate => (
            vec![
                ("embeddings".into(), raw_input(stage, "paths.embeddings", &p.embeddings)?),
                (artifacts::ALIGNMENTS.into(), upstream(stage, out, artifacts::ALIGNMENTS, Stage::Align)?),
            ],
            hash_params(&cfg.dim)?,
        ),
        Stage::Score => (
            vec![
                (artifacts::AGGREGATES.into(), upstream(stage, out, artifacts::AGGREGATES, Stage::Aggregate)?),
                ("returns".into(), raw_input(stage, "paths.returns", &p.returns)?),
            ],
            hash_params(&cfg.scoring)?,
        ),
        Stage::Backtest => (
            vec![
                (artifacts::SCORES.into(), upstream(stage, out, artifacts::SCORES, Stage::Score)?),
                ("returns".into(), raw_input(stage, "paths.returns", &p.returns)?),
            ],
            hash_params(&(&cfg.backtest, cfg.scoring.eval_start, cfg.scoring.eval_end))?,
        ),
        Stage::Report => {
            let mut inputs = vec![
                (artifacts::ALIGNMENTS.into(), upstream(stage, out, artifacts::ALIGNMENTS, Stage::Align)?),
                (artifacts::AGGREGATES.into(), upstream(stage, out, artifacts::AGGREGATES, Stage::Aggregate)?),
                (artifacts::SCORES.into(), upstream(stage, out, artifacts::SCORES, Stage::Score)?),
                ("returns".into(), raw_input(stage, "paths.returns", &p.returns)?),
            ];
            if !cfg.report.heatmaps.is_empty() {
                inputs.push(("embeddings".into(), raw_input(stage, "paths.embeddings", &p.embeddings)?));
            }
            (
                inputs,
                hash_params(&(
                    &cfg.report,
                    &cfg.alignment,
                    cfg.dim,
                    cfg.scoring.eval_start,
                    cfg.scoring.eval_end,
                ))?,
            )
        }
    };
    Ok(StagePlan { inputs, params_hash })
}

fn outputs_intact(out: &Path, rec: &StageRecord) -> bool {
    rec.outputs
        .iter()
        .all(|(name, hash)| hash_file(&out.join(name)).is_ok_and(|h| &h == hash))
}

/// Runs `stages` in pipeline order on a pool of `cfg.workers()` threads.
pub fn run(cfg: &PipelineConfig, stages: &[Stage], force: bool) -> Result<RunSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers())
        .build()
        .map_err(|e| Error::Parameter(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_in_pool(cfg, stages, force))
}

fn run_in_pool(cfg: &PipelineConfig, stages: &[Stage], force: bool) -> Result<RunSummary> {
    let out = &cfg.paths.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut manifest = Manifest::load(out)?.unwrap_or_default();
    if manifest.code_version != CODE_VERSION {
        manifest = Manifest {
            code_version: CODE_VERSION.into(),
            stages: BTreeMap::new(),
        };
    }

    let mut ordered: Vec<Stage> = stages.to_vec();
    ordered.sort();
    ordered.dedup();
    let mut outcomes = Vec::new();
    for stage in ordered {
        let plan = plan(stage, cfg)?;
        let mut inputs = BTreeMap::new();
        for (name, path) in &plan.inputs {
            inputs.insert(name.clone(), hash_file(path)?);
        }
        let up_to_date = manifest.stages.get(&stage).is_some_and(|rec| {
            rec.params_hash == plan.params_hash && rec.inputs == inputs && outputs_intact(out, rec)
        });
        if up_to_date && !force {
            log::info!("{stage}: up to date, skipped");
            outcomes.push((stage, StageStatus::Skipped));
            continue;
        }
        log::info!("{stage}: running");
        let paths: HashMap<String, PathBuf> = plan.inputs.into_iter().collect();
        let written = run_stage(stage, cfg, &paths)?;
        let mut outputs = BTreeMap::new();
        for name in written {
            outputs.insert(name.clone(), hash_file(&out.join(&name))?);
        }
        manifest.stages.insert(
            stage,
            StageRecord {
                params_hash: plan.params_hash,
                inputs,
                outputs,
            },
        );
        manifest.save(out)?;
        outcomes.push((stage, StageStatus::Ran));
    }
    manifest.save(out)?;
    Ok(RunSummary { outcomes, manifest })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(value)?;
    json.push(b'\n');
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignReport {
    pub stock_days: usize,
    pub aligned: usize,
    pub incomplete: usize,
    pub not_converged: usize,
    pub pairs: usize,
}

fn load_pairs(cfg: &PipelineConfig, path: &Path) -> Result<(Vec<EmbeddingMatrixPair>, usize)> {
    let groups = group_by_stock_day(read_sentence_records(path, cfg.dim)?);
    let stacked: Vec<Result<EmbeddingMatrixPair>> = groups.into_values().map(|g| stack_bundle(&g)).collect();
    let mut pairs = Vec::with_capacity(stacked.len());
    let mut incomplete = 0;
    for s in stacked {
        match s {
            Ok(p) => pairs.push(p),
            Err(Error::IncompleteBundle { .. }) => incomplete += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((pairs, incomplete))
}

fn in_eval(cfg: &PipelineConfig, scores: Vec<ScoreRecord>) -> Vec<ScoreRecord> {
    scores.into_iter().filter(|s| cfg.scoring.in_eval_range(s.trading_day)).collect()
}

/// Runs one stage and returns the artifact names it wrote.
fn run_stage(stage: Stage, cfg: &PipelineConfig, inputs: &HashMap<String, PathBuf>) -> Result<Vec<String>> {
    use artifacts::*;
    let out = &cfg.paths.output_dir;
    let input = |name: &str| inputs[name].as_path();
    match stage {
        Stage::Preprocess => {
            let cal = cfg.exchange_calendar()?.expect("planned with a calendar");
            let cleaner = Cleaner::new(&cfg.cleaning)?;
            let articles = read_raw_articles(input("articles"))?;
            let (bundles, report) = bundle_stock_days(&articles, &cal, &cleaner, &cfg.bundle);
            write_jsonl(&out.join(BUNDLES), &bundles)?;
            write_json(&out.join(PREPROCESS_REPORT), &report)?;
            Ok(vec![BUNDLES.into(), PREPROCESS_REPORT.into()])
        }
        Stage::Align => {
            let (pairs, incomplete) = load_pairs(cfg, input("embeddings"))?;
            let records: Vec<AlignmentRecord> = pairs
                .par_iter()
                .map(|p| align_pair(p, &cfg.alignment).map(|a| AlignmentRecord::from_alignment(p, &a, &cfg.alignment)))
                .collect::<Result<_>>()?;
            let report = AlignReport {
                stock_days: pairs.len() + incomplete,
                aligned: records.len(),
                incomplete,
                not_converged: records.iter().filter(|r| !r.converged).count(),
                pairs: records.iter().map(|r| r.pairs.len()).sum(),
            };
            if report.not_converged > 0 {
                log::warn!("{} stock-days did not converge", report.not_converged);
            }
            write_jsonl(&out.join(ALIGNMENTS), &records)?;
            write_json(&out.join(ALIGN_REPORT), &report)?;
            Ok(vec![ALIGNMENTS.into(), ALIGN_REPORT.into()])
        }
        Stage::Aggregate => {
            let (pairs, _) = load_pairs(cfg, input("embeddings"))?;
            let records: Vec<AlignmentRecord> = read_jsonl(input(ALIGNMENTS))?;
            let provenance = hash_file(input(ALIGNMENTS))?;
            let by_key: HashMap<(&str, NaiveDate), &AlignmentRecord> =
                records.iter().map(|r| ((r.ticker.as_str(), r.trading_day), r)).collect();
            let aggregates: Vec<AggregatedEmbeddings> = pairs
                .par_iter()
                .filter_map(|p| by_key.get(&(p.ticker.as_str(), p.trading_day)).map(|r| (p, *r)))
                .map(|(p, r)| {
                    if (r.n, r.m) != (p.english.nrows(), p.foreign.nrows()) {
                        return Err(Error::schema(
                            None,
                            format!("alignment for {}/{} does not match its embeddings", p.ticker, p.trading_day),
                        ));
                    }
                    let mut agg = aggregate_embeddings(p, &split_aligned_sets(&r.mask()?))?;
                    agg.provenance = provenance.clone();
                    Ok(agg)
                })
                .collect::<Result<_>>()?;
            write_jsonl(&out.join(AGGREGATES), &aggregates)?;
            Ok(vec![AGGREGATES.into()])
        }
        Stage::Score => {
            let aggregates: Vec<AggregatedEmbeddings> = read_jsonl(input(AGGREGATES))?;
            let returns = read_returns_csv(input("returns"))?;
            let output = rolling_scores(&aggregates, &returns, &cfg.scoring)?;
            write_scores_csv(&out.join(SCORES), &output.scores)?;
            write_json(&out.join(MODELS), &(&output.models, &output.skipped))?;
            Ok(vec![SCORES.into(), MODELS.into()])
        }
        Stage::Backtest => {
            let scores = in_eval(cfg, read_scores_csv(input(SCORES))?);
            let returns = read_returns_csv(input("returns"))?;
            let portfolios = form_portfolios(&scores, &returns, &cfg.backtest)?;
            write_daily_csv(&out.join(DAILY_LS), &portfolios)?;
            write_summary_csv(&out.join(SUMMARY), &summarize(&portfolios, cfg.backtest.annualization_days))?;
            Ok(vec![DAILY_LS.into(), SUMMARY.into()])
        }
        Stage::Report => {
            let aggregates: Vec<AggregatedEmbeddings> = read_jsonl(input(AGGREGATES))?;
            write_similarity_csv(&out.join(SIMILARITY), &similarity_table(&aggregates))?;
            let scores = in_eval(cfg, read_scores_csv(input(SCORES))?);
            let returns = read_returns_csv(input("returns"))?;
            write_correlation_csv(&out.join(CORRELATIONS), &correlation_matrix(&scores, &returns)?)?;
            let records: Vec<AlignmentRecord> = read_jsonl(input(ALIGNMENTS))?;
            write_coverage_csv(&out.join(COVERAGE), &coverage_series(&records))?;
            let mut written = vec![SIMILARITY.to_string(), CORRELATIONS.into(), COVERAGE.into()];
            if !cfg.report.heatmaps.is_empty() {
                let dir = out.join(HEATMAP_DIR);
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                let (pairs, _) = load_pairs(cfg, input("embeddings"))?;
                for t in &cfg.report.heatmaps {
                    let Some(p) = pairs.iter().find(|p| p.ticker == t.ticker && p.trading_day == t.date) else {
                        log::warn!("heatmap target {}/{} has no bilingual embeddings", t.ticker, t.date);
                        continue;
                    };
                    let name = format!("{HEATMAP_DIR}/{}_{}.json", t.ticker, t.date);
                    heatmap_dump(&out.join(&name), p, &cfg.alignment, cfg.report.baseline_temperature)?;
                    written.push(name);
                }
            }
            Ok(written)
        }
    }
}
