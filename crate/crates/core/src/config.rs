//! Pipeline configuration: TOML parsing, defaults, and validation that
//! reports every problem at once.
//!
//! Unknown keys are dropped with a warning so that newer configs still load.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::backtest::BacktestParams;
use crate::corpus::{BundleConfig, CalendarSpec, Cleaner, CleaningRules, ExchangeCalendar};
use crate::embed_io::DEFAULT_DIM;
use crate::error::{ConfigIssue, Error, Result};
use crate::ot::AlignParams;
use crate::scoring::ScoringParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub articles: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub returns: Option<PathBuf>,
    /// Calendar TOML file; an inline `[calendar]` table is used otherwise.
    pub calendar: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            articles: None,
            embeddings: None,
            returns: None,
            calendar: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapTarget {
    pub ticker: String,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportConfig {
    /// Temperature of the softmax and entmax baselines in heatmap dumps.
    pub baseline_temperature: f64,
    /// Stock-days whose dense matrices are dumped.
    pub heatmaps: Vec<HeatmapTarget>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            baseline_temperature: 1.0,
            heatmaps: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub dim: usize,
    /// Worker threads; all available cores when absent.
    pub workers: Option<usize>,
    pub paths: PathsConfig,
    pub calendar: Option<CalendarSpec>,
    pub cleaning: CleaningRules,
    pub bundle: BundleConfig,
    pub alignment: AlignParams,
    pub scoring: ScoringParams,
    pub backtest: BacktestParams,
    pub report: ReportConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            workers: None,
            paths: PathsConfig::default(),
            calendar: None,
            cleaning: CleaningRules::default(),
            bundle: BundleConfig::default(),
            alignment: AlignParams::default(),
            scoring: ScoringParams::default(),
            backtest: BacktestParams::default(),
            report: ReportConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Calendar from `paths.calendar` or the inline table.
    pub fn exchange_calendar(&self) -> Result<Option<ExchangeCalendar>> {
        match (&self.paths.calendar, &self.calendar) {
            (Some(p), _) => ExchangeCalendar::load(p).map(Some),
            (None, Some(spec)) => ExchangeCalendar::from_spec(spec).map(Some),
            (None, None) => Ok(None),
        }
    }

    /// Every key the config understands, with all optional fields filled.
    fn key_template() -> toml::Value {
        let day = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
        let mut t = PipelineConfig {
            workers: Some(1),
            calendar: Some(CalendarSpec {
                exchange: String::new(),
                timezone: String::new(),
                market_open: String::new(),
                cutoff_minutes: 0,
                start: Some(day),
                end: Some(day),
                holidays: vec![day],
                trading_days: vec![day],
            }),
            ..PipelineConfig::default()
        };
        t.paths.articles = Some(PathBuf::new());
        t.paths.embeddings = Some(PathBuf::new());
        t.paths.returns = Some(PathBuf::new());
        t.paths.calendar = Some(PathBuf::new());
        t.scoring.last_year = Some(0);
        t.scoring.eval_start = Some(0);
        t.scoring.eval_end = Some(0);
        t.report.heatmaps = vec![HeatmapTarget {
            ticker: String::new(),
            date: day,
        }];
        toml::Value::try_from(&t).expect("template serializes")
    }
}

/// A validated config with relative paths resolved and any warnings.
#[derive(Debug, Clone)]
pub struct ValidatedConfig {
    pub config: PipelineConfig,
    pub warnings: Vec<String>,
}

fn strip_unknown(value: &mut toml::Value, template: &toml::Value, prefix: &str, warnings: &mut Vec<String>) {
    match (value, template) {
        (toml::Value::Table(v), toml::Value::Table(t)) => {
            let keys: Vec<String> = v.keys().cloned().collect();
            for k in keys {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                match t.get(&k) {
                    None => {
                        warnings.push(format!("unknown key `{path}` ignored"));
                        v.remove(&k);
                    }
                    Some(sub) => strip_unknown(v.get_mut(&k).expect("key present"), sub, &path, warnings),
                }
            }
        }
        (toml::Value::Array(v), toml::Value::Array(t)) => {
            if let Some(first) = t.first() {
                for (i, item) in v.iter_mut().enumerate() {
                    strip_unknown(item, first, &format!("{prefix}[{i}]"), warnings);
                }
            }
        }
        _ => {}
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

/// Parses config text. Relative paths resolve against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<ValidatedConfig> {
    let mut value: toml::Value = toml::from_str::<toml::Table>(text)
        .map(toml::Value::Table)
        .map_err(|e| {
            Error::Config(vec![ConfigIssue {
                field: "<toml>".into(),
                message: e.message().to_string(),
            }])
        })?;
    let mut warnings = Vec::new();
    strip_unknown(&mut value, &PipelineConfig::key_template(), "", &mut warnings);
    let mut config: PipelineConfig = value.try_into().map_err(|e: toml::de::Error| {
        Error::Config(vec![ConfigIssue {
            field: "<toml>".into(),
            message: e.message().to_string(),
        }])
    })?;

    let p = &mut config.paths;
    for path in [&mut p.articles, &mut p.embeddings, &mut p.returns, &mut p.calendar]
        .into_iter()
        .flatten()
    {
        resolve(base_dir, path);
    }
    resolve(base_dir, &mut p.output_dir);

    let issues = validate(&config);
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    Ok(ValidatedConfig { config, warnings })
}

/// Reads, defaults and validates a config file.
pub fn validate_config(path: &Path) -> Result<ValidatedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

/// Every range violation in `c`, addressed by dotted field path.
pub fn validate(c: &PipelineConfig) -> Vec<ConfigIssue> {
    let mut issues = Vec::new();
    let mut bad = |field: &str, message: &str| {
        issues.push(ConfigIssue {
            field: field.into(),
            message: message.into(),
        })
    };

    if c.dim == 0 {
        bad("dim", "must be positive");
    }
    if c.workers == Some(0) {
        bad("workers", "must be positive");
    }

    let a = &c.alignment;
    if !positive(a.epsilon) {
        bad("alignment.epsilon", "must be positive");
    }
    if !positive(a.tol) {
        bad("alignment.tol", "must be positive");
    }
    if a.max_iter == 0 {
        bad("alignment.max_iter", "must be positive");
    }
    if !(a.top_frac > 0.0 && a.top_frac <= 1.0) {
        bad("alignment.top_frac", "must lie in (0, 1]");
    }
    if !(-1.0..=1.0).contains(&a.xi_thres) {
        bad("alignment.xi_thres", "must lie in [-1, 1]");
    }

    let s = &c.scoring;
    if s.lambda_grid.is_empty() {
        bad("scoring.lambda_grid", "must not be empty");
    }
    for (k, l) in s.lambda_grid.iter().enumerate() {
        if !positive(*l) {
            bad(&format!("scoring.lambda_grid[{k}]"), "must be positive");
        }
    }
    if s.folds < 2 {
        bad("scoring.folds", "must be at least 2");
    }
    if s.window_years < 0 {
        bad("scoring.window_years", "must be non-negative");
    }
    if s.min_train_rows < s.folds {
        bad("scoring.min_train_rows", "must be at least the fold count");
    }
    if s.last_year.is_some_and(|y| y <= s.first_train_year) {
        bad("scoring.last_year", "must be after first_train_year");
    }
    if let (Some(lo), Some(hi)) = (s.eval_start, s.eval_end) {
        if lo > hi {
            bad("scoring.eval_end", "must not precede eval_start");
        }
    }

    let b = &c.backtest;
    if b.n_quantiles < 2 {
        bad("backtest.n_quantiles", "must be at least 2");
    }
    if b.min_stocks < b.n_quantiles {
        bad("backtest.min_stocks", "must be at least n_quantiles");
    }
    if !positive(b.annualization_days) {
        bad("backtest.annualization_days", "must be positive");
    }

    if let Err(e) = Cleaner::new(&c.cleaning) {
        bad("cleaning", &e.to_string());
    }
    if c.cleaning.min_chars > c.cleaning.max_chars {
        bad("cleaning.min_chars", "must not exceed max_chars");
    }
    if c.bundle.min_ticker_score > 100 {
        bad("bundle.min_ticker_score", "must lie in [0, 100]");
    }
    if c.bundle.update_window_hours < 0 {
        bad("bundle.update_window_hours", "must be non-negative");
    }
    if c.bundle.english_language == c.bundle.foreign_language {
        bad("bundle.foreign_language", "must differ from english_language");
    }
    if c.paths.calendar.is_none() {
        if let Some(spec) = &c.calendar {
            if let Err(e) = ExchangeCalendar::from_spec(spec) {
                bad("calendar", &e.to_string());
            }
        }
    }

    if !positive(c.report.baseline_temperature) {
        bad("report.baseline_temperature", "must be positive");
    }
    issues
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ValidatedConfig> {
        parse_config(text, Path::new("/base"))
    }

    fn issues(text: &str) -> Vec<ConfigIssue> {
        match parse(text) {
            Err(Error::Config(v)) => v,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_config_is_fully_defaulted() {
        let v = parse("").unwrap();
        let c = &v.config;
        assert!(v.warnings.is_empty());
        assert_eq!(c.alignment.xi_thres, 0.6);
        assert_eq!(c.alignment.top_frac, 0.05);
        assert_eq!(c.alignment.epsilon, 0.05);
        assert_eq!(c.scoring.lambda_grid, vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0]);
        assert_eq!(c.scoring.window_years, 5);
        assert_eq!(c.backtest.n_quantiles, 5);
        assert_eq!(c.backtest.min_stocks, 20);
        assert_eq!(c.backtest.annualization_days, 252.0);
        assert_eq!(c.bundle.min_ticker_score, 75);
        assert_eq!(c.dim, 768);
        assert_eq!(c.paths.output_dir, Path::new("/base/out"));
    }

    #[test]
    fn negative_epsilon_names_the_field() {
        let v = issues("[alignment]\nepsilon = -1.0\n");
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "alignment.epsilon");
    }

    #[test]
    fn zero_lambda_is_rejected() {
        let v = issues("[scoring]\nlambda_grid = [0.0, 10.0]\n");
        assert_eq!(v[0].field, "scoring.lambda_grid[0]");
    }

    #[test]
    fn all_errors_are_reported_together() {
        let v = issues("dim = 0\n[alignment]\nepsilon = 0.0\ntop_frac = 2.0\n[backtest]\nn_quantiles = 1\n");
        let fields: Vec<&str> = v.iter().map(|i| i.field.as_str()).collect();
        assert_eq!(fields, vec!["dim", "alignment.epsilon", "alignment.top_frac", "backtest.n_quantiles"]);
    }

    #[test]
    fn unknown_keys_warn() {
        let v = parse("colour = 1\n[alignment]\nepsilon = 0.1\nmystery = true\n[[report.heatmaps]]\nticker = \"A\"\ndate = \"2020-01-02\"\nzoom = 2\n").unwrap();
        assert_eq!(v.config.alignment.epsilon, 0.1);
        assert_eq!(
            v.warnings,
            vec![
                "unknown key `alignment.mystery` ignored",
                "unknown key `colour` ignored",
                "unknown key `report.heatmaps[0].zoom` ignored",
            ]
        );
    }

    #[test]
    fn relative_paths_resolve_against_the_config() {
        let v = parse("[paths]\nembeddings = \"e.jsonl\"\nreturns = \"/abs/r.csv\"\n").unwrap();
        assert_eq!(v.config.paths.embeddings.as_deref(), Some(Path::new("/base/e.jsonl")));
        assert_eq!(v.config.paths.returns.as_deref(), Some(Path::new("/abs/r.csv")));
    }

    #[test]
    fn type_errors_are_config_errors() {
        assert!(matches!(parse("[alignment]\nepsilon = \"big\"\n"), Err(Error::Config(_))));
        assert!(matches!(parse("[alignment\n"), Err(Error::Config(_))));
    }

    #[test]
    fn normalized_config_round_trips() {
        let v = parse("[alignment]\nepsilon = 0.02\n").unwrap();
        let again = parse(&v.config.to_toml()).unwrap();
        assert_eq!(again.config, v.config);
        assert!(again.warnings.is_empty());
    }

    #[test]
    fn inline_calendar_is_checked() {
        let v = issues("[calendar]\nexchange = \"X\"\ntimezone = \"Mars/Base\"\nmarket_open = \"09:00\"\n");
        assert_eq!(v[0].field, "calendar");
    }
}
