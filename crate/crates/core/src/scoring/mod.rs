//! Ridge return scores on a rolling annual schedule.
//!
//! For scoring year `Y`, one model per (language, kind) is trained on the
//! stock-days of calendar years `Y - 1 - window_years ..= Y - 1` and applied
//! to every stock-day of `Y` whose feature vector is present.

mod ridge;

pub use ridge::{cross_validate_lambda, fit_ridge, fold_ranges, solve_normal_equations, CvResult};

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::AggregatedEmbeddings;
use crate::error::{Error, Result};
use crate::{Kind, Lang};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnObservation {
    pub ticker: String,
    #[serde(rename = "date")]
    pub trading_day: NaiveDate,
    pub ret_oc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringParams {
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    /// Years before the last training year; 5 gives six training years.
    pub window_years: i32,
    pub first_train_year: i32,
    /// Last year to score; defaults to the last year with features.
    pub last_year: Option<i32>,
    pub min_train_rows: usize,
    /// First year entering the backtest and report tables.
    pub eval_start: Option<i32>,
    /// Last year entering the backtest and report tables.
    pub eval_end: Option<i32>,
}

impl Default for ScoringParams {
    fn default() -> Self {
        Self {
            lambda_grid: (1..=10).map(|k| 10.0 * f64::from(k)).collect(),
            folds: 5,
            window_years: 5,
            first_train_year: 2012,
            last_year: None,
            min_train_rows: 100,
            eval_start: None,
            eval_end: None,
        }
    }
}

impl ScoringParams {
    pub fn in_eval_range(&self, day: NaiveDate) -> bool {
        let y = day.year();
        self.eval_start.is_none_or(|s| y >= s) && self.eval_end.is_none_or(|e| y <= e)
    }

    /// Inclusive training years for scoring year `year`.
    pub fn train_window(&self, year: i32) -> (i32, i32) {
        ((year - 1 - self.window_years).max(self.first_train_year), year - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub score_year: i32,
    pub language: Lang,
    pub kind: Kind,
    pub train_start_year: i32,
    pub train_end_year: i32,
    pub last_train_day: NaiveDate,
    pub rows: usize,
    pub lambda: f64,
    pub cv_mse: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub ticker: String,
    #[serde(rename = "date")]
    pub trading_day: NaiveDate,
    pub language: Lang,
    pub kind: Kind,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedModel {
    pub score_year: i32,
    pub language: Lang,
    pub kind: Kind,
    pub rows: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RollingOutput {
    pub scores: Vec<ScoreRecord>,
    pub models: Vec<RidgeModel>,
    pub skipped: Vec<SkippedModel>,
}

pub fn returns_index(returns: &[ReturnObservation]) -> Result<HashMap<(&str, NaiveDate), f64>> {
    let mut map = HashMap::with_capacity(returns.len());
    for r in returns {
        if !(r.ret_oc > -1.0 && r.ret_oc.is_finite()) {
            return Err(Error::Data(format!(
                "return {} for {}/{} is not above -1",
                r.ret_oc, r.ticker, r.trading_day
            )));
        }
        if map.insert((r.ticker.as_str(), r.trading_day), r.ret_oc).is_some() {
            return Err(Error::Data(format!("duplicate return for {}/{}", r.ticker, r.trading_day)));
        }
    }
    Ok(map)
}

enum Cell {
    Fitted(RidgeModel, Vec<ScoreRecord>),
    Skipped(SkippedModel),
}

/// Fits one model per (scoring year, language, kind) and scores the
/// scoring year. Training data never reaches into the scored year.
pub fn rolling_scores(
    features: &[AggregatedEmbeddings],
    returns: &[ReturnObservation],
    params: &ScoringParams,
) -> Result<RollingOutput> {
    if features.is_empty() {
        return Ok(RollingOutput::default());
    }
    let ret = returns_index(returns)?;
    let mut ordered: Vec<&AggregatedEmbeddings> = features.iter().collect();
    ordered.sort_by(|a, b| (a.trading_day, &a.ticker).cmp(&(b.trading_day, &b.ticker)));
    if ordered
        .windows(2)
        .any(|w| w[0].trading_day == w[1].trading_day && w[0].ticker == w[1].ticker)
    {
        return Err(Error::Data("duplicate stock-day in features".into()));
    }

    let max_year = ordered.last().expect("non-empty").trading_day.year();
    let last_year = params.last_year.unwrap_or(max_year);
    let years: Vec<i32> = ((params.first_train_year + 1)..=last_year).collect();
    let cells: Vec<(i32, Lang, Kind)> = years
        .iter()
        .flat_map(|&y| Lang::ALL.into_iter().flat_map(move |l| Kind::ALL.into_iter().map(move |k| (y, l, k))))
        .collect();

    let results: Vec<Result<Cell>> = cells
        .par_iter()
        .map(|&(year, lang, kind)| fit_cell(&ordered, &ret, params, year, lang, kind))
        .collect();

    let mut out = RollingOutput::default();
    for r in results {
        match r? {
            Cell::Fitted(model, scores) => {
                out.models.push(model);
                out.scores.extend(scores);
            }
            Cell::Skipped(s) => {
                log::warn!(
                    "model {}/{}/{} skipped: {} ({} rows)",
                    s.score_year,
                    s.language,
                    s.kind,
                    s.reason,
                    s.rows
                );
                out.skipped.push(s);
            }
        }
    }
    out.scores.sort_by(|a, b| {
        (a.trading_day, &a.ticker, a.language, a.kind).cmp(&(b.trading_day, &b.ticker, b.language, b.kind))
    });
    Ok(out)
}

fn fit_cell(
    ordered: &[&AggregatedEmbeddings],
    ret: &HashMap<(&str, NaiveDate), f64>,
    params: &ScoringParams,
    year: i32,
    lang: Lang,
    kind: Kind,
) -> Result<Cell> {
    let (start, end) = params.train_window(year);
    let mut rows: Vec<&[f64]> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    let mut last_train_day = None;
    for f in ordered {
        let y = f.trading_day.year();
        if y < start || y > end {
            continue;
        }
        let (Some(v), Some(&r)) = (f.vector(lang, kind), ret.get(&(f.ticker.as_str(), f.trading_day))) else {
            continue;
        };
        rows.push(v);
        targets.push(r);
        last_train_day = Some(f.trading_day);
    }
    let skipped = |reason: &str| {
        Ok(Cell::Skipped(SkippedModel {
            score_year: year,
            language: lang,
            kind,
            rows: rows.len(),
            reason: reason.into(),
        }))
    };
    if rows.is_empty() {
        return skipped("empty training window");
    }
    if rows.len() < params.min_train_rows || rows.len() < params.folds {
        return skipped("too few training rows");
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Data("feature vectors differ in dimension".into()));
    }
    let x = DMatrix::from_fn(rows.len(), dim, |i, k| rows[i][k]);
    let y = DVector::from_vec(targets);
    let cv = cross_validate_lambda(&x, &y, &params.lambda_grid, params.folds)?;
    let w = fit_ridge(&x, &y, cv.lambda)?;

    let scores = ordered
        .iter()
        .filter(|f| f.trading_day.year() == year)
        .filter_map(|f| {
            f.vector(lang, kind).map(|v| ScoreRecord {
                ticker: f.ticker.clone(),
                trading_day: f.trading_day,
                language: lang,
                kind,
                score: v.iter().zip(w.iter()).map(|(a, b)| a * b).sum(),
            })
        })
        .collect();
    Ok(Cell::Fitted(
        RidgeModel {
            score_year: year,
            language: lang,
            kind,
            train_start_year: start,
            train_end_year: end,
            last_train_day: last_train_day.expect("rows is non-empty"),
            rows: y.len(),
            lambda: cv.lambda,
            cv_mse: cv.mse,
            weights: w.iter().copied().collect(),
        },
        scores,
    ))
}

/// Score records whose model saw data on or after the first scored day of
/// the same (year, language, kind). An empty result means no look-ahead.
pub fn look_ahead_violations<'a>(scores: &'a [ScoreRecord], models: &[RidgeModel]) -> Vec<&'a ScoreRecord> {
    let by_cell: BTreeMap<(i32, Lang, Kind), &RidgeModel> = models
        .iter()
        .map(|m| ((m.score_year, m.language, m.kind), m))
        .collect();
    let mut first_day: BTreeMap<(i32, Lang, Kind), NaiveDate> = BTreeMap::new();
    for s in scores {
        let key = (s.trading_day.year(), s.language, s.kind);
        let e = first_day.entry(key).or_insert(s.trading_day);
        *e = (*e).min(s.trading_day);
    }
    scores
        .iter()
        .filter(|s| {
            let key = (s.trading_day.year(), s.language, s.kind);
            match by_cell.get(&key) {
                None => true,
                Some(m) => {
                    m.last_train_day >= first_day[&key]
                        || m.train_end_year >= s.trading_day.year()
                        || m.last_train_day >= s.trading_day
                }
            }
        })
        .collect()
}

pub fn read_returns_csv(path: &Path) -> Result<Vec<ReturnObservation>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_returns_csv(path: &Path, returns: &[ReturnObservation]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in returns {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_scores_csv(path: &Path, scores: &[ScoreRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in scores {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores_csv(path: &Path) -> Result<Vec<ScoreRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}
