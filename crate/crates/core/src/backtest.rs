//! Daily quantile long-short portfolios and their summary statistics.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{returns_index, ReturnObservation, ScoreRecord};
use crate::{Kind, Lang};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestParams {
    pub n_quantiles: usize,
    pub min_stocks: usize,
    pub annualization_days: f64,
}

impl Default for BacktestParams {
    fn default() -> Self {
        Self {
            n_quantiles: 5,
            min_stocks: 20,
            annualization_days: 252.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyPortfolio {
    pub trading_day: NaiveDate,
    pub language: Lang,
    pub kind: Kind,
    pub long: Vec<String>,
    pub short: Vec<String>,
    pub ret_long: f64,
    pub ret_short: f64,
    pub ls: f64,
    pub n_stocks: usize,
    /// Stock count was not a multiple of the quantile count.
    pub uneven: bool,
    /// Every score on the day was equal; order fell back to tickers.
    pub degenerate_ranking: bool,
}

/// Bucket sizes from the top: the remainder goes one each to the highest
/// buckets.
pub fn bucket_sizes(n: usize, quantiles: usize) -> Vec<usize> {
    let base = n / quantiles;
    let extra = n % quantiles;
    (0..quantiles).map(|b| base + usize::from(b < extra)).collect()
}

/// Forms one long-short portfolio per (language, kind, day) with at least
/// `min_stocks` stocks that have both a score and a same-day return.
pub fn form_portfolios(
    scores: &[ScoreRecord],
    returns: &[ReturnObservation],
    params: &BacktestParams,
) -> Result<Vec<DailyPortfolio>> {
    if params.n_quantiles < 2 {
        return Err(Error::Parameter("n_quantiles must be at least 2".into()));
    }
    let ret = returns_index(returns)?;
    type Key<'a> = (Lang, Kind, NaiveDate);
    let mut days: BTreeMap<Key, Vec<(&str, f64, f64)>> = BTreeMap::new();
    let mut seen: HashMap<(&str, NaiveDate, Lang, Kind), ()> = HashMap::new();
    for s in scores {
        if seen.insert((s.ticker.as_str(), s.trading_day, s.language, s.kind), ()).is_some() {
            return Err(Error::Data(format!(
                "duplicate score for {}/{} ({}, {})",
                s.ticker, s.trading_day, s.language, s.kind
            )));
        }
        if !s.score.is_finite() {
            return Err(Error::Data(format!("non-finite score for {}/{}", s.ticker, s.trading_day)));
        }
        if let Some(&r) = ret.get(&(s.ticker.as_str(), s.trading_day)) {
            days.entry((s.language, s.kind, s.trading_day))
                .or_default()
                .push((s.ticker.as_str(), s.score, r));
        }
    }

    let min_n = params.min_stocks.max(params.n_quantiles);
    let mut out = Vec::new();
    for ((language, kind, trading_day), mut stocks) in days {
        let n = stocks.len();
        if n < min_n {
            continue;
        }
        stocks.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let degenerate_ranking = stocks.iter().all(|s| s.1 == stocks[0].1);
        let sizes = bucket_sizes(n, params.n_quantiles);
        let long = &stocks[..sizes[0]];
        let short = &stocks[n - sizes[params.n_quantiles - 1]..];
        let mean = |xs: &[(&str, f64, f64)]| xs.iter().map(|s| s.2).sum::<f64>() / xs.len() as f64;
        let (ret_long, ret_short) = (mean(long), mean(short));
        out.push(DailyPortfolio {
            trading_day,
            language,
            kind,
            long: long.iter().map(|s| s.0.to_string()).collect(),
            short: short.iter().map(|s| s.0.to_string()).collect(),
            ret_long,
            ret_short,
            ls: ret_long - ret_short,
            n_stocks: n,
            uneven: n % params.n_quantiles != 0,
            degenerate_ranking,
        });
    }
    Ok(out)
}

/// Linear-interpolation percentile of sorted data, `p` in [0, 1].
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, sample standard deviation and 5/50/95 percentiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
}

pub fn describe(values: &[f64]) -> Option<Distribution> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(Distribution {
        count: values.len(),
        mean,
        std,
        p5: percentile_sorted(&sorted, 0.05),
        p50: percentile_sorted(&sorted, 0.50),
        p95: percentile_sorted(&sorted, 0.95),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyStats {
    pub days: usize,
    pub geo_mean: f64,
    pub mean: f64,
    pub std: f64,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
    pub sharpe_daily: f64,
    pub sharpe_annual: f64,
}

pub fn strategy_stats(ls: &[f64], annualization_days: f64) -> Result<StrategyStats> {
    if ls.len() < 2 {
        return Err(Error::InsufficientData(format!("{} long-short days", ls.len())));
    }
    if ls.iter().any(|x| !(*x > -1.0 && x.is_finite())) {
        return Err(Error::Data("long-short returns must be finite and above -1".into()));
    }
    let d = describe(ls).expect("non-empty");
    if d.std == 0.0 {
        return Err(Error::UndefinedSharpe);
    }
    let log_growth = ls.iter().map(|x| x.ln_1p()).sum::<f64>() / ls.len() as f64;
    let sharpe_daily = d.mean / d.std;
    Ok(StrategyStats {
        days: ls.len(),
        geo_mean: log_growth.exp_m1(),
        mean: d.mean,
        std: d.std,
        p5: d.p5,
        p50: d.p50,
        p95: d.p95,
        sharpe_daily,
        sharpe_annual: sharpe_daily * annualization_days.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub language: Lang,
    pub kind: Kind,
    pub stats: Option<StrategyStats>,
    pub note: Option<String>,
}

/// Strategy statistics per (language, kind), in table order.
pub fn summarize(portfolios: &[DailyPortfolio], annualization_days: f64) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for kind in Kind::ALL {
        for language in [Lang::F, Lang::E] {
            let series: Vec<f64> = portfolios
                .iter()
                .filter(|p| p.language == language && p.kind == kind)
                .map(|p| p.ls)
                .collect();
            let (stats, note) = match strategy_stats(&series, annualization_days) {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e.to_string())),
            };
            rows.push(SummaryRow {
                language,
                kind,
                stats,
                note,
            });
        }
    }
    rows
}

pub fn write_daily_csv(path: &Path, portfolios: &[DailyPortfolio]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "language", "kind", "n_stocks", "ret_long", "ret_short", "ls", "uneven", "degenerate_ranking"])?;
    for p in portfolios {
        w.write_record([
            p.trading_day.to_string(),
            p.language.to_string(),
            p.kind.to_string(),
            p.n_stocks.to_string(),
            p.ret_long.to_string(),
            p.ret_short.to_string(),
            p.ls.to_string(),
            p.uneven.to_string(),
            p.degenerate_ranking.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "Alignment", "Lang", "Days", "Geo Mean", "Mean", "Std", "5%", "50%", "95%", "Sharpe", "Ann. Sharpe",
    ])?;
    for r in rows {
        let mut rec = vec![r.kind.to_string(), r.language.to_string()];
        match &r.stats {
            Some(s) => rec.extend(
                [
                    s.days as f64,
                    s.geo_mean,
                    s.mean,
                    s.std,
                    s.p5,
                    s.p50,
                    s.p95,
                    s.sharpe_daily,
                    s.sharpe_annual,
                ]
                .iter()
                .map(|v| v.to_string()),
            ),
            None => rec.extend(std::iter::repeat_n(String::new(), 9)),
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 3, 2).unwrap()
    }

    fn fixture(n: usize, score: impl Fn(usize) -> f64) -> (Vec<ScoreRecord>, Vec<ReturnObservation>) {
        let scores = (1..=n)
            .map(|k| ScoreRecord {
                ticker: format!("S{k:02}"),
                trading_day: day(),
                language: Lang::F,
                kind: Kind::Aligned,
                score: score(k),
            })
            .collect();
        let rets = (1..=n)
            .map(|k| ReturnObservation {
                ticker: format!("S{k:02}"),
                trading_day: day(),
                ret_oc: k as f64 / 100.0,
            })
            .collect();
        (scores, rets)
    }

    #[test]
    fn quintiles_of_twenty() {
        let (s, r) = fixture(20, |k| k as f64);
        let p = form_portfolios(&s, &r, &BacktestParams::default()).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].long, vec!["S20", "S19", "S18", "S17"]);
        assert_eq!(p[0].short, vec!["S04", "S03", "S02", "S01"]);
        assert!((p[0].ls - (18.5 - 2.5) / 100.0).abs() < 1e-15);
        assert!(!p[0].uneven);
    }

    #[test]
    fn quartiles_of_twenty() {
        let (s, r) = fixture(20, |k| k as f64);
        let params = BacktestParams {
            n_quantiles: 4,
            ..Default::default()
        };
        let p = form_portfolios(&s, &r, &params).unwrap();
        assert_eq!(p[0].long.len(), 5);
        assert!((p[0].ls - (18.0 - 3.0) / 100.0).abs() < 1e-15);
    }

    #[test]
    fn too_few_stocks_skips_the_day() {
        let (s, r) = fixture(19, |k| k as f64);
        assert!(form_portfolios(&s, &r, &BacktestParams::default()).unwrap().is_empty());
    }

    #[test]
    fn equal_scores_fall_back_to_tickers() {
        let (s, r) = fixture(20, |_| 0.5);
        let p = form_portfolios(&s, &r, &BacktestParams::default()).unwrap();
        assert!(p[0].degenerate_ranking);
        assert_eq!(p[0].long, vec!["S01", "S02", "S03", "S04"]);
    }

    #[test]
    fn remainder_goes_to_top_buckets() {
        assert_eq!(bucket_sizes(23, 5), vec![5, 5, 5, 4, 4]);
        let (s, r) = fixture(23, |k| k as f64);
        let p = form_portfolios(&s, &r, &BacktestParams::default()).unwrap();
        assert_eq!(p[0].long.len(), 5);
        assert_eq!(p[0].short.len(), 4);
        assert!(p[0].uneven);
    }

    #[test]
    fn duplicate_scores_are_data_errors() {
        let (mut s, r) = fixture(20, |k| k as f64);
        s.push(s[0].clone());
        assert!(matches!(form_portfolios(&s, &r, &BacktestParams::default()), Err(Error::Data(_))));
    }

    #[test]
    fn stats_of_symmetric_pair() {
        let s = strategy_stats(&[0.01, -0.01], 252.0).unwrap();
        assert!((s.geo_mean - ((1.01f64 * 0.99).sqrt() - 1.0)).abs() < 1e-15);
        assert!((s.geo_mean + 5.0e-5).abs() < 1e-7);
        assert_eq!(s.mean, 0.0);
        assert!((s.std - 0.02f64.sqrt() / 10.0).abs() < 1e-15);
        assert_eq!(s.sharpe_daily, 0.0);
    }

    #[test]
    fn constant_series_has_undefined_sharpe() {
        assert!(matches!(strategy_stats(&[0.01, 0.01], 252.0), Err(Error::UndefinedSharpe)));
    }

    #[test]
    fn annualization_is_sqrt_252() {
        // A two-point series with mean/std = 0.2746.
        let target = 0.2746;
        let ls = [0.01 + 0.01 / (target * 2f64.sqrt()), 0.01 - 0.01 / (target * 2f64.sqrt())];
        let s = strategy_stats(&ls, 252.0).unwrap();
        assert!((s.sharpe_daily - 0.01 / s.std).abs() < 1e-15);
        assert_eq!(s.sharpe_annual, s.sharpe_daily * 252f64.sqrt());
        assert!((s.sharpe_annual - 4.36).abs() < 5e-3);
    }

    #[test]
    fn rejects_total_loss() {
        assert!(strategy_stats(&[0.01, -1.0], 252.0).is_err());
        assert!(strategy_stats(&[0.01], 252.0).is_err());
    }

    #[test]
    fn percentiles_interpolate() {
        let sorted = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile_sorted(&sorted, 0.5), 2.5);
        assert!((percentile_sorted(&sorted, 0.05) - 1.15).abs() < 1e-15);
    }

    #[test]
    fn summary_table_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("summary.csv");
        write_summary_csv(&p, &summarize(&[], 252.0)).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "Alignment,Lang,Days,Geo Mean,Mean,Std,5%,50%,95%,Sharpe,Ann. Sharpe"
        );
        assert!(lines.next().unwrap().starts_with("A,F,"));
        assert_eq!(text.lines().count(), 7);
    }
}
