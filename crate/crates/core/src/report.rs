//! Descriptive tables: cross-lingual similarity distributions, score
//! correlations, alignment coverage and sparsity heatmap dumps.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::aggregate::AggregatedEmbeddings;
use crate::backtest::{describe, Distribution};
use crate::embed_io::EmbeddingMatrixPair;
use crate::error::{Error, Result};
use crate::ot::{align_pair, baseline_normalize, AlignParams, AlignmentRecord, BaselineMethod};
use crate::scoring::{returns_index, ReturnObservation, ScoreRecord};
use crate::{Kind, Lang};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub kind: Kind,
    pub distribution: Option<Distribution>,
    /// Stock-days lacking one language's vector for this kind.
    pub skipped: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine of the English and foreign aggregate per kind. Aggregates are unit
/// vectors, so the cosine is their dot product.
pub fn similarity_table(aggregates: &[AggregatedEmbeddings]) -> Vec<SimilarityRow> {
    Kind::ALL
        .iter()
        .map(|&kind| {
            let mut sims = Vec::new();
            let mut skipped = 0;
            for a in aggregates {
                match (a.vector(Lang::E, kind), a.vector(Lang::F, kind)) {
                    (Some(e), Some(f)) => sims.push(dot(e, f)),
                    _ => skipped += 1,
                }
            }
            SimilarityRow {
                kind,
                distribution: describe(&sims),
                skipped,
            }
        })
        .collect()
}

pub fn write_similarity_csv(path: &Path, rows: &[SimilarityRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["Alignment", "Count", "Skipped", "Mean", "Std", "5%", "50%", "95%"])?;
    for r in rows {
        let mut rec = vec![r.kind.to_string()];
        match &r.distribution {
            Some(d) => {
                rec.push(d.count.to_string());
                rec.push(r.skipped.to_string());
                rec.extend([d.mean, d.std, d.p5, d.p50, d.p95].iter().map(|v| v.to_string()));
            }
            None => {
                rec.push("0".into());
                rec.push(r.skipped.to_string());
                rec.extend(std::iter::repeat_n(String::new(), 5));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Column order of the correlation matrix after `Ret`.
pub const SCORE_COLUMNS: [(Lang, Kind); 6] = [
    (Lang::E, Kind::Aligned),
    (Lang::E, Kind::Unaligned),
    (Lang::E, Kind::Full),
    (Lang::F, Kind::Aligned),
    (Lang::F, Kind::Unaligned),
    (Lang::F, Kind::Full),
];

/// Cells with fewer complete pairs than this are absent.
pub const MIN_CORRELATION_PAIRS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    pub counts: Vec<Vec<usize>>,
}

pub fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < MIN_CORRELATION_PAIRS {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pairwise-complete Pearson correlations of returns and the six score
/// series, joined on (ticker, day).
pub fn correlation_matrix(scores: &[ScoreRecord], returns: &[ReturnObservation]) -> Result<CorrelationMatrix> {
    let ret = returns_index(returns)?;
    let mut series: Vec<HashMap<(&str, NaiveDate), f64>> = vec![HashMap::new(); 7];
    for (&(t, d), &r) in &ret {
        series[0].insert((t, d), r);
    }
    for s in scores {
        let col = 1 + SCORE_COLUMNS
            .iter()
            .position(|&c| c == (s.language, s.kind))
            .expect("every language and kind has a column");
        if series[col].insert((s.ticker.as_str(), s.trading_day), s.score).is_some() {
            return Err(Error::Data(format!(
                "duplicate score for {}/{} ({}, {})",
                s.ticker, s.trading_day, s.language, s.kind
            )));
        }
    }

    let mut labels = vec!["Ret".to_string()];
    labels.extend(SCORE_COLUMNS.iter().map(|(l, k)| format!("Soft_{l}_{k}")));
    let mut values = vec![vec![None; 7]; 7];
    let mut counts = vec![vec![0; 7]; 7];
    for a in 0..7 {
        counts[a][a] = series[a].len();
        values[a][a] = Some(1.0);
        for b in a + 1..7 {
            let (small, large, swap) = if series[a].len() <= series[b].len() {
                (&series[a], &series[b], false)
            } else {
                (&series[b], &series[a], true)
            };
            let mut keys: Vec<_> = small.keys().filter(|k| large.contains_key(*k)).collect();
            keys.sort();
            let pairs: Vec<(f64, f64)> = keys
                .into_iter()
                .map(|k| {
                    let (x, y) = (small[k], large[k]);
                    if swap { (y, x) } else { (x, y) }
                })
                .collect();
            let c = pearson(&pairs);
            values[a][b] = c;
            values[b][a] = c;
            counts[a][b] = pairs.len();
            counts[b][a] = pairs.len();
        }
    }
    Ok(CorrelationMatrix { labels, values, counts })
}

pub fn write_correlation_csv(path: &Path, m: &CorrelationMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![String::new()];
    header.extend(m.labels.iter().cloned());
    w.write_record(&header)?;
    for (label, row) in m.labels.iter().zip(&m.values) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub year: i32,
    pub language: Lang,
    pub stock_days: usize,
    pub mean_aligned: f64,
    pub mean_unaligned: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearCounts {
    pub year: i32,
    pub stock_days: usize,
    pub with_aligned: usize,
    pub with_unaligned: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub proportions: Vec<CoverageRow>,
    pub counts: Vec<YearCounts>,
}

/// Yearly mean share of aligned sentences per language, and counts of
/// stock-days with aligned pairs and with unaligned sentences.
pub fn coverage_series(records: &[AlignmentRecord]) -> CoverageStats {
    let mut props: BTreeMap<(i32, Lang), Vec<f64>> = BTreeMap::new();
    let mut counts: BTreeMap<i32, YearCounts> = BTreeMap::new();
    for r in records {
        let year = r.trading_day.year();
        let mut e = vec![false; r.n];
        let mut f = vec![false; r.m];
        for p in &r.pairs {
            e[p.i] = true;
            f[p.j] = true;
        }
        let ae = e.iter().filter(|&&b| b).count();
        let af = f.iter().filter(|&&b| b).count();
        if r.n > 0 {
            props.entry((year, Lang::E)).or_default().push(ae as f64 / r.n as f64);
        }
        if r.m > 0 {
            props.entry((year, Lang::F)).or_default().push(af as f64 / r.m as f64);
        }
        let c = counts.entry(year).or_insert(YearCounts {
            year,
            stock_days: 0,
            with_aligned: 0,
            with_unaligned: 0,
        });
        c.stock_days += 1;
        c.with_aligned += usize::from(!r.pairs.is_empty());
        c.with_unaligned += usize::from(ae < r.n || af < r.m);
    }
    CoverageStats {
        proportions: props
            .into_iter()
            .map(|((year, language), v)| {
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                CoverageRow {
                    year,
                    language,
                    stock_days: v.len(),
                    mean_aligned: mean,
                    mean_unaligned: 1.0 - mean,
                }
            })
            .collect(),
        counts: counts.into_values().collect(),
    }
}

pub fn write_coverage_csv(path: &Path, stats: &CoverageStats) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "year",
        "language",
        "stock_days",
        "mean_aligned",
        "mean_unaligned",
        "year_stock_days",
        "with_aligned",
        "with_unaligned",
    ])?;
    for r in &stats.proportions {
        let c = stats.counts.iter().find(|c| c.year == r.year).expect("year counted");
        w.write_record([
            r.year.to_string(),
            r.language.to_string(),
            r.stock_days.to_string(),
            r.mean_aligned.to_string(),
            r.mean_unaligned.to_string(),
            c.stock_days.to_string(),
            c.with_aligned.to_string(),
            c.with_unaligned.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Dense matrices of one stock-day for side-by-side sparsity plots. Rows are
/// English sentences, columns foreign sentences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapBundle {
    pub ticker: String,
    pub trading_day: NaiveDate,
    pub english_text: Vec<String>,
    pub foreign_text: Vec<String>,
    pub xi: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub softmax: Vec<Vec<f64>>,
    pub entmax15: Vec<Vec<f64>>,
    pub mask: Vec<Vec<bool>>,
}

fn rows<T: Clone>(a: &Array2<T>) -> Vec<Vec<T>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn heatmap_bundle(pair: &EmbeddingMatrixPair, params: &AlignParams, temperature: f64) -> Result<HeatmapBundle> {
    let a = align_pair(pair, params)?;
    let xi = &a.cost.similarity;
    Ok(HeatmapBundle {
        ticker: pair.ticker.clone(),
        trading_day: pair.trading_day,
        english_text: pair.english_text.clone(),
        foreign_text: pair.foreign_text.clone(),
        xi: rows(xi),
        gamma: rows(&a.forward_plan.gamma),
        softmax: rows(&baseline_normalize(xi, BaselineMethod::Softmax, temperature)?),
        entmax15: rows(&baseline_normalize(xi, BaselineMethod::Entmax15, temperature)?),
        mask: rows(&a.alignment.mask),
    })
}

pub fn heatmap_dump(path: &Path, pair: &EmbeddingMatrixPair, params: &AlignParams, temperature: f64) -> Result<HeatmapBundle> {
    let bundle = heatmap_bundle(pair, params, temperature)?;
    let json = serde_json::to_vec_pretty(&bundle)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))?;
    Ok(bundle)
}

pub fn read_heatmap(path: &Path) -> Result<HeatmapBundle> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}
