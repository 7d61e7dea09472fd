//! Raw news articles to per-(stock, trading day) bilingual bundles.

mod calendar;
mod clean;

pub use calendar::{tokyo_weekdays, CalendarSpec, ExchangeCalendar};
pub use clean::{CleanOutcome, Cleaner, CleaningRules, Rejection};

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use chrono::{DateTime, Duration, FixedOffset, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawArticle {
    pub story_id: String,
    /// RFC 3339 with an explicit offset.
    pub publish_time: DateTime<FixedOffset>,
    pub language: String,
    pub ticker: String,
    pub ticker_score: u8,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanArticle {
    pub story_id: String,
    pub publish_time: DateTime<FixedOffset>,
    pub trading_day: NaiveDate,
    pub language: String,
    pub ticker: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StockDayBundle {
    pub ticker: String,
    pub trading_day: NaiveDate,
    pub english_text: String,
    pub foreign_text: String,
    pub source_story_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BundleConfig {
    pub english_language: String,
    pub foreign_language: String,
    pub min_ticker_score: u8,
    pub update_window_hours: i64,
}

impl Default for BundleConfig {
    fn default() -> Self {
        Self {
            english_language: "en".into(),
            foreign_language: "ja".into(),
            min_ticker_score: 75,
            update_window_hours: 24,
        }
    }
}

/// Counts of everything `bundle_stock_days` dropped, by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleReport {
    pub input_rows: usize,
    pub stories: usize,
    pub superseded_versions: usize,
    pub late_versions: usize,
    pub low_score: usize,
    pub multi_ticker: usize,
    pub other_language: usize,
    pub malformed: usize,
    pub rejected: BTreeMap<String, usize>,
    pub calendar_gaps: usize,
    pub single_language_groups: usize,
}

/// Cleans one article and assigns its trading day.
pub fn clean_article(
    raw: &RawArticle,
    cleaner: &Cleaner,
    cal: &ExchangeCalendar,
) -> Result<std::result::Result<CleanArticle, Rejection>> {
    let body = match cleaner.clean(&raw.body)? {
        CleanOutcome::Kept(b) => b,
        CleanOutcome::Rejected(r) => return Ok(Err(r)),
    };
    let trading_day = cal.assign_trading_day(raw.publish_time)?;
    Ok(Ok(CleanArticle {
        story_id: raw.story_id.clone(),
        publish_time: raw.publish_time,
        trading_day,
        language: raw.language.clone(),
        ticker: raw.ticker.clone(),
        body,
    }))
}

/// Deduplicates story updates, filters by ticker relevance, assigns trading
/// days and concatenates per (ticker, day, language). Only groups with both
/// languages are emitted, sorted by (ticker, day).
pub fn bundle_stock_days(
    articles: &[RawArticle],
    cal: &ExchangeCalendar,
    cleaner: &Cleaner,
    cfg: &BundleConfig,
) -> (Vec<StockDayBundle>, BundleReport) {
    let mut report = BundleReport {
        input_rows: articles.len(),
        ..BundleReport::default()
    };

    let mut by_story: BTreeMap<&str, Vec<&RawArticle>> = BTreeMap::new();
    for a in articles {
        by_story.entry(a.story_id.as_str()).or_default().push(a);
    }
    report.stories = by_story.len();

    let window = Duration::hours(cfg.update_window_hours);
    let mut finals: Vec<&RawArticle> = Vec::new();
    for rows in by_story.values() {
        let first_seen = rows.iter().map(|a| a.publish_time).min().expect("non-empty group");
        let horizon = first_seen + window;
        let (eligible, late): (Vec<&RawArticle>, Vec<&RawArticle>) =
            rows.iter().partition(|a| a.publish_time <= horizon);
        report.late_versions += late.len();
        let last = eligible.iter().map(|a| a.publish_time).max().expect("first version is eligible");
        let final_rows: Vec<&RawArticle> = eligible.iter().copied().filter(|a| a.publish_time == last).collect();
        report.superseded_versions += eligible.len() - final_rows.len();

        let relevant: Vec<&RawArticle> = final_rows
            .iter()
            .copied()
            .filter(|a| a.ticker_score >= cfg.min_ticker_score)
            .collect();
        let tickers: BTreeSet<&str> = relevant.iter().map(|a| a.ticker.as_str()).collect();
        match tickers.len() {
            0 => report.low_score += 1,
            1 => {
                // Exact duplicates of the final row collapse to one.
                let chosen = relevant
                    .iter()
                    .copied()
                    .max_by(|a, b| (&a.language, &a.body).cmp(&(&b.language, &b.body)))
                    .expect("non-empty");
                finals.push(chosen);
            }
            _ => report.multi_ticker += 1,
        }
    }

    type Key = (String, NaiveDate);
    let mut english: BTreeMap<Key, Vec<CleanArticle>> = BTreeMap::new();
    let mut foreign: BTreeMap<Key, Vec<CleanArticle>> = BTreeMap::new();
    for raw in finals {
        let target = if raw.language == cfg.english_language {
            &mut english
        } else if raw.language == cfg.foreign_language {
            &mut foreign
        } else {
            report.other_language += 1;
            continue;
        };
        match clean_article(raw, cleaner, cal) {
            Ok(Ok(clean)) => target
                .entry((clean.ticker.clone(), clean.trading_day))
                .or_default()
                .push(clean),
            Ok(Err(reason)) => *report.rejected.entry(format!("{reason:?}")).or_default() += 1,
            Err(Error::CalendarGap(_)) => report.calendar_gaps += 1,
            Err(_) => report.malformed += 1,
        }
    }

    let keys: BTreeSet<&Key> = english.keys().chain(foreign.keys()).collect();
    let mut bundles = Vec::new();
    for key in keys {
        let (Some(en), Some(fr)) = (english.get(key), foreign.get(key)) else {
            report.single_language_groups += 1;
            continue;
        };
        let (english_text, mut ids) = concat(en);
        let (foreign_text, fr_ids) = concat(fr);
        ids.extend(fr_ids);
        bundles.push(StockDayBundle {
            ticker: key.0.clone(),
            trading_day: key.1,
            english_text,
            foreign_text,
            source_story_ids: ids,
        });
    }
    (bundles, report)
}

fn concat(articles: &[CleanArticle]) -> (String, Vec<String>) {
    let mut sorted: Vec<&CleanArticle> = articles.iter().collect();
    sorted.sort_by(|a, b| (a.publish_time, &a.story_id).cmp(&(b.publish_time, &b.story_id)));
    let text = sorted.iter().map(|a| a.body.as_str()).collect::<Vec<_>>().join("\n\n");
    let ids = sorted.iter().map(|a| a.story_id.clone()).collect();
    (text, ids)
}

pub fn read_raw_articles(path: &Path) -> Result<Vec<RawArticle>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.split(b'\n').enumerate() {
        let lineno = idx + 1;
        let bytes = line.map_err(|e| Error::io(path, e))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Error::MalformedInput(format!("{}:{lineno}: invalid UTF-8", path.display())))?;
        if text.trim().is_empty() {
            continue;
        }
        let article: RawArticle = serde_json::from_str(text)
            .map_err(|e| Error::schema(Some(lineno), e.to_string()))?;
        if article.ticker_score > 100 {
            return Err(Error::schema(Some(lineno), "ticker_score must be within 0..=100"));
        }
        out.push(article);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::schema(Some(idx + 1), e.to_string()))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cal() -> ExchangeCalendar {
        tokyo_weekdays(
            NaiveDate::from_ymd_opt(2023, 1, 2).unwrap(),
            NaiveDate::from_ymd_opt(2023, 2, 28).unwrap(),
        )
    }

    fn body(tag: &str) -> String {
        format!("{tag} ") + &"Shares moved 2.5% after the announcement on Tuesday. ".repeat(3)
    }

    fn art(id: &str, t: &str, lang: &str, ticker: &str, score: u8, tag: &str) -> RawArticle {
        RawArticle {
            story_id: id.into(),
            publish_time: DateTime::parse_from_rfc3339(t).unwrap(),
            language: lang.into(),
            ticker: ticker.into(),
            ticker_score: score,
            body: body(tag),
        }
    }

    fn run(arts: &[RawArticle]) -> (Vec<StockDayBundle>, BundleReport) {
        let cleaner = Cleaner::new(&CleaningRules::default()).unwrap();
        bundle_stock_days(arts, &cal(), &cleaner, &BundleConfig::default())
    }

    #[test]
    fn keeps_final_update_within_window() {
        let arts = vec![
            art("X", "2023-01-10T09:00:00+09:00", "en", "7203", 90, "v1"),
            art("X", "2023-01-10T10:00:00+09:00", "en", "7203", 90, "v2"),
            art("X", "2023-01-11T11:00:00+09:00", "en", "7203", 90, "v3"),
            art("J", "2023-01-10T12:00:00+09:00", "ja", "7203", 90, "ja"),
        ];
        let (bundles, report) = run(&arts);
        assert_eq!(bundles.len(), 1);
        assert!(bundles[0].english_text.starts_with("v2 "));
        assert_eq!(report.late_versions, 1);
        assert_eq!(report.superseded_versions, 1);
    }

    #[test]
    fn multi_ticker_story_is_dropped() {
        let arts = vec![
            art("X", "2023-01-10T09:00:00+09:00", "en", "7203", 90, "a"),
            art("X", "2023-01-10T09:00:00+09:00", "en", "7267", 80, "a"),
            art("J", "2023-01-10T12:00:00+09:00", "ja", "7203", 90, "ja"),
            art("J2", "2023-01-10T12:00:00+09:00", "ja", "7267", 90, "ja"),
        ];
        let (bundles, report) = run(&arts);
        assert!(bundles.is_empty());
        assert_eq!(report.multi_ticker, 1);
    }

    #[test]
    fn low_score_second_ticker_does_not_block() {
        let arts = vec![
            art("X", "2023-01-10T09:00:00+09:00", "en", "7203", 75, "a"),
            art("X", "2023-01-10T09:00:00+09:00", "en", "7267", 74, "a"),
            art("J", "2023-01-10T12:00:00+09:00", "ja", "7203", 90, "ja"),
        ];
        let (bundles, _) = run(&arts);
        assert_eq!(bundles.len(), 1);
        assert_eq!(bundles[0].ticker, "7203");
    }

    #[test]
    fn single_language_group_is_not_emitted() {
        let arts = vec![art("X", "2023-01-10T09:00:00+09:00", "en", "7203", 90, "a")];
        let (bundles, report) = run(&arts);
        assert!(bundles.is_empty());
        assert_eq!(report.single_language_groups, 1);
    }

    #[test]
    fn concatenates_in_publish_order() {
        let arts = vec![
            art("B", "2023-01-10T15:00:00+09:00", "en", "7203", 90, "second"),
            art("A", "2023-01-10T10:00:00+09:00", "en", "7203", 90, "first"),
            art("J", "2023-01-10T12:00:00+09:00", "ja", "7203", 90, "ja"),
        ];
        let (bundles, _) = run(&arts);
        let b = &bundles[0];
        let parts: Vec<&str> = b.english_text.split("\n\n").collect();
        assert!(parts[0].starts_with("first"));
        assert!(parts[1].starts_with("second"));
        assert_eq!(b.source_story_ids, vec!["A", "B", "J"]);
        // Both published after the 08:30 cutoff on the 10th.
        assert_eq!(b.trading_day, NaiveDate::from_ymd_opt(2023, 1, 11).unwrap());
    }

    #[test]
    fn duplicated_input_gives_identical_output() {
        let arts = vec![
            art("X", "2023-01-10T09:00:00+09:00", "en", "7203", 90, "v1"),
            art("X", "2023-01-10T10:00:00+09:00", "en", "7203", 90, "v2"),
            art("J", "2023-01-10T12:00:00+09:00", "ja", "7203", 90, "ja"),
            art("K", "2023-01-12T12:00:00+09:00", "ja", "6758", 95, "k"),
            art("L", "2023-01-12T13:00:00+09:00", "en", "6758", 95, "l"),
        ];
        let twice: Vec<RawArticle> = arts.iter().chain(arts.iter()).cloned().collect();
        assert_eq!(run(&arts).0, run(&twice).0);
    }

    #[test]
    fn raw_article_requires_explicit_offset() {
        let line = r#"{"story_id":"a","publish_time":"2023-01-10T09:00:00","language":"en","ticker":"1","ticker_score":80,"body":"x"}"#;
        assert!(serde_json::from_str::<RawArticle>(line).is_err());
    }

    #[test]
    fn reader_reports_bad_utf8_and_scores() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.jsonl");
        std::fs::write(&p, b"\xff\xfe\n").unwrap();
        assert!(matches!(read_raw_articles(&p), Err(Error::MalformedInput(_))));
        let line = r#"{"story_id":"a","publish_time":"2023-01-10T09:00:00+09:00","language":"en","ticker":"1","ticker_score":180,"body":"x"}"#;
        std::fs::write(&p, format!("{line}\n")).unwrap();
        assert!(matches!(read_raw_articles(&p), Err(Error::Schema { line: Some(1), .. })));
    }
}
