//! Synthetic bilingual corpora with planted sentence twins and a planted
//! return signal.
//!
//! Each stock-day draws `n` English and `m` foreign sentences. A fraction
//! `rho` of `min(n, m)` English sentences get a foreign twin
//! `normalize(topic + sigma * g)`; every other sentence is an independent
//! random unit vector. The open-close return loads on the normalized mean of
//! the English twins along a unit direction `w*`.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, Duration, FixedOffset, NaiveDate, NaiveTime, TimeZone, Weekday};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_jsonl, CalendarSpec, RawArticle};
use crate::embed_io::{write_sentence_records, SentenceRecord};
use crate::error::{Error, Result};
use crate::scoring::{write_returns_csv, ReturnObservation};
use crate::Lang;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub stocks: usize,
    pub start_year: i32,
    pub years: usize,
    /// The first this-many weekdays of each year are trading days.
    pub days_per_year: usize,
    /// Probability that a stock has news on a trading day.
    pub coverage: f64,
    /// Inclusive range of sentences per article.
    pub sentences: [usize; 2],
    pub rho: f64,
    pub sigma: f64,
    pub dim: usize,
    /// Variance of the return signal over the noise variance.
    pub snr: f64,
    /// Standard deviation of the signal part of the return.
    pub signal_scale: f64,
    /// Unit signal direction; drawn from the seed when absent.
    pub signal: Option<Vec<f64>>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            stocks: 40,
            start_year: 2012,
            years: 6,
            days_per_year: 60,
            coverage: 0.9,
            sentences: [5, 20],
            rho: 0.5,
            sigma: 0.1,
            dim: 64,
            snr: 1.0,
            signal_scale: 0.01,
            signal: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Parameter(format!("synth: {m}")));
        if !(0.0..=1.0).contains(&self.rho) {
            return fail("rho must lie in [0, 1]");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return fail("sigma must be non-negative");
        }
        if self.dim < 2 {
            return fail("dim must be at least 2");
        }
        if self.stocks == 0 || self.years == 0 || self.days_per_year == 0 {
            return fail("stocks, years and days_per_year must be positive");
        }
        if self.days_per_year > 250 {
            return fail("days_per_year must be at most 250");
        }
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return fail("coverage must lie in (0, 1]");
        }
        if self.sentences[0] == 0 || self.sentences[0] > self.sentences[1] {
            return fail("sentences must be a range [lo, hi] with 1 <= lo <= hi");
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return fail("snr must be positive");
        }
        if !(self.signal_scale >= 0.0 && self.signal_scale.is_finite()) {
            return fail("signal_scale must be non-negative");
        }
        if let Some(w) = &self.signal {
            if w.len() != self.dim {
                return fail("signal length must equal dim");
            }
            if !((norm(w) - 1.0).abs() <= 1e-9) {
                return fail("signal must be a unit vector");
            }
        }
        Ok(())
    }

    pub fn trading_days(&self) -> Vec<NaiveDate> {
        let mut days = Vec::with_capacity(self.years * self.days_per_year);
        for y in 0..self.years as i32 {
            let mut d = NaiveDate::from_ymd_opt(self.start_year + y, 1, 1).expect("valid year");
            let mut taken = 0;
            while taken < self.days_per_year {
                if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                    days.push(d);
                    taken += 1;
                }
                d = d.succ_opt().expect("date in range");
            }
        }
        days
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthMask {
    pub ticker: String,
    pub trading_day: NaiveDate,
    pub n: usize,
    pub m: usize,
    /// Planted (english, foreign) sentence index pairs.
    pub pairs: Vec<[usize; 2]>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub records: Vec<SentenceRecord>,
    pub returns: Vec<ReturnObservation>,
    pub truth: Vec<GroundTruthMask>,
    pub articles: Vec<RawArticle>,
    pub calendar: CalendarSpec,
    pub signal: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if norm(&v) > 1e-12 {
            return unit(v);
        }
    }
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

const FILLER: &str = "This placeholder article body carries no natural language content and only pads the text past the minimum length.";

fn article(ticker: &str, day: NaiveDate, lang: &str, texts: &[String], tz: FixedOffset) -> RawArticle {
    let local = day.and_time(NaiveTime::from_hms_opt(7, 0, 0).expect("valid time"));
    let publish_time: DateTime<FixedOffset> = tz.from_local_datetime(&local).single().expect("fixed offset");
    RawArticle {
        story_id: format!("{ticker}-{day}-{lang}"),
        publish_time,
        language: lang.to_string(),
        ticker: ticker.to_string(),
        ticker_score: 90,
        body: format!("{}\n\n{FILLER}", texts.join(" ")),
    }
}

struct StockOutput {
    records: Vec<SentenceRecord>,
    returns: Vec<ReturnObservation>,
    truth: Vec<GroundTruthMask>,
    articles: Vec<RawArticle>,
}

fn generate_stock(cfg: &SynthConfig, stock: usize, days: &[NaiveDate], w: &[f64]) -> StockOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stock as u64 + 1);
    let ticker = format!("S{stock:03}");
    let tz = FixedOffset::east_opt(9 * 3600).expect("valid offset");
    let noise_sd = cfg.signal_scale / cfg.snr.sqrt();
    let signal_gain = cfg.signal_scale * (cfg.dim as f64).sqrt();
    let mut out = StockOutput {
        records: Vec::new(),
        returns: Vec::new(),
        truth: Vec::new(),
        articles: Vec::new(),
    };

    for &day in days {
        let covered = rng.random::<f64>() < cfg.coverage;
        let mut signal = 0.0;
        if covered {
            let n = rng.random_range(cfg.sentences[0]..=cfg.sentences[1]);
            let m = rng.random_range(cfg.sentences[0]..=cfg.sentences[1]);
            let k = (cfg.rho * n.min(m) as f64).round() as usize;
            let twins_e = rand::seq::index::sample(&mut rng, n, k).into_vec();
            let english: Vec<Vec<f32>> = (0..n).map(|_| to_f32(&random_unit(&mut rng, cfg.dim))).collect();

            // Foreign slots 0..k hold twins before the shuffle.
            let mut foreign: Vec<(Option<usize>, Vec<f32>)> = twins_e
                .iter()
                .map(|&i| {
                    let noisy: Vec<f64> = english[i]
                        .iter()
                        .map(|&x| x as f64 + cfg.sigma * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    (Some(i), to_f32(&unit(noisy)))
                })
                .collect();
            foreign.extend((k..m).map(|_| (None, to_f32(&random_unit(&mut rng, cfg.dim)))));
            foreign.shuffle(&mut rng);

            let mut pairs: Vec<[usize; 2]> = foreign
                .iter()
                .enumerate()
                .filter_map(|(j, (twin, _))| twin.map(|i| [i, j]))
                .collect();
            pairs.sort_unstable();

            if k > 0 {
                let mut mean = vec![0.0; cfg.dim];
                for &i in &twins_e {
                    for (acc, &x) in mean.iter_mut().zip(&english[i]) {
                        *acc += x as f64;
                    }
                }
                let nm = norm(&mean);
                if nm > 1e-12 {
                    signal = mean.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / nm;
                }
            }

            let e_text: Vec<String> = (0..n).map(|i| format!("English sentence {i} about {ticker} on {day}.")).collect();
            let f_text: Vec<String> = (0..m).map(|j| format!("Foreign sentence {j} about {ticker} on {day}.")).collect();
            out.articles.push(article(&ticker, day, "en", &e_text, tz));
            out.articles.push(article(&ticker, day, "ja", &f_text, tz));
            for (i, (text, emb)) in e_text.into_iter().zip(english).enumerate() {
                out.records.push(SentenceRecord {
                    ticker: ticker.clone(),
                    trading_day: day,
                    language: Lang::E,
                    sentence_index: i,
                    text,
                    embedding: emb,
                });
            }
            for (j, (text, (_, emb))) in f_text.into_iter().zip(foreign).enumerate() {
                out.records.push(SentenceRecord {
                    ticker: ticker.clone(),
                    trading_day: day,
                    language: Lang::F,
                    sentence_index: j,
                    text,
                    embedding: emb,
                });
            }
            out.truth.push(GroundTruthMask {
                ticker: ticker.clone(),
                trading_day: day,
                n,
                m,
                pairs,
            });
        }
        let noise: f64 = rng.sample(StandardNormal);
        out.returns.push(ReturnObservation {
            ticker: ticker.clone(),
            trading_day: day,
            ret_oc: signal_gain * signal + noise_sd * noise,
        });
    }
    out
}

/// Generates a corpus fully determined by `cfg.seed`. Stocks use separate
/// random streams, so generation is parallel and order-independent.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let signal = match &cfg.signal {
        Some(w) => w.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            random_unit(&mut rng, cfg.dim)
        }
    };
    let days = cfg.trading_days();
    let parts: Vec<StockOutput> = (0..cfg.stocks)
        .into_par_iter()
        .map(|s| generate_stock(cfg, s, &days, &signal))
        .collect();

    let mut corpus = SynthCorpus {
        records: Vec::new(),
        returns: Vec::new(),
        truth: Vec::new(),
        articles: Vec::new(),
        calendar: CalendarSpec {
            exchange: "XTKS".into(),
            timezone: "Asia/Tokyo".into(),
            market_open: "09:00".into(),
            cutoff_minutes: 30,
            start: Some(days[0] - Duration::days(7)),
            end: Some(*days.last().expect("non-empty") + Duration::days(7)),
            holidays: Vec::new(),
            trading_days: Vec::new(),
        },
        signal,
    };
    for p in parts {
        corpus.records.extend(p.records);
        corpus.returns.extend(p.returns);
        corpus.truth.extend(p.truth);
        corpus.articles.extend(p.articles);
    }
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthPaths {
    pub articles: PathBuf,
    pub embeddings: PathBuf,
    pub returns: PathBuf,
    pub truth: PathBuf,
    pub calendar: PathBuf,
}

impl SynthPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            articles: dir.join("articles.jsonl"),
            embeddings: dir.join("embeddings.jsonl"),
            returns: dir.join("returns.csv"),
            truth: dir.join("truth.jsonl"),
            calendar: dir.join("calendar.toml"),
        }
    }
}

pub fn write_corpus(dir: &Path, corpus: &SynthCorpus) -> Result<SynthPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = SynthPaths::in_dir(dir);
    write_jsonl(&paths.articles, &corpus.articles)?;
    write_sentence_records(&paths.embeddings, &corpus.records, false)?;
    write_returns_csv(&paths.returns, &corpus.returns)?;
    write_jsonl(&paths.truth, &corpus.truth)?;
    let cal = toml::to_string(&corpus.calendar).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(&paths.calendar, cal).map_err(|e| Error::io(&paths.calendar, e))?;
    Ok(paths)
}
