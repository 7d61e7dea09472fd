//! Sentence-embedding interchange format.
//!
//! One JSON object per line:
//!
//! ```text
//! {"ticker":"8301","trading_day":"2023-01-04","language":"E","sentence_index":0,
//!  "text":"...","embedding_b64":"<base64 of little-endian f32>"}
//! ```
//!
//! `embedding` (a plain float array) may be given instead of
//! `embedding_b64` for debugging. Every vector must have unit L2 norm within
//! [`NORM_TOLERANCE`] and sentence indices must be contiguous from zero per
//! (ticker, day, language).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Lang;

pub const DEFAULT_DIM: usize = 768;
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceRecord {
    pub ticker: String,
    pub trading_day: NaiveDate,
    pub language: Lang,
    pub sentence_index: usize,
    pub text: String,
    pub embedding: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireRecord {
    ticker: String,
    trading_day: NaiveDate,
    language: Lang,
    sentence_index: usize,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding_b64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f32>>,
}

/// Row-unit-norm sentence matrices of one stock-day.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrixPair {
    pub ticker: String,
    pub trading_day: NaiveDate,
    /// n x d, row i is English sentence i.
    pub english: Array2<f64>,
    /// m x d, row j is foreign sentence j.
    pub foreign: Array2<f64>,
    pub english_text: Vec<String>,
    pub foreign_text: Vec<String>,
}

impl EmbeddingMatrixPair {
    pub fn dim(&self) -> usize {
        self.english.ncols()
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn normalize_embedding(v: &[f64]) -> Result<Vec<f64>> {
    let norm = l2_norm(v);
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateEmbedding);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

pub fn encode_f32_b64(v: &[f32]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    B64.encode(bytes)
}

pub fn decode_f32_b64(s: &str) -> std::result::Result<Vec<f32>, String> {
    let bytes = B64.decode(s).map_err(|e| e.to_string())?;
    if bytes.len() % 4 != 0 {
        return Err(format!("payload of {} bytes is not a whole number of f32", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn encode_f64_b64(v: &[f64]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    B64.encode(bytes)
}

pub fn decode_f64_b64(s: &str) -> std::result::Result<Vec<f64>, String> {
    let bytes = B64.decode(s).map_err(|e| e.to_string())?;
    if bytes.len() % 8 != 0 {
        return Err(format!("payload of {} bytes is not a whole number of f64", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn f32_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// Writes records in the base64 form, or the plain-array form when
/// `plain` is set.
pub fn write_sentence_records(path: &Path, records: &[SentenceRecord], plain: bool) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        let wire = WireRecord {
            ticker: r.ticker.clone(),
            trading_day: r.trading_day,
            language: r.language,
            sentence_index: r.sentence_index,
            text: r.text.clone(),
            embedding_b64: (!plain).then(|| encode_f32_b64(&r.embedding)),
            embedding: plain.then(|| r.embedding.clone()),
        };
        serde_json::to_writer(&mut w, &wire)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads and validates a sentence-record file. The first dimension or norm
/// violation aborts the load with its line number.
pub fn read_sentence_records(path: &Path, expected_dim: usize) -> Result<Vec<SentenceRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut first_line: BTreeMap<(String, NaiveDate, Lang), usize> = BTreeMap::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireRecord =
            serde_json::from_str(&line).map_err(|e| Error::schema(Some(lineno), e.to_string()))?;
        let embedding = match (wire.embedding_b64, wire.embedding) {
            (Some(b), None) => decode_f32_b64(&b).map_err(|e| Error::schema(Some(lineno), e))?,
            (None, Some(v)) => v,
            _ => {
                return Err(Error::schema(
                    Some(lineno),
                    "exactly one of embedding_b64 or embedding is required",
                ))
            }
        };
        if embedding.len() != expected_dim {
            return Err(Error::schema(
                Some(lineno),
                format!("embedding has dimension {}, expected {expected_dim}", embedding.len()),
            ));
        }
        let norm = f32_norm(&embedding);
        if !((norm - 1.0).abs() <= NORM_TOLERANCE) {
            return Err(Error::Norm { line: lineno, norm });
        }
        first_line
            .entry((wire.ticker.clone(), wire.trading_day, wire.language))
            .or_insert(lineno);
        records.push(SentenceRecord {
            ticker: wire.ticker,
            trading_day: wire.trading_day,
            language: wire.language,
            sentence_index: wire.sentence_index,
            text: wire.text,
            embedding,
        });
    }

    let mut indices: BTreeMap<(String, NaiveDate, Lang), Vec<usize>> = BTreeMap::new();
    for r in &records {
        indices
            .entry((r.ticker.clone(), r.trading_day, r.language))
            .or_default()
            .push(r.sentence_index);
    }
    for (key, mut idx) in indices {
        idx.sort_unstable();
        if idx.iter().enumerate().any(|(k, &i)| k != i) {
            return Err(Error::schema(
                first_line.get(&key).copied(),
                format!(
                    "sentence indices for {}/{}/{} are not contiguous from 0",
                    key.0, key.1, key.2
                ),
            ));
        }
    }
    Ok(records)
}

/// Groups records by (ticker, trading day), in key order.
pub fn group_by_stock_day(records: Vec<SentenceRecord>) -> BTreeMap<(String, NaiveDate), Vec<SentenceRecord>> {
    let mut groups: BTreeMap<(String, NaiveDate), Vec<SentenceRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.ticker.clone(), r.trading_day)).or_default().push(r);
    }
    groups
}

/// Stacks one stock-day's records into index-ordered matrices.
pub fn stack_bundle(records: &[SentenceRecord]) -> Result<EmbeddingMatrixPair> {
    let first = records
        .first()
        .ok_or_else(|| Error::Data("cannot stack an empty bundle".into()))?;
    let (ticker, day) = (first.ticker.clone(), first.trading_day);
    let dim = first.embedding.len();
    if records
        .iter()
        .any(|r| r.ticker != ticker || r.trading_day != day || r.embedding.len() != dim)
    {
        return Err(Error::schema(None, "records span several stock-days or dimensions"));
    }

    let side = |lang: Lang| -> Result<Option<(Array2<f64>, Vec<String>)>> {
        let mut rows: Vec<&SentenceRecord> = records.iter().filter(|r| r.language == lang).collect();
        if rows.is_empty() {
            return Ok(None);
        }
        rows.sort_by_key(|r| r.sentence_index);
        if rows.iter().enumerate().any(|(k, r)| r.sentence_index != k) {
            return Err(Error::schema(
                None,
                format!("sentence indices for {ticker}/{day}/{lang} are not contiguous from 0"),
            ));
        }
        let mut m = Array2::<f64>::zeros((rows.len(), dim));
        for (i, r) in rows.iter().enumerate() {
            for (k, &x) in r.embedding.iter().enumerate() {
                m[[i, k]] = f64::from(x);
            }
        }
        Ok(Some((m, rows.iter().map(|r| r.text.clone()).collect())))
    };

    let missing = |which: &'static str| Error::IncompleteBundle {
        ticker: ticker.clone(),
        day: day.to_string(),
        missing: which,
    };
    let (english, english_text) = side(Lang::E)?.ok_or_else(|| missing("English"))?;
    let (foreign, foreign_text) = side(Lang::F)?.ok_or_else(|| missing("foreign"))?;
    Ok(EmbeddingMatrixPair {
        ticker,
        trading_day: day,
        english,
        foreign,
        english_text,
        foreign_text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: usize, hot: usize) -> Vec<f32> {
        let mut v = vec![0.0; dim];
        v[hot] = 1.0;
        v
    }

    fn rec(lang: Lang, idx: usize, dim: usize) -> SentenceRecord {
        SentenceRecord {
            ticker: "8301".into(),
            trading_day: NaiveDate::from_ymd_opt(2023, 1, 4).unwrap(),
            language: lang,
            sentence_index: idx,
            text: format!("{lang}{idx}"),
            embedding: unit(dim, idx % dim),
        }
    }

    #[test]
    fn normalize_three_four_five() {
        let v = normalize_embedding(&[3.0, 4.0, 0.0, 0.0]).unwrap();
        assert_eq!(v, vec![0.6, 0.8, 0.0, 0.0]);
    }

    #[test]
    fn normalize_unit_is_identity() {
        let v = vec![0.0, 1.0, 0.0];
        assert_eq!(normalize_embedding(&v).unwrap(), v);
    }

    #[test]
    fn normalize_zero_is_degenerate() {
        assert!(matches!(normalize_embedding(&[0.0; 5]), Err(Error::DegenerateEmbedding)));
    }

    #[test]
    fn reads_well_formed_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        let recs = vec![rec(Lang::E, 0, 768), rec(Lang::F, 0, 768)];
        write_sentence_records(&p, &recs, false).unwrap();
        assert_eq!(read_sentence_records(&p, 768).unwrap(), recs);
    }

    #[test]
    fn plain_array_form_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        let recs = vec![rec(Lang::E, 0, 4), rec(Lang::E, 1, 4)];
        write_sentence_records(&p, &recs, true).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().contains("\"embedding\":[1.0,0.0,0.0,0.0]"));
        assert_eq!(read_sentence_records(&p, 4).unwrap(), recs);
    }

    #[test]
    fn wrong_dimension_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        write_sentence_records(&p, &[rec(Lang::E, 0, 512)], false).unwrap();
        assert!(matches!(
            read_sentence_records(&p, 768),
            Err(Error::Schema { line: Some(1), .. })
        ));
    }

    #[test]
    fn half_norm_is_norm_error_naming_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        let mut bad = rec(Lang::F, 0, 8);
        bad.embedding[0] = 0.5;
        write_sentence_records(&p, &[rec(Lang::E, 0, 8), bad], false).unwrap();
        match read_sentence_records(&p, 8) {
            Err(Error::Norm { line, norm }) => {
                assert_eq!(line, 2);
                assert!((norm - 0.5).abs() < 1e-12);
            }
            other => panic!("expected NormError, got {other:?}"),
        }
    }

    #[test]
    fn gap_in_indices_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        write_sentence_records(&p, &[rec(Lang::E, 0, 8), rec(Lang::E, 2, 8)], false).unwrap();
        assert!(matches!(read_sentence_records(&p, 8), Err(Error::Schema { .. })));
    }

    #[test]
    fn stack_shapes_and_order() {
        let recs = vec![
            rec(Lang::E, 2, 8),
            rec(Lang::F, 1, 8),
            rec(Lang::E, 0, 8),
            rec(Lang::F, 0, 8),
            rec(Lang::E, 1, 8),
        ];
        let pair = stack_bundle(&recs).unwrap();
        assert_eq!(pair.english.dim(), (3, 8));
        assert_eq!(pair.foreign.dim(), (2, 8));
        for i in 0..3 {
            assert_eq!(pair.english[[i, i]], 1.0);
        }
        assert_eq!(pair.english_text, vec!["E0", "E1", "E2"]);
    }

    #[test]
    fn stack_without_foreign_is_incomplete() {
        let recs = vec![rec(Lang::E, 0, 8)];
        assert!(matches!(stack_bundle(&recs), Err(Error::IncompleteBundle { .. })));
    }
}
