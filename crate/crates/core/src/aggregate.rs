//! Aligned, unaligned and full-article mean embeddings per stock-day.

use chrono::NaiveDate;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::embed_io::{l2_norm, EmbeddingMatrixPair};
use crate::error::{Error, Result};
use crate::{Kind, Lang};

/// Means with a norm below this are treated as zero.
pub const ZERO_MEAN_NORM: f64 = 1e-12;

/// Sentence indices that take part in at least one aligned pair.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedSets {
    pub english: Vec<usize>,
    pub foreign: Vec<usize>,
}

pub fn split_aligned_sets(mask: &Array2<bool>) -> AlignedSets {
    let english = mask
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(_, r)| r.iter().any(|&b| b))
        .map(|(i, _)| i)
        .collect();
    let foreign = mask
        .columns()
        .into_iter()
        .enumerate()
        .filter(|(_, c)| c.iter().any(|&b| b))
        .map(|(j, _)| j)
        .collect();
    AlignedSets { english, foreign }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbsentReason {
    NoSentences,
    ZeroMean,
}

/// One aggregated vector, or the reason it is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSlot {
    pub count: usize,
    /// Norm of the arithmetic mean before re-normalization.
    pub raw_norm: f64,
    #[serde(with = "b64_opt", default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absent: Option<AbsentReason>,
}

impl AggregateSlot {
    fn mean_of(matrix: &Array2<f64>, rows: &[usize]) -> Self {
        if rows.is_empty() {
            return Self {
                count: 0,
                raw_norm: 0.0,
                vector: None,
                absent: Some(AbsentReason::NoSentences),
            };
        }
        let mean = matrix.select(Axis(0), rows).mean_axis(Axis(0)).expect("non-empty selection");
        let raw_norm = l2_norm(mean.as_slice().expect("contiguous mean"));
        if !(raw_norm >= ZERO_MEAN_NORM) {
            return Self {
                count: rows.len(),
                raw_norm,
                vector: None,
                absent: Some(AbsentReason::ZeroMean),
            };
        }
        Self {
            count: rows.len(),
            raw_norm,
            vector: Some(mean.iter().map(|x| x / raw_norm).collect()),
            absent: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangAggregates {
    pub aligned: AggregateSlot,
    pub unaligned: AggregateSlot,
    pub full: AggregateSlot,
}

impl LangAggregates {
    pub fn get(&self, kind: Kind) -> &AggregateSlot {
        match kind {
            Kind::Aligned => &self.aligned,
            Kind::Unaligned => &self.unaligned,
            Kind::Full => &self.full,
        }
    }
}

/// The six aggregated embeddings of one stock-day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedEmbeddings {
    pub ticker: String,
    pub trading_day: NaiveDate,
    pub english: LangAggregates,
    pub foreign: LangAggregates,
    /// Hash of the alignment parameters the sets came from.
    #[serde(default)]
    pub provenance: String,
}

impl AggregatedEmbeddings {
    pub fn slot(&self, lang: Lang, kind: Kind) -> &AggregateSlot {
        match lang {
            Lang::E => self.english.get(kind),
            Lang::F => self.foreign.get(kind),
        }
    }

    pub fn vector(&self, lang: Lang, kind: Kind) -> Option<&[f64]> {
        self.slot(lang, kind).vector.as_deref()
    }
}

fn complement(set: &[usize], len: usize) -> Vec<usize> {
    let mut in_set = vec![false; len];
    for &i in set {
        in_set[i] = true;
    }
    (0..len).filter(|&i| !in_set[i]).collect()
}

pub fn aggregate_embeddings(pair: &EmbeddingMatrixPair, sets: &AlignedSets) -> Result<AggregatedEmbeddings> {
    let (n, m) = (pair.english.nrows(), pair.foreign.nrows());
    if sets.english.iter().any(|&i| i >= n) || sets.foreign.iter().any(|&j| j >= m) {
        return Err(Error::schema(None, "aligned set index outside the embedding matrix"));
    }
    let side = |x: &Array2<f64>, aligned: &[usize], len: usize| LangAggregates {
        aligned: AggregateSlot::mean_of(x, aligned),
        unaligned: AggregateSlot::mean_of(x, &complement(aligned, len)),
        full: AggregateSlot::mean_of(x, &(0..len).collect::<Vec<_>>()),
    };
    Ok(AggregatedEmbeddings {
        ticker: pair.ticker.clone(),
        trading_day: pair.trading_day,
        english: side(&pair.english, &sets.english, n),
        foreign: side(&pair.foreign, &sets.foreign, m),
        provenance: String::new(),
    })
}

mod b64_opt {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::embed_io::{decode_f64_b64, encode_f64_b64};

    pub fn serialize<S: Serializer>(v: &Option<Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.serialize_some(&encode_f64_b64(v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
        let s: Option<String> = Option::deserialize(d)?;
        s.map(|s| decode_f64_b64(&s).map_err(serde::de::Error::custom)).transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn pair(e: Array2<f64>, f: Array2<f64>) -> EmbeddingMatrixPair {
        EmbeddingMatrixPair {
            ticker: "t".into(),
            trading_day: NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(),
            english_text: vec![],
            foreign_text: vec![],
            english: e,
            foreign: f,
        }
    }

    #[test]
    fn identity_mask_aligns_everything() {
        let mask = Array2::from_shape_fn((2, 2), |(i, j)| i == j);
        let sets = split_aligned_sets(&mask);
        assert_eq!(sets.english, vec![0, 1]);
        assert_eq!(sets.foreign, vec![0, 1]);
    }

    #[test]
    fn empty_mask_aligns_nothing() {
        let sets = split_aligned_sets(&Array2::from_elem((3, 2), false));
        assert!(sets.english.is_empty() && sets.foreign.is_empty());
    }

    #[test]
    fn reads_sets_off_the_mask() {
        let mut mask = Array2::from_elem((3, 2), false);
        mask[[0, 1]] = true;
        mask[[2, 1]] = true;
        let sets = split_aligned_sets(&mask);
        assert_eq!(sets.english, vec![0, 2]);
        assert_eq!(sets.foreign, vec![1]);
    }

    #[test]
    fn single_sentence_full_is_the_row() {
        let p = pair(array![[0.6, 0.8]], array![[1.0, 0.0], [0.0, 1.0]]);
        let agg = aggregate_embeddings(&p, &AlignedSets::default()).unwrap();
        assert_eq!(agg.vector(Lang::E, Kind::Full).unwrap(), &[0.6, 0.8]);
        assert!(agg.vector(Lang::E, Kind::Aligned).is_none());
        assert_eq!(agg.slot(Lang::E, Kind::Aligned).absent, Some(AbsentReason::NoSentences));
    }

    #[test]
    fn antipodal_rows_have_zero_mean() {
        let p = pair(array![[1.0, 0.0], [-1.0, 0.0]], array![[1.0, 0.0]]);
        let agg = aggregate_embeddings(&p, &AlignedSets::default()).unwrap();
        let full = agg.slot(Lang::E, Kind::Full);
        assert_eq!(full.absent, Some(AbsentReason::ZeroMean));
        assert_eq!(full.count, 2);
        assert!(full.vector.is_none());
    }

    #[test]
    fn orthogonal_rows_normalize_to_diagonal() {
        let p = pair(array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], array![[0.0, 0.0, 1.0]]);
        let agg = aggregate_embeddings(&p, &AlignedSets::default()).unwrap();
        let v = agg.vector(Lang::E, Kind::Full).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0] - h).abs() < 1e-15 && (v[1] - h).abs() < 1e-15 && v[2] == 0.0);
        assert!((agg.slot(Lang::E, Kind::Full).raw_norm - h).abs() < 1e-15);
    }

    #[test]
    fn fully_aligned_equals_full() {
        let p = pair(array![[1.0, 0.0], [0.6, 0.8]], array![[0.0, 1.0], [0.8, 0.6]]);
        let sets = AlignedSets {
            english: vec![0, 1],
            foreign: vec![0, 1],
        };
        let agg = aggregate_embeddings(&p, &sets).unwrap();
        for lang in Lang::ALL {
            assert_eq!(agg.vector(lang, Kind::Aligned), agg.vector(lang, Kind::Full));
            assert!(agg.vector(lang, Kind::Unaligned).is_none());
        }
    }

    #[test]
    fn counts_partition_sentences() {
        let p = pair(
            array![[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]],
            array![[0.0, 1.0], [0.8, 0.6]],
        );
        let sets = AlignedSets {
            english: vec![1],
            foreign: vec![0],
        };
        let agg = aggregate_embeddings(&p, &sets).unwrap();
        assert_eq!(agg.english.aligned.count + agg.english.unaligned.count, 3);
        assert_eq!(agg.english.full.count, 3);
        assert_eq!(agg.foreign.aligned.count + agg.foreign.unaligned.count, 2);
    }

    #[test]
    fn out_of_range_sets_are_rejected() {
        let p = pair(array![[1.0, 0.0]], array![[1.0, 0.0]]);
        let sets = AlignedSets {
            english: vec![3],
            foreign: vec![],
        };
        assert!(aggregate_embeddings(&p, &sets).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let p = pair(array![[0.6, 0.8], [0.28, 0.96]], array![[1.0, 0.0]]);
        let sets = AlignedSets {
            english: vec![0],
            foreign: vec![0],
        };
        let agg = aggregate_embeddings(&p, &sets).unwrap();
        let json = serde_json::to_string(&agg).unwrap();
        assert_eq!(serde_json::from_str::<AggregatedEmbeddings>(&json).unwrap(), agg);
    }
}
