//! Cross-lingual news alignment for return prediction.
//!
//! Sentences of English and foreign-language news about the same stock and
//! trading day are matched with entropic optimal transport. The matched and
//! unmatched sentences are averaged into per-stock-day features, turned into
//! return scores by rolling ridge regressions, and evaluated with daily
//! quantile long-short portfolios.
//!
//! Stages, in pipeline order:
//!
//! | module | role |
//! |--------|------|
//! | [`corpus`] | clean, deduplicate and bundle raw articles per stock-day |
//! | [`embed_io`] | sentence-embedding interchange format and matrix stacking |
//! | [`ot`] | cosine cost, Sinkhorn, bidirectional alignment, baselines |
//! | [`aggregate`] | aligned / unaligned / full mean embeddings |
//! | [`scoring`] | ridge regression, lambda cross-validation, rolling scores |
//! | [`backtest`] | quantile long-short portfolios and strategy statistics |
//! | [`report`] | similarity, correlation, coverage and heatmap tables |
//! | [`synth`] | synthetic corpora with planted alignments and returns |
//! | [`pipeline`] | config validation and resumable stage orchestration |

pub mod aggregate;
pub mod backtest;
pub mod config;
pub mod corpus;
pub mod embed_io;
pub mod error;
pub mod ot;
pub mod pipeline;
pub mod report;
pub mod scoring;
pub mod synth;

pub use error::{ConfigIssue, Error, Result};

use serde::{Deserialize, Serialize};

/// Side of a bilingual stock-day: English or the foreign language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Lang {
    E,
    F,
}

impl Lang {
    pub const ALL: [Lang; 2] = [Lang::E, Lang::F];

    pub fn as_str(self) -> &'static str {
        match self {
            Lang::E => "E",
            Lang::F => "F",
        }
    }
}

impl std::fmt::Display for Lang {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which sentences an aggregated embedding averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Kind {
    #[serde(rename = "A")]
    Aligned,
    #[serde(rename = "UA")]
    Unaligned,
    Full,
}

impl Kind {
    pub const ALL: [Kind; 3] = [Kind::Aligned, Kind::Unaligned, Kind::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Aligned => "A",
            Kind::Unaligned => "UA",
            Kind::Full => "Full",
        }
    }
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
