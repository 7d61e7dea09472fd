use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boilerplate and length rules applied to every article body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningRules {
    /// Lines matching any of these are removed wherever they appear.
    pub line_patterns: Vec<String>,
    /// The first line matching any of these, and everything after it, is
    /// dropped.
    pub footer_patterns: Vec<String>,
    pub min_chars: usize,
    pub max_chars: usize,
}

impl Default for CleaningRules {
    fn default() -> Self {
        Self {
            line_patterns: vec![
                r"^\s*\(Bloomberg\)\s*--\s*$".into(),
                r"(?i)^\s*(for|before) it's here, it's on the bloomberg terminal".into(),
                r"(?i)^\s*--\s*with assistance from".into(),
            ],
            footer_patterns: vec![
                r"(?i)^\s*to contact the (reporter|reporters|editor|editors)".into(),
                r"(?i)^\s*©\d{4} bloomberg".into(),
            ],
            min_chars: 100,
            max_chars: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rejection {
    TooShort,
    TooLong,
    EmptyAfterClean,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CleanOutcome {
    Kept(String),
    Rejected(Rejection),
}

/// Compiled form of [`CleaningRules`].
#[derive(Debug, Clone)]
pub struct Cleaner {
    line_patterns: Vec<Regex>,
    footer_patterns: Vec<Regex>,
    min_chars: usize,
    max_chars: usize,
}

impl Cleaner {
    pub fn new(rules: &CleaningRules) -> Result<Self> {
        let compile = |pats: &[String]| {
            pats.iter()
                .map(|p| Regex::new(p).map_err(|e| Error::Parameter(format!("bad pattern `{p}`: {e}"))))
                .collect::<Result<Vec<_>>>()
        };
        if rules.min_chars > rules.max_chars {
            return Err(Error::Parameter("min_chars exceeds max_chars".into()));
        }
        Ok(Self {
            line_patterns: compile(&rules.line_patterns)?,
            footer_patterns: compile(&rules.footer_patterns)?,
            min_chars: rules.min_chars,
            max_chars: rules.max_chars,
        })
    }

    /// Strips boilerplate, joins lines inside each paragraph with a single
    /// space and applies the length filter. Paragraphs stay separated by a
    /// blank line. Numbers and stopwords are never touched.
    pub fn clean(&self, body: &str) -> Result<CleanOutcome> {
        if body.contains('\u{FFFD}') || body.contains('\0') {
            return Err(Error::MalformedInput(
                "body contains replacement or NUL characters".into(),
            ));
        }
        let body = body.replace("\r\n", "\n").replace('\r', "\n");

        let mut kept_lines: Vec<&str> = Vec::new();
        for line in body.split('\n') {
            if self.footer_patterns.iter().any(|re| re.is_match(line)) {
                break;
            }
            if self.line_patterns.iter().any(|re| re.is_match(line)) {
                continue;
            }
            kept_lines.push(line);
        }

        let mut paragraphs: Vec<String> = Vec::new();
        let mut current: Vec<&str> = Vec::new();
        for line in kept_lines {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                if !current.is_empty() {
                    paragraphs.push(current.join(" "));
                    current.clear();
                }
            } else {
                current.push(trimmed);
            }
        }
        if !current.is_empty() {
            paragraphs.push(current.join(" "));
        }

        let cleaned = paragraphs.join("\n\n");
        let chars = cleaned.chars().count();
        Ok(if chars == 0 {
            CleanOutcome::Rejected(Rejection::EmptyAfterClean)
        } else if chars < self.min_chars {
            CleanOutcome::Rejected(Rejection::TooShort)
        } else if chars > self.max_chars {
            CleanOutcome::Rejected(Rejection::TooLong)
        } else {
            CleanOutcome::Kept(cleaned)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain() -> Cleaner {
        Cleaner::new(&CleaningRules {
            min_chars: 10,
            ..CleaningRules::default()
        })
        .unwrap()
    }

    #[test]
    fn short_body_is_rejected() {
        let c = Cleaner::new(&CleaningRules::default()).unwrap();
        let body = "x".repeat(50);
        assert_eq!(c.clean(&body).unwrap(), CleanOutcome::Rejected(Rejection::TooShort));
    }

    #[test]
    fn long_body_is_rejected() {
        let c = Cleaner::new(&CleaningRules::default()).unwrap();
        let body = "y".repeat(100_001);
        assert_eq!(c.clean(&body).unwrap(), CleanOutcome::Rejected(Rejection::TooLong));
        let body = "y".repeat(100_000);
        assert!(matches!(c.clean(&body).unwrap(), CleanOutcome::Kept(_)));
    }

    #[test]
    fn length_bounds_count_characters_not_bytes() {
        let c = Cleaner::new(&CleaningRules::default()).unwrap();
        // 100 three-byte characters.
        let body = "日".repeat(100);
        assert_eq!(c.clean(&body).unwrap(), CleanOutcome::Kept(body.clone()));
        assert_eq!(
            c.clean(&"日".repeat(99)).unwrap(),
            CleanOutcome::Rejected(Rejection::TooShort)
        );
    }

    #[test]
    fn plain_body_is_returned_verbatim() {
        let c = Cleaner::new(&CleaningRules::default()).unwrap();
        let body: String = "Toyota raised its full-year outlook by 12% on Tuesday. "
            .chars()
            .cycle()
            .take(200)
            .collect::<String>()
            .trim_end()
            .to_string()
            + ".";
        assert_eq!(c.clean(&body).unwrap(), CleanOutcome::Kept(body.clone()));
    }

    #[test]
    fn inner_line_breaks_are_joined() {
        let out = plain().clean("para1 line1\nline2\n\npara2").unwrap();
        assert_eq!(out, CleanOutcome::Kept("para1 line1 line2\n\npara2".into()));
    }

    #[test]
    fn boilerplate_is_removed() {
        let body = "(Bloomberg) --\nShares of 8301 rose 3.5% in Tokyo.\n\n\
                    The bank held its rate at -0.1%.\n\nTo contact the reporter on this story:\nJane Doe";
        let out = plain().clean(body).unwrap();
        assert_eq!(
            out,
            CleanOutcome::Kept(
                "Shares of 8301 rose 3.5% in Tokyo.\n\nThe bank held its rate at -0.1%.".into()
            )
        );
    }

    #[test]
    fn all_boilerplate_is_empty() {
        let out = plain().clean("To contact the editor: someone\nmore").unwrap();
        assert_eq!(out, CleanOutcome::Rejected(Rejection::EmptyAfterClean));
    }

    #[test]
    fn replacement_characters_are_malformed() {
        assert!(matches!(plain().clean("bad \u{FFFD} text"), Err(Error::MalformedInput(_))));
    }

    #[test]
    fn invalid_pattern_is_a_parameter_error() {
        let rules = CleaningRules {
            line_patterns: vec!["(".into()],
            ..CleaningRules::default()
        };
        assert!(matches!(Cleaner::new(&rules), Err(Error::Parameter(_))));
    }
}
