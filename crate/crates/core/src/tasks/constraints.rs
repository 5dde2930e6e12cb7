//! Constraint language and ground-truth verifiers.
//!
//! Text conventions shared by verifiers, masks and plans:
//! - characters are Unicode scalar values, whitespace included;
//! - a word is a maximal run of non-whitespace characters; for equality
//!   and length tests its leading and trailing non-alphanumeric characters
//!   are stripped;
//! - a sentence ends at `.`, `!` or `?` followed by whitespace or the end of
//!   the text; the trailing fragment after the last terminator is a sentence
//!   too when it is not blank.
//!
//! Comparisons are case-sensitive except for `contains_words`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionedWord {
    /// 1-based word index.
    pub position: usize,
    pub word: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSpec {
    CharCountExact {
        count: usize,
    },
    WordCountExact {
        count: usize,
    },
    WordCountMin {
        count: usize,
    },
    PositionedWords {
        words: Vec<PositionedWord>,
    },
    ContainsWords {
        words: Vec<String>,
    },
    ForbiddenWords {
        words: Vec<String>,
    },
    MaxWordLength {
        max: usize,
    },
    SentenceCountExact {
        count: usize,
    },
    SentenceLastWords {
        words: Vec<String>,
    },
    PerSentenceWordBounds {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<usize>,
    },
}

impl ConstraintSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ConstraintSpec::CharCountExact { .. } => "char_count_exact",
            ConstraintSpec::WordCountExact { .. } => "word_count_exact",
            ConstraintSpec::WordCountMin { .. } => "word_count_min",
            ConstraintSpec::PositionedWords { .. } => "positioned_words",
            ConstraintSpec::ContainsWords { .. } => "contains_words",
            ConstraintSpec::ForbiddenWords { .. } => "forbidden_words",
            ConstraintSpec::MaxWordLength { .. } => "max_word_length",
            ConstraintSpec::SentenceCountExact { .. } => "sentence_count_exact",
            ConstraintSpec::SentenceLastWords { .. } => "sentence_last_words",
            ConstraintSpec::PerSentenceWordBounds { .. } => "per_sentence_word_bounds",
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let nonempty = |words: &[String]| {
            if words.is_empty() || words.iter().any(|w| w.trim().is_empty()) {
                Err(Error::schema(
                    format!("{field}.words"),
                    "word list must be nonempty with nonblank words",
                ))
            } else {
                Ok(())
            }
        };
        match self {
            ConstraintSpec::PositionedWords { words } => {
                if words.is_empty() {
                    return Err(Error::schema(
                        format!("{field}.words"),
                        "word list must be nonempty",
                    ));
                }
                if let Some(w) = words.iter().find(|w| w.position == 0) {
                    return Err(Error::schema(
                        format!("{field}.words"),
                        format!("position of {:?} must be >= 1", w.word),
                    ));
                }
                Ok(())
            }
            ConstraintSpec::ContainsWords { words }
            | ConstraintSpec::ForbiddenWords { words }
            | ConstraintSpec::SentenceLastWords { words } => nonempty(words),
            ConstraintSpec::PerSentenceWordBounds {
                min: Some(lo),
                max: Some(hi),
            } if lo > hi => Err(Error::schema(
                field.to_string(),
                format!("min {lo} exceeds max {hi}"),
            )),
            ConstraintSpec::PerSentenceWordBounds {
                min: None,
                max: None,
            } => Err(Error::schema(
                field.to_string(),
                "at least one of min and max is required",
            )),
            _ => Ok(()),
        }
    }

    /// Evaluate against `text`, returning the verdict and a readable detail.
    pub fn check(&self, text: &str) -> (bool, String) {
        match self {
            ConstraintSpec::CharCountExact { count } => {
                let n = text.chars().count();
                (
                    n == *count,
                    format!("length is {n} characters (expected {count})"),
                )
            }
            ConstraintSpec::WordCountExact { count } => {
                let n = words(text).count();
                (n == *count, format!("{n} words (expected exactly {count})"))
            }
            ConstraintSpec::WordCountMin { count } => {
                let n = words(text).count();
                (
                    n >= *count,
                    format!("{n} words (expected at least {count})"),
                )
            }
            ConstraintSpec::PositionedWords { words: targets } => {
                let ws: Vec<&str> = words(text).collect();
                let mut failures = Vec::new();
                for t in targets {
                    match ws.get(t.position.wrapping_sub(1)) {
                        Some(w) if strip(w) == t.word => {}
                        Some(w) => failures.push(format!(
                            "word {} is {:?} (expected {:?})",
                            t.position,
                            strip(w),
                            t.word
                        )),
                        None => failures.push(format!(
                            "word {} is missing (expected {:?})",
                            t.position, t.word
                        )),
                    }
                }
                verdict(failures, "all positioned words match")
            }
            ConstraintSpec::ContainsWords { words: required } => {
                let present: Vec<String> = words(text).map(|w| strip(w).to_lowercase()).collect();
                let missing: Vec<String> = required
                    .iter()
                    .filter(|r| !present.contains(&r.to_lowercase()))
                    .map(|r| format!("missing word {r:?}"))
                    .collect();
                verdict(missing, "all required words present")
            }
            ConstraintSpec::ForbiddenWords { words: banned } => {
                let found: Vec<String> = banned
                    .iter()
                    .filter(|b| words(text).any(|w| strip(w) == b.as_str()))
                    .map(|b| format!("contains forbidden word {b:?}"))
                    .collect();
                verdict(found, "no forbidden words")
            }
            ConstraintSpec::MaxWordLength { max } => {
                match words(text).map(strip).find(|w| w.chars().count() > *max) {
                    Some(w) => (
                        false,
                        format!(
                            "word {w:?} has {} characters (max {max})",
                            w.chars().count()
                        ),
                    ),
                    None => (true, format!("all words have at most {max} characters")),
                }
            }
            ConstraintSpec::SentenceCountExact { count } => {
                let n = sentences(text).len();
                (
                    n == *count,
                    format!("{n} sentences (expected exactly {count})"),
                )
            }
            ConstraintSpec::SentenceLastWords { words: targets } => {
                let ss = sentences(text);
                if ss.len() != targets.len() {
                    return (
                        false,
                        format!("{} sentences (expected {})", ss.len(), targets.len()),
                    );
                }
                let failures: Vec<String> = ss
                    .iter()
                    .zip(targets)
                    .enumerate()
                    .filter_map(|(i, (s, t))| {
                        let last = words(s).last().map(strip).unwrap_or("");
                        (last != t).then(|| {
                            format!("sentence {} ends with {last:?} (expected {t:?})", i + 1)
                        })
                    })
                    .collect();
                verdict(failures, "all sentence endings match")
            }
            ConstraintSpec::PerSentenceWordBounds { min, max } => {
                let ss = sentences(text);
                if ss.is_empty() {
                    return (false, "no sentences".to_string());
                }
                let failures: Vec<String> = ss
                    .iter()
                    .enumerate()
                    .filter_map(|(i, s)| {
                        let n = words(s).count();
                        let ok = min.is_none_or(|lo| n >= lo) && max.is_none_or(|hi| n <= hi);
                        (!ok).then(|| format!("sentence {} has {n} words", i + 1))
                    })
                    .collect();
                verdict(failures, "all sentences within word bounds")
            }
        }
    }
}

fn verdict(failures: Vec<String>, ok: &str) -> (bool, String) {
    if failures.is_empty() {
        (true, ok.to_string())
    } else {
        (false, failures.join("; "))
    }
}

/// Whitespace-delimited runs.
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}

/// A word with surrounding punctuation removed.
pub fn strip(word: &str) -> &str {
    word.trim_matches(|c: char| !c.is_alphanumeric())
}

pub fn is_sentence_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if is_sentence_terminator(c) && chars.peek().is_none_or(|(_, n)| n.is_whitespace()) {
            let end = i + c.len_utf8();
            push_sentence(&mut out, &text[start..end]);
            start = end;
        }
    }
    push_sentence(&mut out, &text[start..]);
    out
}

fn push_sentence<'a>(out: &mut Vec<&'a str>, s: &'a str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResult {
    pub constraint: ConstraintSpec,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub per_constraint: Vec<ConstraintResult>,
}

impl VerificationReport {
    pub fn failures(&self) -> impl Iterator<Item = &ConstraintResult> {
        self.per_constraint.iter().filter(|r| !r.passed)
    }
}

pub fn verify(constraints: &[ConstraintSpec], text: &str) -> VerificationReport {
    let per_constraint: Vec<ConstraintResult> = constraints
        .iter()
        .map(|c| {
            let (passed, detail) = c.check(text);
            ConstraintResult {
                constraint: c.clone(),
                passed,
                detail,
            }
        })
        .collect();
    VerificationReport {
        passed: per_constraint.iter().all(|r| r.passed),
        per_constraint,
    }
}

/// Conjunction only, without building a report.
pub fn satisfies(constraints: &[ConstraintSpec], text: &str) -> bool {
    constraints.iter().all(|c| c.check(text).0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub task_type: String,
    pub prompt_text: String,
    pub constraints: Vec<ConstraintSpec>,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.constraints.iter().enumerate() {
            c.validate(&format!("constraints[{i}]"))?;
        }
        let exact = |pick: fn(&ConstraintSpec) -> Option<usize>| -> Result<Option<usize>> {
            let vals: Vec<usize> = self.constraints.iter().filter_map(pick).collect();
            match vals.split_first() {
                Some((first, rest)) if rest.iter().any(|v| v != first) => Err(Error::schema(
                    "constraints",
                    format!("contradictory exact counts {vals:?}"),
                )),
                Some((first, _)) => Ok(Some(*first)),
                None => Ok(None),
            }
        };
        exact(|c| match c {
            ConstraintSpec::CharCountExact { count } => Some(*count),
            _ => None,
        })?;
        let word_exact = exact(|c| match c {
            ConstraintSpec::WordCountExact { count } => Some(*count),
            _ => None,
        })?;
        exact(|c| match c {
            ConstraintSpec::SentenceCountExact { count } => Some(*count),
            ConstraintSpec::SentenceLastWords { words } => Some(words.len()),
            _ => None,
        })?;
        if let Some(n) = word_exact {
            for c in &self.constraints {
                match c {
                    ConstraintSpec::WordCountMin { count } if *count > n => {
                        return Err(Error::schema(
                            "constraints",
                            format!("at least {count} words contradicts exactly {n}"),
                        ));
                    }
                    ConstraintSpec::PositionedWords { words }
                        if words.iter().any(|w| w.position > n) =>
                    {
                        return Err(Error::schema(
                            "constraints",
                            format!("word position beyond exact count {n}"),
                        ));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn verify(&self, text: &str) -> VerificationReport {
        verify(&self.constraints, text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn positioned(pairs: &[(usize, &str)]) -> ConstraintSpec {
        ConstraintSpec::PositionedWords {
            words: pairs
                .iter()
                .map(|(p, w)| PositionedWord {
                    position: *p,
                    word: w.to_string(),
                })
                .collect(),
        }
    }

    #[test]
    fn char_count_includes_whitespace() {
        assert!(
            ConstraintSpec::CharCountExact { count: 7 }
                .check("abc def")
                .0
        );
        assert!(
            !ConstraintSpec::CharCountExact { count: 6 }
                .check("abc def")
                .0
        );
        assert!(ConstraintSpec::CharCountExact { count: 2 }.check("é ").0);
    }

    #[test]
    fn cot_character_counting_failure() {
        let text = "The sun sets slowly over the ocean, painting the sky with hues of orange and pink delight.";
        let (ok, detail) = ConstraintSpec::CharCountExact { count: 82 }.check(text);
        assert!(!ok);
        assert_eq!(detail, "length is 90 characters (expected 82)");
    }

    #[test]
    fn cot_word_positioning_failure() {
        let text = "The museum's vast collection included a fascinating exhibit titled Noise, featuring the Testament of artifacts.";
        let c = positioned(&[(4, "collection"), (8, "Noise"), (11, "Testament")]);
        let (ok, detail) = c.check(text);
        assert!(!ok);
        assert!(
            detail.contains(r#"word 8 is "exhibit" (expected "Noise")"#),
            "{detail}"
        );
        assert!(
            detail.contains(r#"word 11 is "featuring" (expected "Testament")"#),
            "{detail}"
        );
        assert!(ConstraintSpec::WordCountExact { count: 15 }.check(text).0);
    }

    #[test]
    fn glasgow_sentence_passes() {
        let text = "The students at Glasgow gathered every morning in the hall and then listened to lectures on modern art.";
        let report = verify(
            &[
                ConstraintSpec::WordCountExact { count: 18 },
                positioned(&[(4, "Glasgow"), (8, "in"), (11, "and")]),
            ],
            text,
        );
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn contains_is_case_insensitive_forbidden_is_not() {
        let text = "The rising tide, as they have seen.";
        assert!(
            ConstraintSpec::ContainsWords {
                words: vec!["have".into(), "RISING".into(), "the".into()]
            }
            .check(text)
            .0
        );
        assert!(
            ConstraintSpec::ForbiddenWords {
                words: vec!["the".into()]
            }
            .check(text)
            .0
        );
        assert!(
            !ConstraintSpec::ForbiddenWords {
                words: vec!["The".into()]
            }
            .check(text)
            .0
        );
    }

    #[test]
    fn sentence_segmentation() {
        assert_eq!(
            sentences("One. Two! Three? four"),
            vec!["One.", "Two!", "Three?", "four"]
        );
        assert_eq!(
            sentences("e.g. this... and that."),
            vec!["e.g.", "this...", "and that."]
        );
        assert_eq!(sentences("v1.2 is out"), vec!["v1.2 is out"]);
        assert!(sentences("  ").is_empty());
    }

    #[test]
    fn sentence_constraints() {
        let text =
            "We met at the convention. She spoke to the president. Then we flew to Wisconsin.";
        assert!(
            ConstraintSpec::SentenceCountExact { count: 3 }
                .check(text)
                .0
        );
        let last = ConstraintSpec::SentenceLastWords {
            words: vec!["convention".into(), "president".into(), "Wisconsin".into()],
        };
        assert!(last.check(text).0);
        assert!(
            ConstraintSpec::PerSentenceWordBounds {
                min: Some(5),
                max: Some(6)
            }
            .check(text)
            .0
        );
        assert!(
            !ConstraintSpec::PerSentenceWordBounds {
                min: Some(6),
                max: None
            }
            .check(text)
            .0
        );
    }

    #[test]
    fn max_word_length_strips_punctuation() {
        assert!(
            ConstraintSpec::MaxWordLength { max: 5 }
                .check("Hello, world!")
                .0
        );
        assert!(
            !ConstraintSpec::MaxWordLength { max: 4 }
                .check("Hello, world!")
                .0
        );
    }

    #[test]
    fn validation() {
        assert!(positioned(&[(0, "x")]).validate("c").is_err());
        assert!(ConstraintSpec::ContainsWords { words: vec![] }
            .validate("c")
            .is_err());
        assert!(ConstraintSpec::PerSentenceWordBounds {
            min: Some(5),
            max: Some(2)
        }
        .validate("c")
        .is_err());
        let task = TaskSpec {
            id: None,
            task_type: "t".into(),
            prompt_text: String::new(),
            constraints: vec![
                ConstraintSpec::WordCountExact { count: 3 },
                ConstraintSpec::WordCountExact { count: 4 },
            ],
        };
        assert!(task.validate().is_err());
    }

    #[test]
    fn serde_schema() {
        let c: ConstraintSpec = serde_json::from_str(
            r#"{"kind": "positioned_words", "words": [{"position": 4, "word": "Glasgow"}]}"#,
        )
        .unwrap();
        assert_eq!(c, positioned(&[(4, "Glasgow")]));
        let c: ConstraintSpec =
            serde_json::from_str(r#"{"kind": "char_count_exact", "count": 82}"#).unwrap();
        assert_eq!(c.kind_name(), "char_count_exact");
    }
}
