use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::token_model::{TokenId, Vocabulary};

/// Set of token ids a masked draw may produce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenMask {
    allowed: Vec<bool>,
}

impl TokenMask {
    pub fn from_ids(vocab_size: usize, ids: impl IntoIterator<Item = TokenId>) -> Result<Self> {
        let mut allowed = vec![false; vocab_size];
        for id in ids {
            let slot = allowed.get_mut(id as usize).ok_or(Error::InvalidContext {
                token: id,
                vocab_size,
            })?;
            *slot = true;
        }
        Ok(Self { allowed })
    }

    pub fn from_predicate(vocab_size: usize, mut keep: impl FnMut(TokenId) -> bool) -> Self {
        Self {
            allowed: (0..vocab_size as TokenId).map(&mut keep).collect(),
        }
    }

    pub fn allows(&self, id: TokenId) -> bool {
        self.allowed.get(id as usize).copied().unwrap_or(false)
    }

    pub fn is_empty(&self) -> bool {
        !self.allowed.iter().any(|a| *a)
    }

    pub fn allowed_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.allowed
            .iter()
            .enumerate()
            .filter(|(_, a)| **a)
            .map(|(i, _)| i as TokenId)
    }

    pub fn len(&self) -> usize {
        self.allowed.len()
    }

    fn intersect(&mut self, other: &TokenMask) {
        for (a, b) in self.allowed.iter_mut().zip(&other.allowed) {
            *a &= *b;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharClass {
    /// Anything that is neither alphanumeric nor whitespace.
    Punctuation,
    Whitespace,
    Digit,
    Uppercase,
    Lowercase,
    Alphabetic,
}

impl CharClass {
    pub fn contains(self, c: char) -> bool {
        match self {
            CharClass::Punctuation => !c.is_alphanumeric() && !c.is_whitespace(),
            CharClass::Whitespace => c.is_whitespace(),
            CharClass::Digit => c.is_numeric(),
            CharClass::Uppercase => c.is_uppercase(),
            CharClass::Lowercase => c.is_lowercase(),
            CharClass::Alphabetic => c.is_alphabetic(),
        }
    }
}

/// Declarative mask constructor, resolved against the current particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskSpec {
    /// Tokens containing no character of a forbidden class.
    CharClass {
        forbid: Vec<CharClass>,
        #[serde(default)]
        allow_eos: bool,
    },
    /// Tokens that keep the rendered text within `limit` characters. EOS is
    /// allowed exactly when the text is already `limit` characters long.
    MaxRemainingChars { limit: usize },
    /// Tokens whose text is one of the given words.
    AllowedWords {
        words: Vec<String>,
        #[serde(default)]
        allow_eos: bool,
    },
    /// Tokens named by their text.
    Tokens { tokens: Vec<String> },
    /// Explicit token ids.
    TokenIds { ids: Vec<TokenId> },
    /// Intersection of several masks.
    AllOf { masks: Vec<MaskSpec> },
}

impl MaskSpec {
    pub fn validate(&self, field: &str) -> Result<()> {
        match self {
            MaskSpec::AllowedWords { words, .. } if words.is_empty() => Err(Error::schema(
                format!("{field}.words"),
                "word list must be nonempty",
            )),
            MaskSpec::Tokens { tokens } if tokens.is_empty() => Err(Error::schema(
                format!("{field}.tokens"),
                "token list must be nonempty",
            )),
            MaskSpec::TokenIds { ids } if ids.is_empty() => Err(Error::schema(
                format!("{field}.ids"),
                "id list must be nonempty",
            )),
            MaskSpec::AllOf { masks } => {
                if masks.is_empty() {
                    return Err(Error::schema(
                        format!("{field}.masks"),
                        "mask list must be nonempty",
                    ));
                }
                masks
                    .iter()
                    .enumerate()
                    .try_for_each(|(i, m)| m.validate(&format!("{field}.masks[{i}]")))
            }
            _ => Ok(()),
        }
    }

    /// Allowed set for the next token after `tokens`.
    ///
    /// The result may be empty; callers raise `MaskEmpty` rather than
    /// drawing from it.
    pub fn resolve(&self, vocab: &Vocabulary, tokens: &[TokenId]) -> Result<TokenMask> {
        let n = vocab.size();
        let eos = vocab.eos_id();
        Ok(match self {
            MaskSpec::CharClass { forbid, allow_eos } => TokenMask::from_predicate(n, |id| {
                if id == eos {
                    return *allow_eos;
                }
                !vocab
                    .token_text(id)
                    .chars()
                    .any(|c| forbid.iter().any(|cls| cls.contains(c)))
            }),
            MaskSpec::MaxRemainingChars { limit } => {
                let used = vocab.rendered_len(tokens);
                let has_text = used > 0 || tokens.iter().any(|&t| vocab.is_text_token(t));
                TokenMask::from_predicate(n, |id| {
                    if id == eos {
                        used == *limit
                    } else {
                        vocab.is_text_token(id) && used + vocab.appended_len(id, has_text) <= *limit
                    }
                })
            }
            MaskSpec::AllowedWords { words, allow_eos } => TokenMask::from_predicate(n, |id| {
                if id == eos {
                    return *allow_eos;
                }
                let text = vocab.token_text(id).trim();
                words.iter().any(|w| w == text)
            }),
            MaskSpec::Tokens { tokens: names } => {
                let ids = names
                    .iter()
                    .map(|t| {
                        vocab.id_of(t).ok_or_else(|| {
                            Error::schema("mask.tokens", format!("unknown token {t:?}"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                TokenMask::from_ids(n, ids)?
            }
            MaskSpec::TokenIds { ids } => TokenMask::from_ids(n, ids.iter().copied())?,
            MaskSpec::AllOf { masks } => {
                let mut acc = TokenMask::from_predicate(n, |_| true);
                for m in masks {
                    acc.intersect(&m.resolve(vocab, tokens)?);
                }
                acc
            }
        })
    }
}

/// Mass of `dist` on the allowed set.
pub fn allowed_mass(dist: &[f64], mask: &TokenMask) -> f64 {
    mask.allowed_ids().map(|t| dist[t as usize]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chars() -> Vocabulary {
        Vocabulary::with_trailing_eos(["a", "b", " ", ".", "<eos>"].map(String::from).to_vec())
            .unwrap()
    }

    #[test]
    fn char_class_forbids_punctuation() {
        let v = chars();
        let m = MaskSpec::CharClass {
            forbid: vec![CharClass::Punctuation],
            allow_eos: false,
        }
        .resolve(&v, &[])
        .unwrap();
        assert_eq!(m.allowed_ids().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn max_remaining_chars_allows_eos_only_when_full() {
        let v = chars();
        let spec = MaskSpec::MaxRemainingChars { limit: 2 };
        let m = spec.resolve(&v, &[0]).unwrap();
        assert_eq!(m.allowed_ids().collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        let m = spec.resolve(&v, &[0, 1]).unwrap();
        assert_eq!(m.allowed_ids().collect::<Vec<_>>(), vec![4]);
    }

    #[test]
    fn max_remaining_chars_counts_separators() {
        let v = Vocabulary::with_trailing_eos(["ab", "abc", "<eos>"].map(String::from).to_vec())
            .unwrap()
            .with_separator(" ");
        // "ab" + " " + "ab" = 5 fits a limit of 5, "abc" would need 6
        let m = MaskSpec::MaxRemainingChars { limit: 5 }
            .resolve(&v, &[0])
            .unwrap();
        assert_eq!(m.allowed_ids().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn allowed_words_and_intersections() {
        let v = Vocabulary::with_trailing_eos(
            ["the", "cat", "sat", "<eos>"].map(String::from).to_vec(),
        )
        .unwrap();
        let words = MaskSpec::AllowedWords {
            words: vec!["cat".into(), "sat".into()],
            allow_eos: true,
        };
        assert_eq!(
            words
                .resolve(&v, &[])
                .unwrap()
                .allowed_ids()
                .collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        let both = MaskSpec::AllOf {
            masks: vec![
                words,
                MaskSpec::Tokens {
                    tokens: vec!["sat".into(), "the".into()],
                },
            ],
        };
        assert_eq!(
            both.resolve(&v, &[])
                .unwrap()
                .allowed_ids()
                .collect::<Vec<_>>(),
            vec![2]
        );
    }

    #[test]
    fn empty_resolution_is_reported_not_hidden() {
        let v = chars();
        let m = MaskSpec::AllowedWords {
            words: vec!["zzz".into()],
            allow_eos: false,
        }
        .resolve(&v, &[])
        .unwrap();
        assert!(m.is_empty());
        assert!(MaskSpec::TokenIds { ids: vec![99] }
            .resolve(&v, &[])
            .is_err());
    }
}
