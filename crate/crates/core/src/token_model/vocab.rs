use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// Dense token vocabulary with a distinguished end-of-sequence id.
///
/// `separator` is inserted between consecutive tokens when rendering: empty
/// for character-level vocabularies, a single space for word-level ones.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    eos_id: TokenId,
    separator: String,
    hint_delimiter: Option<TokenId>,
    index: HashMap<String, TokenId>,
    char_lens: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    eos_id: TokenId,
    #[serde(default)]
    separator: String,
    #[serde(default)]
    hint_delimiter: Option<TokenId>,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;

    fn try_from(r: VocabularyRepr) -> Result<Self> {
        let mut v = Vocabulary::new(r.tokens, r.eos_id)?.with_separator(r.separator);
        if let Some(d) = r.hint_delimiter {
            v = v.with_hint_delimiter(d)?;
        }
        Ok(v)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            tokens: v.tokens,
            eos_id: v.eos_id,
            separator: v.separator,
            hint_delimiter: v.hint_delimiter,
        }
    }
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
            && self.eos_id == other.eos_id
            && self.separator == other.separator
            && self.hint_delimiter == other.hint_delimiter
    }
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, eos_id: TokenId) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::schema("vocab", "vocabulary must be nonempty"));
        }
        if eos_id as usize >= tokens.len() {
            return Err(Error::schema(
                "eos_id",
                format!("{eos_id} >= vocabulary size {}", tokens.len()),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::schema("vocab", format!("duplicate token {t:?}")));
            }
        }
        let char_lens = tokens.iter().map(|t| t.chars().count()).collect();
        Ok(Self {
            tokens,
            eos_id,
            separator: String::new(),
            hint_delimiter: None,
            index,
            char_lens,
        })
    }

    /// Vocabulary whose last entry is the EOS token.
    pub fn with_trailing_eos(tokens: Vec<String>) -> Result<Self> {
        let eos = tokens.len().saturating_sub(1) as TokenId;
        Self::new(tokens, eos)
    }

    pub fn with_separator(mut self, separator: impl Into<String>) -> Self {
        self.separator = separator.into();
        self
    }

    pub fn with_hint_delimiter(mut self, id: TokenId) -> Result<Self> {
        if id as usize >= self.tokens.len() || id == self.eos_id {
            return Err(Error::schema(
                "hint_delimiter",
                "must be a non-EOS token of the vocabulary",
            ));
        }
        self.hint_delimiter = Some(id);
        Ok(self)
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    pub fn separator(&self) -> &str {
        &self.separator
    }

    pub fn hint_delimiter(&self) -> Option<TokenId> {
        self.hint_delimiter
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token_text(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn char_len(&self, id: TokenId) -> usize {
        self.char_lens[id as usize]
    }

    pub fn id_of(&self, text: &str) -> Option<TokenId> {
        self.index.get(text).copied()
    }

    pub fn is_text_token(&self, id: TokenId) -> bool {
        id != self.eos_id && Some(id) != self.hint_delimiter
    }

    pub fn check(&self, ids: &[TokenId]) -> Result<()> {
        match ids.iter().find(|&&t| t as usize >= self.tokens.len()) {
            Some(&token) => Err(Error::InvalidContext {
                token,
                vocab_size: self.tokens.len(),
            }),
            None => Ok(()),
        }
    }

    /// Display text of a token sequence; EOS and hint delimiters are dropped.
    pub fn render(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        let mut first = true;
        for &id in ids.iter().filter(|&&id| self.is_text_token(id)) {
            if !first {
                out.push_str(&self.separator);
            }
            out.push_str(&self.tokens[id as usize]);
            first = false;
        }
        out
    }

    /// Character length of `render(ids)` without building the string.
    pub fn rendered_len(&self, ids: &[TokenId]) -> usize {
        let sep = self.separator.chars().count();
        let mut n = 0;
        let mut count = 0usize;
        for &id in ids.iter().filter(|&&id| self.is_text_token(id)) {
            n += self.char_lens[id as usize];
            count += 1;
        }
        n + sep * count.saturating_sub(1)
    }

    /// Character length `render` would gain by appending `id` to a sequence
    /// whose rendered text is nonempty (`has_text`) or empty.
    pub fn appended_len(&self, id: TokenId, has_text: bool) -> usize {
        if !self.is_text_token(id) {
            return 0;
        }
        let sep = if has_text {
            self.separator.chars().count()
        } else {
            0
        };
        sep + self.char_lens[id as usize]
    }

    /// Split text into token ids.
    ///
    /// With a nonempty separator the text is split on it (whitespace runs
    /// for a single-space separator) and each piece must be a token. Without
    /// one, greedy longest match over the non-EOS tokens is used.
    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenId>> {
        let unknown = |piece: &str| {
            Error::schema(
                "text",
                format!("{piece:?} cannot be tokenized with this vocabulary"),
            )
        };
        if !self.separator.is_empty() {
            let pieces: Vec<&str> = if self.separator == " " {
                text.split_whitespace().collect()
            } else {
                text.split(self.separator.as_str())
                    .filter(|p| !p.is_empty())
                    .collect()
            };
            return pieces
                .into_iter()
                .map(|p| {
                    self.id_of(p)
                        .filter(|&id| id != self.eos_id)
                        .ok_or_else(|| unknown(p))
                })
                .collect();
        }
        let max_len = self.tokens.iter().map(|t| t.len()).max().unwrap_or(0);
        let mut out = Vec::new();
        let mut rest = text;
        while !rest.is_empty() {
            let mut found = None;
            let mut len = max_len.min(rest.len());
            while len > 0 {
                if rest.is_char_boundary(len) {
                    if let Some(id) = self.id_of(&rest[..len]).filter(|&id| id != self.eos_id) {
                        found = Some((id, len));
                        break;
                    }
                }
                len -= 1;
            }
            let (id, len) = found.ok_or_else(|| unknown(rest))?;
            out.push(id);
            rest = &rest[len..];
        }
        Ok(out)
    }

    /// Tokenize, silently dropping characters the vocabulary cannot express.
    pub(crate) fn tokenize_lossy(&self, text: &str) -> Vec<TokenId> {
        if !self.separator.is_empty() {
            return text
                .split_whitespace()
                .filter_map(|p| self.id_of(p))
                .filter(|&id| self.is_text_token(id))
                .collect();
        }
        let mut buf = [0u8; 4];
        text.chars()
            .filter_map(|c| self.id_of(c.encode_utf8(&mut buf)))
            .filter(|&id| self.is_text_token(id))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chars() -> Vocabulary {
        Vocabulary::with_trailing_eos(vec!["a".into(), "b".into(), " ".into(), "<eos>".into()])
            .unwrap()
    }

    #[test]
    fn eos_must_be_in_range() {
        assert!(Vocabulary::new(vec!["a".into()], 1).is_err());
        assert!(Vocabulary::new(vec!["a".into(), "a".into()], 1).is_err());
    }

    #[test]
    fn render_and_lengths() {
        let v = chars();
        assert_eq!(v.render(&[0, 2, 1, 3]), "a b");
        assert_eq!(v.rendered_len(&[0, 2, 1, 3]), 3);

        let w = Vocabulary::with_trailing_eos(vec!["the".into(), "cat".into(), "<eos>".into()])
            .unwrap()
            .with_separator(" ");
        assert_eq!(w.render(&[0, 1, 2]), "the cat");
        assert_eq!(w.rendered_len(&[0, 1]), 7);
        assert_eq!(w.appended_len(1, true), 4);
        assert_eq!(w.appended_len(1, false), 3);
        assert_eq!(w.tokenize("the  cat").unwrap(), vec![0, 1]);
        assert!(w.tokenize("dog").is_err());
    }

    #[test]
    fn greedy_tokenize() {
        let v = Vocabulary::with_trailing_eos(vec![
            "a".into(),
            "ab".into(),
            "b".into(),
            "<eos>".into(),
        ])
        .unwrap();
        assert_eq!(v.tokenize("abba").unwrap(), vec![1, 2, 0]);
        assert!(v.tokenize("<eos>").is_err());
        assert_eq!(v.tokenize_lossy("a?b"), vec![0, 2]);
    }

    #[test]
    fn check_rejects_out_of_range() {
        assert_eq!(
            chars().check(&[0, 9]),
            Err(Error::InvalidContext {
                token: 9,
                vocab_size: 4
            })
        );
    }

    #[test]
    fn serde_round_trip() {
        let v = chars().with_hint_delimiter(2).unwrap();
        let text = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&text).unwrap();
        assert_eq!(v, back);
        assert_eq!(back.id_of("b"), Some(1));
    }
}
