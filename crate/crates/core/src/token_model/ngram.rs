use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::vocab::{TokenId, Vocabulary};
use crate::error::{Error, Result};

pub const NGRAM_EOS: &str = "<eos>";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tokenizer {
    #[default]
    Char,
    Whitespace,
}

impl Tokenizer {
    fn split(self, text: &str) -> Vec<String> {
        match self {
            Tokenizer::Char => text.chars().map(String::from).collect(),
            Tokenizer::Whitespace => text.split_whitespace().map(String::from).collect(),
        }
    }

    fn separator(self) -> &'static str {
        match self {
            Tokenizer::Char => "",
            Tokenizer::Whitespace => " ",
        }
    }
}

#[derive(Debug, Default)]
struct Counts {
    total: u64,
    next: HashMap<TokenId, u64>,
}

/// Additively smoothed n-gram model.
///
/// Contexts are the last `order - 1` tokens; shorter contexts only occur at
/// the start of the stream and are counted separately, so the first tokens of
/// a sequence follow the observed document openings. A context never seen in
/// training with zero smoothing falls back to the uniform distribution.
#[derive(Debug)]
pub struct NGramModel {
    vocab: Vocabulary,
    order: usize,
    smoothing: f64,
    counts: HashMap<Vec<TokenId>, Counts>,
}

impl NGramModel {
    pub fn train(corpus: &str, order: usize, smoothing: f64, tokenizer: Tokenizer) -> Result<Self> {
        Self::train_documents(&[corpus], order, smoothing, tokenizer)
    }

    /// Train on several documents, joined into one stream with EOS between
    /// consecutive documents.
    pub fn train_documents(
        docs: &[&str],
        order: usize,
        smoothing: f64,
        tokenizer: Tokenizer,
    ) -> Result<Self> {
        let pieces: Vec<Vec<String>> = docs.iter().map(|d| tokenizer.split(d)).collect();
        if pieces.iter().all(|p| p.is_empty()) {
            return Err(Error::EmptyCorpus);
        }
        let symbols: BTreeSet<&str> = pieces
            .iter()
            .flatten()
            .map(String::as_str)
            .filter(|s| *s != NGRAM_EOS)
            .collect();
        let mut tokens: Vec<String> = symbols.into_iter().map(String::from).collect();
        tokens.push(NGRAM_EOS.to_string());
        let vocab = Vocabulary::with_trailing_eos(tokens)?.with_separator(tokenizer.separator());
        let mut stream = Vec::new();
        for (i, doc) in pieces.iter().enumerate() {
            if i > 0 {
                stream.push(vocab.eos_id());
            }
            stream.extend(
                doc.iter()
                    .map(|t| vocab.id_of(t).expect("token collected above")),
            );
        }
        Self::from_stream(vocab, &stream, order, smoothing)
    }

    /// Train directly on a token stream over an existing vocabulary.
    pub fn from_stream(
        vocab: Vocabulary,
        stream: &[TokenId],
        order: usize,
        smoothing: f64,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::schema("order", "n-gram order must be positive"));
        }
        if !(smoothing >= 0.0) || !smoothing.is_finite() {
            return Err(Error::schema(
                "smoothing",
                "smoothing must be a finite nonnegative number",
            ));
        }
        if stream.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        vocab.check(stream)?;
        let mut counts: HashMap<Vec<TokenId>, Counts> = HashMap::new();
        for i in 0..stream.len() {
            let ctx = &stream[i.saturating_sub(order - 1)..i];
            let c = counts.entry(ctx.to_vec()).or_default();
            c.total += 1;
            *c.next.entry(stream[i]).or_default() += 1;
        }
        Ok(Self {
            vocab,
            order,
            smoothing,
            counts,
        })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn distribution(&self, context: &[TokenId]) -> Vec<f64> {
        let n = self.vocab.size();
        let key = &context[context.len().saturating_sub(self.order - 1)..];
        let counts = self.counts.get(key);
        let total = counts.map_or(0, |c| c.total) as f64;
        let denom = total + self.smoothing * n as f64;
        if denom <= 0.0 {
            return vec![1.0 / n as f64; n];
        }
        let mut dist = vec![self.smoothing / denom; n];
        if let Some(c) = counts {
            for (&t, &k) in &c.next {
                dist[t as usize] = (k as f64 + self.smoothing) / denom;
            }
        }
        dist
    }
}
