//! Autoregressive token models.
//!
//! A [`TokenModel`] answers "what is the distribution of the next token given
//! this context and this prompt variant". The toy kinds (uniform, table,
//! n-gram) are exact and pure so every inference algorithm can be checked
//! against enumeration; the remote kind delegates to an HTTP backend.

mod ngram;
pub(crate) mod remote;
mod table;
mod vocab;

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use ngram::{NGramModel, Tokenizer};
pub use remote::{NextLogprobsRequest, NextLogprobsResponse, RemoteModel, NEXT_LOGPROBS_PATH};
pub use table::{TableDefault, TableModel, TableModelFile, TableRow};
pub use vocab::{TokenId, Vocabulary};

/// Prefix used when a hint is injected into a model's conditioning.
pub const HINT_PREFIX: &str = "Note to self: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Uniform,
    Table,
    Ngram,
    Remote,
}

/// One conditional query: token context, prompt variant and any injected hints.
#[derive(Debug, Clone, Copy)]
pub struct ModelQuery<'a> {
    pub context: &'a [TokenId],
    pub prompt_tag: &'a str,
    pub hints: &'a [String],
}

impl<'a> ModelQuery<'a> {
    pub fn new(context: &'a [TokenId], prompt_tag: &'a str) -> Self {
        Self {
            context,
            prompt_tag,
            hints: &[],
        }
    }

    pub fn with_hints(mut self, hints: &'a [String]) -> Self {
        self.hints = hints;
        self
    }
}

/// Canonical serialization of a hint buffer: entries joined by newlines.
pub fn serialize_hints(hints: &[String]) -> String {
    hints.join("\n")
}

#[derive(Debug)]
pub enum TokenModel {
    Uniform(Vocabulary),
    Table(TableModel),
    NGram(NGramModel),
    Remote(RemoteModel),
}

impl TokenModel {
    pub fn uniform(vocab: Vocabulary) -> Self {
        TokenModel::Uniform(vocab)
    }

    pub fn load_table(source: &str) -> Result<Self> {
        TableModel::parse(source).map(TokenModel::Table)
    }

    pub fn train_ngram(
        corpus: &str,
        order: usize,
        smoothing: f64,
        tokenizer: Tokenizer,
    ) -> Result<Self> {
        NGramModel::train(corpus, order, smoothing, tokenizer).map(TokenModel::NGram)
    }

    pub fn remote(endpoint: &str, vocab: Vocabulary) -> Result<Self> {
        RemoteModel::connect(endpoint, vocab).map(TokenModel::Remote)
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            TokenModel::Uniform(_) => ModelKind::Uniform,
            TokenModel::Table(_) => ModelKind::Table,
            TokenModel::NGram(_) => ModelKind::Ngram,
            TokenModel::Remote(_) => ModelKind::Remote,
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        match self {
            TokenModel::Uniform(v) => v,
            TokenModel::Table(t) => t.vocabulary(),
            TokenModel::NGram(m) => m.vocabulary(),
            TokenModel::Remote(r) => r.vocabulary(),
        }
    }

    /// Next-token probabilities; nonnegative and summing to one.
    ///
    /// Hints are folded into the conditioning as follows. When the vocabulary
    /// declares a hint delimiter, each hint is tokenized and placed before the
    /// context, followed by the delimiter. Otherwise the serialized hints
    /// travel as prompt metadata: table rows may key on them through their
    /// `hint` field, remote requests carry them after the tag on a new line,
    /// and the uniform and n-gram kinds ignore them.
    pub fn next_distribution(&self, query: &ModelQuery<'_>) -> Result<Vec<f64>> {
        let vocab = self.vocabulary();
        vocab.check(query.context)?;
        let (context, hint_key) = conditioning(vocab, query);
        match self {
            TokenModel::Uniform(v) => Ok(vec![1.0 / v.size() as f64; v.size()]),
            TokenModel::Table(t) => Ok(t
                .row(&context, query.prompt_tag, hint_key.as_deref())
                .to_vec()),
            TokenModel::NGram(m) => Ok(m.distribution(&context)),
            TokenModel::Remote(r) => {
                let tag = match &hint_key {
                    Some(h) => Cow::Owned(format!("{}\n{h}", query.prompt_tag)),
                    None => Cow::Borrowed(query.prompt_tag),
                };
                Ok(r.distribution(&context, &tag)?.to_vec())
            }
        }
    }

    /// Natural-log version of [`next_distribution`](Self::next_distribution);
    /// zero probabilities map to negative infinity.
    pub fn next_logprobs(&self, query: &ModelQuery<'_>) -> Result<Vec<f64>> {
        Ok(self
            .next_distribution(query)?
            .into_iter()
            .map(f64::ln)
            .collect())
    }

    /// `log p(continuation | prefix)` under the given prompt variant.
    pub fn sequence_logprob(
        &self,
        prefix: &[TokenId],
        continuation: &[TokenId],
        prompt_tag: &str,
    ) -> Result<f64> {
        self.sequence_logprob_with_hints(prefix, continuation, prompt_tag, &[])
    }

    pub fn sequence_logprob_with_hints(
        &self,
        prefix: &[TokenId],
        continuation: &[TokenId],
        prompt_tag: &str,
        hints: &[String],
    ) -> Result<f64> {
        let vocab = self.vocabulary();
        vocab.check(prefix)?;
        vocab.check(continuation)?;
        let mut context = prefix.to_vec();
        let mut total = 0.0;
        for &tok in continuation {
            let q = ModelQuery {
                context: &context,
                prompt_tag,
                hints,
            };
            let p = self.next_distribution(&q)?[tok as usize];
            if p <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            total += p.ln();
            context.push(tok);
        }
        Ok(total)
    }
}

fn conditioning<'a>(
    vocab: &Vocabulary,
    query: &ModelQuery<'a>,
) -> (Cow<'a, [TokenId]>, Option<String>) {
    if query.hints.is_empty() {
        return (Cow::Borrowed(query.context), None);
    }
    match vocab.hint_delimiter() {
        Some(delim) => {
            let mut ctx = Vec::new();
            for h in query.hints {
                ctx.extend(vocab.tokenize_lossy(h));
                ctx.push(delim);
            }
            ctx.extend_from_slice(query.context);
            (Cow::Owned(ctx), None)
        }
        None => (
            Cow::Borrowed(query.context),
            Some(serialize_hints(query.hints)),
        ),
    }
}
