use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::vocab::{TokenId, Vocabulary};
use crate::error::{Error, Result};

pub const NEXT_LOGPROBS_PATH: &str = "/v1/next_logprobs";

/// Tag sent with the construction-time health probe.
const PROBE_TAG: &str = "proposal";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextLogprobsRequest {
    pub context: Vec<TokenId>,
    pub prompt_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextLogprobsResponse {
    pub logprobs: Vec<f64>,
}

type CacheKey = (Vec<TokenId>, String);

/// Model served over HTTP. Responses are cached per `(context, tag)` for the
/// lifetime of the value, which is one run.
pub struct RemoteModel {
    vocab: Vocabulary,
    url: String,
    client: reqwest::blocking::Client,
    cache: Mutex<HashMap<CacheKey, Arc<[f64]>>>,
}

impl std::fmt::Debug for RemoteModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteModel")
            .field("url", &self.url)
            .field("vocab_size", &self.vocab.size())
            .finish()
    }
}

impl RemoteModel {
    /// Connect and run one probe query so an unreachable or misconfigured
    /// backend fails here rather than mid-run.
    pub fn connect(endpoint: &str, vocab: Vocabulary) -> Result<Self> {
        let client = http_client()?;
        let url = format!("{}{NEXT_LOGPROBS_PATH}", endpoint.trim_end_matches('/'));
        let model = Self {
            vocab,
            url,
            client,
            cache: Mutex::new(HashMap::new()),
        };
        model.fetch(&[], PROBE_TAG)?;
        Ok(model)
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.lock().expect("cache lock poisoned").len()
    }

    pub fn distribution(&self, context: &[TokenId], tag: &str) -> Result<Arc<[f64]>> {
        let key = (context.to_vec(), tag.to_string());
        if let Some(hit) = self.cache.lock().expect("cache lock poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let dist: Arc<[f64]> = self.fetch(context, tag)?.into();
        let mut cache = self.cache.lock().expect("cache lock poisoned");
        Ok(cache.entry(key).or_insert(dist).clone())
    }

    fn fetch(&self, context: &[TokenId], tag: &str) -> Result<Vec<f64>> {
        let body = NextLogprobsRequest {
            context: context.to_vec(),
            prompt_tag: tag.to_string(),
        };
        let resp = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(transport_error)?;
        let parsed: NextLogprobsResponse = resp
            .json()
            .map_err(|e| Error::ProtocolError(format!("malformed response: {e}")))?;
        renormalize(&parsed.logprobs, self.vocab.size())
    }
}

pub(crate) fn http_client() -> Result<reqwest::blocking::Client> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(60))
        .build()
        .map_err(|e| Error::RemoteUnavailable(e.to_string()))
}

pub(crate) fn transport_error(err: reqwest::Error) -> Error {
    match err.status() {
        Some(code) if code.is_server_error() => Error::RemoteUnavailable(format!("HTTP {code}")),
        Some(code) => Error::ProtocolError(format!("HTTP {code}")),
        None if err.is_decode() => Error::ProtocolError(err.to_string()),
        None => Error::RemoteUnavailable(err.to_string()),
    }
}

/// Convert server logprobs to probabilities, re-normalizing in case the
/// server's normalization drifted.
fn renormalize(logprobs: &[f64], size: usize) -> Result<Vec<f64>> {
    if logprobs.len() != size {
        return Err(Error::ProtocolError(format!(
            "expected {size} logprobs, got {}",
            logprobs.len()
        )));
    }
    if logprobs.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(Error::ProtocolError("logprobs contain NaN or +inf".into()));
    }
    let max = logprobs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::ProtocolError("all logprobs are -inf".into()));
    }
    let exp: Vec<f64> = logprobs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    Ok(exp.into_iter().map(|p| p / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renormalizes_drifted_logprobs() {
        let d = renormalize(&[0.5f64.ln() + 1.0, 0.5f64.ln() + 1.0], 2).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-15 && (d[1] - 0.5).abs() < 1e-15);
        let d = renormalize(&[0.0, f64::NEG_INFINITY], 2).unwrap();
        assert_eq!(d, vec![1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(matches!(
            renormalize(&[0.0], 2),
            Err(Error::ProtocolError(_))
        ));
        assert!(matches!(
            renormalize(&[f64::NAN, 0.0], 2),
            Err(Error::ProtocolError(_))
        ));
        assert!(matches!(
            renormalize(&[f64::NEG_INFINITY; 2], 2),
            Err(Error::ProtocolError(_))
        ));
    }

    #[test]
    fn unreachable_endpoint() {
        let v = Vocabulary::with_trailing_eos(vec!["a".into(), "<eos>".into()]).unwrap();
        // port 9 (discard) on localhost is not listening in the sandbox
        let err = RemoteModel::connect("http://127.0.0.1:9", v).unwrap_err();
        assert_eq!(err.kind(), crate::ErrorKind::RemoteUnavailable);
    }
}
