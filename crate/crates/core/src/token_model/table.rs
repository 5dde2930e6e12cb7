use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::vocab::{TokenId, Vocabulary};
use crate::error::{Error, Result};

const ROW_TOLERANCE: f64 = 1e-6;

/// On-disk table model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableModelFile {
    /// Token strings; the last entry is EOS.
    pub vocab: Vec<String>,
    #[serde(default)]
    pub separator: String,
    /// Optional token used to splice hints into the context.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint_delimiter: Option<String>,
    pub rows: Vec<TableRow>,
    pub default: TableDefault,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRow {
    pub context: Vec<String>,
    pub dist: Vec<f64>,
    /// Restrict the row to one prompt tag; untagged rows serve every tag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    /// Restrict the row to one serialized hint buffer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TableDefault {
    Named(DefaultName),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefaultName {
    Uniform,
}

#[derive(Debug)]
struct Entry {
    tag: Option<String>,
    hint: Option<String>,
    dist: Vec<f64>,
}

/// Explicit conditional rows keyed by full context, with a fallback row.
#[derive(Debug)]
pub struct TableModel {
    vocab: Vocabulary,
    rows: HashMap<Vec<TokenId>, Vec<Entry>>,
    default: Vec<f64>,
}

impl TableModel {
    pub fn parse(source: &str) -> Result<Self> {
        let file: TableModelFile =
            serde_json::from_str(source).map_err(|e| Error::from_json(&e))?;
        Self::from_file(file)
    }

    pub fn from_file(file: TableModelFile) -> Result<Self> {
        let mut vocab = Vocabulary::with_trailing_eos(file.vocab.clone())
            .map_err(|e| Error::parse("vocab", e.to_string()))?
            .with_separator(file.separator.clone());
        if let Some(d) = &file.hint_delimiter {
            let id = vocab
                .id_of(d)
                .ok_or_else(|| Error::parse("hint_delimiter", format!("{d:?} is not in vocab")))?;
            vocab = vocab
                .with_hint_delimiter(id)
                .map_err(|e| Error::parse("hint_delimiter", e.to_string()))?;
        }
        let n = vocab.size();
        let default = match file.default {
            TableDefault::Named(DefaultName::Uniform) => vec![1.0 / n as f64; n],
            TableDefault::Explicit(d) => normalized(d, n, "default", usize::MAX)?,
        };
        let mut rows: HashMap<Vec<TokenId>, Vec<Entry>> = HashMap::new();
        for (i, row) in file.rows.into_iter().enumerate() {
            let context = row
                .context
                .iter()
                .map(|t| {
                    vocab.id_of(t).ok_or_else(|| {
                        Error::parse(format!("rows[{i}].context"), format!("unknown token {t:?}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let dist = normalized(row.dist, n, &format!("rows[{i}].dist"), i)?;
            let entries = rows.entry(context).or_default();
            if entries
                .iter()
                .any(|e| e.tag == row.tag && e.hint == row.hint)
            {
                return Err(Error::parse(
                    format!("rows[{i}]"),
                    "duplicate (context, tag, hint) row",
                ));
            }
            entries.push(Entry {
                tag: row.tag,
                hint: row.hint,
                dist,
            });
        }
        Ok(Self {
            vocab,
            rows,
            default,
        })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Most specific row for the query: tag and hint match first, then tag
    /// only, then hint only, then untagged, then the default row.
    pub fn row(&self, context: &[TokenId], tag: &str, hint: Option<&str>) -> &[f64] {
        let Some(entries) = self.rows.get(context) else {
            return &self.default;
        };
        let score = |e: &Entry| -> Option<u8> {
            let tag_ok = match &e.tag {
                Some(t) if t == tag => Some(2),
                Some(_) => None,
                None => Some(0),
            }?;
            let hint_ok = match (&e.hint, hint) {
                (Some(h), Some(q)) if h == q => Some(1),
                (Some(_), _) => None,
                (None, _) => Some(0),
            }?;
            Some(tag_ok + hint_ok)
        };
        entries
            .iter()
            .filter_map(|e| score(e).map(|s| (s, e)))
            .max_by_key(|(s, _)| *s)
            .map(|(_, e)| e.dist.as_slice())
            .unwrap_or(&self.default)
    }
}

fn normalized(dist: Vec<f64>, n: usize, field: &str, row: usize) -> Result<Vec<f64>> {
    if dist.len() != n {
        return Err(Error::parse(
            field,
            format!("expected {n} probabilities, found {}", dist.len()),
        ));
    }
    if dist.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::parse(
            field,
            "probabilities must be finite and nonnegative",
        ));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::RowNotNormalized { row, sum });
    }
    if (sum - 1.0).abs() <= 1e-12 {
        return Ok(dist);
    }
    Ok(dist.into_iter().map(|p| p / sum).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ErrorKind;

    const TWO_ROWS: &str = r#"{
        "vocab": ["a", "b", "<eos>"],
        "rows": [
            {"context": [], "dist": [0.7, 0.2, 0.1]},
            {"context": ["a"], "dist": [0.0, 0.5, 0.5]},
            {"context": ["a"], "dist": [1.0, 0.0, 0.0], "tag": "prior"},
            {"context": ["a"], "dist": [0.0, 0.0, 1.0], "tag": "prior", "hint": "Note to self: stop"}
        ],
        "default": "uniform"
    }"#;

    #[test]
    fn echoes_stored_rows() {
        let t = TableModel::parse(TWO_ROWS).unwrap();
        assert_eq!(t.row(&[], "proposal", None), &[0.7, 0.2, 0.1]);
        assert_eq!(t.row(&[0], "proposal", None), &[0.0, 0.5, 0.5]);
    }

    #[test]
    fn tag_and_hint_specificity() {
        let t = TableModel::parse(TWO_ROWS).unwrap();
        assert_eq!(t.row(&[0], "prior", None), &[1.0, 0.0, 0.0]);
        assert_eq!(
            t.row(&[0], "prior", Some("Note to self: stop")),
            &[0.0, 0.0, 1.0]
        );
        assert_eq!(t.row(&[0], "prior", Some("other")), &[1.0, 0.0, 0.0]);
        assert_eq!(
            t.row(&[0], "proposal", Some("Note to self: stop")),
            &[0.0, 0.5, 0.5]
        );
    }

    #[test]
    fn unlisted_context_uses_default() {
        let t = TableModel::parse(TWO_ROWS).unwrap();
        let u = 1.0 / 3.0;
        assert_eq!(t.row(&[1, 1], "proposal", None), &[u, u, u]);

        let explicit = r#"{"vocab": ["a", "<eos>"], "rows": [], "default": [0.25, 0.75]}"#;
        let t = TableModel::parse(explicit).unwrap();
        assert_eq!(t.row(&[0], "x", None), &[0.25, 0.75]);
    }

    #[test]
    fn row_not_normalized() {
        let bad = r#"{"vocab": ["a", "b", "<eos>"], "rows": [{"context": [], "dist": [0.5, 0.3, 0.1]}], "default": "uniform"}"#;
        let err = TableModel::parse(bad).unwrap_err();
        assert_eq!(err.kind(), ErrorKind::RowNotNormalized);
    }

    #[test]
    fn malformed_documents() {
        for src in [
            "{not json",
            r#"{"vocab": ["a", "<eos>"], "rows": [{"context": ["z"], "dist": [1, 0]}], "default": "uniform"}"#,
            r#"{"vocab": ["a", "<eos>"], "rows": [{"context": [], "dist": [1]}], "default": "uniform"}"#,
            r#"{"vocab": ["a", "<eos>"], "rows": [], "default": "flat"}"#,
        ] {
            assert_eq!(
                TableModel::parse(src).unwrap_err().kind(),
                ErrorKind::ParseError,
                "{src}"
            );
        }
    }
}
