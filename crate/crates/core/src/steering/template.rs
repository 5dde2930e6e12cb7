//! Hint templates.
//!
//! A template is literal text with `{...}` holes. A hole holds a variable
//! name, optionally followed by `+ term` or `- term` where a term is another
//! variable or an integer literal. `{{` and `}}` produce literal braces.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Binding {
    Int(i64),
    Text(String),
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binding::Int(i) => write!(f, "{i}"),
            Binding::Text(s) => f.write_str(s),
        }
    }
}

pub type Bindings = BTreeMap<String, Binding>;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Term {
    Var(String),
    Lit(i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Hole { head: String, ops: Vec<(i64, Term)> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pieces: Vec<Piece>,
}

impl Template {
    pub fn parse(src: &str) -> Result<Self> {
        let bad = |msg: &str| Error::schema("template", format!("{msg} in {src:?}"));
        let mut pieces = Vec::new();
        let mut text = String::new();
        let mut chars = src.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '{' if chars.peek() == Some(&'{') => {
                    chars.next();
                    text.push('{');
                }
                '}' if chars.peek() == Some(&'}') => {
                    chars.next();
                    text.push('}');
                }
                '}' => return Err(bad("unmatched `}`")),
                '{' => {
                    let mut inner = String::new();
                    loop {
                        match chars.next() {
                            Some('}') => break,
                            Some(ch) => inner.push(ch),
                            None => return Err(bad("unterminated `{`")),
                        }
                    }
                    if !text.is_empty() {
                        pieces.push(Piece::Text(std::mem::take(&mut text)));
                    }
                    pieces.push(
                        parse_hole(&inner)
                            .ok_or_else(|| bad(&format!("invalid expression `{inner}`")))?,
                    );
                }
                other => text.push(other),
            }
        }
        if !text.is_empty() {
            pieces.push(Piece::Text(text));
        }
        Ok(Self { pieces })
    }

    /// Variable names referenced by the template.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for p in &self.pieces {
            if let Piece::Hole { head, ops } = p {
                out.push(head.as_str());
                out.extend(ops.iter().filter_map(|(_, t)| match t {
                    Term::Var(v) => Some(v.as_str()),
                    Term::Lit(_) => None,
                }));
            }
        }
        out
    }

    pub fn render(&self, bindings: &Bindings) -> Result<String> {
        let lookup = |name: &str| {
            bindings
                .get(name)
                .ok_or_else(|| Error::UnboundVariable(name.to_string()))
        };
        let mut out = String::new();
        for p in &self.pieces {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Hole { head, ops } if ops.is_empty() => {
                    out.push_str(&lookup(head)?.to_string())
                }
                Piece::Hole { head, ops } => {
                    let as_int = |name: &str| -> Result<i64> {
                        match lookup(name)? {
                            Binding::Int(i) => Ok(*i),
                            Binding::Text(_) => Err(Error::schema(
                                "template",
                                format!("`{name}` is not an integer"),
                            )),
                        }
                    };
                    let mut acc = as_int(head)?;
                    for (sign, term) in ops {
                        let v = match term {
                            Term::Var(v) => as_int(v)?,
                            Term::Lit(i) => *i,
                        };
                        acc = acc.saturating_add(sign.saturating_mul(v));
                    }
                    out.push_str(&acc.to_string());
                }
            }
        }
        Ok(out)
    }
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_term(s: &str) -> Option<Term> {
    if is_ident(s) {
        Some(Term::Var(s.to_string()))
    } else {
        s.parse().ok().map(Term::Lit)
    }
}

fn parse_hole(inner: &str) -> Option<Piece> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for c in inner.chars() {
        match c {
            '+' | '-' => {
                tokens.push(std::mem::take(&mut cur));
                tokens.push(c.to_string());
            }
            _ => cur.push(c),
        }
    }
    tokens.push(cur);
    let tokens: Vec<&str> = tokens.iter().map(|t| t.trim()).collect();
    let head = tokens.first().copied().filter(|h| is_ident(h))?.to_string();
    let mut ops = Vec::new();
    for pair in tokens[1..].chunks(2) {
        let [op, term] = pair else { return None };
        let sign = if *op == "+" { 1 } else { -1 };
        ops.push((sign, parse_term(term)?));
    }
    Some(Piece::Hole { head, ops })
}
