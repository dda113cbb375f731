//! Flat `key = value` files with `[section]` blocks.
//!
//! `#` and `;` start comments. Keys before the first section header live in
//! the unnamed section `""`.

use std::collections::BTreeMap;
use std::fmt;

/// A diagnostic tied to a line and/or key of a config file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { line: None, key: None, message: message.into() }
    }

    pub fn at(line: usize, message: impl Into<String>) -> Self {
        Self { line: Some(line), key: None, message: message.into() }
    }

    pub fn key(key: &str, line: Option<usize>, message: impl Into<String>) -> Self {
        Self { line, key: Some(key.to_string()), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if let Some(k) = &self.key {
            write!(f, "key `{k}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
    section_lines: BTreeMap<String, usize>,
    source: String,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config { source: text.to_string(), ..Default::default() };
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = strip_comment(raw).trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                // a list value never starts a line, so `[` here is a header
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(line, format!("malformed section header `{body}`")))?
                    .trim();
                if name.is_empty() {
                    return Err(ConfigError::at(line, "empty section name"));
                }
                if cfg.section_lines.insert(name.to_string(), line).is_some() {
                    return Err(ConfigError::at(line, format!("section [{name}] appears twice")));
                }
                cfg.sections.entry(name.to_string()).or_default();
                current = name.to_string();
                continue;
            }
            let (key, value) =
                body.split_once('=').ok_or_else(|| ConfigError::at(line, format!("expected `key = value`, got `{body}`")))?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError::at(line, format!("invalid key `{key}`")));
            }
            let section = cfg.sections.entry(current.clone()).or_default();
            if let Some(prev) = section.get(key) {
                return Err(ConfigError::key(key, Some(line), format!("duplicate key (first set on line {})", prev.line)));
            }
            section.insert(key.to_string(), Entry { value: value.trim().to_string(), line });
        }
        Ok(cfg)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|s| s.get(key))
    }

    pub fn sections(&self) -> impl Iterator<Item = (&str, usize)> {
        self.section_lines.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn keys(&self, section: &str) -> impl Iterator<Item = (&str, &Entry)> {
        self.sections.get(section).into_iter().flat_map(|s| s.iter().map(|(k, v)| (k.as_str(), v)))
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Nested list of numbers, e.g. `[[0, 0, 1], [0, 0, 2]]`.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Number(f64),
    List(Vec<Value>),
}

pub fn parse_value(text: &str) -> Result<Value, String> {
    let mut p = ValueParser { s: text.as_bytes(), pos: 0 };
    let v = p.value()?;
    p.skip_ws();
    if p.pos != p.s.len() {
        return Err(format!("unexpected trailing input `{}`", &text[p.pos..]));
    }
    Ok(v)
}

struct ValueParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl ValueParser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn value(&mut self) -> Result<Value, String> {
        self.skip_ws();
        if self.s.get(self.pos) == Some(&b'[') {
            self.pos += 1;
            let mut items = Vec::new();
            self.skip_ws();
            if self.s.get(self.pos) == Some(&b']') {
                self.pos += 1;
                return Ok(Value::List(items));
            }
            loop {
                items.push(self.value()?);
                self.skip_ws();
                match self.s.get(self.pos) {
                    Some(b',') => self.pos += 1,
                    Some(b']') => {
                        self.pos += 1;
                        return Ok(Value::List(items));
                    }
                    _ => return Err("expected `,` or `]` in list".into()),
                }
            }
        }
        let start = self.pos;
        while self.pos < self.s.len() && !matches!(self.s[self.pos], b',' | b']' | b'[') && !self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let tok = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
        tok.parse::<f64>().map(Value::Number).map_err(|_| format!("`{tok}` is not a number"))
    }
}

impl Value {
    /// Flat list of numbers; a bare number becomes a one-element list.
    pub fn numbers(&self) -> Result<Vec<f64>, String> {
        match self {
            Value::Number(x) => Ok(vec![*x]),
            Value::List(items) => items
                .iter()
                .map(|v| match v {
                    Value::Number(x) => Ok(*x),
                    Value::List(_) => Err("expected a flat list of numbers".to_string()),
                })
                .collect(),
        }
    }

    /// Points in 3D; a flat list is read as z-coordinates.
    pub fn points(&self) -> Result<Vec<[f64; 3]>, String> {
        let Value::List(items) = self else {
            return Ok(vec![[0.0, 0.0, self.numbers()?[0]]]);
        };
        items
            .iter()
            .map(|v| match v {
                Value::Number(z) => Ok([0.0, 0.0, *z]),
                Value::List(_) => {
                    let c = v.numbers()?;
                    <[f64; 3]>::try_from(c.as_slice()).map_err(|_| format!("a position needs 3 coordinates, got {}", c.len()))
                }
            })
            .collect()
    }
}
