//! Line-oriented `key = value` text, shared by cube headers, checkpoint
//! headers and run configuration files.
//!
//! Keys are case-insensitive. `#` starts a comment. A `[section]` line
//! prefixes the keys that follow it with `section.`.

use std::fmt::Write as _;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KvError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("key `{key}`: cannot parse {value:?}")]
    Value { key: String, value: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = Vec::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_ascii_lowercase();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(KvError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            };
            let k = k.trim().to_ascii_lowercase();
            if k.is_empty() {
                return Err(KvError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            }
            let key = if section.is_empty() { k } else { format!("{section}.{k}") };
            entries.push((key, v.trim().to_string()));
        }
        Ok(Self { entries })
    }

    /// Last value given for `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        let key = key.to_ascii_lowercase();
        self.entries.iter().rev().find(|(k, _)| *k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, KvError> {
        self.get(key).ok_or_else(|| KvError::Missing(key.to_string()))
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, KvError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| KvError::Value {
                key: key.to_string(),
                value: v.to_string(),
            }),
        }
    }

    pub fn require_parsed<T: FromStr>(&self, key: &str) -> Result<T, KvError> {
        self.parsed(key)?.ok_or_else(|| KvError::Missing(key.to_string()))
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let key = key.to_ascii_lowercase();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    /// Entries under `[name]`, with the `name.` prefix removed.
    pub fn section(&self, name: &str) -> KeyValues {
        let prefix = format!("{}.", name.to_ascii_lowercase());
        KeyValues {
            entries: self
                .entries
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(&prefix).map(|s| (s.to_string(), v.clone())))
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// `{a, b, c}` or `a, b, c`.
pub fn parse_list<T: FromStr>(value: &str) -> Option<Vec<T>> {
    let inner = value.trim().trim_start_matches('{').trim_end_matches('}');
    if inner.trim().is_empty() {
        return Some(Vec::new());
    }
    inner.split(',').map(|s| s.trim().parse().ok()).collect()
}

pub fn format_list<T: std::fmt::Display>(items: &[T]) -> String {
    let parts: Vec<String> = items.iter().map(|v| v.to_string()).collect();
    format!("{{{}}}", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_prefix_keys_and_case_folds() {
        let kv = KeyValues::parse("Seed = 3\n[Loss]\nLambda = 12.5 # weight\n\n").unwrap();
        assert_eq!(kv.get("seed"), Some("3"));
        assert_eq!(kv.get("loss.lambda"), Some("12.5"));
        assert_eq!(kv.get("LOSS.LAMBDA"), Some("12.5"));
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(matches!(KeyValues::parse("a = 1\nbogus\n"), Err(KvError::Syntax { line: 2, .. })));
    }

    #[test]
    fn list_round_trip_is_exact() {
        let v = vec![450.0, 483.333333333333_f64, 950.0];
        let back: Vec<f64> = parse_list(&format_list(&v)).unwrap();
        assert_eq!(v, back);
    }
}
