//! Metrics emission: one self-describing record per line,
//! `kind key=value key=value ...`, designed to be grepped or parsed by
//! plotting scripts. Serialization is lossless: floats print in shortest
//! round-trip form, and `parse(to_text(r)) == r`.

use crate::errors::{data_err, Result};
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Uint(u64),
    Float(f64),
    Word(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Uint(v) => write!(f, "{v}"),
            // Debug formatting keeps a decimal point or exponent, so the
            // token parses back as a float, in shortest round-trip form.
            Value::Float(v) => write!(f, "{v:?}"),
            Value::Word(s) => f.write_str(s),
        }
    }
}

fn parse_value(token: &str) -> Value {
    if let Ok(u) = token.parse::<u64>() {
        return Value::Uint(u);
    }
    if let Ok(v) = token.parse::<f64>() {
        return Value::Float(v);
    }
    Value::Word(token.to_string())
}

fn valid_word(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || "_-./:+".contains(c))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub kind: String,
    pub fields: Vec<(String, Value)>,
}

impl Record {
    pub fn new(kind: impl Into<String>) -> Self {
        let kind = kind.into();
        debug_assert!(valid_word(&kind));
        Record {
            kind,
            fields: Vec::new(),
        }
    }

    pub fn u(mut self, key: &str, v: u64) -> Self {
        self.fields.push((key.to_string(), Value::Uint(v)));
        self
    }

    pub fn f(mut self, key: &str, v: f64) -> Self {
        self.fields.push((key.to_string(), Value::Float(v)));
        self
    }

    pub fn w(mut self, key: &str, v: impl Into<String>) -> Self {
        let v = v.into();
        debug_assert!(valid_word(&v), "unprintable metric token {v:?}");
        self.fields.push((key.to_string(), Value::Word(v)));
        self
    }

    /// Float field, or missing/NA when `v` is undefined.
    pub fn f_opt(self, key: &str, v: Option<f64>) -> Self {
        match v {
            Some(v) => self.f(key, v),
            None => self.w(key, "NA"),
        }
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    /// Numeric field as f64 (integers widen).
    pub fn num(&self, key: &str) -> Option<f64> {
        match self.get(key)? {
            Value::Uint(u) => Some(*u as f64),
            Value::Float(v) => Some(*v),
            Value::Word(_) => None,
        }
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.kind)?;
        for (k, v) in &self.fields {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub records: Vec<Record>,
}

impl MetricsReport {
    pub fn push(&mut self, record: Record) {
        self.records.push(record);
    }

    /// Append and echo to stdout.
    pub fn emit(&mut self, record: Record) {
        println!("{record}");
        self.push(record);
    }

    pub fn of_kind(&self, kind: &str) -> Vec<&Record> {
        self.records.iter().filter(|r| r.kind == kind).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let kind = tokens.next().expect("non-empty line");
            let mut fields = Vec::new();
            for token in tokens {
                let (k, v) = token.split_once('=').ok_or_else(|| {
                    data_err(format!(
                        "metrics line {}: token {token:?} is not key=value",
                        lineno + 1
                    ))
                })?;
                fields.push((k.to_string(), parse_value(v)));
            }
            records.push(Record {
                kind: kind.to_string(),
                fields,
            });
        }
        Ok(MetricsReport { records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_lossless() {
        let mut m = MetricsReport::default();
        m.push(
            Record::new("top_n")
                .u("n", 3)
                .f("accuracy", 0.1 + 0.2)
                .f("whole", 1.0),
        );
        m.push(
            Record::new("adapt")
                .u("writer", 8)
                .f_opt("err_reduction", None)
                .f_opt("rate", Some(0.4478)),
        );
        m.push(Record::new("timing").f("mean_ms", 1e-9).f("big", 3.5e300));
        let text = m.to_text();
        let back = MetricsReport::from_text(&text).unwrap();
        assert_eq!(m, back);
        assert_eq!(back.to_text(), text);
        assert!(text.contains("accuracy=0.30000000000000004"));
        assert!(text.contains("whole=1.0"));
        assert!(text.contains("err_reduction=NA"));
    }

    #[test]
    fn accessors_distinguish_numbers_from_words() {
        let r = Record::new("adapt")
            .u("writer", 2)
            .f("pre", 0.5)
            .w("note", "NA");
        assert_eq!(r.num("writer"), Some(2.0));
        assert_eq!(r.num("pre"), Some(0.5));
        assert_eq!(r.num("note"), None);
        assert_eq!(r.get("missing"), None);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(MetricsReport::from_text("kind key-without-value").is_err());
        let ok = MetricsReport::from_text("# comment\n\nkind a=1\n").unwrap();
        assert_eq!(ok.records.len(), 1);
    }
}
