//! Flat `key = value` configuration text.
//!
//! One entry per line; `#` starts a comment; blank lines are ignored; keys
//! may contain dots (`cnn.epochs`). A key may appear only once.

use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Entries in file order. Values keep inner whitespace; comments after a
/// value are stripped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlatConfig {
    entries: Vec<Entry>,
    used: Vec<bool>,
}

impl FlatConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                detail: format!("expected `key = value`, found `{content}`"),
            })?;
            let key = key.trim();
            let valid = |c: char| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-');
            if key.is_empty() || !key.chars().all(valid) {
                return Err(Error::Parse { line, detail: format!("invalid key `{key}`") });
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(Error::Parse {
                    line,
                    detail: format!("key `{key}` already set on line {}", prev.line),
                });
            }
            entries.push(Entry { key: key.to_string(), value: value.trim().to_string(), line });
        }
        let used = vec![false; entries.len()];
        Ok(FlatConfig { entries, used })
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    fn position(&self, key: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.key == key)
    }

    /// Raw value of `key`, marking it consumed.
    pub fn take(&mut self, key: &str) -> Option<Entry> {
        let i = self.position(key)?;
        self.used[i] = true;
        Some(self.entries[i].clone())
    }

    /// Entries whose key starts with `prefix`, in file order, marking them consumed.
    pub fn take_prefixed(&mut self, prefix: &str) -> Vec<Entry> {
        let mut out = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.key.starts_with(prefix) {
                self.used[i] = true;
                out.push(e.clone());
            }
        }
        out
    }

    pub fn get<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.take(key).map(|e| parse_value(&e)).transpose()
    }

    pub fn require<T>(&mut self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(key)?.ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    pub fn get_list<T>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.take(key).map(|e| parse_list(&e)).transpose()
    }

    /// Fails on the first entry nobody asked for.
    pub fn finish(&self) -> Result<()> {
        match self.entries.iter().zip(&self.used).find(|(_, &u)| !u) {
            Some((e, _)) => Err(Error::Config(format!("unknown key `{}` on line {}", e.key, e.line))),
            None => Ok(()),
        }
    }
}

pub fn parse_value<T>(e: &Entry) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    e.value.parse().map_err(|err| Error::Parse {
        line: e.line,
        detail: format!("`{}` for `{}`: {err}", e.value, e.key),
    })
}

/// Comma-separated values; an empty value is an empty list.
pub fn parse_list<T>(e: &Entry) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: Display,
{
    if e.value.is_empty() {
        return Ok(Vec::new());
    }
    e.value
        .split(',')
        .map(|item| {
            item.trim().parse().map_err(|err| Error::Parse {
                line: e.line,
                detail: format!("`{}` in `{}`: {err}", item.trim(), e.key),
            })
        })
        .collect()
}

/// Renders pairs back into the text format.
pub fn render(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries_and_comments() {
        let mut c = FlatConfig::parse("# header\nseed = 42\n\nname = a b  # trailing\nlist = 1, 2,3\n").unwrap();
        assert_eq!(c.require::<u64>("seed").unwrap(), 42);
        assert_eq!(c.require::<String>("name").unwrap(), "a b");
        assert_eq!(c.get_list::<u32>("list").unwrap().unwrap(), vec![1, 2, 3]);
        assert_eq!(c.get::<u32>("absent").unwrap(), None);
        c.finish().unwrap();
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(FlatConfig::parse("a = 1\nnot a pair\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(FlatConfig::parse("a = 1\na = 2\n"), Err(Error::Parse { line: 2, .. })));
        assert!(FlatConfig::parse("bad key = 1\n").is_err());
        let mut c = FlatConfig::parse("seed = x\nextra = 1\n").unwrap();
        assert!(matches!(c.require::<u64>("seed"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(c.finish(), Err(Error::Config(_))));
        assert!(matches!(FlatConfig::parse("").unwrap().require::<u64>("seed"), Err(Error::Config(_))));
    }

    #[test]
    fn prefixed_entries_keep_order() {
        let mut c = FlatConfig::parse("category.b = 1\nx = 0\ncategory.a = 2\n").unwrap();
        let keys: Vec<String> = c.take_prefixed("category.").into_iter().map(|e| e.key).collect();
        assert_eq!(keys, vec!["category.b", "category.a"]);
        assert!(c.finish().is_err());
    }

    #[test]
    fn render_round_trips() {
        let pairs = vec![("a".to_string(), "1".to_string()), ("b.c".to_string(), "x, y".to_string())];
        let c = FlatConfig::parse(&render(&pairs)).unwrap();
        let back: Vec<(String, String)> = c.entries().iter().map(|e| (e.key.clone(), e.value.clone())).collect();
        assert_eq!(back, pairs);
    }
}
