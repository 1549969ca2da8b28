//! Flat `key = value` text used for experiment configs and run manifests.
//!
//! Blank lines and lines starting with `#` are ignored. Later assignments of a
//! key replace earlier ones, which is how command-line overrides are layered
//! over a file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = KvConfig::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::input(format!("line {}: expected `key = value`", n + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::input(format!("line {}: empty key", n + 1)));
            }
            cfg.set(k, v.trim());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
    }

    /// Parses `key=value` as given on a command line.
    pub fn parse_override(arg: &str) -> Result<(String, String)> {
        let (k, v) = arg
            .split_once('=')
            .ok_or_else(|| Error::input(format!("override `{arg}` is not `key=value`")))?;
        Ok((k.trim().to_string(), v.trim().to_string()))
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    /// Applies every entry of `other` on top of `self`.
    pub fn merge(&mut self, other: &KvConfig) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::input(format!("{key} = {v}: {e}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list; an absent key yields `None`.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        let Some(v) = self.entries.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| Error::input(format!("{key}: `{s}`: {e}"))))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }
}

impl fmt::Display for KvConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let c = KvConfig::parse("# c\n\n a = 1 \nb=x y\n").unwrap();
        assert_eq!(c.get_str("a"), Some("1"));
        assert_eq!(c.get_str("b"), Some("x y"));
        assert_eq!(c.get::<u32>("a").unwrap(), Some(1));
    }

    #[test]
    fn later_values_win() {
        let mut c = KvConfig::parse("a = 1\na = 2").unwrap();
        assert_eq!(c.get_str("a"), Some("2"));
        let (k, v) = KvConfig::parse_override("a=3").unwrap();
        let mut o = KvConfig::new();
        o.set(k, v);
        c.merge(&o);
        assert_eq!(c.get_str("a"), Some("3"));
    }

    #[test]
    fn display_round_trips() {
        let c = KvConfig::parse("z = 1\na = p,q\n").unwrap();
        assert_eq!(KvConfig::parse(&c.to_string()).unwrap(), c);
        assert_eq!(c.get_list::<String>("a").unwrap().unwrap(), vec!["p", "q"]);
    }

    #[test]
    fn errors_name_the_line_or_key() {
        assert!(KvConfig::parse("a = 1\nnope").unwrap_err().to_string().contains("line 2"));
        let c = KvConfig::parse("n = x").unwrap();
        assert!(c.get::<u32>("n").unwrap_err().to_string().contains("n = x"));
    }
}
