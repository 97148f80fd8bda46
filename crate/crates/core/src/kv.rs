//! Flat `key = value` configuration text. `#` starts a comment; blank lines
//! are ignored. Keys must be unique.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KvError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("key {key}: cannot parse {value:?}: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("unknown key(s): {0}")]
    Unknown(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default)]
pub struct KvFile {
    entries: BTreeMap<String, String>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| KvError::Syntax {
                line: i + 1,
                reason: format!("expected key=value, got {line:?}"),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(KvError::Syntax {
                    line: i + 1,
                    reason: "empty key".into(),
                });
            }
            if entries.insert(k.to_owned(), v.trim().to_owned()).is_some() {
                return Err(KvError::Syntax {
                    line: i + 1,
                    reason: format!("duplicate key {k}"),
                });
            }
        }
        Ok(Self { entries })
    }

    /// Removes and parses `key`, if present.
    pub fn take<T>(&mut self, key: &str) -> Result<Option<T>, KvError>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e: T::Err| KvError::BadValue {
                key: key.to_owned(),
                reason: e.to_string(),
                value: v,
            }),
        }
    }

    /// Overwrites `*slot` when `key` is present.
    pub fn take_into<T>(&mut self, key: &str, slot: &mut T) -> Result<(), KvError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn take_raw(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    /// Fails if any key was never consumed.
    pub fn finish(self) -> Result<(), KvError> {
        if self.entries.is_empty() {
            Ok(())
        } else {
            Err(KvError::Unknown(
                self.entries.keys().cloned().collect::<Vec<_>>().join(", "),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let mut kv = KvFile::parse("# header\n a = 1 \n\nb=x # note\n").unwrap();
        assert_eq!(kv.take::<u32>("a").unwrap(), Some(1));
        assert_eq!(kv.take_raw("b").as_deref(), Some("x"));
        kv.finish().unwrap();
    }

    #[test]
    fn reports_errors() {
        assert!(matches!(
            KvFile::parse("novalue"),
            Err(KvError::Syntax { line: 1, .. })
        ));
        assert!(KvFile::parse("a=1\na=2").is_err());
        let mut kv = KvFile::parse("a=zz\nb=1").unwrap();
        assert!(matches!(kv.take::<u32>("a"), Err(KvError::BadValue { .. })));
        assert!(matches!(kv.finish(), Err(KvError::Unknown(k)) if k == "b"));
    }
}
