//! Typed contract values. Storage and call arguments share one canonical
//! encoding (the same codec the ledger uses), so storage snapshots can be
//! embedded in `ContractCall` transactions and decoded back without knowing
//! the contract.

use std::fmt;

use crate::codec::{DecodeError, Decoder, Encoder};
use crate::ledger::KeyHash;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldType {
    Nat,
    Bool,
    KeyHash,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Nat(u64),
    Bool(bool),
    KeyHash(KeyHash),
    Text(String),
}

impl Value {
    pub fn field_type(&self) -> FieldType {
        match self {
            Value::Nat(_) => FieldType::Nat,
            Value::Bool(_) => FieldType::Bool,
            Value::KeyHash(_) => FieldType::KeyHash,
            Value::Text(_) => FieldType::Text,
        }
    }

    fn encode(&self, enc: &mut Encoder) {
        match self {
            Value::Nat(n) => enc.u8(0).u64(*n),
            Value::Bool(b) => enc.u8(1).bool(*b),
            Value::KeyHash(k) => enc.u8(2).str(k.as_str()),
            Value::Text(s) => enc.u8(3).str(s),
        };
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let at = dec.offset();
        Ok(match dec.u8()? {
            0 => Value::Nat(dec.u64()?),
            1 => Value::Bool(dec.bool()?),
            2 => Value::KeyHash(KeyHash::new(dec.string()?)),
            3 => Value::Text(dec.string()?),
            t => {
                return Err(DecodeError {
                    offset: at,
                    reason: format!("unknown value tag {t}"),
                })
            }
        })
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Nat(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::KeyHash(k) => write!(f, "{k}"),
            Value::Text(s) => write!(f, "{s:?}"),
        }
    }
}

/// Ordered `(name, value)` record. Used both for storage and for call
/// arguments.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Record {
    fields: Vec<(String, Value)>,
}

pub type Storage = Record;
pub type Args = Record;

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: Value) -> Self {
        self.set(name, value);
        self
    }

    pub fn set(&mut self, name: &str, value: Value) {
        match self.fields.iter_mut().find(|(n, _)| n == name) {
            Some((_, v)) => *v = value,
            None => self.fields.push((name.to_owned(), value)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn fields(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.fields.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn nat(&self, name: &str) -> Result<u64, String> {
        match self.get(name) {
            Some(Value::Nat(n)) => Ok(*n),
            Some(v) => Err(format!("{name}: expected nat, got {:?}", v.field_type())),
            None => Err(format!("missing field {name}")),
        }
    }

    pub fn flag(&self, name: &str) -> Result<bool, String> {
        match self.get(name) {
            Some(Value::Bool(b)) => Ok(*b),
            Some(v) => Err(format!("{name}: expected bool, got {:?}", v.field_type())),
            None => Err(format!("missing field {name}")),
        }
    }

    pub fn key_hash(&self, name: &str) -> Result<KeyHash, String> {
        match self.get(name) {
            Some(Value::KeyHash(k)) => Ok(k.clone()),
            Some(v) => Err(format!(
                "{name}: expected key_hash, got {:?}",
                v.field_type()
            )),
            None => Err(format!("missing field {name}")),
        }
    }

    /// True iff the record has exactly the schema's fields, in order, with
    /// matching types.
    pub fn conforms_to(&self, schema: &[(&str, FieldType)]) -> bool {
        self.fields.len() == schema.len()
            && self
                .fields
                .iter()
                .zip(schema)
                .all(|((n, v), (sn, st))| n == sn && v.field_type() == *st)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.u32(self.fields.len() as u32);
        for (name, value) in &self.fields {
            enc.str(name);
            value.encode(&mut enc);
        }
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let n = dec.u32()? as usize;
        let mut fields = Vec::with_capacity(n.min(256));
        for _ in 0..n {
            let name = dec.string()?;
            fields.push((name, Value::decode(&mut dec)?));
        }
        dec.finish()?;
        Ok(Self { fields })
    }

    /// Human-readable `key=value` lines.
    pub fn to_text(&self) -> String {
        self.fields
            .iter()
            .map(|(n, v)| format!("{n}={v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_replaces_in_place() {
        let mut r = Record::new()
            .with("a", Value::Nat(1))
            .with("b", Value::Bool(true));
        r.set("a", Value::Nat(5));
        assert_eq!(r.nat("a"), Ok(5));
        assert_eq!(r.fields().next().unwrap().0, "a");
    }

    #[test]
    fn typed_getters_report_mismatch() {
        let r = Record::new().with("a", Value::Bool(true));
        assert!(r.nat("a").unwrap_err().contains("expected nat"));
        assert!(r.nat("zz").unwrap_err().contains("missing"));
    }

    #[test]
    fn bytes_roundtrip_and_text() {
        let r = Record::new()
            .with("oracle", Value::KeyHash("tz1oracle".into()))
            .with("n", Value::Nat(3))
            .with("on", Value::Bool(false))
            .with("note", Value::Text("hi".into()));
        assert_eq!(Record::from_bytes(&r.to_bytes()).unwrap(), r);
        assert_eq!(
            r.to_text(),
            "oracle=tz1oracle\nn=3\non=false\nnote=\"hi\"\n"
        );
    }
}
