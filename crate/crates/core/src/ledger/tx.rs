use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::codec::{DecodeError, Decoder, Encoder};

/// 256-bit SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn of(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let raw = hex::decode(s).ok()?;
        Some(Digest(raw.try_into().ok()?))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Opaque identity label of a ledger participant.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KeyHash(String);

impl KeyHash {
    pub fn new(s: impl Into<String>) -> Self {
        KeyHash(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for KeyHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for KeyHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for KeyHash {
    fn from(s: &str) -> Self {
        KeyHash(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TxKind {
    RobotEvent,
    ImageAnchor,
    ContractCall,
}

impl TxKind {
    fn tag(self) -> u8 {
        match self {
            TxKind::RobotEvent => 0,
            TxKind::ImageAnchor => 1,
            TxKind::ContractCall => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => TxKind::RobotEvent,
            1 => TxKind::ImageAnchor,
            2 => TxKind::ContractCall,
            _ => return None,
        })
    }
}

/// Pose label used by robot events for the stopped state.
pub const HOME_POSITION: &str = "home";

#[derive(Debug, Clone, PartialEq)]
pub struct RobotEventPayload {
    pub timestamp_ms: u64,
    pub position: String,
    /// Seconds per movement, 0 when stopped at home.
    pub velocity: u32,
    pub effort: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageAnchorPayload {
    pub image_hash: Digest,
    pub image_id: String,
}

/// A contract deployment or entry-point invocation. `storage` holds the
/// canonical bytes of the storage after the call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractCallPayload {
    pub address: String,
    pub entry: String,
    pub params: Vec<u8>,
    pub storage: Vec<u8>,
}

/// Name of the pseudo entry point recorded for deployments.
pub const DEPLOY_ENTRY: &str = "%init";

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    RobotEvent(RobotEventPayload),
    ImageAnchor(ImageAnchorPayload),
    ContractCall(ContractCallPayload),
}

impl Payload {
    pub fn kind(&self) -> TxKind {
        match self {
            Payload::RobotEvent(_) => TxKind::RobotEvent,
            Payload::ImageAnchor(_) => TxKind::ImageAnchor,
            Payload::ContractCall(_) => TxKind::ContractCall,
        }
    }

    /// Checks the kind-specific well-formedness rules. Returns the reason on
    /// failure.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Payload::RobotEvent(ev) => {
                if !(ev.effort.is_finite() && ev.effort >= 0.0) {
                    return Err(format!(
                        "effort must be finite and non-negative, got {}",
                        ev.effort
                    ));
                }
                if ev.position.is_empty() {
                    return Err("empty position label".into());
                }
                let home = ev.position == HOME_POSITION;
                if home != (ev.velocity == 0) {
                    return Err(format!(
                        "velocity {} inconsistent with position {:?} (0 iff home)",
                        ev.velocity, ev.position
                    ));
                }
                Ok(())
            }
            Payload::ImageAnchor(a) => {
                if a.image_id.is_empty() {
                    return Err("empty image_id".into());
                }
                if a.image_id.contains(['/', '\\']) || a.image_id.starts_with('.') {
                    return Err(format!(
                        "image_id {:?} is not a plain file name",
                        a.image_id
                    ));
                }
                Ok(())
            }
            Payload::ContractCall(c) => {
                if c.address.is_empty() {
                    return Err("empty contract address".into());
                }
                if c.entry.is_empty() {
                    return Err("empty entry name".into());
                }
                Ok(())
            }
        }
    }

    fn encode(&self, enc: &mut Encoder) {
        match self {
            Payload::RobotEvent(ev) => {
                enc.u64(ev.timestamp_ms)
                    .str(&ev.position)
                    .u32(ev.velocity)
                    .f64(ev.effort);
            }
            Payload::ImageAnchor(a) => {
                enc.fixed(&a.image_hash.0).str(&a.image_id);
            }
            Payload::ContractCall(c) => {
                enc.str(&c.address)
                    .str(&c.entry)
                    .bytes(&c.params)
                    .bytes(&c.storage);
            }
        }
    }

    fn decode(kind: TxKind, dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(match kind {
            TxKind::RobotEvent => Payload::RobotEvent(RobotEventPayload {
                timestamp_ms: dec.u64()?,
                position: dec.string()?,
                velocity: dec.u32()?,
                effort: dec.f64()?,
            }),
            TxKind::ImageAnchor => Payload::ImageAnchor(ImageAnchorPayload {
                image_hash: Digest(dec.fixed()?),
                image_id: dec.string()?,
            }),
            TxKind::ContractCall => Payload::ContractCall(ContractCallPayload {
                address: dec.string()?,
                entry: dec.string()?,
                params: dec.bytes()?.to_vec(),
                storage: dec.bytes()?.to_vec(),
            }),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transaction {
    pub sender: KeyHash,
    /// Free-text documentation attached to every transaction.
    pub description: String,
    pub payload: Payload,
    pub nonce: u64,
}

impl Transaction {
    pub fn new(
        sender: KeyHash,
        description: impl Into<String>,
        payload: Payload,
        nonce: u64,
    ) -> Self {
        Self {
            sender,
            description: description.into(),
            payload,
            nonce,
        }
    }

    pub fn kind(&self) -> TxKind {
        self.payload.kind()
    }

    /// Canonical form: kind tag, sender, description, length-prefixed
    /// payload, nonce.
    pub fn encode_into(&self, enc: &mut Encoder) {
        let mut body = Encoder::new();
        self.payload.encode(&mut body);
        enc.u8(self.kind().tag())
            .str(self.sender.as_str())
            .str(&self.description)
            .bytes(body.as_slice())
            .u64(self.nonce);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode_into(&mut enc);
        enc.finish()
    }

    pub fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let tag_at = dec.offset();
        let tag = dec.u8()?;
        let kind = TxKind::from_tag(tag).ok_or_else(|| DecodeError {
            offset: tag_at,
            reason: format!("unknown transaction kind {tag}"),
        })?;
        let sender = KeyHash(dec.string()?);
        let description = dec.string()?;
        let body_at = dec.offset() + 4;
        let body = dec.bytes()?;
        let mut body_dec = Decoder::with_base(body, body_at);
        let payload = Payload::decode(kind, &mut body_dec)?;
        body_dec.finish()?;
        let nonce = dec.u64()?;
        Ok(Self {
            sender,
            description,
            payload,
            nonce,
        })
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&self.to_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(velocity: u32, position: &str) -> Payload {
        Payload::RobotEvent(RobotEventPayload {
            timestamp_ms: 0,
            position: position.into(),
            velocity,
            effort: 1.0,
        })
    }

    #[test]
    fn velocity_zero_only_at_home() {
        assert!(event(0, HOME_POSITION).validate().is_ok());
        assert!(event(2, "pick").validate().is_ok());
        assert!(event(0, "pick").validate().is_err());
        assert!(event(3, HOME_POSITION).validate().is_err());
    }

    #[test]
    fn negative_effort_is_malformed() {
        let p = Payload::RobotEvent(RobotEventPayload {
            timestamp_ms: 0,
            position: "pick".into(),
            velocity: 2,
            effort: -0.5,
        });
        assert!(p.validate().unwrap_err().contains("effort"));
    }

    #[test]
    fn image_id_must_be_plain_name() {
        let p = Payload::ImageAnchor(ImageAnchorPayload {
            image_hash: Digest::ZERO,
            image_id: "../etc/passwd".into(),
        });
        assert!(p.validate().is_err());
    }

    #[test]
    fn transaction_roundtrip() {
        let tx = Transaction::new(
            "oracle".into(),
            "",
            Payload::ContractCall(ContractCallPayload {
                address: "velocity".into(),
                entry: "report_count".into(),
                params: vec![1, 2, 3],
                storage: vec![],
            }),
            7,
        );
        let bytes = tx.to_bytes();
        let mut dec = Decoder::new(&bytes);
        assert_eq!(Transaction::decode_from(&mut dec).unwrap(), tx);
        dec.finish().unwrap();
    }

    #[test]
    fn digest_hex_roundtrip() {
        let d = Digest::of(b"abc");
        assert_eq!(
            d.to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(Digest::from_hex(&d.to_hex()), Some(d));
    }
}
