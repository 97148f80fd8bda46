use crate::codec::{DecodeError, Decoder, Encoder};

use super::tx::{Digest, KeyHash, Transaction};

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    pub timestamp_ms: u64,
    pub transactions: Vec<Transaction>,
    pub validator: KeyHash,
    pub block_hash: Digest,
}

impl Block {
    /// Builds a block and fills in its hash.
    pub fn seal(
        height: u64,
        prev_hash: Digest,
        timestamp_ms: u64,
        transactions: Vec<Transaction>,
        validator: KeyHash,
    ) -> Self {
        let mut block = Self {
            height,
            prev_hash,
            timestamp_ms,
            transactions,
            validator,
            block_hash: Digest::ZERO,
        };
        block.block_hash = block.compute_hash();
        block
    }

    fn encode_header(&self, enc: &mut Encoder) {
        enc.u64(self.height)
            .fixed(&self.prev_hash.0)
            .u64(self.timestamp_ms)
            .u32(self.transactions.len() as u32);
        for tx in &self.transactions {
            let mut inner = Encoder::new();
            tx.encode_into(&mut inner);
            enc.bytes(inner.as_slice());
        }
        enc.str(self.validator.as_str());
    }

    /// Digest over every field preceding `block_hash` in canonical order.
    pub fn compute_hash(&self) -> Digest {
        let mut enc = Encoder::new();
        self.encode_header(&mut enc);
        Digest::of(enc.as_slice())
    }

    pub fn is_self_consistent(&self) -> bool {
        self.compute_hash() == self.block_hash
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode_header(&mut enc);
        enc.fixed(&self.block_hash.0);
        enc.finish()
    }

    /// Strict decode of a whole block occupying `bytes`. `base` is the
    /// offset of `bytes` inside its containing file.
    pub fn decode(bytes: &[u8], base: usize) -> Result<Self, DecodeError> {
        let mut dec = Decoder::with_base(bytes, base);
        let height = dec.u64()?;
        let prev_hash = Digest(dec.fixed()?);
        let timestamp_ms = dec.u64()?;
        let count = dec.u32()? as usize;
        let mut transactions = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let at = dec.offset() + 4;
            let raw = dec.bytes()?;
            let mut tx_dec = Decoder::with_base(raw, at);
            transactions.push(Transaction::decode_from(&mut tx_dec)?);
            tx_dec.finish()?;
        }
        let validator = KeyHash::new(dec.string()?);
        let block_hash = Digest(dec.fixed()?);
        dec.finish()?;
        Ok(Self {
            height,
            prev_hash,
            timestamp_ms,
            transactions,
            validator,
            block_hash,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::tx::{Payload, RobotEventPayload};

    fn sample_block() -> Block {
        let tx = Transaction::new(
            "robot".into(),
            "pick",
            Payload::RobotEvent(RobotEventPayload {
                timestamp_ms: 1000,
                position: "pick".into(),
                velocity: 2,
                effort: 0.5,
            }),
            0,
        );
        Block::seal(0, Digest::ZERO, 1000, vec![tx], "v0".into())
    }

    #[test]
    fn hash_matches_contents() {
        let b = sample_block();
        assert!(b.is_self_consistent());
        let mut tampered = b.clone();
        tampered.timestamp_ms += 1;
        assert!(!tampered.is_self_consistent());
    }

    #[test]
    fn decode_inverts_encode() {
        let b = sample_block();
        let bytes = b.to_bytes();
        assert_eq!(Block::decode(&bytes, 0).unwrap(), b);
    }

    #[test]
    fn decode_rejects_trailing_bytes() {
        let mut bytes = sample_block().to_bytes();
        bytes.push(0);
        assert!(Block::decode(&bytes, 0).is_err());
    }
}
