//! Append-only, hash-chained consortium ledger.
//!
//! Transactions are validated on intake and held in a pending pool until the
//! validator whose turn it is seals them into a block. Validators take turns
//! in a fixed order: block `h` must be sealed by `validators[h % n]`.

mod blob;
mod block;
mod store;
mod tx;

use std::collections::HashMap;
use std::io;
use std::path::Path;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use thiserror::Error;

pub use blob::{AnchorError, BlobError, BlobStore};
pub use block::Block;
pub use store::{
    decode_chain, encode_chain, frame, read_chain_file, verify_chain_bytes, ChainFile,
};
pub use tx::{
    ContractCallPayload, Digest, ImageAnchorPayload, KeyHash, Payload, RobotEventPayload,
    Transaction, TxKind, DEPLOY_ENTRY, HOME_POSITION,
};

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("stale nonce from {sender}: got {got}, expected {expected}")]
    StaleNonce {
        sender: KeyHash,
        got: u64,
        expected: u64,
    },
    #[error("nonce gap from {sender}: got {got}, expected {expected}")]
    NonceGap {
        sender: KeyHash,
        got: u64,
        expected: u64,
    },
    #[error("malformed {kind:?} payload: {reason}")]
    Malformed { kind: TxKind, reason: String },
    #[error("validator {got} is out of turn at height {height}; expected {expected}")]
    OutOfTurn {
        height: u64,
        got: KeyHash,
        expected: KeyHash,
    },
    #[error("block time {now_ms} ms precedes head time {head_ms} ms")]
    TimeRegression { now_ms: u64, head_ms: u64 },
    #[error("validator set must not be empty")]
    NoValidators,
    #[error("chain file i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Receipt {
    pub pool_position: usize,
    pub tx_digest: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainVerdict {
    Valid,
    Invalid {
        first_bad_height: u64,
        reason: String,
    },
}

impl ChainVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, ChainVerdict::Valid)
    }

    pub fn first_bad_height(&self) -> Option<u64> {
        match self {
            ChainVerdict::Valid => None,
            ChainVerdict::Invalid {
                first_bad_height, ..
            } => Some(*first_bad_height),
        }
    }
}

/// Checks heights, the `prev_hash` links and every block's own hash.
pub fn verify_chain(blocks: &[Block]) -> ChainVerdict {
    let mut prev = Digest::ZERO;
    for (i, block) in blocks.iter().enumerate() {
        let h = i as u64;
        let bad = |reason: String| ChainVerdict::Invalid {
            first_bad_height: h,
            reason,
        };
        if block.height != h {
            return bad(format!("block at index {h} claims height {}", block.height));
        }
        if block.prev_hash != prev {
            return bad("prev_hash does not link to the preceding block".into());
        }
        if !block.is_self_consistent() {
            return bad("block_hash does not match contents".into());
        }
        prev = block.block_hash;
    }
    ChainVerdict::Valid
}

#[derive(Debug, Default, Clone)]
pub struct EventFilter {
    pub sender: Option<KeyHash>,
    pub kind: Option<TxKind>,
    /// Inclusive block-timestamp range in milliseconds.
    pub time_range_ms: Option<(u64, u64)>,
}

impl EventFilter {
    fn matches(&self, block: &Block, tx: &Transaction) -> bool {
        self.sender.as_ref().is_none_or(|s| *s == tx.sender)
            && self.kind.is_none_or(|k| k == tx.kind())
            && self
                .time_range_ms
                .is_none_or(|(lo, hi)| (lo..=hi).contains(&block.timestamp_ms))
    }
}

#[derive(Debug)]
pub struct Ledger {
    validators: Vec<KeyHash>,
    blocks: Vec<Block>,
    pending: Vec<Transaction>,
    next_nonce: HashMap<KeyHash, u64>,
    sink: Option<ChainFile>,
}

impl Ledger {
    pub fn new(validators: Vec<KeyHash>) -> Result<Self, LedgerError> {
        if validators.is_empty() {
            return Err(LedgerError::NoValidators);
        }
        Ok(Self {
            validators,
            blocks: Vec::new(),
            pending: Vec::new(),
            next_nonce: HashMap::new(),
            sink: None,
        })
    }

    /// Like [`Ledger::new`], additionally appending every sealed block to a
    /// chain file at `path`.
    pub fn with_chain_file(
        validators: Vec<KeyHash>,
        path: impl AsRef<Path>,
    ) -> Result<Self, LedgerError> {
        let mut ledger = Self::new(validators)?;
        ledger.sink = Some(ChainFile::create(path)?);
        Ok(ledger)
    }

    pub fn validators(&self) -> &[KeyHash] {
        &self.validators
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn pending(&self) -> &[Transaction] {
        &self.pending
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn head_hash(&self) -> Digest {
        self.blocks.last().map_or(Digest::ZERO, |b| b.block_hash)
    }

    /// The nonce the next transaction from `sender` must carry, counting
    /// transactions still in the pool.
    pub fn next_nonce(&self, sender: &KeyHash) -> u64 {
        self.next_nonce.get(sender).copied().unwrap_or(0)
    }

    pub fn submit_transaction(&mut self, tx: Transaction) -> Result<Receipt, LedgerError> {
        let expected = self.next_nonce(&tx.sender);
        if tx.nonce < expected {
            return Err(LedgerError::StaleNonce {
                sender: tx.sender,
                got: tx.nonce,
                expected,
            });
        }
        if tx.nonce > expected {
            return Err(LedgerError::NonceGap {
                sender: tx.sender,
                got: tx.nonce,
                expected,
            });
        }
        tx.payload
            .validate()
            .map_err(|reason| LedgerError::Malformed {
                kind: tx.kind(),
                reason,
            })?;
        self.next_nonce.insert(tx.sender.clone(), expected + 1);
        let receipt = Receipt {
            pool_position: self.pending.len(),
            tx_digest: tx.digest(),
        };
        self.pending.push(tx);
        Ok(receipt)
    }

    /// Convenience wrapper that stamps the sender's next nonce.
    pub fn submit(
        &mut self,
        sender: &KeyHash,
        description: impl Into<String>,
        payload: Payload,
    ) -> Result<Receipt, LedgerError> {
        let nonce = self.next_nonce(sender);
        self.submit_transaction(Transaction::new(
            sender.clone(),
            description,
            payload,
            nonce,
        ))
    }

    pub fn validator_for(&self, height: u64) -> &KeyHash {
        &self.validators[(height % self.validators.len() as u64) as usize]
    }

    /// Drains the pool into a new block. An empty pool still yields a block.
    pub fn seal_block(&mut self, validator: &KeyHash, now_ms: u64) -> Result<&Block, LedgerError> {
        let height = self.height();
        let expected = self.validator_for(height);
        if expected != validator {
            return Err(LedgerError::OutOfTurn {
                height,
                got: validator.clone(),
                expected: expected.clone(),
            });
        }
        if let Some(head) = self.blocks.last() {
            if now_ms < head.timestamp_ms {
                return Err(LedgerError::TimeRegression {
                    now_ms,
                    head_ms: head.timestamp_ms,
                });
            }
        }
        let block = Block::seal(
            height,
            self.head_hash(),
            now_ms,
            std::mem::take(&mut self.pending),
            validator.clone(),
        );
        if let Some(sink) = &mut self.sink {
            sink.append(&block)?;
        }
        self.blocks.push(block);
        Ok(self.blocks.last().unwrap())
    }

    /// Seals with whichever validator is next in the rotation.
    pub fn seal_next(&mut self, now_ms: u64) -> Result<&Block, LedgerError> {
        let v = self.validator_for(self.height()).clone();
        self.seal_block(&v, now_ms)
    }

    pub fn verify(&self) -> ChainVerdict {
        verify_chain(&self.blocks)
    }

    /// Sealed transactions matching `filter`, in chain order.
    pub fn query_events(&self, filter: &EventFilter) -> Vec<(u64, &Transaction)> {
        self.blocks
            .iter()
            .flat_map(|b| {
                b.transactions
                    .iter()
                    .filter(move |tx| filter.matches(b, tx))
                    .map(move |tx| (b.height, tx))
            })
            .collect()
    }
}

/// Thread-safe front door: one writer at a time through the intake, any
/// number of concurrent readers.
#[derive(Debug, Clone)]
pub struct SharedLedger {
    inner: Arc<RwLock<Ledger>>,
}

impl SharedLedger {
    pub fn new(ledger: Ledger) -> Self {
        Self {
            inner: Arc::new(RwLock::new(ledger)),
        }
    }

    pub fn submit(
        &self,
        sender: &KeyHash,
        description: impl Into<String>,
        payload: Payload,
    ) -> Result<Receipt, LedgerError> {
        self.inner
            .write()
            .unwrap()
            .submit(sender, description, payload)
    }

    pub fn submit_transaction(&self, tx: Transaction) -> Result<Receipt, LedgerError> {
        self.inner.write().unwrap().submit_transaction(tx)
    }

    pub fn seal_next(&self, now_ms: u64) -> Result<Block, LedgerError> {
        self.inner.write().unwrap().seal_next(now_ms).cloned()
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Ledger> {
        self.inner.read().unwrap()
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, Ledger> {
        self.inner.write().unwrap()
    }
}
