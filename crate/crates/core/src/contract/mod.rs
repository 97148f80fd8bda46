//! Contract engine.
//!
//! A contract definition has five parts: a version string, optional type
//! definitions, a storage schema, a one-shot `init`, and named entry points
//! that map `(caller, params, storage)` to `(operations, storage)`.
//! Definitions are registered by name in a [`ContractRegistry`] and deployed
//! at an address by the [`ContractEngine`], which records every successful
//! deployment and call as a `ContractCall` transaction.

mod storage;
pub mod velocity;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::codec::Encoder;
use crate::ledger::{
    ContractCallPayload, Digest, KeyHash, Ledger, LedgerError, Payload, Receipt, SharedLedger,
    DEPLOY_ENTRY,
};

pub use storage::{Args, FieldType, Record, Storage, Value};
pub use velocity::VelocityContract;

/// Command a contract emits towards the robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operation {
    /// Seconds per movement.
    SetVelocity(u32),
    StopAtHome,
}

impl Operation {
    /// Seconds per movement this operation implies; 0 for a stop.
    pub fn velocity(self) -> u32 {
        match self {
            Operation::SetVelocity(v) => v,
            Operation::StopAtHome => 0,
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operation::SetVelocity(v) => write!(f, "SetVelocity {v}"),
            Operation::StopAtHome => f.write_str("StopAtHome"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContractError {
    #[error("unknown entry point {0:?}")]
    UnknownEntry(String),
    #[error("{caller} is not authorized to call {entry}")]
    Unauthorized { entry: String, caller: KeyHash },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("contract fault: {0}")]
    Fault(String),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("no contract named {0:?} is registered")]
    UnknownContract(String),
    #[error("address {0:?} is already occupied")]
    AddressOccupied(String),
    #[error("no contract deployed at {0:?}")]
    UnknownAddress(String),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error("storage returned by {entry} does not match the declared schema")]
    SchemaViolation { entry: String },
    #[error("ledger rejected the call record: {0}")]
    Ledger(#[from] LedgerError),
}

/// A contract definition. Implementations must be pure: the same inputs
/// always produce the same operations and storage.
pub trait ContractDef: Send + Sync {
    fn name(&self) -> &str;
    fn version(&self) -> &str;
    /// Optional named data structures, `(name, definition)`.
    fn type_defs(&self) -> &[(&'static str, &'static str)] {
        &[]
    }
    fn storage_schema(&self) -> &[(&'static str, FieldType)];
    fn entry_points(&self) -> &[&'static str];
    fn init(&self, args: &Args) -> Result<Storage, ContractError>;
    fn call(
        &self,
        entry: &str,
        caller: &KeyHash,
        params: &Args,
        storage: &Storage,
    ) -> Result<(Vec<Operation>, Storage), ContractError>;
}

/// Digest of a definition's declared shape: name, version, types, schema
/// and entry-point names.
pub fn code_digest(def: &dyn ContractDef) -> Digest {
    let mut enc = Encoder::new();
    enc.str(def.name()).str(def.version());
    enc.u32(def.type_defs().len() as u32);
    for (n, d) in def.type_defs() {
        enc.str(n).str(d);
    }
    enc.u32(def.storage_schema().len() as u32);
    for (n, t) in def.storage_schema() {
        enc.str(n).str(&format!("{t:?}"));
    }
    enc.u32(def.entry_points().len() as u32);
    for e in def.entry_points() {
        enc.str(e);
    }
    Digest::of(enc.as_slice())
}

/// Contract definitions available for deployment, looked up by name.
#[derive(Clone, Default)]
pub struct ContractRegistry {
    defs: BTreeMap<String, Arc<dyn ContractDef>>,
}

impl fmt::Debug for ContractRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.defs.keys()).finish()
    }
}

impl ContractRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(VelocityContract));
        r
    }

    /// Registers `def` under its own name, replacing any earlier entry.
    pub fn register(&mut self, def: Arc<dyn ContractDef>) {
        self.defs.insert(def.name().to_owned(), def);
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn ContractDef>> {
        self.defs.get(name).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.defs.keys().map(String::as_str)
    }
}

struct Instance {
    def: Arc<dyn ContractDef>,
    code: Digest,
    storage: Storage,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallReceipt {
    pub ledger: Receipt,
    pub storage_digest: Digest,
}

#[derive(Default)]
pub struct ContractEngine {
    registry: ContractRegistry,
    instances: BTreeMap<String, Instance>,
}

impl fmt::Debug for ContractEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContractEngine")
            .field("registry", &self.registry)
            .field("addresses", &self.instances.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl ContractEngine {
    pub fn new(registry: ContractRegistry) -> Self {
        Self {
            registry,
            instances: BTreeMap::new(),
        }
    }

    pub fn registry(&self) -> &ContractRegistry {
        &self.registry
    }

    /// Deploys the registered contract `name` at `address`. Runs `init` once
    /// and records the deployment on the ledger.
    pub fn deploy(
        &mut self,
        ledger: &mut Ledger,
        name: &str,
        address: &str,
        deployer: &KeyHash,
        init_args: &Args,
    ) -> Result<CallReceipt, EngineError> {
        let def = self
            .registry
            .get(name)
            .ok_or_else(|| EngineError::UnknownContract(name.to_owned()))?;
        if self.instances.contains_key(address) {
            return Err(EngineError::AddressOccupied(address.to_owned()));
        }
        let storage = def.init(init_args)?;
        if !storage.conforms_to(def.storage_schema()) {
            return Err(EngineError::SchemaViolation {
                entry: DEPLOY_ENTRY.into(),
            });
        }
        let storage_bytes = storage.to_bytes();
        let receipt = ledger.submit(
            deployer,
            format!("deploy {name} v{} at {address}", def.version()),
            Payload::ContractCall(ContractCallPayload {
                address: address.to_owned(),
                entry: DEPLOY_ENTRY.into(),
                params: init_args.to_bytes(),
                storage: storage_bytes.clone(),
            }),
        )?;
        let code = code_digest(def.as_ref());
        self.instances
            .insert(address.to_owned(), Instance { def, code, storage });
        Ok(CallReceipt {
            ledger: receipt,
            storage_digest: Digest::of(&storage_bytes),
        })
    }

    /// Invokes an entry point. On any error the stored state is untouched
    /// and nothing reaches the ledger.
    pub fn call_entry(
        &mut self,
        ledger: &mut Ledger,
        address: &str,
        entry: &str,
        caller: &KeyHash,
        params: &Args,
        description: &str,
    ) -> Result<(Vec<Operation>, CallReceipt), EngineError> {
        let inst = self
            .instances
            .get_mut(address)
            .ok_or_else(|| EngineError::UnknownAddress(address.to_owned()))?;
        if !inst.def.entry_points().contains(&entry) {
            return Err(ContractError::UnknownEntry(entry.to_owned()).into());
        }
        let (ops, next) = inst.def.call(entry, caller, params, &inst.storage)?;
        if !next.conforms_to(inst.def.storage_schema()) {
            return Err(EngineError::SchemaViolation {
                entry: entry.to_owned(),
            });
        }
        let storage_bytes = next.to_bytes();
        let receipt = ledger.submit(
            caller,
            description,
            Payload::ContractCall(ContractCallPayload {
                address: address.to_owned(),
                entry: entry.to_owned(),
                params: params.to_bytes(),
                storage: storage_bytes.clone(),
            }),
        )?;
        inst.storage = next;
        Ok((
            ops,
            CallReceipt {
                ledger: receipt,
                storage_digest: Digest::of(&storage_bytes),
            },
        ))
    }

    pub fn storage(&self, address: &str) -> Option<&Storage> {
        self.instances.get(address).map(|i| &i.storage)
    }

    pub fn code_digest(&self, address: &str) -> Option<Digest> {
        self.instances.get(address).map(|i| i.code)
    }

    pub fn addresses(&self) -> impl Iterator<Item = &str> {
        self.instances.keys().map(String::as_str)
    }
}

/// Serializing front door for multi-threaded callers: one contract call at a
/// time, each committed to the shared ledger under its write lock.
#[derive(Debug, Clone)]
pub struct SharedEngine {
    engine: Arc<Mutex<ContractEngine>>,
    ledger: SharedLedger,
}

impl SharedEngine {
    pub fn new(engine: ContractEngine, ledger: SharedLedger) -> Self {
        Self {
            engine: Arc::new(Mutex::new(engine)),
            ledger,
        }
    }

    pub fn call_entry(
        &self,
        address: &str,
        entry: &str,
        caller: &KeyHash,
        params: &Args,
        description: &str,
    ) -> Result<(Vec<Operation>, CallReceipt), EngineError> {
        let mut engine = self.engine.lock().unwrap();
        let mut ledger = self.ledger.write();
        engine.call_entry(&mut ledger, address, entry, caller, params, description)
    }

    pub fn storage(&self, address: &str) -> Option<Storage> {
        self.engine.lock().unwrap().storage(address).cloned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Ledger, ContractEngine) {
        let ledger = Ledger::new(vec!["v0".into()]).unwrap();
        let engine = ContractEngine::new(ContractRegistry::with_builtins());
        (ledger, engine)
    }

    #[test]
    fn registry_lists_builtin_velocity() {
        let r = ContractRegistry::with_builtins();
        assert_eq!(r.names().collect::<Vec<_>>(), vec!["velocity"]);
        assert!(r.get("nope").is_none());
    }

    #[test]
    fn deploy_unknown_name_rejected() {
        let (mut l, mut e) = setup();
        let args = VelocityContract::init_args(&"o".into(), &"c".into());
        assert!(matches!(
            e.deploy(&mut l, "nope", "addr", &"d".into(), &args),
            Err(EngineError::UnknownContract(_))
        ));
    }

    #[test]
    fn code_digest_is_stable_per_definition() {
        assert_eq!(
            code_digest(&VelocityContract),
            code_digest(&VelocityContract)
        );
    }

    #[test]
    fn call_on_unknown_address() {
        let (mut l, mut e) = setup();
        let r = e.call_entry(&mut l, "x", "report_count", &"o".into(), &Args::new(), "");
        assert!(matches!(r, Err(EngineError::UnknownAddress(_))));
    }
}
