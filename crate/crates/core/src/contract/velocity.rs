//! The velocity-control contract.
//!
//! The Oracle reports how many balls it sees in the pick zone, the robot
//! controller reports whether the arm is carrying one, and the contract turns
//! the total `x` into a velocity in seconds per movement:
//!
//! ```text
//! x = ball_count + (1 if transporting else 0)
//! v = floor((max_speed + mean_speed) / x)   clamped to [2, 6], x > 0
//! ```
//!
//! `x = 0` means there is nothing to pick and the robot is sent home.

use crate::ledger::KeyHash;

use super::storage::{Args, FieldType, Storage, Value};
use super::{ContractDef, ContractError, Operation};

pub const MAX_SPEED: u64 = 2;
pub const MEAN_SPEED: u64 = 4;
/// Fastest allowed pace, seconds per movement.
pub const FASTEST: u32 = 2;
/// Slowest allowed pace, seconds per movement.
pub const SLOWEST: u32 = 6;
/// Most balls the pick zone can hold.
pub const MAX_BALLS: u64 = 3;

pub const ENTRY_REPORT_COUNT: &str = "report_count";
pub const ENTRY_SET_TRANSPORTING: &str = "set_transporting";

const SCHEMA: &[(&str, FieldType)] = &[
    ("trusted_oracle", FieldType::KeyHash),
    ("controller", FieldType::KeyHash),
    ("ball_count", FieldType::Nat),
    ("transporting", FieldType::Bool),
    ("max_speed", FieldType::Nat),
    ("mean_speed", FieldType::Nat),
    ("current_velocity", FieldType::Nat),
];

const TYPES: &[(&str, &str)] = &[
    ("oracle", "key_hash"),
    ("operation", "SetVelocity of nat | StopAtHome"),
];

pub fn compute_x(ball_count: u64, transporting: bool) -> u64 {
    ball_count + u64::from(transporting)
}

/// Velocity law with the default constants.
pub fn compute_velocity(x: i64) -> Result<Operation, ContractError> {
    velocity_law(x, MAX_SPEED, MEAN_SPEED)
}

pub fn velocity_law(x: i64, max_speed: u64, mean_speed: u64) -> Result<Operation, ContractError> {
    if x < 0 {
        return Err(ContractError::Fault(format!("negative material count {x}")));
    }
    if x == 0 {
        return Ok(Operation::StopAtHome);
    }
    let raw = (max_speed + mean_speed) / x as u64;
    let v = raw.clamp(u64::from(FASTEST), u64::from(SLOWEST)) as u32;
    Ok(Operation::SetVelocity(v))
}

#[derive(Debug, Default, Clone, Copy)]
pub struct VelocityContract;

impl VelocityContract {
    pub fn init_args(oracle: &KeyHash, controller: &KeyHash) -> Args {
        Args::new()
            .with("oracle", Value::KeyHash(oracle.clone()))
            .with("controller", Value::KeyHash(controller.clone()))
    }

    fn recompute(storage: &mut Storage) -> Result<Vec<Operation>, ContractError> {
        let x = compute_x(
            storage.nat("ball_count").map_err(ContractError::Fault)?,
            storage.flag("transporting").map_err(ContractError::Fault)?,
        );
        let op = velocity_law(
            x as i64,
            storage.nat("max_speed").map_err(ContractError::Fault)?,
            storage.nat("mean_speed").map_err(ContractError::Fault)?,
        )?;
        storage.set("current_velocity", Value::Nat(u64::from(op.velocity())));
        Ok(vec![op])
    }

    fn require(
        storage: &Storage,
        field: &str,
        entry: &str,
        caller: &KeyHash,
    ) -> Result<(), ContractError> {
        let allowed = storage.key_hash(field).map_err(ContractError::Fault)?;
        if *caller != allowed {
            return Err(ContractError::Unauthorized {
                entry: entry.to_owned(),
                caller: caller.clone(),
            });
        }
        Ok(())
    }
}

impl ContractDef for VelocityContract {
    fn name(&self) -> &str {
        "velocity"
    }

    fn version(&self) -> &str {
        "0.5"
    }

    fn type_defs(&self) -> &[(&'static str, &'static str)] {
        TYPES
    }

    fn storage_schema(&self) -> &[(&'static str, FieldType)] {
        SCHEMA
    }

    fn entry_points(&self) -> &[&'static str] {
        &[ENTRY_REPORT_COUNT, ENTRY_SET_TRANSPORTING]
    }

    fn init(&self, args: &Args) -> Result<Storage, ContractError> {
        let oracle = args
            .key_hash("oracle")
            .map_err(ContractError::InvalidParams)?;
        let controller = args
            .key_hash("controller")
            .map_err(ContractError::InvalidParams)?;
        if args.len() != 2 {
            return Err(ContractError::InvalidParams(
                "expected exactly oracle and controller".into(),
            ));
        }
        Ok(Storage::new()
            .with("trusted_oracle", Value::KeyHash(oracle))
            .with("controller", Value::KeyHash(controller))
            .with("ball_count", Value::Nat(0))
            .with("transporting", Value::Bool(false))
            .with("max_speed", Value::Nat(MAX_SPEED))
            .with("mean_speed", Value::Nat(MEAN_SPEED))
            .with("current_velocity", Value::Nat(0)))
    }

    fn call(
        &self,
        entry: &str,
        caller: &KeyHash,
        params: &Args,
        storage: &Storage,
    ) -> Result<(Vec<Operation>, Storage), ContractError> {
        let mut next = storage.clone();
        match entry {
            ENTRY_REPORT_COUNT => {
                Self::require(storage, "trusted_oracle", entry, caller)?;
                let count = params.nat("count").map_err(ContractError::InvalidParams)?;
                if count > MAX_BALLS {
                    return Err(ContractError::InvalidParams(format!(
                        "count {count} exceeds pick-zone capacity {MAX_BALLS}"
                    )));
                }
                next.set("ball_count", Value::Nat(count));
            }
            ENTRY_SET_TRANSPORTING => {
                Self::require(storage, "controller", entry, caller)?;
                let flag = params.flag("flag").map_err(ContractError::InvalidParams)?;
                next.set("transporting", Value::Bool(flag));
            }
            other => return Err(ContractError::UnknownEntry(other.to_owned())),
        }
        let ops = Self::recompute(&mut next)?;
        Ok((ops, next))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn material_count_is_additive() {
        assert_eq!(compute_x(3, false), 3);
        assert_eq!(compute_x(2, true), 3);
        assert_eq!(compute_x(0, false), 0);
    }

    #[test]
    fn velocity_table() {
        assert_eq!(compute_velocity(0).unwrap(), Operation::StopAtHome);
        assert_eq!(compute_velocity(1).unwrap(), Operation::SetVelocity(6));
        assert_eq!(compute_velocity(2).unwrap(), Operation::SetVelocity(3));
        assert_eq!(compute_velocity(3).unwrap(), Operation::SetVelocity(2));
        assert_eq!(compute_velocity(4).unwrap(), Operation::SetVelocity(2));
    }

    #[test]
    fn negative_count_faults() {
        assert!(matches!(compute_velocity(-1), Err(ContractError::Fault(_))));
    }

    #[test]
    fn init_requires_both_keys() {
        let c = VelocityContract;
        let args = Args::new().with("oracle", Value::KeyHash("o".into()));
        assert!(matches!(
            c.init(&args),
            Err(ContractError::InvalidParams(_))
        ));
        let args = Args::new()
            .with("oracle", Value::Nat(1))
            .with("controller", Value::KeyHash("c".into()));
        assert!(c.init(&args).is_err());
    }

    #[test]
    fn report_over_capacity_rejected() {
        let c = VelocityContract;
        let s = c
            .init(&VelocityContract::init_args(&"o".into(), &"c".into()))
            .unwrap();
        let p = Args::new().with("count", Value::Nat(4));
        assert!(matches!(
            c.call(ENTRY_REPORT_COUNT, &"o".into(), &p, &s),
            Err(ContractError::InvalidParams(_))
        ));
    }
}
