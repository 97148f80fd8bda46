//! Discrete-event simulation of the pick-and-place cell.
//!
//! Three balls circulate: a gate releases one ball from its queue into the
//! pick zone every interval, the robot picks a ball, carries it back to the
//! start of the track (where it rejoins the gate queue) and retracts. Each
//! robot phase lasts the current velocity in seconds. The velocity comes
//! from the contract, fed by the Oracle's ball counts and the controller's
//! transporting flag.
//!
//! Events at the same instant are ordered gate, then robot, then control.
//! A velocity decision only takes effect at a phase boundary.

mod config;

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use crate::contract::velocity::{VelocityContract, ENTRY_SET_TRANSPORTING};
use crate::contract::{Args, ContractEngine, ContractRegistry, EngineError, Operation, Value};
use crate::ledger::{
    BlobError, BlobStore, KeyHash, Ledger, LedgerError, Payload, RobotEventPayload, HOME_POSITION,
};
use crate::oracle::{DetectorRegistry, Oracle, OracleError, SceneError, SceneSpec};

pub use config::{fmt_secs, secs_to_ms, ExperimentConfig, GateSchedule, TABLE_TIMES, TOTAL_BALLS};

pub const CONTRACT_ADDRESS: &str = "velocity-control";
pub const ORACLE_KEY: &str = "tz1-oracle";
pub const CONTROLLER_KEY: &str = "tz1-robot-controller";
pub const OPERATOR_KEY: &str = "tz1-operator";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum RobotMode {
    Home,
    MovingToPick,
    Transporting,
    Placing,
}

impl RobotMode {
    fn pose(self) -> &'static str {
        match self {
            RobotMode::Home => HOME_POSITION,
            RobotMode::MovingToPick => "approach-pick",
            RobotMode::Transporting => "carry",
            RobotMode::Placing => "place",
        }
    }
}

impl fmt::Display for RobotMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.pose())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellState {
    pub sim_time_ms: u64,
    pub pick_zone: u32,
    pub gate_queue: u32,
    pub gate_next_open_ms: u64,
    pub gate_openings: u64,
    pub robot_mode: RobotMode,
    /// Seconds per movement of the phase in progress; 0 at home.
    pub current_velocity: u32,
    pub transporting: bool,
    pub phase_end_ms: Option<u64>,
    /// Latest operation the contract emitted.
    pub decision: Option<Operation>,
}

impl CellState {
    pub fn initial(cfg: &ExperimentConfig) -> Self {
        Self {
            sim_time_ms: 0,
            pick_zone: cfg.initial_pick_zone,
            gate_queue: TOTAL_BALLS - cfg.initial_pick_zone,
            gate_next_open_ms: cfg.gate.interval_after(0),
            gate_openings: 0,
            robot_mode: RobotMode::Home,
            current_velocity: 0,
            transporting: false,
            phase_end_ms: None,
            decision: None,
        }
    }

    pub fn balls_in_system(&self) -> u32 {
        self.pick_zone + self.gate_queue + u32::from(self.transporting)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VelocitySample {
    pub time_ms: u64,
    pub velocity: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    GateRelease,
    GateIdle,
    PhaseStart,
    Pick,
    MissedPick,
    Deposit,
    Home,
    Control,
    ControlRejected,
}

/// One line of the simulation event log, with the material counts after the
/// event.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEvent {
    pub time: f64,
    pub event: EventKind,
    pub detail: String,
    pub pick_zone: u32,
    pub gate_queue: u32,
    pub transporting: bool,
    pub mode: RobotMode,
    pub velocity: u32,
}

impl SimEvent {
    pub fn balls_in_system(&self) -> u32 {
        self.pick_zone + self.gate_queue + u32::from(self.transporting)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Blob(#[from] BlobError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("cannot step backwards from {now_ms} ms to {until_ms} ms")]
    TimeRegression { now_ms: u64, until_ms: u64 },
}

/// Scheduled event kinds in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Pending {
    Gate,
    Robot,
    Control { periodic: bool },
}

/// Where a run keeps its chain and image blobs.
#[derive(Debug, Clone, Default)]
pub struct RunSinks {
    pub chain_path: Option<PathBuf>,
    pub blob_dir: Option<PathBuf>,
}

/// The simulated cell plus its ledger, contract engine and Oracle.
pub struct Cell {
    cfg: ExperimentConfig,
    state: CellState,
    queue: BinaryHeap<Reverse<(u64, Pending, u64)>>,
    seq: u64,
    /// A phase just ended and the robot waits for the boundary decision.
    at_boundary: bool,
    /// Material changed since the last control tick.
    dirty: bool,
    last_tick_ms: Option<u64>,
    ticks: u64,
    ledger: Ledger,
    blobs: BlobStore,
    engine: ContractEngine,
    oracle: Oracle,
    controller: KeyHash,
    events: Vec<SimEvent>,
}

impl fmt::Debug for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Cell")
            .field("label", &self.cfg.label)
            .field("state", &self.state)
            .finish_non_exhaustive()
    }
}

impl Cell {
    pub fn new(cfg: ExperimentConfig, sinks: &RunSinks) -> Result<Self, SimError> {
        cfg.validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        let mut ledger = match &sinks.chain_path {
            Some(p) => Ledger::with_chain_file(cfg.validators.clone(), p)?,
            None => Ledger::new(cfg.validators.clone())?,
        };
        let blobs = match &sinks.blob_dir {
            Some(d) => BlobStore::open_dir(d)?,
            None => BlobStore::in_memory(),
        };
        let oracle_key = KeyHash::new(ORACLE_KEY);
        let controller = KeyHash::new(CONTROLLER_KEY);
        let mut engine = ContractEngine::new(ContractRegistry::with_builtins());
        engine.deploy(
            &mut ledger,
            "velocity",
            CONTRACT_ADDRESS,
            &KeyHash::new(OPERATOR_KEY),
            &VelocityContract::init_args(&oracle_key, &controller),
        )?;
        let oracle = Oracle::new(
            oracle_key,
            CONTRACT_ADDRESS,
            &cfg.oracle,
            &DetectorRegistry::default(),
        )?;
        let state = CellState::initial(&cfg);
        let mut cell = Self {
            cfg,
            state,
            queue: BinaryHeap::new(),
            seq: 0,
            at_boundary: false,
            dirty: true,
            last_tick_ms: None,
            ticks: 0,
            ledger,
            blobs,
            engine,
            oracle,
            controller,
            events: Vec::new(),
        };
        cell.schedule(cell.state.gate_next_open_ms, Pending::Gate);
        cell.schedule(0, Pending::Control { periodic: true });
        Ok(cell)
    }

    pub fn state(&self) -> &CellState {
        &self.state
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn blobs(&self) -> &BlobStore {
        &self.blobs
    }

    pub fn engine(&self) -> &ContractEngine {
        &self.engine
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.events
    }

    fn schedule(&mut self, at_ms: u64, what: Pending) {
        self.seq += 1;
        self.queue.push(Reverse((at_ms, what, self.seq)));
    }

    fn log(&mut self, event: EventKind, detail: impl Into<String>) {
        let s = &self.state;
        self.events.push(SimEvent {
            time: s.sim_time_ms as f64 / 1000.0,
            event,
            detail: detail.into(),
            pick_zone: s.pick_zone,
            gate_queue: s.gate_queue,
            transporting: s.transporting,
            mode: s.robot_mode,
            velocity: s.current_velocity,
        });
    }

    /// Processes every event up to and including `until_ms`, in
    /// `(time, gate < robot < control)` order.
    pub fn step(&mut self, until_ms: u64) -> Result<&[SimEvent], SimError> {
        if until_ms < self.state.sim_time_ms {
            return Err(SimError::TimeRegression {
                now_ms: self.state.sim_time_ms,
                until_ms,
            });
        }
        let first_new = self.events.len();
        while let Some(&Reverse((t, what, _))) = self.queue.peek() {
            if t > until_ms {
                break;
            }
            self.queue.pop();
            self.state.sim_time_ms = t;
            match what {
                Pending::Gate => self.on_gate(),
                Pending::Robot => self.on_phase_complete(),
                Pending::Control { periodic } => {
                    if periodic {
                        self.schedule(
                            t + self.cfg.sample_period_ms,
                            Pending::Control { periodic: true },
                        );
                    }
                    let redundant =
                        self.last_tick_ms == Some(t) && !self.dirty && !self.at_boundary;
                    if !redundant {
                        self.control_tick()?;
                    }
                    if periodic {
                        self.ledger.seal_next(t)?;
                    }
                }
            }
        }
        self.state.sim_time_ms = until_ms;
        Ok(&self.events[first_new..])
    }

    fn on_gate(&mut self) {
        let s = &mut self.state;
        s.gate_openings += 1;
        let next = s.sim_time_ms + self.cfg.gate.interval_after(s.gate_openings);
        s.gate_next_open_ms = next;
        if s.gate_queue > 0 && s.pick_zone < TOTAL_BALLS {
            s.gate_queue -= 1;
            s.pick_zone += 1;
            self.dirty = true;
            let n = s.gate_openings;
            self.log(
                EventKind::GateRelease,
                format!("opening {n} released a ball"),
            );
        } else {
            let n = s.gate_openings;
            self.log(EventKind::GateIdle, format!("opening {n}: queue empty"));
        }
        self.schedule(next, Pending::Gate);
    }

    fn on_phase_complete(&mut self) {
        self.state.phase_end_ms = None;
        match self.state.robot_mode {
            RobotMode::MovingToPick => {
                if self.state.pick_zone > 0 {
                    self.state.pick_zone -= 1;
                    self.state.transporting = true;
                    self.state.robot_mode = RobotMode::Transporting;
                    self.log(EventKind::Pick, "ball picked");
                } else {
                    self.log(EventKind::MissedPick, "pick zone empty on arrival");
                }
            }
            RobotMode::Transporting => {
                // released at the start of the track, behind the gate
                self.state.transporting = false;
                self.state.gate_queue += 1;
                self.state.robot_mode = RobotMode::Placing;
                self.log(EventKind::Deposit, "ball returned to the track");
            }
            RobotMode::Placing => {
                self.state.robot_mode = RobotMode::MovingToPick;
            }
            RobotMode::Home => unreachable!("no phase runs at home"),
        }
        self.dirty = true;
        self.at_boundary = true;
        let now = self.state.sim_time_ms;
        self.schedule(now, Pending::Control { periodic: false });
    }

    /// One pass of the control loop: the controller syncs the transporting
    /// flag, the Oracle counts the pick zone and reports, and the resulting
    /// decision is applied if the robot is at a boundary or at home.
    pub fn control_tick(&mut self) -> Result<(), SimError> {
        let now = self.state.sim_time_ms;
        self.last_tick_ms = Some(now);
        self.dirty = false;
        self.ticks += 1;
        let context = format!("t={}s", fmt_secs(now));

        let mut decision = None;
        let stored = self
            .engine
            .storage(CONTRACT_ADDRESS)
            .and_then(|s| s.flag("transporting").ok());
        if stored != Some(self.state.transporting) {
            let params = Args::new().with("flag", Value::Bool(self.state.transporting));
            match self.engine.call_entry(
                &mut self.ledger,
                CONTRACT_ADDRESS,
                ENTRY_SET_TRANSPORTING,
                &self.controller,
                &params,
                &format!("{context}: transporting={}", self.state.transporting),
            ) {
                Ok((ops, _)) => decision = ops.last().copied(),
                Err(e) => self.log(EventKind::ControlRejected, e.to_string()),
            }
        }

        let scene_seed = splitmix(self.cfg.seed ^ splitmix(self.ticks));
        let frame = SceneSpec::random(&self.cfg.scene, self.state.pick_zone as usize, scene_seed)?
            .render()?;
        match self.oracle.observe(
            &frame,
            &mut self.ledger,
            &mut self.blobs,
            &mut self.engine,
            &context,
        ) {
            Ok(report) => {
                if let Some(op) = report.operations.last() {
                    decision = Some(*op);
                }
                let detail = format!(
                    "oracle saw {} (zone {}), {}",
                    report.count,
                    self.state.pick_zone,
                    decision.map_or_else(|| "no decision".to_owned(), |d| d.to_string())
                );
                self.log(EventKind::Control, detail);
            }
            Err(OracleError::Engine(e)) => self.log(EventKind::ControlRejected, e.to_string()),
            Err(e) => return Err(e.into()),
        }
        if let Some(d) = decision {
            self.state.decision = Some(d);
        }
        self.apply_decision()
    }

    fn apply_decision(&mut self) -> Result<(), SimError> {
        let Some(decision) = self.state.decision else {
            return Ok(());
        };
        let ready = self.at_boundary || self.state.robot_mode == RobotMode::Home;
        if !ready {
            return Ok(());
        }
        self.at_boundary = false;
        match decision {
            Operation::SetVelocity(v) => {
                if self.state.robot_mode == RobotMode::Home {
                    self.state.robot_mode = RobotMode::MovingToPick;
                }
                self.start_phase(v)
            }
            Operation::StopAtHome if self.state.transporting => {
                // never drop a carried ball; finish the carry at the old pace
                let v = self.state.current_velocity.max(1);
                self.start_phase(v)
            }
            Operation::StopAtHome => {
                let was_home = self.state.robot_mode == RobotMode::Home;
                self.state.robot_mode = RobotMode::Home;
                self.state.current_velocity = 0;
                if !was_home {
                    self.log(EventKind::Home, "stopped at home");
                    self.robot_event("stopped, nothing to pick")?;
                }
                Ok(())
            }
        }
    }

    fn start_phase(&mut self, velocity: u32) -> Result<(), SimError> {
        let now = self.state.sim_time_ms;
        self.state.current_velocity = velocity;
        let end = now + u64::from(velocity) * 1000;
        self.state.phase_end_ms = Some(end);
        self.schedule(end, Pending::Robot);
        let mode = self.state.robot_mode;
        self.log(
            EventKind::PhaseStart,
            format!("{mode} at {velocity} s/movement"),
        );
        self.robot_event(&format!("{mode} at {velocity} s/movement"))
    }

    fn robot_event(&mut self, description: &str) -> Result<(), SimError> {
        let payload = Payload::RobotEvent(RobotEventPayload {
            timestamp_ms: self.state.sim_time_ms,
            position: self.state.robot_mode.pose().to_owned(),
            velocity: self.state.current_velocity,
            effort: if self.state.robot_mode == RobotMode::Home {
                0.0
            } else {
                self.cfg.effort
            },
        });
        self.ledger.submit(&self.controller, description, payload)?;
        Ok(())
    }

    /// Seals whatever is still pending so the chain covers the whole run.
    pub fn finish(&mut self) -> Result<(), SimError> {
        if !self.ledger.pending().is_empty() {
            self.ledger.seal_next(self.state.sim_time_ms)?;
        }
        Ok(())
    }

    pub fn into_parts(self) -> (Ledger, BlobStore, ContractEngine, Vec<SimEvent>) {
        (self.ledger, self.blobs, self.engine, self.events)
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub samples: Vec<VelocitySample>,
    pub events: Vec<SimEvent>,
    pub ledger: Ledger,
    pub blobs: BlobStore,
    pub engine: ContractEngine,
}

/// Simulates `cfg.duration_ms`, recording the velocity in effect at each
/// sample time after all events at that instant.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    sinks: &RunSinks,
) -> Result<ExperimentOutcome, SimError> {
    let mut cell = Cell::new(cfg.clone(), sinks)?;
    let mut samples = Vec::new();
    for t in cfg.effective_sample_times() {
        cell.step(t)?;
        samples.push(VelocitySample {
            time_ms: t,
            velocity: cell.state().current_velocity,
        });
    }
    cell.step(cfg.duration_ms)?;
    cell.finish()?;
    let (ledger, blobs, engine, events) = cell.into_parts();
    Ok(ExperimentOutcome {
        config: cfg.clone(),
        samples,
        events,
        ledger,
        blobs,
        engine,
    })
}
