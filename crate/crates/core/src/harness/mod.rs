//! Run directories and the operations behind the command-line front end.
//!
//! A run directory holds:
//!
//! - `samples.csv`: `time,velocity` rows, LF line endings
//! - `events.ndjson`: one simulation event per line
//! - `chain.bin`: the sealed chain, framed blocks
//! - `blobs/`: one file per anchored frame
//! - `run.cfg`: the full configuration that produced the run
//! - `manifest.txt`: label, seed and SHA-256 digests of the artifacts

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::contract::Record;
use crate::kv::{KvError, KvFile};
use crate::ledger::{self, BlobStore, ChainVerdict, Digest, Payload, DEPLOY_ENTRY};
use crate::sim::{fmt_secs, run_experiment, ExperimentConfig, RunSinks, SimError, VelocitySample};

pub const SAMPLES_FILE: &str = "samples.csv";
pub const EVENTS_FILE: &str = "events.ndjson";
pub const CHAIN_FILE: &str = "chain.bin";
pub const BLOB_DIR: &str = "blobs";
pub const CONFIG_FILE: &str = "run.cfg";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("config: {0}")]
    Config(#[from] KvError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0:?} is neither a preset label (A, B, C, D) nor a config file")]
    UnknownExperiment(String),
    #[error("{0} is missing from the run directory")]
    MissingArtifact(String),
    #[error("{file}: {reason}")]
    Format { file: String, reason: String },
    #[error("table needs exactly four runs, got {0}")]
    RunCount(usize),
    #[error("sample grids differ between {0} and {1}")]
    GridMismatch(String, String),
    #[error("run directory {0} already contains a chain; choose a fresh --out")]
    NotEmpty(PathBuf),
    #[error("no contract storage recorded{}", .0.as_ref().map(|a| format!(" for {a}")).unwrap_or_default())]
    NoStorage(Option<String>),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read(path: &Path) -> Result<Vec<u8>, HarnessError> {
    match fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Err(HarnessError::MissingArtifact(
            path.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        )),
        Err(e) => Err(io_err(path)(e)),
    }
}

/// Label, seed and artifact digests of a finished run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunManifest {
    pub label: String,
    pub seed: u64,
    pub config: String,
    pub output_dir: PathBuf,
    pub head_hash: Digest,
    /// Artifact name → SHA-256 digest.
    pub artifacts: BTreeMap<String, Digest>,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "label = {}\nseed = {}\nconfig = {}\noutput_dir = {}\nhead_hash = {}\n",
            self.label,
            self.seed,
            self.config,
            self.output_dir.display(),
            self.head_hash
        );
        for (name, d) in &self.artifacts {
            out.push_str(&format!("digest.{name} = {d}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let fmt_err = |reason: String| HarnessError::Format {
            file: MANIFEST_FILE.into(),
            reason,
        };
        let mut kv = KvFile::parse(text)?;
        let label = kv
            .take_raw("label")
            .ok_or_else(|| fmt_err("missing label".into()))?;
        let seed = kv
            .take("seed")?
            .ok_or_else(|| fmt_err("missing seed".into()))?;
        let config = kv.take_raw("config").unwrap_or_else(|| CONFIG_FILE.into());
        let output_dir = PathBuf::from(kv.take_raw("output_dir").unwrap_or_default());
        let head = kv
            .take_raw("head_hash")
            .ok_or_else(|| fmt_err("missing head_hash".into()))?;
        let head_hash = Digest::from_hex(&head).ok_or_else(|| fmt_err("bad head_hash".into()))?;
        let mut artifacts = BTreeMap::new();
        for name in [SAMPLES_FILE, EVENTS_FILE, CHAIN_FILE, BLOB_DIR, CONFIG_FILE] {
            if let Some(h) = kv.take_raw(&format!("digest.{name}")) {
                let d = Digest::from_hex(&h)
                    .ok_or_else(|| fmt_err(format!("bad digest for {name}")))?;
                artifacts.insert(name.to_owned(), d);
            }
        }
        kv.finish()?;
        Ok(Self {
            label,
            seed,
            config,
            output_dir,
            head_hash,
            artifacts,
        })
    }
}

/// Digest of a blob directory: SHA-256 over sorted `(name, digest)` pairs.
pub fn blob_dir_digest(dir: &Path) -> Result<Digest, HarnessError> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()
        .map_err(io_err(dir))?;
    names.sort();
    let mut acc = Vec::new();
    for n in names {
        let d = Digest::of(&read(&dir.join(&n))?);
        acc.extend_from_slice(n.as_bytes());
        acc.push(0);
        acc.extend_from_slice(&d.0);
    }
    Ok(Digest::of(&acc))
}

pub fn samples_csv(samples: &[VelocitySample]) -> String {
    let mut out = String::from("time,velocity\n");
    for s in samples {
        out.push_str(&format!("{},{}\n", fmt_secs(s.time_ms), s.velocity));
    }
    out
}

/// Parses `time,velocity` CSV into `(time text, velocity)` rows.
pub fn parse_samples_csv(text: &str) -> Result<Vec<(String, u32)>, HarnessError> {
    let fmt_err = |reason: String| HarnessError::Format {
        file: SAMPLES_FILE.into(),
        reason,
    };
    let mut lines = text.lines();
    if lines.next() != Some("time,velocity") {
        return Err(fmt_err("header must be time,velocity".into()));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let (t, v) = l
                .split_once(',')
                .ok_or_else(|| fmt_err(format!("row {}: expected two columns", i + 2)))?;
            let v = v
                .parse()
                .map_err(|_| fmt_err(format!("row {}: bad velocity {v:?}", i + 2)))?;
            t.parse::<f64>()
                .map_err(|_| fmt_err(format!("row {}: bad time {t:?}", i + 2)))?;
            Ok((t.to_owned(), v))
        })
        .collect()
}

/// Runs one experiment into `dir`, which must not already hold a chain.
pub fn cmd_run(cfg: &ExperimentConfig, dir: &Path) -> Result<RunManifest, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let chain_path = dir.join(CHAIN_FILE);
    if chain_path.exists() {
        return Err(HarnessError::NotEmpty(dir.to_path_buf()));
    }
    let blob_dir = dir.join(BLOB_DIR);
    let sinks = RunSinks {
        chain_path: Some(chain_path.clone()),
        blob_dir: Some(blob_dir.clone()),
    };
    let outcome = run_experiment(cfg, &sinks)?;

    let write = |name: &str, bytes: &[u8]| -> Result<Digest, HarnessError> {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(io_err(&p))?;
        Ok(Digest::of(bytes))
    };
    let mut artifacts = BTreeMap::new();
    artifacts.insert(
        SAMPLES_FILE.to_owned(),
        write(SAMPLES_FILE, samples_csv(&outcome.samples).as_bytes())?,
    );
    let events: String = outcome
        .events
        .iter()
        .map(|e| e.to_json_line() + "\n")
        .collect();
    artifacts.insert(
        EVENTS_FILE.to_owned(),
        write(EVENTS_FILE, events.as_bytes())?,
    );
    artifacts.insert(
        CONFIG_FILE.to_owned(),
        write(CONFIG_FILE, cfg.to_kv_text().as_bytes())?,
    );
    artifacts.insert(CHAIN_FILE.to_owned(), Digest::of(&read(&chain_path)?));
    artifacts.insert(BLOB_DIR.to_owned(), blob_dir_digest(&blob_dir)?);

    let manifest = RunManifest {
        label: cfg.label.clone(),
        seed: cfg.seed,
        config: CONFIG_FILE.into(),
        output_dir: dir.to_path_buf(),
        head_hash: outcome.ledger.head_hash(),
        artifacts,
    };
    write(MANIFEST_FILE, manifest.to_text().as_bytes())?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyVerdict {
    Valid {
        blocks: usize,
        anchors: usize,
    },
    ChainUnreadable {
        height: u64,
        offset: usize,
        reason: String,
    },
    ChainInvalid {
        height: u64,
        reason: String,
    },
    AnchorMismatch {
        image_id: String,
        reason: String,
    },
    ArtifactMismatch {
        artifact: String,
    },
}

impl VerifyVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, VerifyVerdict::Valid { .. })
    }
}

impl std::fmt::Display for VerifyVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VerifyVerdict::Valid { blocks, anchors } => {
                write!(
                    f,
                    "valid: {blocks} blocks, {anchors} image anchors verified"
                )
            }
            VerifyVerdict::ChainUnreadable {
                height,
                offset,
                reason,
            } => write!(
                f,
                "chain parse error in block {height} at offset {offset}: {reason}"
            ),
            VerifyVerdict::ChainInvalid { height, reason } => {
                write!(f, "chain invalid at height {height}: {reason}")
            }
            VerifyVerdict::AnchorMismatch { image_id, reason } => {
                write!(f, "anchor mismatch for {image_id}: {reason}")
            }
            VerifyVerdict::ArtifactMismatch { artifact } => {
                write!(f, "{artifact} does not match its manifest digest")
            }
        }
    }
}

/// Checks the chain, every image anchor, then the manifest digests.
pub fn cmd_verify(dir: &Path) -> Result<VerifyVerdict, HarnessError> {
    let manifest = RunManifest::parse(&String::from_utf8_lossy(&read(&dir.join(MANIFEST_FILE))?))?;
    let chain_bytes = read(&dir.join(CHAIN_FILE))?;
    for name in [SAMPLES_FILE, EVENTS_FILE] {
        if !dir.join(name).is_file() {
            return Err(HarnessError::MissingArtifact(name.into()));
        }
    }
    let blob_dir = dir.join(BLOB_DIR);
    if !blob_dir.is_dir() {
        return Err(HarnessError::MissingArtifact(BLOB_DIR.into()));
    }

    let blocks = match ledger::decode_chain(&chain_bytes) {
        Ok(b) => b,
        Err((height, e)) => {
            return Ok(VerifyVerdict::ChainUnreadable {
                height,
                offset: e.offset,
                reason: e.reason,
            })
        }
    };
    if let ChainVerdict::Invalid {
        first_bad_height,
        reason,
    } = ledger::verify_chain(&blocks)
    {
        return Ok(VerifyVerdict::ChainInvalid {
            height: first_bad_height,
            reason,
        });
    }

    let blobs = BlobStore::open_dir(&blob_dir).map_err(|e| HarnessError::Format {
        file: BLOB_DIR.into(),
        reason: e.to_string(),
    })?;
    let mut anchors = 0;
    for tx in blocks.iter().flat_map(|b| &b.transactions) {
        if let Payload::ImageAnchor(a) = &tx.payload {
            if let Err(e) = blobs.verify_anchor(&a.image_id, &a.image_hash) {
                return Ok(VerifyVerdict::AnchorMismatch {
                    image_id: a.image_id.clone(),
                    reason: e.to_string(),
                });
            }
            anchors += 1;
        }
    }

    let head = blocks.last().map_or(Digest::ZERO, |b| b.block_hash);
    if head != manifest.head_hash {
        return Ok(VerifyVerdict::ArtifactMismatch {
            artifact: "head_hash".into(),
        });
    }
    for (name, expected) in &manifest.artifacts {
        let actual = if name == BLOB_DIR {
            blob_dir_digest(&blob_dir)?
        } else {
            Digest::of(&read(&dir.join(name))?)
        };
        if actual != *expected {
            return Ok(VerifyVerdict::ArtifactMismatch {
                artifact: name.clone(),
            });
        }
    }
    Ok(VerifyVerdict::Valid {
        blocks: blocks.len(),
        anchors,
    })
}

/// Renders four runs side by side: one row per sample time after `t = 0`,
/// one column per run. Runs labelled `A`..`D` are ordered by label,
/// otherwise argument order is kept.
pub fn cmd_table(dirs: &[PathBuf]) -> Result<String, HarnessError> {
    if dirs.len() != 4 {
        return Err(HarnessError::RunCount(dirs.len()));
    }
    let mut runs = Vec::new();
    for d in dirs {
        let manifest =
            RunManifest::parse(&String::from_utf8_lossy(&read(&d.join(MANIFEST_FILE))?))?;
        let rows = parse_samples_csv(&String::from_utf8_lossy(&read(&d.join(SAMPLES_FILE))?))?;
        runs.push((manifest.label, d.display().to_string(), rows));
    }
    let mut labels: Vec<&str> = runs.iter().map(|r| r.0.as_str()).collect();
    labels.sort_unstable();
    if labels == ["A", "B", "C", "D"] {
        runs.sort_by(|a, b| a.0.cmp(&b.0));
    }
    let grid: Vec<&String> = runs[0].2.iter().map(|(t, _)| t).collect();
    for r in &runs[1..] {
        let g: Vec<&String> = r.2.iter().map(|(t, _)| t).collect();
        if g != grid {
            return Err(HarnessError::GridMismatch(runs[0].1.clone(), r.1.clone()));
        }
    }

    let mut out = format!("{:<9}", "Time (s)");
    for r in &runs {
        out.push_str(&format!(" {:>4}", r.0));
    }
    out.push('\n');
    for (i, t) in grid.iter().enumerate() {
        if t.as_str() == "0" {
            continue;
        }
        out.push_str(&format!("{t:<9}"));
        for r in &runs {
            out.push_str(&format!(" {:>4}", r.2[i].1));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Latest recorded storage of each contract (or just `address`) as
/// `key=value` text.
pub fn cmd_dump_storage(dir: &Path, address: Option<&str>) -> Result<String, HarnessError> {
    let bytes = read(&dir.join(CHAIN_FILE))?;
    let blocks = ledger::decode_chain(&bytes).map_err(|(h, e)| HarnessError::Format {
        file: CHAIN_FILE.into(),
        reason: format!("block {h}: {e}"),
    })?;
    let mut latest: BTreeMap<String, (String, Vec<u8>)> = BTreeMap::new();
    for tx in blocks.iter().flat_map(|b| &b.transactions) {
        if let Payload::ContractCall(c) = &tx.payload {
            if address.is_none_or(|a| a == c.address) {
                latest.insert(c.address.clone(), (c.entry.clone(), c.storage.clone()));
            }
        }
    }
    if latest.is_empty() {
        return Err(HarnessError::NoStorage(address.map(str::to_owned)));
    }
    let mut out = String::new();
    for (addr, (entry, raw)) in latest {
        let record = Record::from_bytes(&raw).map_err(|e| HarnessError::Format {
            file: CHAIN_FILE.into(),
            reason: format!("storage of {addr}: {e}"),
        })?;
        let via = if entry == DEPLOY_ENTRY {
            "init"
        } else {
            entry.as_str()
        };
        out.push_str(&format!("[{addr}] # after {via}\n"));
        out.push_str(&record.to_text());
    }
    Ok(out)
}

/// Resolves a `run` argument: a preset label or a config file path.
/// `overrides` (from `--config`) are layered over a preset.
pub fn resolve_experiment(
    spec: &str,
    overrides: Option<&str>,
    seed: Option<u64>,
) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = if ExperimentConfig::preset(spec).is_some() {
        let text = format!("preset = {spec}\n{}", overrides.unwrap_or(""));
        ExperimentConfig::from_kv_text(&text)?
    } else {
        let path = Path::new(spec);
        if !path.is_file() {
            return Err(HarnessError::UnknownExperiment(spec.to_owned()));
        }
        let text = String::from_utf8(read(path)?).map_err(|_| HarnessError::Format {
            file: spec.to_owned(),
            reason: "not utf-8".into(),
        })?;
        let merged = match overrides {
            Some(o) => format!("{text}\n{o}"),
            None => text,
        };
        ExperimentConfig::from_kv_text(&merged)?
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let s = vec![
            VelocitySample {
                time_ms: 0,
                velocity: 2,
            },
            VelocitySample {
                time_ms: 2_500,
                velocity: 0,
            },
        ];
        let text = samples_csv(&s);
        assert_eq!(text, "time,velocity\n0,2\n2.5,0\n");
        assert_eq!(
            parse_samples_csv(&text).unwrap(),
            vec![("0".to_owned(), 2), ("2.5".to_owned(), 0)]
        );
        assert!(parse_samples_csv("t,v\n").is_err());
        assert!(parse_samples_csv("time,velocity\n1;2\n").is_err());
    }

    #[test]
    fn manifest_roundtrip() {
        let mut artifacts = BTreeMap::new();
        artifacts.insert(SAMPLES_FILE.to_owned(), Digest::of(b"x"));
        let m = RunManifest {
            label: "B".into(),
            seed: 4,
            config: CONFIG_FILE.into(),
            output_dir: PathBuf::from("runs/B"),
            head_hash: Digest::of(b"h"),
            artifacts,
        };
        assert_eq!(RunManifest::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn table_needs_four_runs() {
        assert!(matches!(
            cmd_table(&[PathBuf::from("x")]),
            Err(HarnessError::RunCount(1))
        ));
    }
}
