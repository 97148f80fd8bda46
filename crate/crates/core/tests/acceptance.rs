//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robochain::contract::velocity::{
    compute_velocity, ENTRY_REPORT_COUNT, ENTRY_SET_TRANSPORTING, FASTEST, SLOWEST,
};
use robochain::contract::{
    Args, ContractEngine, ContractRegistry, Operation, Value, VelocityContract,
};
use robochain::harness::{self, RunManifest};
use robochain::ledger::{
    decode_chain, encode_chain, verify_chain_bytes, BlobStore, KeyHash, Ledger, Payload,
};
use robochain::oracle::{count_balls, OracleConfig, SceneSpec, SceneStyle};
use robochain::sim::ExperimentConfig;

const LABELS: [&str; 4] = ["A", "B", "C", "D"];

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        name,
        pass,
        detail: detail.into(),
    }
}

struct Suite {
    root: PathBuf,
    seconds: f64,
}

impl Suite {
    fn run(root: PathBuf) -> Suite {
        let t0 = Instant::now();
        thread::scope(|s| {
            for label in LABELS {
                let dir = root.join(label);
                s.spawn(move || {
                    let cfg = ExperimentConfig::preset(label).unwrap();
                    harness::cmd_run(&cfg, &dir).unwrap();
                });
            }
        });
        Suite {
            root,
            seconds: t0.elapsed().as_secs_f64(),
        }
    }

    fn dir(&self, label: &str) -> PathBuf {
        self.root.join(label)
    }

    /// `(seconds, velocity)` rows of a run's CSV.
    fn samples(&self, label: &str) -> Vec<(f64, u32)> {
        let text = fs::read_to_string(self.dir(label).join(harness::SAMPLES_FILE)).unwrap();
        harness::parse_samples_csv(&text)
            .unwrap()
            .into_iter()
            .map(|(t, v)| (t.parse().unwrap(), v))
            .collect()
    }

    fn manifest(&self, label: &str) -> RunManifest {
        RunManifest::parse(
            &fs::read_to_string(self.dir(label).join(harness::MANIFEST_FILE)).unwrap(),
        )
        .unwrap()
    }
}

fn velocity_law() -> Check {
    let got: Vec<Option<u32>> = (0..=4)
        .map(|x| match compute_velocity(x).unwrap() {
            Operation::StopAtHome => None,
            Operation::SetVelocity(v) => Some(v),
        })
        .collect();
    let want = [None, Some(6), Some(3), Some(2), Some(2)];
    check(
        "velocity law over x = 0..4",
        got == want && FASTEST == 2 && SLOWEST == 6,
        format!("{got:?}, bounds {FASTEST}..{SLOWEST} s"),
    )
}

fn initial_condition(suite: &Suite) -> Check {
    let a = suite.samples("A");
    let at10 = a.iter().find(|(t, _)| *t == 10.0).map(|r| r.1);
    check(
        "experiment A velocity at t=10 s",
        at10 == Some(2),
        format!("{at10:?}"),
    )
}

fn table_structure(suite: &Suite) -> Check {
    let a_zero = suite.samples("A").iter().filter(|r| r.1 == 0).count();
    let late_zero = |l: &str| {
        suite
            .samples(l)
            .iter()
            .filter(|r| r.0 >= 150.0 && r.1 == 0)
            .count()
    };
    let (c0, d0) = (late_zero("C"), late_zero("D"));
    let stray: Vec<(String, f64, u32)> = LABELS
        .iter()
        .flat_map(|l| {
            suite
                .samples(l)
                .into_iter()
                .map(move |(t, v)| (l.to_string(), t, v))
        })
        .filter(|(_, _, v)| ![0, 2, 3, 6].contains(v))
        .collect();
    check(
        "table structure over 300 s",
        a_zero == 0 && c0 >= 1 && d0 >= 1 && stray.is_empty() && suite.seconds < 60.0,
        format!(
            "A zeros {a_zero}, C zeros@>=150s {c0}, D zeros@>=150s {d0}, out-of-set {}, suite {:.1} s",
            stray.len(),
            suite.seconds
        ),
    )
}

/// Mean seconds per movement over the final 100 s. Stopped samples carry no
/// movement and are left out; a column that never moves is infinitely slow.
fn moving_mean(samples: &[(f64, u32)], from: f64) -> f64 {
    let moving: Vec<f64> = samples
        .iter()
        .filter(|(t, v)| *t >= from && *v > 0)
        .map(|r| r.1 as f64)
        .collect();
    if moving.is_empty() {
        f64::INFINITY
    } else {
        moving.iter().sum::<f64>() / moving.len() as f64
    }
}

fn monotone_trend(suite: &Suite) -> Check {
    let end = suite.samples("A").last().unwrap().0;
    let m: Vec<f64> = ["A", "B", "C"]
        .iter()
        .map(|l| moving_mean(&suite.samples(l), end - 100.0))
        .collect();
    check(
        "mean(A) <= mean(B) <= mean(C) over final 100 s",
        m[0] <= m[1] && m[1] <= m[2],
        format!("A {:.2}, B {:.2}, C {:.2}", m[0], m[1], m[2]),
    )
}

fn oracle_accuracy() -> Check {
    let t0 = Instant::now();
    let style = SceneStyle::default();
    let cfg = OracleConfig::default();
    let rates: Vec<(usize, usize)> = thread::scope(|s| {
        let handles: Vec<_> = (0..=3usize)
            .map(|k| {
                let (style, cfg) = (&style, &cfg);
                s.spawn(move || {
                    (0..500u64)
                        .filter(|i| {
                            let seed = 0xacce_0000 + (k as u64) * 10_000 + i;
                            let frame =
                                SceneSpec::random(style, k, seed).unwrap().render().unwrap();
                            count_balls(&frame, cfg) == k
                        })
                        .count()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap())
            .enumerate()
            .collect()
    });
    let secs = t0.elapsed().as_secs_f64();
    let pass = rates.iter().all(|&(k, ok)| {
        if k == 0 {
            ok == 500
        } else {
            ok * 100 >= 95 * 500
        }
    }) && secs < 30.0;
    let detail = rates
        .iter()
        .map(|(k, ok)| format!("k={k} {ok}/500"))
        .collect::<Vec<_>>()
        .join(", ");
    check(
        "oracle count accuracy",
        pass,
        format!("{detail}, {secs:.1} s"),
    )
}

fn tamper_evidence(suite: &Suite) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a3e);
    let ledger = common::random_ledger(50, 0x7a3f);
    let bytes = encode_chain(ledger.blocks());
    let mut flagged = 0;
    for _ in 0..1000 {
        let mut t = bytes.clone();
        let pos = rng.gen_range(0..t.len());
        t[pos] ^= rng.gen_range(1..=255u8);
        if verify_chain_bytes(&t).first_bad_height().is_some() {
            flagged += 1;
        }
    }

    // Blob mutations on a copy of a real run's image store.
    let src = suite.dir("A");
    let blob_copy = tempfile::tempdir().unwrap();
    for e in fs::read_dir(src.join(harness::BLOB_DIR)).unwrap() {
        let e = e.unwrap();
        fs::copy(e.path(), blob_copy.path().join(e.file_name())).unwrap();
    }
    let mut store = BlobStore::open_dir(blob_copy.path()).unwrap();
    let chain = decode_chain(&fs::read(src.join(harness::CHAIN_FILE)).unwrap()).unwrap();
    let anchors: Vec<_> = chain
        .iter()
        .flat_map(|b| &b.transactions)
        .filter_map(|t| match &t.payload {
            Payload::ImageAnchor(a) => Some(a.clone()),
            _ => None,
        })
        .collect();
    let mut caught = 0;
    for _ in 0..100 {
        let a = &anchors[rng.gen_range(0..anchors.len())];
        let original = store.get(&a.image_id).unwrap();
        let mut bad = original.clone();
        let pos = rng.gen_range(0..bad.len());
        bad[pos] ^= rng.gen_range(1..=255u8);
        store.overwrite(&a.image_id, bad).unwrap();
        if store.verify_anchor(&a.image_id, &a.image_hash).is_err() {
            caught += 1;
        }
        store.overwrite(&a.image_id, original).unwrap();
    }
    check(
        "tamper evidence",
        flagged == 1000 && caught == 100,
        format!(
            "chain {flagged}/1000 over {} blocks, blobs {caught}/100",
            ledger.height()
        ),
    )
}

fn gate_soundness() -> Check {
    let oracle = KeyHash::from("tz1-oracle");
    let controller = KeyHash::from("tz1-controller");
    let mut ledger = Ledger::new(common::validators(3)).unwrap();
    let mut engine = ContractEngine::new(ContractRegistry::with_builtins());
    engine
        .deploy(
            &mut ledger,
            "velocity",
            "vc",
            &KeyHash::from("tz1-operator"),
            &VelocityContract::init_args(&oracle, &controller),
        )
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a7e);
    let mut changed = 0;
    let mut accepted = 0;
    for i in 0..1000 {
        // keep the stored state moving so rejections are checked from many states
        if i % 50 == 0 {
            let n = rng.gen_range(0..=3u64);
            let params = Args::new().with("count", Value::Nat(n));
            engine
                .call_entry(&mut ledger, "vc", ENTRY_REPORT_COUNT, &oracle, &params, "")
                .unwrap();
        }
        // Either a stranger or the key that owns the other entry point.
        let report = rng.gen_bool(0.5);
        let caller = if rng.gen_bool(0.5) {
            KeyHash::new(format!("tz1-{:x}", rng.gen::<u64>()))
        } else if report {
            controller.clone()
        } else {
            oracle.clone()
        };
        let (entry, params) = if report {
            (
                ENTRY_REPORT_COUNT,
                Args::new().with("count", Value::Nat(rng.gen_range(0..=3))),
            )
        } else {
            (
                ENTRY_SET_TRANSPORTING,
                Args::new().with("flag", Value::Bool(rng.gen())),
            )
        };
        let before = engine.storage("vc").unwrap().to_bytes();
        let pending = ledger.pending().len();
        if engine
            .call_entry(&mut ledger, "vc", entry, &caller, &params, "")
            .is_ok()
        {
            accepted += 1;
        }
        if engine.storage("vc").unwrap().to_bytes() != before || ledger.pending().len() != pending {
            changed += 1;
        }
    }
    check(
        "gate soundness",
        changed == 0 && accepted == 0,
        format!("1000 unauthorized calls, {accepted} accepted, {changed} storage changes"),
    )
}

fn determinism(a: &Suite, b: &Suite) -> Check {
    let mut diffs = Vec::new();
    for l in LABELS {
        if a.manifest(l).head_hash != b.manifest(l).head_hash {
            diffs.push(format!("{l} head"));
        }
        let csv = |s: &Suite| fs::read(s.dir(l).join(harness::SAMPLES_FILE)).unwrap();
        if csv(a) != csv(b) {
            diffs.push(format!("{l} csv"));
        }
    }
    check(
        "determinism across two suite runs",
        diffs.is_empty(),
        if diffs.is_empty() {
            "heads and CSVs identical".to_owned()
        } else {
            diffs.join(", ")
        },
    )
}

fn conservation(suite: &Suite) -> Check {
    let mut events = 0;
    let mut bad: BTreeMap<&str, usize> = BTreeMap::new();
    for l in LABELS {
        let text = fs::read_to_string(suite.dir(l).join(harness::EVENTS_FILE)).unwrap();
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let total = v["pick_zone"].as_u64().unwrap()
                + v["gate_queue"].as_u64().unwrap()
                + u64::from(v["transporting"].as_bool().unwrap());
            events += 1;
            if total != 3 {
                *bad.entry(l).or_default() += 1;
            }
        }
    }
    check(
        "material conservation at every event",
        bad.is_empty() && events > 0,
        format!("{events} events, violations {bad:?}"),
    )
}

fn verify_runs(suite: &Suite) -> bool {
    LABELS
        .iter()
        .all(|l| harness::cmd_verify(&suite.dir(l)).is_ok_and(|v| v.is_valid()))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().unwrap();
    let root: &Path = tmp.path();
    let first = Suite::run(root.join("first"));
    let second = Suite::run(root.join("second"));
    assert!(verify_runs(&first), "fresh runs must verify");

    let checks = [
        velocity_law(),
        initial_condition(&first),
        table_structure(&first),
        monotone_trend(&first),
        oracle_accuracy(),
        tamper_evidence(&first),
        gate_soundness(),
        determinism(&first, &second),
        conservation(&first),
    ];
    let mut failed = 0;
    for (i, c) in checks.iter().enumerate() {
        println!(
            "{} {}. {}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            i + 1,
            c.name,
            c.detail
        );
        failed += usize::from(!c.pass);
    }
    println!("{} of {} passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
