use std::fmt;

use crate::kv::{KvError, KvFile};
use crate::ledger::KeyHash;
use crate::oracle::{OracleConfig, SceneStyle};

/// Sample grid of the published velocity table, in seconds.
pub const TABLE_TIMES: [u64; 14] = [
    10, 20, 30, 50, 75, 100, 125, 150, 175, 200, 225, 250, 275, 300,
];

pub const TOTAL_BALLS: u32 = 3;

/// How often the gate lets one ball through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateSchedule {
    Fixed {
        interval_ms: u64,
    },
    /// Interval after `k` openings is `initial + k * step`.
    Incremental {
        initial_ms: u64,
        step_ms: u64,
    },
}

impl GateSchedule {
    pub fn interval_after(&self, openings: u64) -> u64 {
        match *self {
            GateSchedule::Fixed { interval_ms } => interval_ms,
            GateSchedule::Incremental {
                initial_ms,
                step_ms,
            } => initial_ms + openings * step_ms,
        }
    }

    fn validate(&self) -> Result<(), KvError> {
        let first = self.interval_after(0);
        if first == 0 {
            return Err(KvError::Invalid("gate interval must be positive".into()));
        }
        Ok(())
    }
}

impl fmt::Display for GateSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GateSchedule::Fixed { interval_ms } => {
                write!(f, "fixed every {}", fmt_secs(*interval_ms))
            }
            GateSchedule::Incremental {
                initial_ms,
                step_ms,
            } => write!(
                f,
                "incremental from {} by {}",
                fmt_secs(*initial_ms),
                fmt_secs(*step_ms)
            ),
        }
    }
}

/// Formats milliseconds as seconds without a trailing `.0`.
pub fn fmt_secs(ms: u64) -> String {
    if ms.is_multiple_of(1000) {
        format!("{}", ms / 1000)
    } else {
        let s = format!("{:.3}", ms as f64 / 1000.0);
        s.trim_end_matches('0').to_owned()
    }
}

pub fn secs_to_ms(s: f64) -> Result<u64, KvError> {
    if !(s.is_finite() && s >= 0.0) {
        return Err(KvError::Invalid(format!("{s} is not a non-negative time")));
    }
    Ok((s * 1000.0).round() as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub label: String,
    pub gate: GateSchedule,
    pub initial_pick_zone: u32,
    pub duration_ms: u64,
    pub sample_times_ms: Vec<u64>,
    /// Period of the camera/contract control loop.
    pub sample_period_ms: u64,
    pub seed: u64,
    pub effort: f64,
    pub validators: Vec<KeyHash>,
    pub oracle: OracleConfig,
    pub scene: SceneStyle,
}

impl ExperimentConfig {
    fn base(label: &str, gate: GateSchedule) -> Self {
        Self {
            label: label.to_owned(),
            gate,
            initial_pick_zone: TOTAL_BALLS,
            duration_ms: 300_000,
            sample_times_ms: TABLE_TIMES.iter().map(|s| s * 1000).collect(),
            sample_period_ms: 1000,
            seed: 2019,
            effort: 1.0,
            validators: (0..3)
                .map(|i| KeyHash::new(format!("validator-{i}")))
                .collect(),
            oracle: OracleConfig::default(),
            scene: SceneStyle::default(),
        }
    }

    /// The four reference experiments `A`–`D`.
    pub fn preset(label: &str) -> Option<Self> {
        let gate = match label {
            "A" => GateSchedule::Fixed { interval_ms: 5_000 },
            "B" => GateSchedule::Fixed {
                interval_ms: 15_000,
            },
            "C" => GateSchedule::Fixed {
                interval_ms: 40_000,
            },
            "D" => GateSchedule::Incremental {
                initial_ms: 20_000,
                step_ms: 5_000,
            },
            _ => return None,
        };
        Some(Self::base(label, gate))
    }

    pub fn validate(&self) -> Result<(), KvError> {
        self.gate.validate()?;
        if self.initial_pick_zone > TOTAL_BALLS {
            return Err(KvError::Invalid(format!(
                "initial_pick_zone must be at most {TOTAL_BALLS}"
            )));
        }
        if self.sample_period_ms == 0 {
            return Err(KvError::Invalid("sample_period must be positive".into()));
        }
        if self.validators.is_empty() {
            return Err(KvError::Invalid(
                "at least one validator is required".into(),
            ));
        }
        if !(self.effort.is_finite() && self.effort >= 0.0) {
            return Err(KvError::Invalid("effort must be non-negative".into()));
        }
        if self.label.is_empty() || self.label.contains(char::is_whitespace) {
            return Err(KvError::Invalid("label must be a single word".into()));
        }
        self.oracle.validate()
    }

    /// Parses a run configuration. `preset = A` (or `label = A` naming a
    /// preset) seeds the defaults; every other key overrides them.
    pub fn from_kv_text(text: &str) -> Result<Self, KvError> {
        let mut kv = KvFile::parse(text)?;
        let preset = kv.take_raw("preset");
        let label = kv.take_raw("label");
        let mut cfg = preset
            .as_deref()
            .or(label.as_deref())
            .and_then(Self::preset)
            .unwrap_or_else(|| Self::base("custom", GateSchedule::Fixed { interval_ms: 5_000 }));
        if let Some(p) = &preset {
            if Self::preset(p).is_none() {
                return Err(KvError::Invalid(format!("unknown preset {p:?}")));
            }
        }
        if let Some(l) = label {
            cfg.label = l;
        }

        let mode = kv.take_raw("gate_mode");
        let interval: Option<f64> = kv.take("gate_interval")?;
        let step: Option<f64> = kv.take("gate_step")?;
        match mode.as_deref() {
            None if interval.is_none() && step.is_none() => {}
            None | Some("fixed") => {
                if step.is_some() {
                    return Err(KvError::Invalid(
                        "gate_step needs gate_mode = incremental".into(),
                    ));
                }
                let interval_ms = match interval {
                    Some(s) => secs_to_ms(s)?,
                    None => cfg.gate.interval_after(0),
                };
                cfg.gate = GateSchedule::Fixed { interval_ms };
            }
            Some("incremental") => {
                let initial_ms = match interval {
                    Some(s) => secs_to_ms(s)?,
                    None => cfg.gate.interval_after(0),
                };
                let step_ms = match step {
                    Some(s) => secs_to_ms(s)?,
                    None => match cfg.gate {
                        GateSchedule::Incremental { step_ms, .. } => step_ms,
                        GateSchedule::Fixed { .. } => 0,
                    },
                };
                cfg.gate = GateSchedule::Incremental {
                    initial_ms,
                    step_ms,
                };
            }
            Some(other) => {
                return Err(KvError::Invalid(format!("unknown gate_mode {other:?}")));
            }
        }

        if let Some(d) = kv.take::<f64>("duration")? {
            cfg.duration_ms = secs_to_ms(d)?;
        }
        if let Some(p) = kv.take::<f64>("sample_period")? {
            cfg.sample_period_ms = secs_to_ms(p)?;
        }
        if let Some(list) = kv.take_raw("sample_times") {
            cfg.sample_times_ms = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| KvError::BadValue {
                            key: "sample_times".into(),
                            value: s.into(),
                            reason: e.to_string(),
                        })
                        .and_then(secs_to_ms)
                })
                .collect::<Result<_, _>>()?;
        }
        kv.take_into("initial_pick_zone", &mut cfg.initial_pick_zone)?;
        kv.take_into("seed", &mut cfg.seed)?;
        kv.take_into("effort", &mut cfg.effort)?;
        if let Some(v) = kv.take_raw("validators") {
            cfg.validators = v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(KeyHash::new)
                .collect();
        }
        kv.take_into("frame_width", &mut cfg.scene.width)?;
        kv.take_into("frame_height", &mut cfg.scene.height)?;
        kv.take_into("ball_radius_min", &mut cfg.scene.radius_min)?;
        kv.take_into("ball_radius_max", &mut cfg.scene.radius_max)?;
        kv.take_into("noise", &mut cfg.scene.noise)?;
        cfg.oracle.apply(&mut kv)?;
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serializes every setting; parsing the result yields `self`.
    pub fn to_kv_text(&self) -> String {
        let (mode, interval, step) = match self.gate {
            GateSchedule::Fixed { interval_ms } => ("fixed", interval_ms, None),
            GateSchedule::Incremental {
                initial_ms,
                step_ms,
            } => ("incremental", initial_ms, Some(step_ms)),
        };
        let mut out = format!(
            "label = {}\ngate_mode = {mode}\ngate_interval = {}\n",
            self.label,
            fmt_secs(interval)
        );
        if let Some(s) = step {
            out.push_str(&format!("gate_step = {}\n", fmt_secs(s)));
        }
        let times: Vec<String> = self.sample_times_ms.iter().map(|&t| fmt_secs(t)).collect();
        let validators: Vec<&str> = self.validators.iter().map(KeyHash::as_str).collect();
        out.push_str(&format!(
            "duration = {}\nsample_period = {}\nsample_times = {}\ninitial_pick_zone = {}\nseed = {}\n\
             effort = {}\nvalidators = {}\nframe_width = {}\nframe_height = {}\n\
             ball_radius_min = {}\nball_radius_max = {}\nnoise = {}\n",
            fmt_secs(self.duration_ms),
            fmt_secs(self.sample_period_ms),
            times.join(","),
            self.initial_pick_zone,
            self.seed,
            self.effort,
            validators.join(","),
            self.scene.width,
            self.scene.height,
            self.scene.radius_min,
            self.scene.radius_max,
            self.scene.noise,
        ));
        out.push_str(&self.oracle.to_kv_text());
        out
    }

    /// `0` followed by the configured sample times that fall inside the run.
    pub fn effective_sample_times(&self) -> Vec<u64> {
        let mut times: Vec<u64> = std::iter::once(0)
            .chain(self.sample_times_ms.iter().copied())
            .filter(|&t| t <= self.duration_ms)
            .collect();
        times.sort_unstable();
        times.dedup();
        times
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_reference_schedules() {
        let a = ExperimentConfig::preset("A").unwrap();
        assert_eq!(a.gate, GateSchedule::Fixed { interval_ms: 5000 });
        assert_eq!(
            ExperimentConfig::preset("C").unwrap().gate,
            GateSchedule::Fixed { interval_ms: 40000 }
        );
        let d = ExperimentConfig::preset("D").unwrap().gate;
        assert_eq!(d.interval_after(0), 20_000);
        assert_eq!(d.interval_after(1), 25_000);
        assert_eq!(d.interval_after(4), 40_000);
        assert!(ExperimentConfig::preset("E").is_none());
    }

    #[test]
    fn text_roundtrip() {
        for l in ["A", "D"] {
            let cfg = ExperimentConfig::preset(l).unwrap();
            assert_eq!(
                ExperimentConfig::from_kv_text(&cfg.to_kv_text()).unwrap(),
                cfg
            );
        }
    }

    #[test]
    fn custom_overrides() {
        let cfg = ExperimentConfig::from_kv_text(
            "preset = B\nlabel = slow\nduration = 0\nseed = 9\ngate_mode = incremental\ngate_interval=10\ngate_step=2.5\n",
        )
        .unwrap();
        assert_eq!(cfg.label, "slow");
        assert_eq!(cfg.duration_ms, 0);
        assert_eq!(cfg.effective_sample_times(), vec![0]);
        assert_eq!(
            cfg.gate,
            GateSchedule::Incremental {
                initial_ms: 10_000,
                step_ms: 2_500
            }
        );
    }

    #[test]
    fn bad_configs_rejected() {
        assert!(ExperimentConfig::from_kv_text("gate_interval = 0").is_err());
        assert!(ExperimentConfig::from_kv_text("preset = Q").is_err());
        assert!(ExperimentConfig::from_kv_text("gate_mode = random").is_err());
        assert!(ExperimentConfig::from_kv_text("initial_pick_zone = 4").is_err());
        assert!(ExperimentConfig::from_kv_text("typo_key = 1").is_err());
    }

    #[test]
    fn seconds_formatting() {
        assert_eq!(fmt_secs(10_000), "10");
        assert_eq!(fmt_secs(2_500), "2.5");
        assert_eq!(fmt_secs(0), "0");
    }
}
