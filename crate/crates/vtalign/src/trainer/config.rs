//! Training configuration and its plain-text `key=value` file format.
//!
//! Lines are `key=value`, `#` starts a comment, blank lines are ignored.
//! Unknown keys are rejected with their line number, as are unparsable
//! values. The canonical text rendering (sorted keys) feeds the FNV-1a
//! config hash that checkpoints embed, so any config change refuses a
//! resume.

use serde::{Deserialize, Serialize};

use crate::objectives::{DenomConfig, LossWeights, Strategy, TemporalMode, TotalLossOptions};

/// Learning-rate decay factor applied at each milestone.
pub const LR_DECAY_FACTOR: f64 = 0.1;

/// Coarse-weight schedule across epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleMode {
    /// Constant lambda_c.
    Weighted,
    /// lambda_c decays exponentially from 1 toward 0.01 across the run.
    Warmup,
    /// Coarse-only first half, then fine+temporal only.
    Multistage,
}

impl std::fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ScheduleMode::Weighted => "weighted",
            ScheduleMode::Warmup => "warmup",
            ScheduleMode::Multistage => "multistage",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for ScheduleMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weighted" => Ok(ScheduleMode::Weighted),
            "warmup" => Ok(ScheduleMode::Warmup),
            "multistage" => Ok(ScheduleMode::Multistage),
            other => Err(format!(
                "unknown schedule {other:?} (expected weighted, warmup, multistage)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Fractions of the run after which lr multiplies by
    /// [`LR_DECAY_FACTOR`]; strictly increasing, in (0, 1).
    pub lr_decay_milestones: Vec<f64>,
    pub schedule: ScheduleMode,
    pub lambda_coarse: f64,
    pub lambda_fine: f64,
    pub lambda_temporal: f64,
    pub tau: f64,
    pub k: usize,
    pub delta_max: usize,
    pub strategy: Strategy,
    pub lt_mode: TemporalMode,
    pub seed: u64,
    /// Write a checkpoint every this many epochs; 0 means final only.
    pub checkpoint_every: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub denom_include_own_sentence: bool,
    pub denom_include_pooled_positive: bool,
    pub warp_use_sign: bool,
    pub warp_use_magnitude: bool,
    pub coarse_symmetric: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 32,
            lr: 1e-4,
            lr_decay_milestones: vec![0.5, 0.8],
            schedule: ScheduleMode::Weighted,
            lambda_coarse: 0.5,
            lambda_fine: 1.0,
            lambda_temporal: 1.0,
            tau: 0.07,
            k: 3,
            delta_max: 4,
            strategy: Strategy::ClipTopK,
            lt_mode: TemporalMode::Cross,
            seed: 1,
            checkpoint_every: 0,
            hidden_dim: 64,
            embed_dim: 32,
            denom_include_own_sentence: true,
            denom_include_pooled_positive: false,
            warp_use_sign: true,
            warp_use_magnitude: true,
            coarse_symmetric: false,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError {
    /// (line number, message); line 0 marks whole-file problems.
    pub problems: Vec<(usize, String)>,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "config errors:")?;
        for (line, msg) in &self.problems {
            if *line == 0 {
                writeln!(f, "  {msg}")?;
            } else {
                writeln!(f, "  line {line}: {msg}")?;
            }
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        if self.epochs < 1 {
            problems.push((0, "epochs must be >= 1".to_string()));
        }
        if self.batch_size < 1 {
            problems.push((0, "batch_size must be >= 1".to_string()));
        }
        if !(self.lr > 0.0) {
            problems.push((0, format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.tau > 0.0) {
            problems.push((0, format!("tau must be > 0, got {}", self.tau)));
        }
        let mut prev = 0.0;
        for &m in &self.lr_decay_milestones {
            if !(m > prev && m < 1.0) {
                problems.push((
                    0,
                    format!("lr_decay_milestones must be strictly increasing in (0, 1), got {m}"),
                ));
                break;
            }
            prev = m;
        }
        for (name, v) in [
            ("lambda_coarse", self.lambda_coarse),
            ("lambda_fine", self.lambda_fine),
            ("lambda_temporal", self.lambda_temporal),
        ] {
            if !(v >= 0.0) {
                problems.push((0, format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.k < 1 {
            problems.push((0, "k must be >= 1".to_string()));
        }
        if self.delta_max < 1 {
            problems.push((0, "delta_max must be >= 1".to_string()));
        }
        if self.hidden_dim < 1 || self.embed_dim < 1 {
            problems.push((0, "hidden_dim and embed_dim must be >= 1".to_string()));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { problems })
        }
    }

    /// Canonical `key=value` rendering with sorted keys. This is both the
    /// config-file output format and the input to the config hash.
    pub fn to_canonical_text(&self) -> String {
        let mut lines = vec![
            format!("batch_size={}", self.batch_size),
            format!("checkpoint_every={}", self.checkpoint_every),
            format!("coarse_symmetric={}", self.coarse_symmetric),
            format!("delta_max={}", self.delta_max),
            format!(
                "denom_include_own_sentence={}",
                self.denom_include_own_sentence
            ),
            format!(
                "denom_include_pooled_positive={}",
                self.denom_include_pooled_positive
            ),
            format!("embed_dim={}", self.embed_dim),
            format!("epochs={}", self.epochs),
            format!("hidden_dim={}", self.hidden_dim),
            format!("k={}", self.k),
            format!("lambda_coarse={}", self.lambda_coarse),
            format!("lambda_fine={}", self.lambda_fine),
            format!("lambda_temporal={}", self.lambda_temporal),
            format!("lr={}", self.lr),
            format!(
                "lr_decay_milestones={}",
                self.lr_decay_milestones
                    .iter()
                    .map(|m| m.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            format!("lt_mode={}", self.lt_mode),
            format!("schedule={}", self.schedule),
            format!("seed={}", self.seed),
            format!("strategy={}", self.strategy),
            format!("tau={}", self.tau),
            format!("warp_use_magnitude={}", self.warp_use_magnitude),
            format!("warp_use_sign={}", self.warp_use_sign),
        ];
        lines.push(String::new());
        lines.join("\n")
    }

    /// FNV-1a 64 over the canonical text; stable across platforms.
    pub fn hash(&self) -> u64 {
        fnv1a64(self.to_canonical_text().as_bytes())
    }

    /// Loss pieces assembled for the objectives layer; lambdas may be
    /// overridden per epoch by the schedule.
    pub fn loss_options(&self, lambdas: (f64, f64, f64)) -> TotalLossOptions {
        TotalLossOptions {
            weights: LossWeights {
                lambda_coarse: lambdas.0,
                lambda_fine: lambdas.1,
                lambda_temporal: lambdas.2,
                tau: self.tau,
            },
            k: self.k,
            strategy: self.strategy,
            delta_max: self.delta_max,
            temporal_mode: self.lt_mode,
            denom: DenomConfig {
                include_own_sentence: self.denom_include_own_sentence,
                include_pooled_positive: self.denom_include_pooled_positive,
            },
            warp_use_sign: self.warp_use_sign,
            warp_use_magnitude: self.warp_use_magnitude,
            coarse_symmetric: self.coarse_symmetric,
        }
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// Parse config text, starting from defaults. Collects every problem with
/// its line number instead of stopping at the first.
pub fn parse_config(text: &str) -> Result<TrainConfig, ConfigError> {
    let mut cfg = TrainConfig::default();
    let mut problems: Vec<(usize, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(at) => &raw[..at],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            problems.push((line_no, format!("expected key=value, got {line:?}")));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        let mut set = |res: Result<(), String>| {
            if let Err(msg) = res {
                problems.push((line_no, format!("{key}: {msg}")));
            }
        };
        macro_rules! parse_into {
            ($field:expr) => {
                set(value
                    .parse()
                    .map(|v| $field = v)
                    .map_err(|e| format!("{e}")))
            };
        }
        match key {
            "epochs" => parse_into!(cfg.epochs),
            "batch_size" => parse_into!(cfg.batch_size),
            "lr" => parse_into!(cfg.lr),
            "lr_decay_milestones" => {
                let parsed: Result<Vec<f64>, _> = if value.is_empty() {
                    Ok(Vec::new())
                } else {
                    value.split(',').map(|p| p.trim().parse::<f64>()).collect()
                };
                set(parsed
                    .map(|v| cfg.lr_decay_milestones = v)
                    .map_err(|e| format!("{e}")));
            }
            "schedule" => parse_into!(cfg.schedule),
            "lambda_coarse" => parse_into!(cfg.lambda_coarse),
            "lambda_fine" => parse_into!(cfg.lambda_fine),
            "lambda_temporal" => parse_into!(cfg.lambda_temporal),
            "tau" => parse_into!(cfg.tau),
            "k" => parse_into!(cfg.k),
            "delta_max" => parse_into!(cfg.delta_max),
            "strategy" => parse_into!(cfg.strategy),
            "lt_mode" => parse_into!(cfg.lt_mode),
            "seed" => parse_into!(cfg.seed),
            "checkpoint_every" => parse_into!(cfg.checkpoint_every),
            "hidden_dim" => parse_into!(cfg.hidden_dim),
            "embed_dim" => parse_into!(cfg.embed_dim),
            "denom_include_own_sentence" => parse_into!(cfg.denom_include_own_sentence),
            "denom_include_pooled_positive" => parse_into!(cfg.denom_include_pooled_positive),
            "warp_use_sign" => parse_into!(cfg.warp_use_sign),
            "warp_use_magnitude" => parse_into!(cfg.warp_use_magnitude),
            "coarse_symmetric" => parse_into!(cfg.coarse_symmetric),
            other => problems.push((line_no, format!("unknown key {other:?}"))),
        }
    }
    if !problems.is_empty() {
        return Err(ConfigError { problems });
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_roundtrips_through_parser() {
        let mut cfg = TrainConfig::default();
        cfg.epochs = 17;
        cfg.strategy = Strategy::WordTopK;
        cfg.lr_decay_milestones = vec![0.25, 0.75];
        cfg.seed = 99;
        let text = cfg.to_canonical_text();
        let parsed = parse_config(&text).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn unknown_key_is_rejected_with_line_number() {
        let err = parse_config("epochs=5\nbogus_key=1\n").unwrap_err();
        assert_eq!(err.problems.len(), 1);
        assert_eq!(err.problems[0].0, 2);
        assert!(err.problems[0].1.contains("bogus_key"));
    }

    #[test]
    fn bad_value_reports_line() {
        let err = parse_config("epochs=banana\n").unwrap_err();
        assert_eq!(err.problems[0].0, 1);
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let cfg = parse_config("# full line comment\n\nepochs=9  # trailing\n").unwrap();
        assert_eq!(cfg.epochs, 9);
    }

    #[test]
    fn hash_changes_with_any_field() {
        let base = TrainConfig::default();
        let mut with_lr = base.clone();
        with_lr.lr = 2e-4;
        assert_ne!(base.hash(), with_lr.hash());
        assert_eq!(base.hash(), TrainConfig::default().hash());
    }

    #[test]
    fn invalid_milestones_rejected() {
        let err = parse_config("lr_decay_milestones=0.8,0.5\n").unwrap_err();
        assert!(err
            .problems
            .iter()
            .any(|(_, m)| m.contains("strictly increasing")));
    }
}
