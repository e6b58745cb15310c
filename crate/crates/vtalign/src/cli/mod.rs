//! Command-line surface: `gen-data`, `train`, `eval`, `ablate`,
//! `gradcheck`.
//!
//! Exit codes are a stable contract: 0 success, 1 usage error, 2 data or
//! format error, 3 numerical failure. All state is explicit in flags and
//! config files; no environment variables are read.

pub mod ablate;
pub mod gradcheck;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::corpus::{generate_corpus, io as corpus_io, split_corpus, CorpusConfig};
use crate::encoders::checkpoint::read_checkpoint;
use crate::encoders::ModelParams;
use crate::objectives::Strategy;
use crate::probes::{evaluate_model, EvalConfig, SampleSet, HISTOGRAM_BINS};
use crate::trainer::{parse_config, resume, train, TrainConfig, TrainError};

pub use ablate::Suite;
pub use gradcheck::{run_gradcheck, GradcheckRow, GRADCHECK_TOLERANCE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}\n\n{USAGE}"),
            CliError::Data(msg) => write!(f, "{msg}"),
            CliError::Numeric(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match &e {
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub const USAGE: &str = "usage:
  vtalign gen-data --out FILE [--videos N] [--actions N] [--clips N]
          [--seed N] [--function-words N] [--max-words N] [--raw-dim N]
          [--sigma F] [--content-rate F] [--group-min N] [--group-max N]
          [--pos-video F] [--pos-word F] [--coupling F]
          [--eval-out FILE] [--eval-frac F]
  vtalign train --data FILE --out DIR [--config FILE] [--resume CKPT]
  vtalign eval --ckpt FILE --data FILE --report DIR [--seed N] [--k N]
          [--strategy S] [--delta-max N] [--draws N]
  vtalign ablate --suite NAME --data FILE --out FILE [--base-config FILE]
  vtalign gradcheck [--inject-error]

suites: strategy, k, warp-components, delta-max, loss-components,
        schedule, lt-mode";

/// Minimal flag parser: `--name value` pairs plus boolean switches.
struct Flags {
    values: BTreeMap<String, String>,
    switches: Vec<String>,
}

impl Flags {
    fn parse(args: &[String], bool_flags: &[&str], value_flags: &[&str]) -> Result<Flags, CliError> {
        let mut values = BTreeMap::new();
        let mut switches = Vec::new();
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            let Some(name) = arg.strip_prefix("--") else {
                return Err(CliError::Usage(format!("unexpected argument {arg:?}")));
            };
            if bool_flags.contains(&name) {
                switches.push(name.to_string());
                i += 1;
                continue;
            }
            if !value_flags.contains(&name) {
                return Err(CliError::Usage(format!("unknown flag --{name}")));
            }
            let Some(value) = args.get(i + 1) else {
                return Err(CliError::Usage(format!("flag --{name} needs a value")));
            };
            if values.insert(name.to_string(), value.clone()).is_some() {
                return Err(CliError::Usage(format!("flag --{name} given twice")));
            }
            i += 2;
        }
        Ok(Flags { values, switches })
    }

    fn get<T: std::str::FromStr>(&self, name: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(name) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("--{name} {raw:?}: {e}"))),
        }
    }

    fn require<T: std::str::FromStr>(&self, name: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(name)?
            .ok_or_else(|| CliError::Usage(format!("missing required flag --{name}")))
    }

    fn has(&self, name: &str) -> bool {
        self.switches.iter().any(|s| s == name)
    }
}

/// Dispatch a full argument vector (without the binary name).
pub fn run(args: &[String]) -> Result<(), CliError> {
    let Some((command, rest)) = args.split_first() else {
        return Err(CliError::Usage("no command given".to_string()));
    };
    match command.as_str() {
        "gen-data" => cmd_gen_data(rest),
        "train" => cmd_train(rest),
        "eval" => cmd_eval(rest),
        "ablate" => cmd_ablate(rest),
        "gradcheck" => cmd_gradcheck(rest),
        other => Err(CliError::Usage(format!("unknown command {other:?}"))),
    }
}

fn cmd_gen_data(args: &[String]) -> Result<(), CliError> {
    let flags = Flags::parse(
        args,
        &[],
        &[
            "out", "videos", "actions", "clips", "seed", "function-words", "max-words",
            "raw-dim", "sigma", "content-rate", "group-min", "group-max", "pos-video",
            "pos-word", "coupling", "eval-out", "eval-frac",
        ],
    )?;
    let out: PathBuf = flags.require("out")?;
    let mut cfg = CorpusConfig::default();
    if let Some(v) = flags.get("videos")? {
        cfg.num_videos = v;
    }
    if let Some(v) = flags.get("actions")? {
        cfg.num_actions = v;
    }
    if let Some(v) = flags.get("clips")? {
        cfg.clips_per_video = v;
    }
    if let Some(v) = flags.get("seed")? {
        cfg.seed = v;
    }
    if let Some(v) = flags.get("function-words")? {
        cfg.num_function_words = v;
    }
    if let Some(v) = flags.get("max-words")? {
        cfg.max_words_per_video = v;
    }
    if let Some(v) = flags.get("raw-dim")? {
        cfg.raw_dim = v;
    }
    if let Some(v) = flags.get("sigma")? {
        cfg.noise_sigma = v;
    }
    if let Some(v) = flags.get("content-rate")? {
        cfg.content_word_rate = v;
    }
    if let Some(v) = flags.get("group-min")? {
        cfg.group_min = v;
    }
    if let Some(v) = flags.get("group-max")? {
        cfg.group_max = v;
    }
    if let Some(v) = flags.get("pos-video")? {
        cfg.pos_strength_video = v;
    }
    if let Some(v) = flags.get("pos-word")? {
        cfg.pos_strength_word = v;
    }
    if let Some(v) = flags.get("coupling")? {
        cfg.mixer_coupling = v;
    }
    let eval_out: Option<PathBuf> = flags.get("eval-out")?;
    let eval_frac: f64 = flags.get("eval-frac")?.unwrap_or(0.2);

    let corpus = generate_corpus(&cfg).map_err(|e| CliError::Data(e.to_string()))?;
    match &eval_out {
        None => {
            corpus_io::write_corpus(&corpus, &out).map_err(|e| CliError::Data(e.to_string()))?;
            println!("wrote {} videos to {}", corpus.videos.len(), out.display());
        }
        Some(eval_path) => {
            let (train_half, eval_half) = split_corpus(&corpus, 1.0 - eval_frac, cfg.seed)
                .map_err(|e| CliError::Data(e.to_string()))?;
            corpus_io::write_corpus(&train_half, &out)
                .map_err(|e| CliError::Data(e.to_string()))?;
            corpus_io::write_corpus(&eval_half, eval_path)
                .map_err(|e| CliError::Data(e.to_string()))?;
            println!(
                "wrote {} train videos to {} and {} eval videos to {}",
                train_half.videos.len(),
                out.display(),
                eval_half.videos.len(),
                eval_path.display()
            );
        }
    }
    // Config echo.
    println!(
        "actions={} function_words={} clips={} max_words={} raw_dim={} sigma={} videos={} content_rate={} groups={}..{} pos_video={} pos_word={} coupling={} seed={}",
        cfg.num_actions,
        cfg.num_function_words,
        cfg.clips_per_video,
        cfg.max_words_per_video,
        cfg.raw_dim,
        cfg.noise_sigma,
        cfg.num_videos,
        cfg.content_word_rate,
        cfg.group_min,
        cfg.group_max,
        cfg.pos_strength_video,
        cfg.pos_strength_word,
        cfg.mixer_coupling,
        cfg.seed
    );
    Ok(())
}

fn load_train_config(path: Option<&Path>) -> Result<TrainConfig, CliError> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("read {}: {e}", path.display())))?;
            parse_config(&text).map_err(|e| CliError::Data(e.to_string()))
        }
    }
}

fn cmd_train(args: &[String]) -> Result<(), CliError> {
    let flags = Flags::parse(args, &[], &["data", "out", "config", "resume"])?;
    let data: PathBuf = flags.require("data")?;
    let out: PathBuf = flags.require("out")?;
    let config_path: Option<PathBuf> = flags.get("config")?;
    let resume_path: Option<PathBuf> = flags.get("resume")?;

    let cfg = load_train_config(config_path.as_deref())?;
    let corpus = corpus_io::read_corpus(&data).map_err(|e| CliError::Data(e.to_string()))?;
    let outcome = match &resume_path {
        None => train(&cfg, &corpus, Some(&out))?,
        Some(ckpt) => resume(ckpt, &cfg, &corpus, Some(&out))?,
    };
    for r in &outcome.report.epochs {
        eprintln!(
            "epoch {:>4}  lr {:.2e}  lambda_c {:.3}  total {:.6}  [{} ms]",
            r.epoch, r.lr, r.lambda_coarse, r.loss_total, r.wall_ms
        );
    }
    println!(
        "final loss {}  checkpoint {}",
        outcome
            .report
            .final_loss
            .map(|v| v.to_string())
            .unwrap_or_else(|| "n/a".to_string()),
        outcome
            .final_checkpoint
            .as_deref()
            .map(|p| p.display().to_string())
            .unwrap_or_default()
    );
    Ok(())
}

fn cmd_eval(args: &[String]) -> Result<(), CliError> {
    let flags = Flags::parse(
        args,
        &[],
        &["ckpt", "data", "report", "seed", "k", "strategy", "delta-max", "draws"],
    )?;
    let ckpt: PathBuf = flags.require("ckpt")?;
    let data: PathBuf = flags.require("data")?;
    let report_dir: PathBuf = flags.require("report")?;
    let mut eval_cfg = EvalConfig::default();
    if let Some(v) = flags.get("seed")? {
        eval_cfg.seed = v;
    }
    if let Some(v) = flags.get("k")? {
        eval_cfg.k = v;
    }
    if let Some(v) = flags.get::<Strategy>("strategy")? {
        eval_cfg.strategy = v;
    }
    if let Some(v) = flags.get("delta-max")? {
        eval_cfg.delta_max = v;
    }
    if let Some(v) = flags.get("draws")? {
        eval_cfg.similarity_draws = v;
    }

    let corpus = corpus_io::read_corpus(&data).map_err(|e| CliError::Data(e.to_string()))?;
    let (manifest, blobs) = read_checkpoint(&ckpt).map_err(|e| CliError::Data(e.to_string()))?;
    if manifest.raw_dim != corpus.config.raw_dim {
        return Err(CliError::Data(format!(
            "checkpoint raw_dim {} does not match corpus raw_dim {}",
            manifest.raw_dim, corpus.config.raw_dim
        )));
    }
    let params = ModelParams::from_named(&blobs).map_err(CliError::Data)?;
    let report = evaluate_model(&params, &corpus, &eval_cfg)
        .map_err(|e| CliError::Data(e.to_string()))?;

    std::fs::create_dir_all(&report_dir)
        .map_err(|e| CliError::Data(format!("create {}: {e}", report_dir.display())))?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Data(format!("encode report: {e}")))?;
    std::fs::write(report_dir.join("eval.json"), json + "\n")
        .map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(
        report_dir.join("similarity_histogram.csv"),
        histogram_csv(&report.similarity.reference, &report.similarity.bias, &report.similarity.projection),
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    println!(
        "precision {:.4} recall {:.4} accu_o {:.4} accu_d {:.4} r1 {:.4} r5 {:.4} r10 {:.4} mdr {} sim r/b/p {:.4}/{:.4}/{:.4}",
        report.correspondence.precision,
        report.correspondence.recall,
        report.order.accuracy,
        report.distance.accuracy,
        report.retrieval.r1,
        report.retrieval.r5,
        report.retrieval.r10,
        report.retrieval.median_rank,
        report.similarity.reference.mean,
        report.similarity.bias.mean,
        report.similarity.projection.mean,
    );
    Ok(())
}

fn histogram_csv(reference: &SampleSet, bias: &SampleSet, projection: &SampleSet) -> String {
    let mut out = String::from("bin_left,bin_right,reference,bias,projection\n");
    for bin in 0..HISTOGRAM_BINS {
        let left = -1.0 + 2.0 * bin as f64 / HISTOGRAM_BINS as f64;
        let right = -1.0 + 2.0 * (bin + 1) as f64 / HISTOGRAM_BINS as f64;
        out.push_str(&format!(
            "{left},{right},{},{},{}\n",
            reference.histogram[bin], bias.histogram[bin], projection.histogram[bin]
        ));
    }
    out
}

fn cmd_ablate(args: &[String]) -> Result<(), CliError> {
    let flags = Flags::parse(args, &[], &["suite", "data", "out", "base-config"])?;
    let suite: Suite = flags.require("suite")?;
    let data: PathBuf = flags.require("data")?;
    let out: PathBuf = flags.require("out")?;
    let base_config: Option<PathBuf> = flags.get("base-config")?;
    let cfg = load_train_config(base_config.as_deref())?;
    let corpus = corpus_io::read_corpus(&data).map_err(|e| CliError::Data(e.to_string()))?;
    let csv = ablate::run_suite(suite, &cfg, &corpus).map_err(CliError::Data)?;
    std::fs::write(&out, &csv).map_err(|e| CliError::Data(e.to_string()))?;
    let failed = csv.lines().filter(|l| l.contains(",failed,")).count();
    println!(
        "suite {} wrote {} rows to {} ({failed} failed)",
        suite.name(),
        csv.lines().count() - 1,
        out.display()
    );
    Ok(())
}

fn cmd_gradcheck(args: &[String]) -> Result<(), CliError> {
    let flags = Flags::parse(args, &["inject-error"], &[])?;
    let rows = run_gradcheck(flags.has("inject-error"))
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let mut all_pass = true;
    for row in &rows {
        println!(
            "{:<10} max_rel_error {:>12.3e}  {}",
            row.component,
            row.max_rel_error,
            if row.pass { "PASS" } else { "FAIL" }
        );
        all_pass &= row.pass;
    }
    if all_pass {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "gradient check failed (tolerance {GRADCHECK_TOLERANCE})"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(args: &[&str]) -> Vec<String> {
        args.iter().map(|a| a.to_string()).collect()
    }

    #[test]
    fn unknown_command_is_usage_error() {
        let err = run(&s(&["frobnicate"])).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_USAGE);
    }

    #[test]
    fn missing_required_flag_is_usage_error() {
        let err = run(&s(&["gen-data"])).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_USAGE);
        let err = run(&s(&["train", "--data", "x.lvtp"])).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_USAGE);
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let err = run(&s(&["gen-data", "--out", "x", "--bogus", "1"])).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_USAGE);
    }

    #[test]
    fn missing_data_file_is_data_error() {
        let err = run(&s(&[
            "train",
            "--data",
            "/nonexistent/corpus.lvtp",
            "--out",
            "/tmp/vtalign-cli-test-out",
        ]))
        .unwrap_err();
        assert_eq!(err.exit_code(), EXIT_DATA);
    }

    #[test]
    fn rejected_corpus_config_is_data_error() {
        let err = run(&s(&["gen-data", "--out", "/tmp/x.lvtp", "--clips", "1"])).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_DATA);
    }
}
