//! Ablation sweeps: each suite enumerates one hyperparameter grid, trains
//! every point on a shared train/eval split, and appends one CSV row per
//! point. A failed point becomes a `failed` row and the sweep continues.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::corpus::{split_corpus, Corpus};
use crate::objectives::{Strategy, TemporalMode};
use crate::probes::{evaluate_model, EvalConfig, EvalReport};
use crate::rng::{self};
use crate::trainer::{train, ScheduleMode, TrainConfig};

/// Fraction of the suite corpus used for training; the rest evaluates.
const ABLATION_TRAIN_FRAC: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Strategy,
    K,
    WarpComponents,
    DeltaMax,
    LossComponents,
    Schedule,
    LtMode,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Strategy,
        Suite::K,
        Suite::WarpComponents,
        Suite::DeltaMax,
        Suite::LossComponents,
        Suite::Schedule,
        Suite::LtMode,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Strategy => "strategy",
            Suite::K => "k",
            Suite::WarpComponents => "warp-components",
            Suite::DeltaMax => "delta-max",
            Suite::LossComponents => "loss-components",
            Suite::Schedule => "schedule",
            Suite::LtMode => "lt-mode",
        }
    }

    /// Grid labels plus the config override for each point.
    pub fn points(&self) -> Vec<(String, Box<dyn Fn(&mut TrainConfig)>)> {
        match self {
            Suite::Strategy => Strategy::ALL
                .iter()
                .map(|&s| {
                    let label = s.to_string();
                    let f: Box<dyn Fn(&mut TrainConfig)> =
                        Box::new(move |c: &mut TrainConfig| c.strategy = s);
                    (label, f)
                })
                .collect(),
            Suite::K => (1usize..=4)
                .map(|k| {
                    let f: Box<dyn Fn(&mut TrainConfig)> =
                        Box::new(move |c: &mut TrainConfig| c.k = k);
                    (format!("k={k}"), f)
                })
                .collect(),
            Suite::WarpComponents => [(true, true), (true, false), (false, true), (false, false)]
                .iter()
                .map(|&(sign, magnitude)| {
                    let label = format!(
                        "sign={}|magnitude={}",
                        if sign { "on" } else { "off" },
                        if magnitude { "on" } else { "off" }
                    );
                    let f: Box<dyn Fn(&mut TrainConfig)> = Box::new(move |c: &mut TrainConfig| {
                        c.warp_use_sign = sign;
                        c.warp_use_magnitude = magnitude;
                    });
                    (label, f)
                })
                .collect(),
            Suite::DeltaMax => (2usize..=5)
                .map(|d| {
                    let f: Box<dyn Fn(&mut TrainConfig)> =
                        Box::new(move |c: &mut TrainConfig| c.delta_max = d);
                    (format!("delta_max={d}"), f)
                })
                .collect(),
            Suite::LossComponents => {
                let rows: [(&str, f64, f64); 4] = [
                    ("coarse+fine+temporal", 1.0, 1.0),
                    ("coarse+fine", 1.0, 0.0),
                    ("coarse+temporal", 0.0, 1.0),
                    ("coarse-only", 0.0, 0.0),
                ];
                rows.iter()
                    .map(|&(label, f_on, t_on)| {
                        let f: Box<dyn Fn(&mut TrainConfig)> =
                            Box::new(move |c: &mut TrainConfig| {
                                c.lambda_fine *= f_on;
                                c.lambda_temporal *= t_on;
                            });
                        (label.to_string(), f)
                    })
                    .collect()
            }
            Suite::Schedule => [
                ScheduleMode::Weighted,
                ScheduleMode::Warmup,
                ScheduleMode::Multistage,
            ]
            .iter()
            .map(|&mode| {
                let f: Box<dyn Fn(&mut TrainConfig)> =
                    Box::new(move |c: &mut TrainConfig| c.schedule = mode);
                (mode.to_string(), f)
            })
            .collect(),
            Suite::LtMode => [TemporalMode::Cross, TemporalMode::Intra]
                .iter()
                .map(|&mode| {
                    let f: Box<dyn Fn(&mut TrainConfig)> =
                        Box::new(move |c: &mut TrainConfig| c.lt_mode = mode);
                    (mode.to_string(), f)
                })
                .collect(),
        }
    }
}

impl FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .iter()
            .find(|suite| suite.name() == s)
            .copied()
            .ok_or_else(|| {
                format!(
                    "unknown suite {s:?} (expected one of {})",
                    Suite::ALL
                        .iter()
                        .map(|s| s.name())
                        .collect::<Vec<_>>()
                        .join(", ")
                )
            })
    }
}

/// Fixed CSV schema; columns never reorder between runs.
pub const CSV_HEADER: &str = "suite,point,label,seed,status,loss_total,precision,recall,accu_o,accu_d,r1,r5,r10,mdr,sim_ref_mean,sim_bias_mean,sim_proj_mean,error";

/// Seed for one grid point: one splitmix round over (base seed, index).
pub fn point_seed(base: u64, index: usize) -> u64 {
    rng::split(base ^ (index as u64 + 1), rng::stream::ABLATION_POINT)
}

fn csv_escape(msg: &str) -> String {
    msg.replace([',', '\n'], ";")
}

fn metric_row(suite: Suite, idx: usize, label: &str, seed: u64, loss: f64, eval: &EvalReport) -> String {
    format!(
        "{},{},{},{},ok,{},{},{},{},{},{},{},{},{},{},{},{},\n",
        suite.name(),
        idx,
        label,
        seed,
        loss,
        eval.correspondence.precision,
        eval.correspondence.recall,
        eval.order.accuracy,
        eval.distance.accuracy,
        eval.retrieval.r1,
        eval.retrieval.r5,
        eval.retrieval.r10,
        eval.retrieval.median_rank,
        eval.similarity.reference.mean,
        eval.similarity.bias.mean,
        eval.similarity.projection.mean,
    )
}

fn failed_row(suite: Suite, idx: usize, label: &str, seed: u64, error: &str) -> String {
    format!(
        "{},{},{},{},failed,,,,,,,,,,,,,{}\n",
        suite.name(),
        idx,
        label,
        seed,
        csv_escape(error)
    )
}

/// Train and evaluate every grid point sequentially; returns the CSV text.
pub fn run_suite(suite: Suite, base: &TrainConfig, corpus: &Corpus) -> Result<String, String> {
    let (train_half, eval_half) =
        split_corpus(corpus, ABLATION_TRAIN_FRAC, base.seed).map_err(|e| e.to_string())?;
    let mut csv = String::new();
    writeln!(csv, "{CSV_HEADER}").expect("string write");
    for (idx, (label, apply)) in suite.points().into_iter().enumerate() {
        let mut cfg = base.clone();
        apply(&mut cfg);
        cfg.seed = point_seed(base.seed, idx);
        let row = match run_point(&cfg, &train_half, &eval_half) {
            Ok((loss, eval)) => metric_row(suite, idx, &label, cfg.seed, loss, &eval),
            Err(msg) => failed_row(suite, idx, &label, cfg.seed, &msg),
        };
        csv.push_str(&row);
    }
    Ok(csv)
}

fn run_point(
    cfg: &TrainConfig,
    train_half: &Corpus,
    eval_half: &Corpus,
) -> Result<(f64, EvalReport), String> {
    let outcome = train(cfg, train_half, None).map_err(|e| e.to_string())?;
    let eval_cfg = EvalConfig {
        k: cfg.k,
        strategy: cfg.strategy,
        delta_max: cfg.delta_max,
        similarity_draws: 2000,
        seed: cfg.seed,
    };
    let eval = evaluate_model(&outcome.params, eval_half, &eval_cfg).map_err(|e| e.to_string())?;
    Ok((outcome.report.final_loss.unwrap_or(f64::NAN), eval))
}

/// Sanity used by tests and the acceptance suite: a well-formed suite CSV
/// has the fixed header and one row per grid point.
pub fn csv_is_well_formed(csv: &str, suite: Suite) -> bool {
    let mut lines = csv.lines();
    if lines.next() != Some(CSV_HEADER) {
        return false;
    }
    let expected_columns = CSV_HEADER.split(',').count();
    let rows: Vec<&str> = lines.collect();
    rows.len() == suite.points().len()
        && rows
            .iter()
            .all(|r| r.split(',').count() == expected_columns)
}
