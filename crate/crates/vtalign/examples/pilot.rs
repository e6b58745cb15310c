//! Pilot: desk-scale run to observe training dynamics and probe metrics.

use std::time::Instant;

use vtalign::corpus::{generate_corpus, split_corpus, CorpusConfig};
use vtalign::objectives::Strategy;
use vtalign::probes::{evaluate_model, EvalConfig};
use vtalign::trainer::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1e-4);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60);
    let rho: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let coupling: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.5);

    let corpus_cfg = CorpusConfig {
        num_videos: 640,
        pos_strength_video: rho,
        pos_strength_word: rho,
        mixer_coupling: coupling,
        ..CorpusConfig::default()
    };
    let t0 = Instant::now();
    let full = generate_corpus(&corpus_cfg).unwrap();
    let (train_c, eval_c) = split_corpus(&full, 0.8, 7).unwrap();
    eprintln!(
        "corpus: {} train / {} eval, gt-cos {:.3} vs non-gt {:.3} [{} ms]",
        train_c.videos.len(),
        eval_c.videos.len(),
        full.stats.mean_gt_cosine,
        full.stats.mean_non_gt_cosine,
        t0.elapsed().as_millis()
    );

    for (name, strategy, lambda_t) in [
        ("clip-topk", Strategy::ClipTopK, 1.0),
        ("random   ", Strategy::Random, 1.0),
        ("word-topk", Strategy::WordTopK, 1.0),
        ("no-Lt    ", Strategy::ClipTopK, 0.0),
        ("coarse   ", Strategy::ClipTopK, -1.0), // sentinel: coarse-only
    ] {
        let mut cfg = TrainConfig {
            epochs,
            lr,
            seed: 11,
            strategy,
            ..TrainConfig::default()
        };
        if lambda_t == 0.0 {
            cfg.lambda_temporal = 0.0;
        }
        if lambda_t < 0.0 {
            cfg.lambda_temporal = 0.0;
            cfg.lambda_fine = 0.0;
        }
        let t1 = Instant::now();
        let out = train(&cfg, &train_c, None).unwrap();
        let train_ms = t1.elapsed().as_millis();
        let first = &out.report.epochs[0];
        let last = out.report.epochs.last().unwrap();
        let t2 = Instant::now();
        let eval = evaluate_model(
            &out.params,
            &eval_c,
            &EvalConfig {
                k: cfg.k,
                strategy: cfg.strategy,
                delta_max: cfg.delta_max,
                similarity_draws: 2000,
                seed: 3,
            },
        )
        .unwrap();
        let eval_ms = t2.elapsed().as_millis();
        eprintln!(
            "{name} loss {:.4}->{:.4} | prec {:.3} rec {:.3} | Ao {:.3} Ad {:.3} | R@1 {:.3} MdR {:.1} | sim r/b/p {:.3}/{:.3}/{:.3} | {train_ms}+{eval_ms} ms",
            first.loss_total,
            last.loss_total,
            eval.correspondence.precision,
            eval.correspondence.recall,
            eval.order.accuracy,
            eval.distance.accuracy,
            eval.retrieval.r1,
            eval.retrieval.median_rank,
            eval.similarity.reference.mean,
            eval.similarity.bias.mean,
            eval.similarity.projection.mean,
        );
    }
}
