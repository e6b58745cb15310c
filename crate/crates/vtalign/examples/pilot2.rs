//! Pilot 2: convergence behavior of with/without temporal loss.

use vtalign::corpus::{generate_corpus, split_corpus, CorpusConfig};
use vtalign::probes::{evaluate_model, EvalConfig};
use vtalign::trainer::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(150);

    let rho: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let coupling: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.75);
    let corpus_cfg = CorpusConfig {
        num_videos: 640,
        pos_strength_video: rho,
        pos_strength_word: rho,
        mixer_coupling: coupling,
        ..CorpusConfig::default()
    };
    let full = generate_corpus(&corpus_cfg).unwrap();
    let (train_c, eval_c) = split_corpus(&full, 0.8, 7).unwrap();

    for (name, lambda_t) in [("with-Lt", 1.0), ("no-Lt  ", 0.0)] {
        let cfg = TrainConfig {
            epochs,
            lr,
            seed: 11,
            lambda_temporal: lambda_t,
            ..TrainConfig::default()
        };
        let out = train(&cfg, &train_c, None).unwrap();
        let last = out.report.epochs.last().unwrap();
        let eval = evaluate_model(&out.params, &eval_c, &EvalConfig::default()).unwrap();
        eprintln!(
            "{name} lr={lr} E={epochs}: loss {:.4} | prec {:.3} | Ao {:.3} Ad {:.3} | R@1 {:.3} | sim r/b/p {:.3}/{:.3}/{:.3}",
            last.loss_total,
            eval.correspondence.precision,
            eval.order.accuracy,
            eval.distance.accuracy,
            eval.retrieval.r1,
            eval.similarity.reference.mean,
            eval.similarity.bias.mean,
            eval.similarity.projection.mean,
        );
    }
}
