//! Discover clip-word correspondences with each strategy and score them
//! against the corpus ground truth.
//!
//! ```bash
//! cargo run -p vtalign --example correspondence_demo
//! ```

use vtalign::corpus::{generate_corpus, split_corpus, CorpusConfig};
use vtalign::objectives::Strategy;
use vtalign::probes::{evaluate_model, EvalConfig};
use vtalign::trainer::{train, TrainConfig};

fn main() {
    let corpus = generate_corpus(&CorpusConfig {
        num_videos: 96,
        num_actions: 16,
        clips_per_video: 6,
        raw_dim: 32,
        max_words_per_video: 28,
        ..CorpusConfig::default()
    })
    .expect("feasible config");
    let (train_half, eval_half) = split_corpus(&corpus, 0.75, 5).expect("split");

    let cfg = TrainConfig {
        epochs: 25,
        batch_size: 16,
        lr: 1e-3,
        hidden_dim: 32,
        embed_dim: 16,
        seed: 9,
        ..TrainConfig::default()
    };
    println!("training {} epochs on {} videos...", cfg.epochs, train_half.videos.len());
    let outcome = train(&cfg, &train_half, None).expect("training runs");

    println!("\ndiscovery quality on {} held-out videos (K = {}):", eval_half.videos.len(), cfg.k);
    for strategy in Strategy::ALL {
        let eval = evaluate_model(
            &outcome.params,
            &eval_half,
            &EvalConfig {
                k: cfg.k,
                strategy,
                delta_max: cfg.delta_max,
                similarity_draws: 500,
                seed: 1,
            },
        )
        .expect("evaluation runs");
        println!(
            "  {:<9}  precision {:.3}  recall {:.3}",
            strategy.to_string(),
            eval.correspondence.precision,
            eval.correspondence.recall
        );
    }
}
