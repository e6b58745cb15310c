//! Temporal linear probes and toy retrieval over frozen features.
//!
//! ```bash
//! cargo run -p vtalign --example probes_and_retrieval
//! ```

use vtalign::corpus::{generate_corpus, split_corpus, CorpusConfig};
use vtalign::probes::{distance_probe, extract_clip_features, order_probe, retrieval_eval};
use vtalign::trainer::{train, TrainConfig};

fn main() {
    let corpus = generate_corpus(&CorpusConfig {
        num_videos: 128,
        num_actions: 16,
        clips_per_video: 6,
        raw_dim: 32,
        max_words_per_video: 28,
        ..CorpusConfig::default()
    })
    .expect("feasible config");
    let (train_half, eval_half) = split_corpus(&corpus, 0.75, 5).expect("split");

    let cfg = TrainConfig {
        epochs: 30,
        batch_size: 16,
        lr: 1e-3,
        hidden_dim: 32,
        embed_dim: 16,
        seed: 2,
        ..TrainConfig::default()
    };
    println!("training {} epochs...", cfg.epochs);
    let outcome = train(&cfg, &train_half, None).expect("training runs");

    let t = eval_half.config.clips_per_video;
    let features = extract_clip_features(&outcome.params, &eval_half).expect("features");
    let order = order_probe(&features, eval_half.videos.len(), t, 11).expect("order probe");
    let distance = distance_probe(&features, eval_half.videos.len(), t, 11).expect("distance probe");
    println!(
        "\norder probe:    accuracy {:.3} over {} held-out clips (chance {:.3})",
        order.accuracy,
        order.test_samples,
        1.0 / t as f64
    );
    println!(
        "distance probe: accuracy {:.3} over {} held-out pairs (chance {:.3})",
        distance.accuracy,
        distance.test_samples,
        1.0 / (t as f64 - 1.0)
    );

    let retrieval = retrieval_eval(&outcome.params, &eval_half).expect("retrieval");
    println!(
        "retrieval over {} videos: R@1 {:.3}  R@5 {:.3}  R@10 {:.3}  MdR {}",
        retrieval.pool, retrieval.r1, retrieval.r5, retrieval.r10, retrieval.median_rank
    );
}
