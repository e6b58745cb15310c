//! Run one ablation suite at toy scale and print its CSV.
//!
//! ```bash
//! cargo run -p vtalign --example ablation_mini
//! cargo run -p vtalign --example ablation_mini -- lt-mode
//! ```

use vtalign::cli::ablate::{run_suite, Suite};
use vtalign::corpus::{generate_corpus, CorpusConfig};
use vtalign::trainer::TrainConfig;

fn main() {
    let suite: Suite = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "lt-mode".to_string())
        .parse()
        .expect("valid suite name");

    let corpus = generate_corpus(&CorpusConfig {
        num_videos: 40,
        num_actions: 16,
        clips_per_video: 6,
        raw_dim: 32,
        max_words_per_video: 28,
        ..CorpusConfig::default()
    })
    .expect("feasible config");

    let base = TrainConfig {
        epochs: 6,
        batch_size: 8,
        lr: 1e-3,
        hidden_dim: 24,
        embed_dim: 12,
        seed: 13,
        ..TrainConfig::default()
    };

    println!("running suite {:?} ({} points)...\n", suite.name(), suite.points().len());
    let csv = run_suite(suite, &base, &corpus).expect("suite runs");
    print!("{csv}");
}
