//! Generate a small scripted-video corpus, inspect its ground truth, and
//! round-trip it through the binary container.
//!
//! ```bash
//! cargo run -p vtalign --example generate_corpus
//! ```

use vtalign::corpus::{generate_corpus, io, CorpusConfig};

fn main() {
    let cfg = CorpusConfig {
        num_videos: 24,
        num_actions: 16,
        clips_per_video: 6,
        raw_dim: 32,
        max_words_per_video: 28,
        ..CorpusConfig::default()
    };
    let corpus = generate_corpus(&cfg).expect("config is feasible");

    println!(
        "{} videos, {} actions on one global cycle, {} clips each",
        corpus.videos.len(),
        cfg.num_actions,
        cfg.clips_per_video
    );
    println!(
        "projected raw cosines: ground-truth pairs {:.3}, others {:.3}",
        corpus.stats.mean_gt_cosine, corpus.stats.mean_non_gt_cosine
    );

    let video = &corpus.videos[0];
    println!("\nvideo 0: actions {:?}", video.clip_actions);
    println!("word ids {:?}", video.word_ids);
    for (t, gt) in video.gt_align.iter().enumerate() {
        println!(
            "  clip {t} (action {:>2}) -> words {:?}",
            video.clip_actions[t], gt
        );
    }

    let dir = std::env::temp_dir().join("vtalign-example-corpus");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let path = dir.join("demo.lvtp");
    io::write_corpus(&corpus, &path).expect("write");
    let loaded = io::read_corpus(&path).expect("read");
    assert_eq!(corpus, loaded);
    println!("\nround trip through {} ok", path.display());
    println!("sidecar at {}", io::sidecar_path(&path).display());
}
