//! Diagnose where trained discovery hits fail: per-clip hit histogram,
//! empty-gt contribution, and ranks of true group words.

use vtalign::corpus::{generate_corpus, split_corpus, CorpusConfig};
use vtalign::encoders::encode_value;
use vtalign::trainer::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lambda_t: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let cfg_corpus = CorpusConfig {
        num_videos: 640,
        mixer_coupling: 0.75,
        ..CorpusConfig::default()
    };
    let full = generate_corpus(&cfg_corpus).unwrap();
    let (train_c, eval_c) = split_corpus(&full, 0.8, 7).unwrap();
    let cfg = TrainConfig {
        epochs: 60,
        lr: 1e-3,
        seed: 11,
        lambda_temporal: lambda_t,
        ..TrainConfig::default()
    };
    let out = train(&cfg, &train_c, None).unwrap();

    let mut hit_hist = [0usize; 4];
    let mut empty_gt_clips = 0usize;
    let mut true_rank_sum = 0usize;
    let mut true_rank_count = 0usize;
    let mut miss_examples = 0;
    for v in &eval_c.videos {
        let (clips, _) = encode_value(&out.params.video, &v.clip_raw).unwrap();
        let (words, _) = encode_value(&out.params.text, &v.word_raw).unwrap();
        for t in 0..v.num_clips() {
            let sims: Vec<f64> = (0..v.num_words())
                .map(|s| {
                    clips
                        .row(t)
                        .iter()
                        .zip(words.row(s))
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect();
            let mut order: Vec<usize> = (0..v.num_words()).collect();
            order.sort_by(|&a, &b| sims[b].partial_cmp(&sims[a]).unwrap().then(a.cmp(&b)));
            let gt = &v.gt_align[t];
            if gt.is_empty() {
                empty_gt_clips += 1;
                continue;
            }
            let top3: Vec<usize> = order[..3].to_vec();
            let hits = top3.iter().filter(|&&s| gt.contains(&(s as u32))).count();
            hit_hist[hits] += 1;
            for &g in gt {
                let rank = order.iter().position(|&s| s == g as usize).unwrap() + 1;
                true_rank_sum += rank;
                true_rank_count += 1;
            }
            if hits == 0 && miss_examples < 5 {
                miss_examples += 1;
                let picked_ids: Vec<u32> = top3.iter().map(|&s| v.word_ids[s]).collect();
                let own_action = v.clip_actions[t];
                eprintln!(
                    "miss: clip {t} action {own_action} picked word-ids {picked_ids:?} (gt ids all {own_action}), S={}",
                    v.num_words()
                );
            }
        }
    }
    let total: usize = hit_hist.iter().sum();
    eprintln!("\nlambda_t={lambda_t}  clips with gt: {total}  empty-gt clips: {empty_gt_clips}");
    for (h, &c) in hit_hist.iter().enumerate() {
        eprintln!("  {h}/3 hits: {c} ({:.1}%)", 100.0 * c as f64 / total as f64);
    }
    eprintln!(
        "mean rank of true group words: {:.2} (of ~{} words)",
        true_rank_sum as f64 / true_rank_count as f64,
        eval_c.videos[0].num_words()
    );
}
