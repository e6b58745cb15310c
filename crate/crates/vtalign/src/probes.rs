//! Evaluation harness over frozen features: correspondence precision,
//! temporal linear probes (order and distance), similarity-distribution
//! statistics, and toy retrieval.
//!
//! Probes never touch the gradient tape; features are extracted with the
//! frozen encoders and the linear classifiers train with a closed-form
//! softmax-regression gradient under full-batch Adam.

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::diffmath::{l2_normalize_rows, DiffError, Tensor, NORM_EPS};
use crate::encoders::{encode_value, ModelParams};
use crate::objectives::{
    discover_correspondence, warp_single, CorrespondenceMap, ObjectiveError, Strategy,
};
use crate::rng::{self, Rng};

/// Probe classifier hyperparameters: single linear layer + softmax trained
/// full-batch for 100 epochs at lr 1e-2.
const PROBE_EPOCHS: usize = 100;
const PROBE_LR: f64 = 1e-2;
const PROBE_TRAIN_FRAC: f64 = 0.7;

#[derive(Debug)]
pub enum ProbeError {
    Diff(DiffError),
    Objective(ObjectiveError),
    /// Probe data collapsed to a single class or an empty split.
    Degenerate(String),
    /// Retrieval pool below the supported minimum.
    PoolTooSmall { have: usize, need: usize },
    EmptySample(&'static str),
}

impl std::fmt::Display for ProbeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProbeError::Diff(e) => write!(f, "{e}"),
            ProbeError::Objective(e) => write!(f, "{e}"),
            ProbeError::Degenerate(msg) => write!(f, "degenerate probe data: {msg}"),
            ProbeError::PoolTooSmall { have, need } => {
                write!(f, "retrieval pool of {have} videos is below the minimum {need}")
            }
            ProbeError::EmptySample(what) => write!(f, "{what}: empty sample"),
        }
    }
}

impl std::error::Error for ProbeError {}

impl From<DiffError> for ProbeError {
    fn from(e: DiffError) -> Self {
        ProbeError::Diff(e)
    }
}
impl From<ObjectiveError> for ProbeError {
    fn from(e: ObjectiveError) -> Self {
        ProbeError::Objective(e)
    }
}

/// Held-out accuracy of one linear probe, with its confusion matrix and
/// training curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeReport {
    pub accuracy: f64,
    pub classes: usize,
    /// `confusion[true_class][predicted_class]` over the test split.
    pub confusion: Vec<Vec<usize>>,
    /// Train cross-entropy per probe epoch.
    pub train_curve: Vec<f64>,
    pub train_samples: usize,
    pub test_samples: usize,
}

/// Micro-averaged precision/recall of a correspondence map against ground
/// truth, over the map's valid clips. Clips with empty ground truth are
/// excluded from recall.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub selected_pairs: usize,
    pub hit_pairs: usize,
    pub gt_pairs: usize,
}

pub fn correspondence_precision(
    map: &CorrespondenceMap,
    gt_align: &[Vec<Vec<u32>>],
) -> PrecisionRecall {
    let mut selected_pairs = 0usize;
    let mut hit_pairs = 0usize;
    let mut gt_pairs = 0usize;
    for (i, clips) in map.selected.iter().enumerate() {
        for (t, sel) in clips.iter().enumerate() {
            if sel.is_empty() {
                continue;
            }
            let gt = &gt_align[i][t];
            selected_pairs += sel.len();
            hit_pairs += sel.iter().filter(|&&s| gt.contains(&(s as u32))).count();
            if !gt.is_empty() {
                gt_pairs += gt.len();
            }
        }
    }
    PrecisionRecall {
        precision: if selected_pairs > 0 {
            hit_pairs as f64 / selected_pairs as f64
        } else {
            0.0
        },
        recall: if gt_pairs > 0 {
            // Hits against empty-gt clips cannot occur, so the numerator is
            // already restricted to clips that count for recall.
            hit_pairs as f64 / gt_pairs as f64
        } else {
            0.0
        },
        selected_pairs,
        hit_pairs,
        gt_pairs,
    }
}

/// Frozen per-clip features of a corpus: `[num_videos * T, D]`.
pub fn extract_clip_features(params: &ModelParams, corpus: &Corpus) -> Result<Tensor, ProbeError> {
    let t = corpus.config.clips_per_video;
    let d_in = corpus.config.raw_dim;
    let mut data = Vec::with_capacity(corpus.videos.len() * t * d_in);
    for v in &corpus.videos {
        data.extend_from_slice(v.clip_raw.data());
    }
    let stacked = Tensor::new(vec![corpus.videos.len() * t, d_in], data);
    let (features, _) = encode_value(&params.video, &stacked)?;
    Ok(features)
}

/// Linear softmax regression, full batch, closed-form gradient.
fn train_linear_probe(
    features: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    train_idx: &[usize],
    test_idx: &[usize],
) -> Result<ProbeReport, ProbeError> {
    let dim = features[0].len();
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(ProbeError::Degenerate("empty train or test split".into()));
    }
    let distinct_train: std::collections::BTreeSet<usize> =
        train_idx.iter().map(|&i| labels[i]).collect();
    if distinct_train.len() < 2 {
        return Err(ProbeError::Degenerate(format!(
            "train split has {} distinct classes",
            distinct_train.len()
        )));
    }

    let mut weights = vec![0.0f64; dim * classes];
    let mut bias = vec![0.0f64; classes];
    let mut m = vec![0.0f64; dim * classes + classes];
    let mut v = vec![0.0f64; dim * classes + classes];
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
    let n_train = train_idx.len() as f64;
    let mut curve = Vec::with_capacity(PROBE_EPOCHS);

    for step in 1..=PROBE_EPOCHS {
        let mut grad_w = vec![0.0f64; dim * classes];
        let mut grad_b = vec![0.0f64; classes];
        let mut loss = 0.0f64;
        for &i in train_idx {
            let x = &features[i];
            let label = labels[i];
            let mut logits = bias.clone();
            for (j, &xj) in x.iter().enumerate() {
                if xj == 0.0 {
                    continue;
                }
                for c in 0..classes {
                    logits[c] += xj * weights[j * classes + c];
                }
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            loss += -(exps[label] / sum).ln();
            for c in 0..classes {
                let p = exps[c] / sum;
                let delta = (p - if c == label { 1.0 } else { 0.0 }) / n_train;
                grad_b[c] += delta;
                for (j, &xj) in x.iter().enumerate() {
                    grad_w[j * classes + c] += delta * xj;
                }
            }
        }
        curve.push(loss / n_train);
        let bc1 = 1.0 - b1.powi(step as i32);
        let bc2 = 1.0 - b2.powi(step as i32);
        for (k, (slot, &g)) in weights
            .iter_mut()
            .chain(bias.iter_mut())
            .zip(grad_w.iter().chain(grad_b.iter()))
            .enumerate()
        {
            m[k] = b1 * m[k] + (1.0 - b1) * g;
            v[k] = b2 * v[k] + (1.0 - b2) * g * g;
            *slot -= PROBE_LR * (m[k] / bc1) / ((v[k] / bc2).sqrt() + eps);
        }
    }

    let mut confusion = vec![vec![0usize; classes]; classes];
    let mut correct = 0usize;
    for &i in test_idx {
        let x = &features[i];
        let mut logits = bias.clone();
        for (j, &xj) in x.iter().enumerate() {
            for c in 0..classes {
                logits[c] += xj * weights[j * classes + c];
            }
        }
        let pred = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(c, _)| c)
            .unwrap();
        confusion[labels[i]][pred] += 1;
        if pred == labels[i] {
            correct += 1;
        }
    }
    Ok(ProbeReport {
        accuracy: correct as f64 / test_idx.len() as f64,
        classes,
        confusion,
        train_curve: curve,
        train_samples: train_idx.len(),
        test_samples: test_idx.len(),
    })
}

/// Disjoint train/test video split for probes.
fn split_videos(num_videos: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..num_videos).collect();
    let mut split_rng = Rng::new(rng::split(seed, rng::stream::PROBE_SPLIT));
    split_rng.shuffle(&mut order);
    let n_train = ((num_videos as f64) * PROBE_TRAIN_FRAC).floor().max(1.0) as usize;
    let n_train = n_train.min(num_videos - 1);
    (order[..n_train].to_vec(), order[n_train..].to_vec())
}

/// Order probe: predict a clip's temporal index from its frozen feature.
pub fn order_probe(
    features: &Tensor,
    num_videos: usize,
    clips_per_video: usize,
    seed: u64,
) -> Result<ProbeReport, ProbeError> {
    if num_videos < 2 {
        return Err(ProbeError::Degenerate("need at least 2 videos".into()));
    }
    let t = clips_per_video;
    let rows: Vec<Vec<f64>> = (0..num_videos * t).map(|r| features.row(r).to_vec()).collect();
    let labels: Vec<usize> = (0..num_videos * t).map(|r| r % t).collect();
    let (train_videos, test_videos) = split_videos(num_videos, seed);
    let expand = |videos: &[usize]| -> Vec<usize> {
        videos
            .iter()
            .flat_map(|&i| (i * t..(i + 1) * t).collect::<Vec<_>>())
            .collect()
    };
    train_linear_probe(&rows, &labels, t, &expand(&train_videos), &expand(&test_videos))
}

/// Distance probe: predict `|t1 - t2|` from the concatenated features of a
/// clip pair. Pairs are all unordered pairs within each video, ordered
/// (t1 < t2).
pub fn distance_probe(
    features: &Tensor,
    num_videos: usize,
    clips_per_video: usize,
    seed: u64,
) -> Result<ProbeReport, ProbeError> {
    if num_videos < 2 {
        return Err(ProbeError::Degenerate("need at least 2 videos".into()));
    }
    let t = clips_per_video;
    if t < 2 {
        return Err(ProbeError::Degenerate("need at least 2 clips per video".into()));
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut owner = Vec::new();
    for video in 0..num_videos {
        for t1 in 0..t {
            for t2 in (t1 + 1)..t {
                let mut x = features.row(video * t + t1).to_vec();
                x.extend_from_slice(features.row(video * t + t2));
                rows.push(x);
                labels.push(t2 - t1 - 1);
                owner.push(video);
            }
        }
    }
    let (train_videos, test_videos) = split_videos(num_videos, seed);
    let in_set = |set: &[usize], v: usize| set.contains(&v);
    let train_idx: Vec<usize> = (0..rows.len())
        .filter(|&i| in_set(&train_videos, owner[i]))
        .collect();
    let test_idx: Vec<usize> = (0..rows.len())
        .filter(|&i| in_set(&test_videos, owner[i]))
        .collect();
    train_linear_probe(&rows, &labels, t - 1, &train_idx, &test_idx)
}

/// One of the three cosine sample sets of the similarity analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSet {
    pub mean: f64,
    pub variance: f64,
    pub count: usize,
    /// 64 fixed bins over [-1, 1].
    pub histogram: Vec<usize>,
}

pub const HISTOGRAM_BINS: usize = 64;

impl SampleSet {
    fn from_samples(samples: &[f64]) -> Self {
        let count = samples.len();
        let mean = samples.iter().sum::<f64>() / count.max(1) as f64;
        let variance = if count > 1 {
            samples.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / count as f64
        } else {
            0.0
        };
        let mut histogram = vec![0usize; HISTOGRAM_BINS];
        for &x in samples {
            let bin = (((x + 1.0) / 2.0) * HISTOGRAM_BINS as f64).floor() as isize;
            let bin = bin.clamp(0, HISTOGRAM_BINS as isize - 1) as usize;
            histogram[bin] += 1;
        }
        SampleSet {
            mean,
            variance,
            count,
            histogram,
        }
    }
}

/// Reference `cos(v_t, q_plus)`, bias `cos(v_{t+d}, q_plus)`, and projection
/// `cos(z_t, q_plus)` over identical (video, clip, offset) draws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarityStats {
    pub reference: SampleSet,
    pub bias: SampleSet,
    pub projection: SampleSet,
}

#[allow(clippy::too_many_arguments)]
pub fn similarity_distributions(
    params: &ModelParams,
    corpus: &Corpus,
    k: usize,
    strategy: Strategy,
    delta_max: usize,
    num_draws: usize,
    seed: u64,
) -> Result<SimilarityStats, ProbeError> {
    if corpus.videos.is_empty() || num_draws == 0 {
        return Err(ProbeError::EmptySample("similarity distributions"));
    }
    let t = corpus.config.clips_per_video;
    let mut draw_rng = Rng::new(rng::split(seed, rng::stream::SIMILARITY_DRAWS));
    let mut strategy_rng = Rng::new(rng::split(seed, rng::stream::STRATEGY_RANDOM));

    // Per-video: encode clips and words, discover the map, pool positives.
    struct VideoFeatures {
        clips: Tensor,
        pooled: Vec<Option<Vec<f64>>>,
    }
    let mut per_video = Vec::with_capacity(corpus.videos.len());
    for v in &corpus.videos {
        let (clips, _) = encode_value(&params.video, &v.clip_raw)?;
        let (words, _) = encode_value(&params.text, &v.word_raw)?;
        let map = discover_correspondence(
            &clips,
            &words,
            &[0, v.num_words()],
            t,
            k,
            strategy,
            &mut strategy_rng,
        )?;
        let mut pooled: Vec<Option<Vec<f64>>> = vec![None; t];
        for clip in 0..t {
            let sel = &map.selected[0][clip];
            if sel.is_empty() {
                continue;
            }
            let mut mean = vec![0.0f64; words.cols()];
            for &s in sel {
                for (m, x) in mean.iter_mut().zip(words.row(s)) {
                    *m += x;
                }
            }
            for m in mean.iter_mut() {
                *m /= sel.len() as f64;
            }
            let dim = mean.len();
            let (normed, flags) =
                l2_normalize_rows(&Tensor::new(vec![1, dim], mean), NORM_EPS)?;
            if !flags[0] {
                pooled[clip] = Some(normed.data().to_vec());
            }
        }
        per_video.push(VideoFeatures { clips, pooled });
    }

    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let mut reference = Vec::with_capacity(num_draws);
    let mut bias = Vec::with_capacity(num_draws);
    let mut projection = Vec::with_capacity(num_draws);
    let mut attempts = 0usize;
    let max_attempts = num_draws * 100;
    while reference.len() < num_draws {
        attempts += 1;
        if attempts > max_attempts {
            return Err(ProbeError::EmptySample(
                "could not find enough valid (clip, offset, word) draws",
            ));
        }
        let video = draw_rng.next_below(per_video.len());
        let clip = draw_rng.next_below(t);
        let sup: Vec<i64> = (-(delta_max as i64)..=delta_max as i64)
            .filter(|&d| d != 0)
            .filter(|&d| {
                let ctx = clip as i64 + d;
                ctx >= 0 && ctx < t as i64
            })
            .collect();
        let delta = sup[draw_rng.next_below(sup.len())];
        let Some(qplus) = per_video[video].pooled[clip].as_ref() else {
            continue;
        };
        let v_ref = per_video[video].clips.row(clip);
        let v_ctx = per_video[video].clips.row((clip as i64 + delta) as usize);
        let (z, _) = warp_single(v_ctx, delta, &params.warp)?;
        reference.push(dot(v_ref, qplus));
        bias.push(dot(v_ctx, qplus));
        projection.push(dot(&z, qplus));
    }

    Ok(SimilarityStats {
        reference: SampleSet::from_samples(&reference),
        bias: SampleSet::from_samples(&bias),
        projection: SampleSet::from_samples(&projection),
    })
}

/// R@k and median rank over a retrieval pool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    pub median_rank: f64,
    pub pool: usize,
}

/// Minimum pool size for [`retrieval_eval`].
pub const RETRIEVAL_MIN_POOL: usize = 10;

/// Ranks from a full score matrix (entry `(i, j)` scores video i against
/// sentence j; the match is the diagonal). Ties rank the lower sentence
/// index first.
pub fn retrieval_from_scores(scores: &Tensor) -> Result<RetrievalReport, ProbeError> {
    let n = scores.rows();
    if n == 0 {
        return Err(ProbeError::EmptySample("retrieval"));
    }
    let mut ranks = Vec::with_capacity(n);
    for i in 0..n {
        let row = scores.row(i);
        let own = row[i];
        let mut rank = 1usize;
        for (j, &s) in row.iter().enumerate() {
            if s > own || (s == own && j < i) {
                rank += 1;
            }
        }
        ranks.push(rank);
    }
    let frac_at = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n as f64;
    let mut sorted = ranks.clone();
    sorted.sort_unstable();
    let median = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    };
    Ok(RetrievalReport {
        r1: frac_at(1),
        r5: frac_at(5),
        r10: frac_at(10),
        median_rank: median,
        pool: n,
    })
}

/// Rank every video's pooled feature against all pooled sentences.
pub fn retrieval_eval(params: &ModelParams, corpus: &Corpus) -> Result<RetrievalReport, ProbeError> {
    let n = corpus.videos.len();
    if n < RETRIEVAL_MIN_POOL {
        return Err(ProbeError::PoolTooSmall {
            have: n,
            need: RETRIEVAL_MIN_POOL,
        });
    }
    let pooled_unit = |rows: &Tensor| -> Result<Vec<f64>, ProbeError> {
        let (m, d) = (rows.rows(), rows.cols());
        let mut mean = vec![0.0f64; d];
        for i in 0..m {
            for (s, x) in mean.iter_mut().zip(rows.row(i)) {
                *s += x;
            }
        }
        for s in mean.iter_mut() {
            *s /= m as f64;
        }
        let (normed, _) = l2_normalize_rows(&Tensor::new(vec![1, d], mean), NORM_EPS)?;
        Ok(normed.data().to_vec())
    };
    let mut vbar = Vec::with_capacity(n);
    let mut qbar = Vec::with_capacity(n);
    for v in &corpus.videos {
        let (clips, _) = encode_value(&params.video, &v.clip_raw)?;
        let (words, _) = encode_value(&params.text, &v.word_raw)?;
        vbar.push(pooled_unit(&clips)?);
        qbar.push(pooled_unit(&words)?);
    }
    let d = vbar[0].len();
    let mut scores = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            scores[i * n + j] = (0..d).map(|c| vbar[i][c] * qbar[j][c]).sum();
        }
    }
    retrieval_from_scores(&Tensor::new(vec![n, n], scores))
}

/// Evaluation settings: discovery parameters mirror the training config;
/// `similarity_draws` sizes the Fig-style cosine sample sets.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k: usize,
    pub strategy: Strategy,
    pub delta_max: usize,
    pub similarity_draws: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 3,
            strategy: Strategy::ClipTopK,
            delta_max: 4,
            similarity_draws: 2000,
            seed: 1,
        }
    }
}

/// Everything the evaluation command reports for one (model, corpus) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub correspondence: PrecisionRecall,
    pub order: ProbeReport,
    pub distance: ProbeReport,
    pub retrieval: RetrievalReport,
    pub similarity: SimilarityStats,
}

/// Run every probe against frozen features of `corpus`.
pub fn evaluate_model(
    params: &ModelParams,
    corpus: &Corpus,
    cfg: &EvalConfig,
) -> Result<EvalReport, ProbeError> {
    if corpus.videos.is_empty() {
        return Err(ProbeError::EmptySample("evaluation corpus"));
    }
    let t = corpus.config.clips_per_video;

    // Correspondence precision under the model's own discovery settings.
    let mut strategy_rng = Rng::new(rng::split(cfg.seed, rng::stream::STRATEGY_RANDOM));
    let mut selected = Vec::with_capacity(corpus.videos.len());
    let mut gt = Vec::with_capacity(corpus.videos.len());
    for v in &corpus.videos {
        let (clips, _) = encode_value(&params.video, &v.clip_raw)?;
        let (words, _) = encode_value(&params.text, &v.word_raw)?;
        let map = discover_correspondence(
            &clips,
            &words,
            &[0, v.num_words()],
            t,
            cfg.k,
            cfg.strategy,
            &mut strategy_rng,
        )?;
        selected.push(map.selected.into_iter().next().unwrap());
        gt.push(v.gt_align.clone());
    }
    let map = CorrespondenceMap {
        k: cfg.k,
        strategy: cfg.strategy,
        selected,
    };
    let correspondence = correspondence_precision(&map, &gt);

    let features = extract_clip_features(params, corpus)?;
    let order = order_probe(&features, corpus.videos.len(), t, cfg.seed)?;
    let distance = distance_probe(&features, corpus.videos.len(), t, cfg.seed)?;
    let retrieval = retrieval_eval(params, corpus)?;
    let similarity = similarity_distributions(
        params,
        corpus,
        cfg.k,
        cfg.strategy,
        cfg.delta_max,
        cfg.similarity_draws,
        cfg.seed,
    )?;
    Ok(EvalReport {
        correspondence,
        order,
        distance,
        retrieval,
        similarity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot_features(num_videos: usize, t: usize) -> Tensor {
        // Feature = exact one-hot of the clip index.
        let mut data = vec![0.0; num_videos * t * t];
        for v in 0..num_videos {
            for c in 0..t {
                data[(v * t + c) * t + c] = 1.0;
            }
        }
        Tensor::new(vec![num_videos * t, t], data)
    }

    fn noise_features(num_videos: usize, t: usize, dim: usize, seed: u64) -> Tensor {
        let mut rng = Rng::new(seed);
        Tensor::new(
            vec![num_videos * t, dim],
            (0..num_videos * t * dim).map(|_| rng.next_gaussian()).collect(),
        )
    }

    #[test]
    fn order_probe_on_one_hot_index_is_perfect() {
        let f = one_hot_features(20, 4);
        let report = order_probe(&f, 20, 4, 1).unwrap();
        assert!(report.accuracy > 0.99, "accuracy {}", report.accuracy);
        // Confusion rows sum to per-class test counts.
        let total: usize = report.confusion.iter().flatten().sum();
        assert_eq!(total, report.test_samples);
    }

    #[test]
    fn order_probe_on_noise_is_chance_level() {
        let t = 4;
        let n = 60;
        let f = noise_features(n, t, 16, 9);
        let report = order_probe(&f, n, t, 2).unwrap();
        let chance = 1.0 / t as f64;
        let sigma = (chance * (1.0 - chance) / report.test_samples as f64).sqrt();
        assert!(
            (report.accuracy - chance).abs() < 3.0 * sigma + 0.05,
            "accuracy {} should be near chance {chance}",
            report.accuracy
        );
    }

    #[test]
    fn distance_probe_on_one_hot_index_is_perfect() {
        let f = one_hot_features(20, 4);
        let report = distance_probe(&f, 20, 4, 3).unwrap();
        assert!(report.accuracy > 0.99, "accuracy {}", report.accuracy);
        assert_eq!(report.classes, 3);
    }

    #[test]
    fn distance_probe_on_noise_is_chance_level() {
        let t = 4;
        let n = 60;
        let f = noise_features(n, t, 16, 11);
        let report = distance_probe(&f, n, t, 4).unwrap();
        // Classes are imbalanced (3 pairs at distance 1, 2 at 2, 1 at 3 for
        // T=4); majority-class chance is 3/6.
        assert!(
            report.accuracy < 0.65,
            "noise distance accuracy {} suspiciously high",
            report.accuracy
        );
    }

    #[test]
    fn probe_is_deterministic() {
        let f = noise_features(30, 4, 8, 21);
        let a = order_probe(&f, 30, 4, 5).unwrap();
        let b = order_probe(&f, 30, 4, 5).unwrap();
        assert_eq!(a.accuracy, b.accuracy);
        assert_eq!(a.confusion, b.confusion);
        assert_eq!(a.train_curve, b.train_curve);
    }

    #[test]
    fn precision_recall_hand_counts() {
        // One video, one clip, K=3 selected, gt of size 2 with 2 hits.
        let map = CorrespondenceMap {
            k: 3,
            strategy: Strategy::ClipTopK,
            selected: vec![vec![vec![0, 1, 4]]],
        };
        let gt = vec![vec![vec![0u32, 1u32]]];
        let pr = correspondence_precision(&map, &gt);
        assert!((pr.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((pr.recall - 1.0).abs() < 1e-12);

        // Perfect selection.
        let map = CorrespondenceMap {
            k: 2,
            strategy: Strategy::ClipTopK,
            selected: vec![vec![vec![0, 1]]],
        };
        let pr = correspondence_precision(&map, &gt);
        assert_eq!(pr.precision, 1.0);
        assert_eq!(pr.recall, 1.0);

        // Disjoint selection.
        let map = CorrespondenceMap {
            k: 2,
            strategy: Strategy::ClipTopK,
            selected: vec![vec![vec![2, 3]]],
        };
        let pr = correspondence_precision(&map, &gt);
        assert_eq!(pr.precision, 0.0);
    }

    #[test]
    fn retrieval_identity_scores_are_perfect() {
        let mut scores = vec![0.0; 25];
        for i in 0..5 {
            scores[i * 5 + i] = 1.0;
        }
        let r = retrieval_from_scores(&Tensor::new(vec![5, 5], scores)).unwrap();
        assert_eq!(r.r1, 1.0);
        assert_eq!(r.median_rank, 1.0);
    }

    #[test]
    fn retrieval_hand_enumerated_three_by_three() {
        // Rows 0 and 2 rank their own sentence first; row 1 ranks its own
        // second behind sentence 0.
        let scores = Tensor::from_rows(&[
            vec![0.9, 0.1, 0.0],
            vec![0.8, 0.7, 0.1],
            vec![0.0, 0.2, 0.6],
        ]);
        let r = retrieval_from_scores(&scores).unwrap();
        assert!((r.r1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.median_rank, 1.0);
    }

    #[test]
    fn retrieval_recall_is_monotone_in_k() {
        let mut rng = Rng::new(33);
        let n = 12;
        let scores = Tensor::new(
            vec![n, n],
            (0..n * n).map(|_| rng.next_gaussian()).collect(),
        );
        let r = retrieval_from_scores(&scores).unwrap();
        assert!(r.r1 <= r.r5 && r.r5 <= r.r10);
        assert!(r.median_rank >= 1.0);
    }

    #[test]
    fn retrieval_tie_prefers_lower_sentence_index() {
        // Row 1 ties between sentence 0 and its own sentence 1: the lower
        // index wins, pushing the correct match to rank 2.
        let scores = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5]]);
        let r = retrieval_from_scores(&scores).unwrap();
        assert!((r.r1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rank_permutation_consistency() {
        // Relabeling pool order does not change the metric values.
        let mut rng = Rng::new(44);
        let n = 8;
        let base: Vec<f64> = (0..n * n).map(|_| rng.next_gaussian()).collect();
        let r_base =
            retrieval_from_scores(&Tensor::new(vec![n, n], base.clone())).unwrap();
        let perm = [3usize, 1, 7, 0, 5, 2, 6, 4];
        let mut permuted = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                permuted[i * n + j] = base[perm[i] * n + perm[j]];
            }
        }
        let r_perm = retrieval_from_scores(&Tensor::new(vec![n, n], permuted)).unwrap();
        assert_eq!(r_base.r1, r_perm.r1);
        assert_eq!(r_base.r5, r_perm.r5);
        assert_eq!(r_base.median_rank, r_perm.median_rank);
    }
}
