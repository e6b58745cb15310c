//! Synthetic scripted narrated-video corpus with known clip-word ground
//! truth.
//!
//! Actions live on one global cycle (a seeded permutation of the action
//! ids). Every video is a window of `clips_per_video` consecutive cycle
//! positions starting at a uniformly random position, so for any clip pair
//! `(t, t+d)` the action at `t` is the unique cycle predecessor of the
//! action at `t+d` at distance `d` — the map a context-warping head has to
//! learn.
//!
//! Raw clip features are `E_v[action] + pos_strength_video * P_v[t] + noise`;
//! each clip emits, with probability `content_word_rate`, a sense-group of
//! `group_min..=group_max` content words `E_w[action] + pos_strength_word *
//! P_w[t] + noise` sharing the clip's action id. Function words are pure
//! noise drawn from a separate id range and never match any clip.
//!
//! The position components `P_v[t]`, `P_w[t]` are linear rays: one fixed
//! unit direction per modality scaled by the centered index, normalized to
//! `[-1, 1]` across the window. They give clip and word features a within-video
//! temporal signature (without one, no encoder could recover temporal
//! structure, because the window phase is uniform), and the ray form makes
//! a temporal shift an affine operation, which is the only kind of warp a
//! single linear-plus-rectifier head can express.
//!
//! The word mixer rows are partially coupled to the video mixer rows
//! (`E_w[a] = normalize(c * E_v[a] + sqrt(1 - c^2) * fresh)` with
//! `c = mixer_coupling`), so ground-truth pairs are correlated in raw space
//! and the cross-modal task is learnable rather than a pure lookup. The
//! coupling seeds correspondence discovery the way the pretrained encoders
//! seed it at full scale. Generation is a bit-deterministic
//! function of (config, seed); all draws come from documented
//! [`crate::rng`] streams.

pub mod io;

use serde::{Deserialize, Serialize};

use crate::diffmath::{l2_normalize_rows, Tensor, NORM_EPS};
use crate::rng::{self, Rng};

/// Bound assumed for warp offsets when validating corpus feasibility; keeps
/// every window offset realizable on the global cycle.
pub const DELTA_MAX_DEFAULT: usize = 4;

/// Mixer rows must stay pairwise dissimilar; regenerate above this cosine.
const MIXER_MAX_COSINE: f64 = 0.5;

const MIXER_MAX_ATTEMPTS: usize = 200;

#[derive(Debug)]
pub enum CorpusError {
    Io(std::io::Error),
    /// File does not start with the `LVTP` magic.
    BadMagic,
    UnsupportedVersion { found: u32 },
    /// File ended before the declared payload was complete.
    Truncated,
    /// Structural invariant violated (on load or by a config).
    Invalid(String),
    InfeasibleConfig(String),
    /// A requested split would leave one side empty.
    SplitEmpty,
}

impl std::fmt::Display for CorpusError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CorpusError::Io(e) => write!(f, "corpus i/o: {e}"),
            CorpusError::BadMagic => write!(f, "corpus file: bad magic bytes (expected LVTP)"),
            CorpusError::UnsupportedVersion { found } => {
                write!(f, "corpus file: unsupported format version {found} (expected 1)")
            }
            CorpusError::Truncated => write!(f, "corpus file: truncated payload"),
            CorpusError::Invalid(msg) => write!(f, "corpus invalid: {msg}"),
            CorpusError::InfeasibleConfig(msg) => write!(f, "infeasible corpus config: {msg}"),
            CorpusError::SplitEmpty => write!(f, "split would leave one side empty"),
        }
    }
}

impl std::error::Error for CorpusError {}

impl From<std::io::Error> for CorpusError {
    fn from(e: std::io::Error) -> Self {
        CorpusError::Io(e)
    }
}

/// Generation parameters. `clips_per_video` is the paper-scale T = 8 by
/// default; sense-groups of 3-4 words per clip follow the rationale that a
/// short word sequence, not a single token, names one action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub num_actions: usize,
    pub num_function_words: usize,
    pub clips_per_video: usize,
    pub max_words_per_video: usize,
    pub raw_dim: usize,
    pub noise_sigma: f64,
    pub num_videos: usize,
    pub content_word_rate: f64,
    /// Words per content sense-group, inclusive bounds.
    pub group_min: usize,
    pub group_max: usize,
    /// Strength of the within-video position component in clip features.
    pub pos_strength_video: f64,
    /// Strength of the within-video position component in content words.
    pub pos_strength_word: f64,
    /// Cosine coupling between the video and word mixer row of one action;
    /// the raw-space prior that seeds correspondence discovery.
    pub mixer_coupling: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            num_actions: 32,
            num_function_words: 4,
            clips_per_video: 8,
            max_words_per_video: 48,
            raw_dim: 40,
            noise_sigma: 0.1,
            num_videos: 512,
            content_word_rate: 0.9,
            group_min: 4,
            group_max: 5,
            pos_strength_video: 1.0,
            pos_strength_word: 1.0,
            mixer_coupling: 0.5,
            seed: 0x5EED,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let t = self.clips_per_video;
        if t < 2 {
            return Err(CorpusError::InfeasibleConfig(format!(
                "clips_per_video must be >= 2, got {t}"
            )));
        }
        if self.num_actions < t + DELTA_MAX_DEFAULT {
            return Err(CorpusError::InfeasibleConfig(format!(
                "num_actions ({}) must be >= clips_per_video + {DELTA_MAX_DEFAULT} ({})",
                self.num_actions,
                t + DELTA_MAX_DEFAULT
            )));
        }
        if !(self.content_word_rate > 0.0 && self.content_word_rate <= 1.0) {
            return Err(CorpusError::InfeasibleConfig(format!(
                "content_word_rate must be in (0, 1], got {}",
                self.content_word_rate
            )));
        }
        if self.noise_sigma < 0.0 {
            return Err(CorpusError::InfeasibleConfig("noise_sigma must be >= 0".into()));
        }
        if self.raw_dim == 0 {
            return Err(CorpusError::InfeasibleConfig("raw_dim must be >= 1".into()));
        }
        if self.group_min == 0 || self.group_min > self.group_max {
            return Err(CorpusError::InfeasibleConfig(format!(
                "need 1 <= group_min <= group_max, got {}..{}",
                self.group_min, self.group_max
            )));
        }
        if self.max_words_per_video < t * self.group_max {
            return Err(CorpusError::InfeasibleConfig(format!(
                "max_words_per_video ({}) cannot hold {} clips x group_max {} content words",
                self.max_words_per_video, t, self.group_max
            )));
        }
        if self.pos_strength_video < 0.0 || self.pos_strength_word < 0.0 {
            return Err(CorpusError::InfeasibleConfig(
                "position strengths must be >= 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.mixer_coupling) {
            return Err(CorpusError::InfeasibleConfig(format!(
                "mixer_coupling must be in [0, 1), got {}",
                self.mixer_coupling
            )));
        }
        Ok(())
    }
}

/// One scripted video: actions, raw features, paired words, ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSample {
    /// Action id per clip; consecutive positions on the global cycle.
    pub clip_actions: Vec<u32>,
    /// T x raw_dim clip features.
    pub clip_raw: Tensor,
    /// Token id per word; content words reuse their action id, function
    /// words live at `num_actions + j`.
    pub word_ids: Vec<u32>,
    /// S x raw_dim word features.
    pub word_raw: Tensor,
    pub word_is_content: Vec<bool>,
    /// Per clip, the sorted word positions whose id equals the clip action.
    pub gt_align: Vec<Vec<u32>>,
}

impl VideoSample {
    pub fn num_clips(&self) -> usize {
        self.clip_actions.len()
    }

    pub fn num_words(&self) -> usize {
        self.word_ids.len()
    }

    /// Recompute the alignment that `gt_align` must equal.
    pub fn recompute_gt(&self) -> Vec<Vec<u32>> {
        self.clip_actions
            .iter()
            .map(|&a| {
                self.word_ids
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w == a)
                    .map(|(s, _)| s as u32)
                    .collect()
            })
            .collect()
    }

    pub fn validate(&self, cfg: &CorpusConfig) -> Result<(), CorpusError> {
        let t = cfg.clips_per_video;
        if self.clip_actions.len() != t || self.gt_align.len() != t {
            return Err(CorpusError::Invalid(format!(
                "video has {} clips / {} gt rows, config says {t}",
                self.clip_actions.len(),
                self.gt_align.len()
            )));
        }
        if self.clip_raw.shape() != [t, cfg.raw_dim] {
            return Err(CorpusError::Invalid("clip_raw shape mismatch".into()));
        }
        let s = self.word_ids.len();
        if s == 0 || s > cfg.max_words_per_video {
            return Err(CorpusError::Invalid(format!(
                "word count {s} outside [1, {}]",
                cfg.max_words_per_video
            )));
        }
        if self.word_raw.shape() != [s, cfg.raw_dim] || self.word_is_content.len() != s {
            return Err(CorpusError::Invalid("word arrays shape mismatch".into()));
        }
        if !self.clip_raw.all_finite() || !self.word_raw.all_finite() {
            return Err(CorpusError::Invalid("non-finite raw feature".into()));
        }
        for (s, (&id, &is_content)) in self
            .word_ids
            .iter()
            .zip(self.word_is_content.iter())
            .enumerate()
        {
            let within_actions = (id as usize) < cfg.num_actions;
            if is_content != within_actions {
                return Err(CorpusError::Invalid(format!(
                    "word {s}: content flag inconsistent with id {id}"
                )));
            }
            if is_content && !self.clip_actions.contains(&id) {
                return Err(CorpusError::Invalid(format!(
                    "word {s}: content word action {id} not among clip actions"
                )));
            }
        }
        if self.recompute_gt() != self.gt_align {
            return Err(CorpusError::Invalid(
                "gt_align inconsistent with id equality relation".into(),
            ));
        }
        Ok(())
    }
}

/// Generation-time measurements, persisted in the metadata sidecar.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Mean cosine of ground-truth clip-word pairs after projecting both raw
    /// features through a shared random probe.
    pub mean_gt_cosine: f64,
    pub mean_non_gt_cosine: f64,
    pub gt_pairs: usize,
    pub non_gt_pairs: usize,
    pub total_words: usize,
    pub content_word_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: CorpusConfig,
    /// num_actions x raw_dim video-side mixer, unit rows.
    pub mixer_video: Tensor,
    /// num_actions x raw_dim word-side mixer, unit rows.
    pub mixer_word: Tensor,
    pub videos: Vec<VideoSample>,
    pub stats: CorpusStats,
}

impl Corpus {
    pub fn validate(&self) -> Result<(), CorpusError> {
        self.config.validate()?;
        let a = self.config.num_actions;
        let d = self.config.raw_dim;
        if self.mixer_video.shape() != [a, d] || self.mixer_word.shape() != [a, d] {
            return Err(CorpusError::Invalid("mixer shape mismatch".into()));
        }
        if self.videos.len() != self.config.num_videos {
            return Err(CorpusError::Invalid(format!(
                "video count {} does not match config {}",
                self.videos.len(),
                self.config.num_videos
            )));
        }
        for (i, v) in self.videos.iter().enumerate() {
            v.validate(&self.config)
                .map_err(|e| CorpusError::Invalid(format!("video {i}: {e}")))?;
        }
        Ok(())
    }
}

fn unit_gaussian_rows(rng: &mut Rng, rows: usize, dim: usize) -> Tensor {
    let data: Vec<f64> = (0..rows * dim).map(|_| rng.next_gaussian()).collect();
    let (t, _) = l2_normalize_rows(&Tensor::new(vec![rows, dim], data), NORM_EPS).unwrap();
    t
}

/// Random orthonormal rows via modified Gram-Schmidt over gaussian draws.
/// Requires `rows <= dim`; redraws a row on (measure-zero) degeneracy.
fn orthonormal_rows(rng: &mut Rng, rows: usize, dim: usize) -> Tensor {
    assert!(rows <= dim, "cannot fit {rows} orthonormal rows in dimension {dim}");
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rows);
    while basis.len() < rows {
        let mut candidate: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
        for prev in &basis {
            let dot: f64 = candidate.iter().zip(prev).map(|(a, b)| a * b).sum();
            for (c, p) in candidate.iter_mut().zip(prev) {
                *c -= dot * p;
            }
        }
        let norm: f64 = candidate.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        for c in candidate.iter_mut() {
            *c /= norm;
        }
        basis.push(candidate);
    }
    Tensor::from_rows(&basis)
}

fn max_pairwise_cosine(m: &Tensor) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..m.rows() {
        for j in (i + 1)..m.rows() {
            let dot: f64 = m.row(i).iter().zip(m.row(j)).map(|(a, b)| a * b).sum();
            worst = worst.max(dot);
        }
    }
    worst
}

/// Draw the two mixer matrices: unit rows, pairwise cosine below
/// [`MIXER_MAX_COSINE`] within each matrix, word rows coupled to video rows.
/// Video rows are drawn orthonormal (the strongest admissible separation);
/// word rows inherit residual similarity from the coupling and the fresh
/// components, so the cosine bound stays an active check for them.
fn generate_mixers(cfg: &CorpusConfig, rng: &mut Rng) -> Result<(Tensor, Tensor), CorpusError> {
    let a = cfg.num_actions;
    let d = cfg.raw_dim;
    if a > d {
        return Err(CorpusError::InfeasibleConfig(format!(
            "num_actions ({a}) exceeds raw_dim ({d}); mixer rows cannot stay dissimilar"
        )));
    }
    for _ in 0..MIXER_MAX_ATTEMPTS {
        let e_v = orthonormal_rows(rng, a, d);
        if a > 1 && max_pairwise_cosine(&e_v) >= MIXER_MAX_COSINE {
            continue;
        }
        let fresh = unit_gaussian_rows(rng, a, d);
        let coupling = cfg.mixer_coupling;
        let ortho = (1.0 - coupling * coupling).sqrt();
        let mut w_data = Vec::with_capacity(a * d);
        for i in 0..a {
            for j in 0..d {
                w_data.push(coupling * e_v.row(i)[j] + ortho * fresh.row(i)[j]);
            }
        }
        let (e_w, _) =
            l2_normalize_rows(&Tensor::new(vec![a, d], w_data), NORM_EPS).unwrap();
        if a > 1 && max_pairwise_cosine(&e_w) >= MIXER_MAX_COSINE {
            continue;
        }
        return Ok((e_v, e_w));
    }
    Err(CorpusError::InfeasibleConfig(format!(
        "could not draw {a} mixer rows with pairwise cosine < {MIXER_MAX_COSINE} in dimension {d}"
    )))
}

fn noisy_row(base: &[f64], extra: Option<(&[f64], f64)>, sigma: f64, rng: &mut Rng) -> Vec<f64> {
    let mut row: Vec<f64> = base.to_vec();
    if let Some((pos, strength)) = extra {
        for (r, p) in row.iter_mut().zip(pos.iter()) {
            *r += strength * p;
        }
    }
    if sigma > 0.0 {
        for r in row.iter_mut() {
            *r += sigma * rng.next_gaussian();
        }
    }
    row
}

/// Build the full corpus. Bit-deterministic in (config, seed).
pub fn generate_corpus(cfg: &CorpusConfig) -> Result<Corpus, CorpusError> {
    cfg.validate()?;
    let a = cfg.num_actions;
    let t = cfg.clips_per_video;
    let d = cfg.raw_dim;

    let mut cycle_rng = Rng::new(rng::split(cfg.seed, rng::stream::CORPUS_CYCLE));
    let mut cycle: Vec<u32> = (0..a as u32).collect();
    cycle_rng.shuffle(&mut cycle);

    let mut mixer_rng = Rng::new(rng::split(cfg.seed, rng::stream::CORPUS_MIXERS));
    let (mixer_video, mixer_word) = generate_mixers(cfg, &mut mixer_rng)?;
    // Position rays: centered index along one unit direction per modality,
    // scaled to [-1, 1] across the window.
    let ray = |dir: &Tensor, t_idx: usize| -> Vec<f64> {
        let half = (t as f64 - 1.0) / 2.0;
        let m = (t_idx as f64 - half) / half.max(1.0);
        dir.row(0).iter().map(|&u| m * u).collect()
    };
    let ray_video = unit_gaussian_rows(&mut mixer_rng, 1, d);
    let ray_word = unit_gaussian_rows(&mut mixer_rng, 1, d);
    let pos_video = Tensor::from_rows(&(0..t).map(|i| ray(&ray_video, i)).collect::<Vec<_>>());
    let pos_word = Tensor::from_rows(&(0..t).map(|i| ray(&ray_word, i)).collect::<Vec<_>>());

    let mut video_rng = Rng::new(rng::split(cfg.seed, rng::stream::CORPUS_VIDEOS));
    let mut videos = Vec::with_capacity(cfg.num_videos);
    for _ in 0..cfg.num_videos {
        let start = video_rng.next_below(a);
        let clip_actions: Vec<u32> = (0..t).map(|i| cycle[(start + i) % a]).collect();

        let mut clip_rows = Vec::with_capacity(t);
        for (i, &action) in clip_actions.iter().enumerate() {
            clip_rows.push(noisy_row(
                mixer_video.row(action as usize),
                Some((pos_video.row(i), cfg.pos_strength_video)),
                cfg.noise_sigma,
                &mut video_rng,
            ));
        }

        // Content sense-groups in clip order.
        let mut word_ids: Vec<u32> = Vec::new();
        let mut word_rows: Vec<Vec<f64>> = Vec::new();
        let mut word_is_content: Vec<bool> = Vec::new();
        let emit_group = |clip: usize, video_rng: &mut Rng, word_ids: &mut Vec<u32>,
                          word_rows: &mut Vec<Vec<f64>>, word_is_content: &mut Vec<bool>| {
            let action = clip_actions[clip];
            let span = cfg.group_max - cfg.group_min + 1;
            let size = cfg.group_min + video_rng.next_below(span);
            for _ in 0..size {
                word_ids.push(action);
                word_rows.push(noisy_row(
                    mixer_word.row(action as usize),
                    Some((pos_word.row(clip), cfg.pos_strength_word)),
                    cfg.noise_sigma,
                    video_rng,
                ));
                word_is_content.push(true);
            }
        };
        for clip in 0..t {
            if video_rng.next_f64() < cfg.content_word_rate {
                emit_group(clip, &mut video_rng, &mut word_ids, &mut word_rows, &mut word_is_content);
            }
        }
        if word_ids.is_empty() {
            // A video must carry at least one word; fall back to clip 0.
            emit_group(0, &mut video_rng, &mut word_ids, &mut word_rows, &mut word_is_content);
        }

        // Function words: pure noise, interleaved at uniform positions.
        if cfg.num_function_words > 0 {
            let budget = cfg.max_words_per_video.saturating_sub(word_ids.len()).min(t);
            let n_func = video_rng.next_below(budget + 1);
            for _ in 0..n_func {
                let fid = (a + video_rng.next_below(cfg.num_function_words)) as u32;
                let row: Vec<f64> = (0..d).map(|_| video_rng.next_gaussian()).collect();
                let at = video_rng.next_below(word_ids.len() + 1);
                word_ids.insert(at, fid);
                word_rows.insert(at, row);
                word_is_content.insert(at, false);
            }
        }

        let clip_raw = Tensor::from_rows(&clip_rows);
        let word_raw = Tensor::from_rows(&word_rows);
        let mut video = VideoSample {
            clip_actions,
            clip_raw,
            word_ids,
            word_raw,
            word_is_content,
            gt_align: Vec::new(),
        };
        video.gt_align = video.recompute_gt();
        videos.push(video);
    }

    let mut corpus = Corpus {
        config: cfg.clone(),
        mixer_video,
        mixer_word,
        videos,
        stats: CorpusStats::default(),
    };
    corpus.stats = measure_stats(&corpus);
    corpus.validate()?;
    Ok(corpus)
}

/// Project clip and word raw features through one shared random probe and
/// compare ground-truth pair cosines against the rest.
fn measure_stats(corpus: &Corpus) -> CorpusStats {
    let cfg = &corpus.config;
    let d = cfg.raw_dim;
    let mut probe_rng = Rng::new(rng::split(cfg.seed, rng::stream::CORPUS_PROBE));
    let probe = Tensor::new(
        vec![d, d],
        (0..d * d).map(|_| probe_rng.next_gaussian()).collect(),
    );

    let project = |row: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; d];
        for (i, &v) in row.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(probe.row(i)) {
                *o += v * p;
            }
        }
        out
    };
    let cosine = |u: &[f64], v: &[f64]| -> f64 {
        let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if nu < NORM_EPS || nv < NORM_EPS {
            0.0
        } else {
            dot / (nu * nv)
        }
    };

    let mut stats = CorpusStats::default();
    let mut gt_sum = 0.0;
    let mut non_gt_sum = 0.0;
    let mut content_words = 0usize;
    for video in &corpus.videos {
        let clip_proj: Vec<Vec<f64>> = (0..video.num_clips())
            .map(|i| project(video.clip_raw.row(i)))
            .collect();
        let word_proj: Vec<Vec<f64>> = (0..video.num_words())
            .map(|s| project(video.word_raw.row(s)))
            .collect();
        content_words += video.word_is_content.iter().filter(|&&c| c).count();
        stats.total_words += video.num_words();
        for (t_idx, gt) in video.gt_align.iter().enumerate() {
            for s in 0..video.num_words() {
                let c = cosine(&clip_proj[t_idx], &word_proj[s]);
                if gt.contains(&(s as u32)) {
                    gt_sum += c;
                    stats.gt_pairs += 1;
                } else {
                    non_gt_sum += c;
                    stats.non_gt_pairs += 1;
                }
            }
        }
    }
    if stats.gt_pairs > 0 {
        stats.mean_gt_cosine = gt_sum / stats.gt_pairs as f64;
    }
    if stats.non_gt_pairs > 0 {
        stats.mean_non_gt_cosine = non_gt_sum / stats.non_gt_pairs as f64;
    }
    if stats.total_words > 0 {
        stats.content_word_fraction = content_words as f64 / stats.total_words as f64;
    }
    stats
}

/// Disjoint deterministic shuffle-split. Both halves share the mixers and
/// config (with adjusted `num_videos`).
pub fn split_corpus(
    corpus: &Corpus,
    train_frac: f64,
    seed: u64,
) -> Result<(Corpus, Corpus), CorpusError> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(CorpusError::Invalid(format!(
            "train_frac must be in (0, 1), got {train_frac}"
        )));
    }
    let n = corpus.videos.len();
    let n_train = (train_frac * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(CorpusError::SplitEmpty);
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut split_rng = Rng::new(rng::split(seed, rng::stream::CORPUS_SPLIT));
    split_rng.shuffle(&mut order);

    let build = |indices: &[usize]| -> Corpus {
        let mut cfg = corpus.config.clone();
        cfg.num_videos = indices.len();
        let mut c = Corpus {
            config: cfg,
            mixer_video: corpus.mixer_video.clone(),
            mixer_word: corpus.mixer_word.clone(),
            videos: indices.iter().map(|&i| corpus.videos[i].clone()).collect(),
            stats: CorpusStats::default(),
        };
        c.stats = measure_stats(&c);
        c
    };
    Ok((build(&order[..n_train]), build(&order[n_train..])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> CorpusConfig {
        CorpusConfig {
            num_actions: 16,
            num_function_words: 2,
            clips_per_video: 4,
            max_words_per_video: 24,
            raw_dim: 24,
            noise_sigma: 0.05,
            num_videos: 12,
            content_word_rate: 0.9,
            group_min: 2,
            group_max: 3,
            pos_strength_video: 0.5,
            pos_strength_word: 0.5,
            mixer_coupling: 0.5,
            seed: 41,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_cfg();
        let a = generate_corpus(&cfg).unwrap();
        let b = generate_corpus(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_unit_groups_have_one_gt_word_per_clip() {
        let cfg = CorpusConfig {
            noise_sigma: 0.0,
            content_word_rate: 1.0,
            num_function_words: 0,
            group_min: 1,
            group_max: 1,
            pos_strength_video: 0.0,
            pos_strength_word: 0.0,
            num_videos: 8,
            ..small_cfg()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        for video in &corpus.videos {
            assert_eq!(video.num_words(), cfg.clips_per_video);
            for (t, gt) in video.gt_align.iter().enumerate() {
                assert_eq!(gt.len(), 1, "clip {t} should have exactly one gt word");
                // Noiseless, position-free: raw rows equal the mixer rows.
                let action = video.clip_actions[t] as usize;
                assert_eq!(video.clip_raw.row(t), corpus.mixer_video.row(action));
                assert_eq!(
                    video.word_raw.row(gt[0] as usize),
                    corpus.mixer_word.row(action)
                );
            }
        }
    }

    #[test]
    fn empty_corpus_is_valid() {
        let cfg = CorpusConfig {
            num_videos: 0,
            ..small_cfg()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        assert!(corpus.videos.is_empty());
        corpus.validate().unwrap();
    }

    #[test]
    fn window_is_consecutive_on_cycle() {
        let cfg = small_cfg();
        let corpus = generate_corpus(&cfg).unwrap();
        // Rebuild the cycle the generator used.
        let mut cycle_rng = Rng::new(rng::split(cfg.seed, rng::stream::CORPUS_CYCLE));
        let mut cycle: Vec<u32> = (0..cfg.num_actions as u32).collect();
        cycle_rng.shuffle(&mut cycle);
        let pos_of = |a: u32| cycle.iter().position(|&c| c == a).unwrap();
        for video in &corpus.videos {
            let start = pos_of(video.clip_actions[0]);
            for (i, &a) in video.clip_actions.iter().enumerate() {
                assert_eq!(pos_of(a), (start + i) % cfg.num_actions, "window property");
            }
        }
    }

    #[test]
    fn gt_pairs_beat_non_gt_in_projected_cosine() {
        let cfg = CorpusConfig {
            num_actions: 32,
            clips_per_video: 8,
            raw_dim: 64,
            num_videos: 64,
            noise_sigma: 0.1,
            ..CorpusConfig::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        assert!(
            corpus.stats.mean_gt_cosine > corpus.stats.mean_non_gt_cosine,
            "gt {} vs non-gt {}",
            corpus.stats.mean_gt_cosine,
            corpus.stats.mean_non_gt_cosine
        );
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let mut cfg = small_cfg();
        cfg.clips_per_video = 1;
        assert!(matches!(
            generate_corpus(&cfg),
            Err(CorpusError::InfeasibleConfig(_))
        ));
        let mut cfg = small_cfg();
        cfg.num_actions = cfg.clips_per_video + DELTA_MAX_DEFAULT - 1;
        assert!(generate_corpus(&cfg).is_err());
    }

    #[test]
    fn split_is_disjoint_deterministic_and_complete() {
        let cfg = CorpusConfig {
            num_videos: 10,
            ..small_cfg()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        let (tr, ev) = split_corpus(&corpus, 0.5, 7).unwrap();
        assert_eq!(tr.videos.len(), 5);
        assert_eq!(ev.videos.len(), 5);
        let (tr2, ev2) = split_corpus(&corpus, 0.5, 7).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(ev, ev2);
        // Union equals the original multiset of videos.
        let mut all: Vec<&VideoSample> = tr.videos.iter().chain(ev.videos.iter()).collect();
        for v in &corpus.videos {
            let at = all.iter().position(|&x| x == v).expect("video missing");
            all.remove(at);
        }
        assert!(all.is_empty());
    }

    #[test]
    fn split_rejects_empty_sides() {
        let cfg = CorpusConfig {
            num_videos: 3,
            ..small_cfg()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        assert!(matches!(
            split_corpus(&corpus, 0.01, 1),
            Err(CorpusError::SplitEmpty)
        ));
        assert!(split_corpus(&corpus, 1.2, 1).is_err());
    }

    #[test]
    fn every_video_has_words_and_consistent_gt() {
        let cfg = CorpusConfig {
            content_word_rate: 0.2,
            num_videos: 64,
            ..small_cfg()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        for v in &corpus.videos {
            assert!(v.num_words() >= 1);
            assert_eq!(v.recompute_gt(), v.gt_align);
        }
    }
}
