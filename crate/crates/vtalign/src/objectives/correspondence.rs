//! Clip-word correspondence discovery and pooled positives.
//!
//! Similarities are cosine dots of the already-normalized embeddings,
//! computed within each (video, its own sentence) pair. Selection indices
//! are constants for differentiation: gradients flow through the pooled
//! values, never through the argtopk.
//!
//! Ties break toward the lower word index, then the lower clip index, so
//! every strategy is deterministic given its seed.

use crate::diffmath::{GradTape, NodeId, Tensor};
use crate::rng::Rng;

use super::{EncodedBatch, ObjectiveError, Strategy};

/// Per (video, clip) selected word indices (sentence-local, ascending,
/// size <= K) and validity. A clip a strategy assigns no words is invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceMap {
    pub k: usize,
    pub strategy: Strategy,
    /// `selected[video][clip]` = sentence-local word indices.
    pub selected: Vec<Vec<Vec<usize>>>,
}

impl CorrespondenceMap {
    pub fn is_valid(&self, video: usize, clip: usize) -> bool {
        !self.selected[video][clip].is_empty()
    }

    pub fn num_videos(&self) -> usize {
        self.selected.len()
    }

    pub fn clips_per_video(&self) -> usize {
        self.selected.first().map_or(0, |v| v.len())
    }

    /// Valid (video, clip) pairs in video-major order.
    pub fn valid_entries(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, clips) in self.selected.iter().enumerate() {
            for (t, sel) in clips.iter().enumerate() {
                if !sel.is_empty() {
                    out.push((i, t));
                }
            }
        }
        out
    }
}

/// Similarity grid of one video: `sims[t][s] = v_t . q_s` over its own
/// sentence only.
fn video_grid(clips: &Tensor, words: &Tensor, clip_rows: std::ops::Range<usize>, word_rows: std::ops::Range<usize>) -> Vec<Vec<f64>> {
    clip_rows
        .map(|t| {
            let vrow = clips.row(t);
            word_rows
                .clone()
                .map(|s| {
                    let wrow = words.row(s);
                    vrow.iter().zip(wrow).map(|(a, b)| a * b).sum()
                })
                .collect()
        })
        .collect()
}

/// Indices of the `k` largest values, ties toward the lower index.
fn top_k_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut picked: Vec<usize> = order.into_iter().take(k).collect();
    picked.sort_unstable();
    picked
}

/// Cap an inverted selection at `k` words by similarity (ties toward the
/// lower word index), keeping the stored indices ascending.
fn cap_by_similarity(mut words: Vec<usize>, sims: &[f64], k: usize) -> Vec<usize> {
    if words.len() > k {
        words.sort_by(|&a, &b| {
            sims[b]
                .partial_cmp(&sims[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        words.truncate(k);
    }
    words.sort_unstable();
    words
}

/// Build the correspondence map from embedding values (not tape nodes).
///
/// `clips`: `[N*T, D]` video-major; `words`: `[total, D]` with
/// `word_offsets` delimiting each video's sentence.
pub fn discover_correspondence(
    clips: &Tensor,
    words: &Tensor,
    word_offsets: &[usize],
    clips_per_video: usize,
    k: usize,
    strategy: Strategy,
    rng: &mut Rng,
) -> Result<CorrespondenceMap, ObjectiveError> {
    assert!(k >= 1, "K must be >= 1");
    let num_videos = word_offsets.len() - 1;
    let t = clips_per_video;
    let mut selected: Vec<Vec<Vec<usize>>> = Vec::with_capacity(num_videos);

    for i in 0..num_videos {
        let s_i = word_offsets[i + 1] - word_offsets[i];
        let grid = || {
            video_grid(
                clips,
                words,
                i * t..(i + 1) * t,
                word_offsets[i]..word_offsets[i + 1],
            )
        };
        let clips_sel: Vec<Vec<usize>> = match strategy {
            Strategy::ClipTopK => {
                if k > s_i {
                    return Err(ObjectiveError::KTooLarge {
                        k,
                        limit: s_i,
                        strategy,
                    });
                }
                let grid = grid();
                (0..t).map(|ti| top_k_indices(&grid[ti], k)).collect()
            }
            Strategy::Random => {
                if k > s_i {
                    return Err(ObjectiveError::KTooLarge {
                        k,
                        limit: s_i,
                        strategy,
                    });
                }
                (0..t)
                    .map(|_| {
                        let mut sel = rng.sample_distinct(s_i, k);
                        sel.sort_unstable();
                        sel
                    })
                    .collect()
            }
            Strategy::WordTopK => {
                if k > t {
                    return Err(ObjectiveError::KTooLarge {
                        k,
                        limit: t,
                        strategy,
                    });
                }
                let grid = grid();
                let mut per_clip: Vec<Vec<usize>> = vec![Vec::new(); t];
                for s in 0..s_i {
                    let col: Vec<f64> = (0..t).map(|ti| grid[ti][s]).collect();
                    for ti in top_k_indices(&col, k) {
                        per_clip[ti].push(s);
                    }
                }
                (0..t)
                    .map(|ti| cap_by_similarity(per_clip[ti].clone(), &grid[ti], k))
                    .collect()
            }
            Strategy::TwoDTopK => {
                let budget = k * t;
                if budget > t * s_i {
                    return Err(ObjectiveError::KTooLarge {
                        k,
                        limit: s_i,
                        strategy,
                    });
                }
                let grid = grid();
                let mut entries: Vec<(usize, usize)> = (0..t)
                    .flat_map(|ti| (0..s_i).map(move |s| (ti, s)))
                    .collect();
                entries.sort_by(|&(t1, s1), &(t2, s2)| {
                    grid[t2][s2]
                        .partial_cmp(&grid[t1][s1])
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(s1.cmp(&s2))
                        .then(t1.cmp(&t2))
                });
                let mut per_clip: Vec<Vec<usize>> = vec![Vec::new(); t];
                for &(ti, s) in entries.iter().take(budget) {
                    per_clip[ti].push(s);
                }
                (0..t)
                    .map(|ti| cap_by_similarity(per_clip[ti].clone(), &grid[ti], k))
                    .collect()
            }
        };
        selected.push(clips_sel);
    }
    Ok(CorrespondenceMap {
        k,
        strategy,
        selected,
    })
}

/// Pooled positives for the map's valid clips, on the tape: mean of the
/// selected word embeddings, re-normalized. Rows follow
/// [`CorrespondenceMap::valid_entries`] order.
pub struct PooledPositives {
    /// `[n_valid, D]`, unit rows except where flagged.
    pub node: NodeId,
    /// (video, clip) for each row of `node`.
    pub entries: Vec<(usize, usize)>,
    /// True where the pooled mean collapsed to (near) zero; such clips are
    /// excluded from losses.
    pub zero_flags: Vec<bool>,
}

impl PooledPositives {
    /// Rows that survived pooling, as (row index, (video, clip)).
    pub fn usable(&self) -> Vec<(usize, (usize, usize))> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(r, _)| !self.zero_flags[*r])
            .map(|(r, &e)| (r, e))
            .collect()
    }
}

pub fn pooled_positives(
    tape: &mut GradTape,
    batch: &EncodedBatch,
    map: &CorrespondenceMap,
) -> Result<PooledPositives, ObjectiveError> {
    let entries = map.valid_entries();
    if entries.is_empty() {
        return Err(ObjectiveError::EmptySupport("pooled positives"));
    }
    let groups: Vec<Vec<usize>> = entries
        .iter()
        .map(|&(i, t)| {
            map.selected[i][t]
                .iter()
                .map(|&s| batch.word_offsets[i] + s)
                .collect()
        })
        .collect();
    let mean = tape.mean_pool_groups(batch.words, groups)?;
    let node = tape.l2_normalize_rows(mean)?;
    let zero_flags = tape.zero_flags(node).unwrap().to_vec();
    Ok(PooledPositives {
        node,
        entries,
        zero_flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::Tensor;

    fn map_for(
        clips: Vec<Vec<f64>>,
        words: Vec<Vec<f64>>,
        k: usize,
        strategy: Strategy,
        seed: u64,
    ) -> Result<CorrespondenceMap, ObjectiveError> {
        let t = clips.len();
        let s = words.len();
        let clips = Tensor::from_rows(&clips);
        let words = Tensor::from_rows(&words);
        discover_correspondence(&clips, &words, &[0, s], t, k, strategy, &mut Rng::new(seed))
    }

    #[test]
    fn clip_topk_k1_picks_argmax() {
        let map = map_for(
            vec![vec![1.0, 0.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            1,
            Strategy::ClipTopK,
            0,
        )
        .unwrap();
        assert_eq!(map.selected[0][0], vec![0]);
    }

    #[test]
    fn clip_topk_k2_pools_both_words() {
        // Selection over both words; the pooled positive is checked in the
        // losses tests where a tape exists.
        let map = map_for(
            vec![vec![1.0, 0.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            2,
            Strategy::ClipTopK,
            0,
        )
        .unwrap();
        assert_eq!(map.selected[0][0], vec![0, 1]);
    }

    #[test]
    fn exact_ties_prefer_lower_word_index() {
        let map = map_for(
            vec![vec![1.0, 0.0]],
            vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.5]],
            1,
            Strategy::ClipTopK,
            0,
        )
        .unwrap();
        assert_eq!(map.selected[0][0], vec![0]);
        // Stable across repeated runs.
        for _ in 0..5 {
            let again = map_for(
                vec![vec![1.0, 0.0]],
                vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.5]],
                1,
                Strategy::ClipTopK,
                0,
            )
            .unwrap();
            assert_eq!(again, map);
        }
    }

    #[test]
    fn k_too_large_is_an_error() {
        let err = map_for(
            vec![vec![1.0, 0.0]],
            vec![vec![1.0, 0.0]],
            2,
            Strategy::ClipTopK,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, ObjectiveError::KTooLarge { k: 2, .. }));
        assert!(map_for(
            vec![vec![1.0, 0.0]],
            vec![vec![1.0, 0.0]],
            2,
            Strategy::Random,
            0,
        )
        .is_err());
        assert!(map_for(
            vec![vec![1.0, 0.0]],
            vec![vec![1.0, 0.0]],
            2,
            Strategy::TwoDTopK,
            0,
        )
        .is_err());
    }

    #[test]
    fn word_topk_can_starve_clips() {
        // Both words prefer clip 0; clip 1 ends up empty (invalid).
        let map = map_for(
            vec![vec![1.0, 0.0], vec![0.9, 0.1]],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            1,
            Strategy::WordTopK,
            0,
        )
        .unwrap();
        assert!(map.is_valid(0, 0));
        assert!(!map.is_valid(0, 1));
        assert_eq!(map.valid_entries(), vec![(0, 0)]);
    }

    #[test]
    fn word_topk_caps_selection_at_k() {
        // Three words all prefer clip 0 with K=2: keep the 2 most similar.
        let map = map_for(
            vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            vec![vec![1.0, 0.0], vec![0.9, 0.1], vec![0.8, 0.2]],
            2,
            Strategy::WordTopK,
            0,
        )
        .unwrap();
        assert_eq!(map.selected[0][0], vec![0, 1]);
        assert!(map.selected[0][0].len() <= 2);
    }

    #[test]
    fn two_d_topk_selects_globally() {
        // Grid sims: clip0 aligned with word0 (1.0); clip1 aligned with
        // word1 (1.0); cross terms 0. K*T = 2 -> both diagonal entries.
        let map = map_for(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            1,
            Strategy::TwoDTopK,
            0,
        )
        .unwrap();
        assert_eq!(map.selected[0][0], vec![0]);
        assert_eq!(map.selected[0][1], vec![1]);
    }

    #[test]
    fn random_is_seeded_and_distinct() {
        let words: Vec<Vec<f64>> = (0..6)
            .map(|i| vec![i as f64, 1.0])
            .collect();
        let a = map_for(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            words.clone(),
            3,
            Strategy::Random,
            7,
        )
        .unwrap();
        let b = map_for(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            words,
            3,
            Strategy::Random,
            7,
        )
        .unwrap();
        assert_eq!(a, b);
        for sel in &a.selected[0] {
            assert_eq!(sel.len(), 3);
            let mut d = sel.clone();
            d.dedup();
            assert_eq!(d.len(), 3, "selected indices must be distinct");
        }
    }
}
