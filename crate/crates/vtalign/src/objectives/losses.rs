//! The three contrastive losses.
//!
//! Coarse: `-log(exp(vbar_i . qbar_i / tau) / sum_j exp(vbar_i . qbar_j / tau))`
//! averaged over videos, one-directional video-to-text.
//!
//! Fine and temporal share one clip-word InfoNCE body: anchors (clip
//! features for the fine loss, warped features for the cross temporal loss)
//! against pooled positives, with the denominator summing over every word of
//! every batch sentence. The intra temporal variant contrasts warped
//! features against their reference clips with all batch clips as
//! denominators. Averages run over valid clips only.

use crate::diffmath::{GradTape, NodeId};

use super::correspondence::PooledPositives;
use super::warp::WarpedClips;
use super::{DenomConfig, EncodedBatch, GlobalPools, ObjectiveError, TemporalMode};

/// Coarse video-sentence loss. `symmetric` adds the text-to-video direction
/// and halves the sum (off-default).
pub fn coarse_loss(
    tape: &mut GradTape,
    pools: &GlobalPools,
    tau: f64,
    denom: &DenomConfig,
    symmetric: bool,
) -> Result<NodeId, ObjectiveError> {
    if !(tau > 0.0) {
        return Err(ObjectiveError::InvalidWeights(format!(
            "tau must be > 0, got {tau}"
        )));
    }
    let forward = coarse_directional(tape, pools.video, pools.text, tau, denom)?;
    if !symmetric {
        return Ok(forward);
    }
    let backward = coarse_directional(tape, pools.text, pools.video, tau, denom)?;
    let sum = tape.add(forward, backward)?;
    Ok(tape.scale(sum, 0.5))
}

fn coarse_directional(
    tape: &mut GradTape,
    anchors: NodeId,
    targets: NodeId,
    tau: f64,
    denom: &DenomConfig,
) -> Result<NodeId, ObjectiveError> {
    let n = tape.value(anchors).rows();
    let logits = tape.matmul_nt(anchors, targets)?;
    let scaled = tape.scale(logits, 1.0 / tau);
    let positives = tape.row_dot(anchors, targets)?;
    let pos_scaled = tape.scale(positives, 1.0 / tau);
    // Dropping the paired sentence and then re-adding the pooled positive is
    // the full sum again, so only mask when the positive stays out.
    let mask_diagonal = !denom.include_own_sentence && !denom.include_pooled_positive;
    let lse = if mask_diagonal {
        if n == 1 {
            return Err(ObjectiveError::EmptySupport("coarse loss denominator"));
        }
        let mask: Vec<Vec<bool>> = (0..n)
            .map(|i| (0..n).map(|j| i == j).collect())
            .collect();
        tape.logsumexp_rows_masked(scaled, Some(mask))?
    } else {
        tape.logsumexp_rows(scaled)?
    };
    let per_video = tape.sub(lse, pos_scaled)?;
    Ok(tape.mean_all(per_video))
}

/// Shared InfoNCE body for the fine and cross-temporal losses.
///
/// `anchor_source` holds the anchor rows (`[N*T, D]`); `rows`/`pooled_rows`
/// select aligned (anchor, pooled positive) pairs. Per anchor, loss is
/// `lse(denominator logits) - pos/tau`, averaged over all selected rows.
fn clip_word_infonce(
    tape: &mut GradTape,
    batch: &EncodedBatch,
    anchor_source: NodeId,
    anchor_rows: &[usize],
    pooled: &PooledPositives,
    pooled_rows: &[usize],
    anchor_videos: &[usize],
    tau: f64,
    denom: &DenomConfig,
) -> Result<NodeId, ObjectiveError> {
    debug_assert_eq!(anchor_rows.len(), pooled_rows.len());
    let anchors = tape.gather_rows(anchor_source, anchor_rows.to_vec())?;
    let positives = tape.gather_rows(pooled.node, pooled_rows.to_vec())?;
    let pos = tape.row_dot(anchors, positives)?;
    let pos_scaled = tape.scale(pos, 1.0 / tau);

    let total_words = batch.total_words();
    let n = anchor_rows.len();
    let lse = if denom.include_pooled_positive {
        // Append each anchor's own pooled positive as one extra column by
        // stacking the gathered positives under the word matrix and masking
        // every appended row except the anchor's own.
        let extended = tape.concat_rows(batch.words, positives)?;
        let logits = tape.matmul_nt(anchors, extended)?;
        let scaled = tape.scale(logits, 1.0 / tau);
        let mask: Vec<Vec<bool>> = (0..n)
            .map(|r| {
                let mut row = vec![false; total_words + n];
                if !denom.include_own_sentence {
                    for c in batch.words_of(anchor_videos[r]) {
                        row[c] = true;
                    }
                }
                for c in 0..n {
                    row[total_words + c] = c != r;
                }
                row
            })
            .collect();
        tape.logsumexp_rows_masked(scaled, Some(mask))?
    } else {
        let logits = tape.matmul_nt(anchors, batch.words)?;
        let scaled = tape.scale(logits, 1.0 / tau);
        let mask = if denom.include_own_sentence {
            None
        } else {
            Some(
                (0..n)
                    .map(|r| {
                        let mut row = vec![false; total_words];
                        for c in batch.words_of(anchor_videos[r]) {
                            row[c] = true;
                        }
                        row
                    })
                    .collect(),
            )
        };
        tape.logsumexp_rows_masked(scaled, mask)?
    };
    let per_clip = tape.sub(lse, pos_scaled)?;
    Ok(tape.mean_all(per_clip))
}

/// Fine clip-word loss over the map's usable clips. Returns the loss node
/// and the number of clips averaged.
pub fn fine_loss(
    tape: &mut GradTape,
    batch: &EncodedBatch,
    pooled: &PooledPositives,
    tau: f64,
    denom: &DenomConfig,
) -> Result<(NodeId, usize), ObjectiveError> {
    let usable = pooled.usable();
    if usable.is_empty() {
        return Err(ObjectiveError::EmptySupport("fine loss"));
    }
    let anchor_rows: Vec<usize> = usable
        .iter()
        .map(|&(_, (i, t))| batch.clip_row(i, t))
        .collect();
    let pooled_rows: Vec<usize> = usable.iter().map(|&(r, _)| r).collect();
    let anchor_videos: Vec<usize> = usable.iter().map(|&(_, (i, _))| i).collect();
    let loss = clip_word_infonce(
        tape,
        batch,
        batch.clips,
        &anchor_rows,
        pooled,
        &pooled_rows,
        &anchor_videos,
        tau,
        denom,
    )?;
    Ok((loss, usable.len()))
}

/// Temporal loss over warped features. Cross mode mirrors the fine loss
/// with warped anchors; intra mode contrasts warped features against their
/// reference clips with all batch clips as denominators. Zero-flagged
/// warped rows are excluded; an empty survivor set is an error.
pub fn temporal_loss(
    tape: &mut GradTape,
    batch: &EncodedBatch,
    warped: &WarpedClips,
    pooled: Option<&PooledPositives>,
    tau: f64,
    mode: TemporalMode,
    denom: &DenomConfig,
) -> Result<(NodeId, usize), ObjectiveError> {
    match mode {
        TemporalMode::Cross => {
            let pooled = pooled.ok_or(ObjectiveError::EmptySupport(
                "temporal cross loss needs a correspondence map",
            ))?;
            let usable: Vec<(usize, (usize, usize))> = pooled
                .usable()
                .into_iter()
                .filter(|&(_, (i, t))| !warped.zero_flags[batch.clip_row(i, t)])
                .collect();
            if usable.is_empty() {
                return Err(ObjectiveError::EmptySupport("temporal loss"));
            }
            let anchor_rows: Vec<usize> = usable
                .iter()
                .map(|&(_, (i, t))| batch.clip_row(i, t))
                .collect();
            let pooled_rows: Vec<usize> = usable.iter().map(|&(r, _)| r).collect();
            let anchor_videos: Vec<usize> = usable.iter().map(|&(_, (i, _))| i).collect();
            let loss = clip_word_infonce(
                tape,
                batch,
                warped.node,
                &anchor_rows,
                pooled,
                &pooled_rows,
                &anchor_videos,
                tau,
                denom,
            )?;
            Ok((loss, usable.len()))
        }
        TemporalMode::Intra => {
            let rows: Vec<usize> = (0..batch.num_videos * batch.clips_per_video)
                .filter(|&r| !warped.zero_flags[r])
                .collect();
            if rows.is_empty() {
                return Err(ObjectiveError::EmptySupport("temporal loss"));
            }
            let anchors = tape.gather_rows(warped.node, rows.clone())?;
            let refs = tape.gather_rows(batch.clips, rows.clone())?;
            let pos = tape.row_dot(anchors, refs)?;
            let pos_scaled = tape.scale(pos, 1.0 / tau);
            let logits = tape.matmul_nt(anchors, batch.clips)?;
            let scaled = tape.scale(logits, 1.0 / tau);
            let mask = if denom.include_own_sentence {
                None
            } else {
                let t = batch.clips_per_video;
                Some(
                    rows.iter()
                        .map(|&r| {
                            let video = r / t;
                            let mut row = vec![false; batch.num_videos * t];
                            for c in video * t..(video + 1) * t {
                                row[c] = true;
                            }
                            row
                        })
                        .collect(),
                )
            };
            let lse = tape.logsumexp_rows_masked(scaled, mask)?;
            let per_clip = tape.sub(lse, pos_scaled)?;
            Ok((tape.mean_all(per_clip), rows.len()))
        }
    }
}
