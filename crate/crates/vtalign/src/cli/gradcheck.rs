//! Finite-difference verification of all loss gradients on a fixed batch.
//!
//! Fixed shape: 4 videos, 4 clips, embed dim 8, sentence lengths 3..6,
//! raw dim 10, hidden 12. Correspondence selections and warp offsets are
//! frozen at the base point so the perturbed objectives stay smooth, and the
//! check asserts the batch sits away from degenerate-normalization rows.
//! Step h = 1e-6: with tau = 0.07 the curvature of a 1e-5 step's truncation
//! term alone exceeds the 1e-5 tolerance.

use std::collections::BTreeMap;

use crate::corpus::VideoSample;
use crate::diffmath::{finite_diff_check, DiffError, GradTape, Tensor};
use crate::encoders::{init_params, register_params, ModelParams};
use crate::objectives::{
    discover_correspondence, encode_batch, sample_offsets, total_loss_frozen, CorrespondenceMap,
    LossWeights, TotalLossOptions, WarpSpec,
};
use crate::rng::Rng;

pub const GRADCHECK_TOLERANCE: f64 = 1e-5;
const GRADCHECK_H: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradcheckRow {
    pub component: &'static str,
    pub max_rel_error: f64,
    pub pass: bool,
}

fn fixed_videos() -> Vec<VideoSample> {
    let mut rng = Rng::new(40);
    let d_in = 10;
    let t = 4;
    [3usize, 5, 4, 6]
        .iter()
        .map(|&s| VideoSample {
            clip_actions: (0..t as u32).collect(),
            clip_raw: Tensor::new(
                vec![t, d_in],
                (0..t * d_in).map(|_| rng.next_gaussian()).collect(),
            ),
            word_ids: (0..s as u32).map(|w| 1000 + w).collect(),
            word_raw: Tensor::new(
                vec![s, d_in],
                (0..s * d_in).map(|_| rng.next_gaussian()).collect(),
            ),
            word_is_content: vec![false; s],
            gt_align: vec![Vec::new(); t],
        })
        .collect()
}

struct Component {
    name: &'static str,
    weights: LossWeights,
}

/// Run the sweep. `inject_error` perturbs one analytic gradient coordinate
/// before comparison (harness sanity hook); the run must then fail.
pub fn run_gradcheck(inject_error: bool) -> Result<Vec<GradcheckRow>, DiffError> {
    let videos = fixed_videos();
    let params = init_params(41, 10, 12, 8);
    let base: BTreeMap<String, Tensor> = params
        .named()
        .into_iter()
        .map(|(n, t)| (n, t.clone()))
        .collect();

    let components = [
        Component {
            name: "coarse",
            weights: LossWeights {
                lambda_coarse: 1.0,
                lambda_fine: 0.0,
                lambda_temporal: 0.0,
                tau: 0.07,
            },
        },
        Component {
            name: "fine",
            weights: LossWeights {
                lambda_coarse: 0.0,
                lambda_fine: 1.0,
                lambda_temporal: 0.0,
                tau: 0.07,
            },
        },
        Component {
            name: "temporal",
            weights: LossWeights {
                lambda_coarse: 0.0,
                lambda_fine: 0.0,
                lambda_temporal: 1.0,
                tau: 0.07,
            },
        },
        Component {
            name: "total",
            weights: LossWeights::default(),
        },
    ];

    let mut rows = Vec::new();
    for component in &components {
        let opts = TotalLossOptions {
            weights: component.weights,
            ..TotalLossOptions::default()
        };
        let eval = |p: &BTreeMap<String, Tensor>,
                    frozen: Option<(&CorrespondenceMap, &WarpSpec)>|
         -> Result<(f64, BTreeMap<String, Tensor>, CorrespondenceMap, WarpSpec), DiffError> {
            let model = ModelParams::from_named(p).expect("parameter names fixed");
            let refs: Vec<&VideoSample> = videos.iter().collect();
            let mut tape = GradTape::new();
            let tp = register_params(&mut tape, &model)?;
            let batch = encode_batch(&mut tape, &tp, &refs).expect("fixed batch encodes");
            assert!(
                batch.clip_flags.iter().all(|&f| !f) && batch.word_flags.iter().all(|&f| !f),
                "gradcheck batch must stay away from degenerate rows"
            );
            let (map, spec) = match frozen {
                Some((m, s)) => (m.clone(), s.clone()),
                None => {
                    let map = discover_correspondence(
                        tape.value(batch.clips),
                        tape.value(batch.words),
                        &batch.word_offsets,
                        batch.clips_per_video,
                        opts.k,
                        opts.strategy,
                        &mut Rng::new(50),
                    )
                    .expect("discovery on fixed batch");
                    let spec = sample_offsets(4, 4, opts.delta_max, &mut Rng::new(51))
                        .expect("offsets on fixed batch");
                    (map, spec)
                }
            };
            let (node, _) = total_loss_frozen(&mut tape, &batch, &opts, Some(&map), Some(&spec))
                .expect("loss on fixed batch");
            let value = tape.value(node).item();
            if !value.is_finite() {
                return Err(DiffError::NonFinite("gradcheck loss"));
            }
            let grads = tape.backward(node)?;
            Ok((value, grads, map, spec))
        };

        let (_, mut analytic, map, spec) = eval(&base, None)?;
        if inject_error {
            let g = analytic.get_mut("video.w1").expect("video.w1 exists");
            g.data_mut()[0] += 1e-3;
        }
        let f = |p: &BTreeMap<String, Tensor>| eval(p, Some((&map, &spec))).map(|r| r.0);
        let report = finite_diff_check(&f, &base, &analytic, GRADCHECK_H)?;
        rows.push(GradcheckRow {
            component: component.name,
            max_rel_error: report.max_rel_error,
            pass: report.max_rel_error < GRADCHECK_TOLERANCE,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_components_pass() {
        let rows = run_gradcheck(false).unwrap();
        assert_eq!(rows.len(), 4);
        for row in &rows {
            assert!(
                row.pass,
                "{} failed with {}",
                row.component, row.max_rel_error
            );
        }
    }

    #[test]
    fn injected_error_is_detected() {
        let rows = run_gradcheck(true).unwrap();
        assert!(rows.iter().any(|r| !r.pass));
    }
}
