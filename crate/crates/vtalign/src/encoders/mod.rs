//! Per-modality encoders and the trainable warp matrix.
//!
//! Each modality gets a two-layer map `normalize(relu(x W1 + b1) W2 + b2)`
//! applied row-wise. ℓ2 normalization happens inside the encoder so every
//! loss sees identical unit-norm features. The warp weight matrix lives here
//! with the rest of the trainable state; the objectives module applies it.

pub mod checkpoint;

use std::collections::BTreeMap;

use crate::diffmath::{
    l2_normalize_rows, matmul, relu, DiffError, GradTape, NodeId, Tensor, NORM_EPS,
};
use crate::rng::{self, Rng};

/// Two-layer encoder parameters for one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// raw_dim x hidden.
    pub w1: Tensor,
    /// hidden.
    pub b1: Tensor,
    /// hidden x embed.
    pub w2: Tensor,
    /// embed.
    pub b2: Tensor,
}

/// Full trainable state: both encoders plus the (embed+2) x embed warp map.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub video: EncoderParams,
    pub text: EncoderParams,
    pub warp: Tensor,
}

/// Model dimensions, recorded in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub raw_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
}

impl ModelParams {
    pub fn dims(&self) -> ModelDims {
        ModelDims {
            raw_dim: self.video.w1.rows(),
            hidden_dim: self.video.w1.cols(),
            embed_dim: self.video.w2.cols(),
        }
    }

    /// Canonical (name, tensor) listing; the order fixes gradient and
    /// optimizer update order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("text.b1".into(), &self.text.b1),
            ("text.b2".into(), &self.text.b2),
            ("text.w1".into(), &self.text.w1),
            ("text.w2".into(), &self.text.w2),
            ("video.b1".into(), &self.video.b1),
            ("video.b2".into(), &self.video.b2),
            ("video.w1".into(), &self.video.w1),
            ("video.w2".into(), &self.video.w2),
            ("warp.w".into(), &self.warp),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("text.b1".into(), &mut self.text.b1),
            ("text.b2".into(), &mut self.text.b2),
            ("text.w1".into(), &mut self.text.w1),
            ("text.w2".into(), &mut self.text.w2),
            ("video.b1".into(), &mut self.video.b1),
            ("video.b2".into(), &mut self.video.b2),
            ("video.w1".into(), &mut self.video.w1),
            ("video.w2".into(), &mut self.video.w2),
            ("warp.w".into(), &mut self.warp),
        ]
    }

    /// Rebuild from a named tensor map (checkpoint loading).
    pub fn from_named(map: &BTreeMap<String, Tensor>) -> Result<Self, String> {
        let get = |name: &str| -> Result<Tensor, String> {
            map.get(name)
                .cloned()
                .ok_or_else(|| format!("missing parameter {name}"))
        };
        Ok(ModelParams {
            video: EncoderParams {
                w1: get("video.w1")?,
                b1: get("video.b1")?,
                w2: get("video.w2")?,
                b2: get("video.b2")?,
            },
            text: EncoderParams {
                w1: get("text.w1")?,
                b1: get("text.b1")?,
                w2: get("text.w2")?,
                b2: get("text.b2")?,
            },
            warp: get("warp.w")?,
        })
    }
}

fn uniform_fan_in(rng: &mut Rng, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let scale = 1.0 / (fan_in as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.next_symmetric(scale)).collect();
    Tensor::new(vec![rows, cols], data)
}

/// Uniform init in +-1/sqrt(fan_in) per weight matrix (never exactly zero),
/// zero biases, warp uniform in +-1/sqrt(embed+2).
///
/// Both modalities start from the same weight draw: the latent spaces are
/// matched at initialization, so raw-space correlation between paired
/// features survives into the initial embedding cosines and correspondence
/// discovery starts from an informative prior rather than from two
/// unrelated random maps. This is the desk-scale stand-in for starting from
/// pretrained encoders.
pub fn init_params(seed: u64, raw_dim: usize, hidden_dim: usize, embed_dim: usize) -> ModelParams {
    assert!(raw_dim >= 1 && hidden_dim >= 1 && embed_dim >= 1);
    let mut rng = Rng::new(rng::split(seed, rng::stream::PARAM_INIT));
    let video = EncoderParams {
        w1: uniform_fan_in(&mut rng, raw_dim, hidden_dim, raw_dim),
        b1: Tensor::zeros(vec![hidden_dim]),
        w2: uniform_fan_in(&mut rng, hidden_dim, embed_dim, hidden_dim),
        b2: Tensor::zeros(vec![embed_dim]),
    };
    let text = video.clone();
    let warp = uniform_fan_in(&mut rng, embed_dim + 2, embed_dim, embed_dim + 2);
    ModelParams { video, text, warp }
}

/// Node handles for one encoder's parameters on a tape.
#[derive(Debug, Clone, Copy)]
pub struct TapeEncoder {
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
}

/// Node handles for the full parameter set on a tape.
#[derive(Debug, Clone, Copy)]
pub struct TapeParams {
    pub video: TapeEncoder,
    pub text: TapeEncoder,
    pub warp: NodeId,
}

/// Register every parameter on the tape under its canonical name.
pub fn register_params(tape: &mut GradTape, params: &ModelParams) -> Result<TapeParams, DiffError> {
    let reg = |tape: &mut GradTape, prefix: &str, e: &EncoderParams| -> Result<TapeEncoder, DiffError> {
        Ok(TapeEncoder {
            w1: tape.param(&format!("{prefix}.w1"), e.w1.clone())?,
            b1: tape.param(&format!("{prefix}.b1"), e.b1.clone())?,
            w2: tape.param(&format!("{prefix}.w2"), e.w2.clone())?,
            b2: tape.param(&format!("{prefix}.b2"), e.b2.clone())?,
        })
    };
    Ok(TapeParams {
        video: reg(tape, "video", &params.video)?,
        text: reg(tape, "text", &params.text)?,
        warp: tape.param("warp.w", params.warp.clone())?,
    })
}

/// Row-wise encode on the tape: returns the normalized output node and the
/// degenerate-row flags.
pub fn encode_on_tape(
    tape: &mut GradTape,
    enc: &TapeEncoder,
    x: NodeId,
) -> Result<(NodeId, Vec<bool>), DiffError> {
    let h = tape.matmul(x, enc.w1)?;
    let hb = tape.add_row_bias(h, enc.b1)?;
    let r = tape.relu(hb);
    let o = tape.matmul(r, enc.w2)?;
    let ob = tape.add_row_bias(o, enc.b2)?;
    let n = tape.l2_normalize_rows(ob)?;
    let flags = tape.zero_flags(n).unwrap().to_vec();
    Ok((n, flags))
}

/// Row-wise encode without a tape (frozen-feature extraction).
pub fn encode_value(enc: &EncoderParams, x: &Tensor) -> Result<(Tensor, Vec<bool>), DiffError> {
    let h = matmul(x, &enc.w1)?;
    let (m, hd) = (h.rows(), h.cols());
    let mut hb = h.data().to_vec();
    for i in 0..m {
        for j in 0..hd {
            hb[i * hd + j] += enc.b1.data()[j];
        }
    }
    let r = relu(&Tensor::new(vec![m, hd], hb));
    let o = matmul(&r, &enc.w2)?;
    let d = o.cols();
    let mut ob = o.data().to_vec();
    for i in 0..m {
        for j in 0..d {
            ob[i * d + j] += enc.b2.data()[j];
        }
    }
    l2_normalize_rows(&Tensor::new(vec![m, d], ob), NORM_EPS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let a = init_params(7, 10, 6, 4);
        let b = init_params(7, 10, 6, 4);
        assert_eq!(a, b);
        let c = init_params(8, 10, 6, 4);
        assert_ne!(a, c);
    }

    #[test]
    fn init_has_no_zero_weights_and_respects_fan_in_bound() {
        let p = init_params(3, 12, 8, 5);
        for (name, t) in p.named() {
            if name.contains(".b") {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name} biases zero");
                continue;
            }
            let fan_in = t.rows();
            let bound = 1.0 / (fan_in as f64).sqrt();
            for &v in t.data() {
                assert!(v != 0.0, "{name} has an exactly-zero weight");
                assert!(v.abs() <= bound, "{name} exceeds fan-in bound");
            }
        }
        assert_eq!(p.warp.shape(), &[5 + 2, 5]);
    }

    #[test]
    fn zero_params_give_flagged_zero_rows() {
        let enc = EncoderParams {
            w1: Tensor::zeros(vec![6, 4]),
            b1: Tensor::zeros(vec![4]),
            w2: Tensor::zeros(vec![4, 3]),
            b2: Tensor::zeros(vec![3]),
        };
        let x = Tensor::new(vec![2, 6], vec![1.0; 12]);
        let (y, flags) = encode_value(&enc, &x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert!(flags.iter().all(|&f| f));
    }

    #[test]
    fn encoded_rows_are_unit_norm() {
        let p = init_params(11, 10, 8, 6);
        let mut rng = Rng::new(5);
        let x = Tensor::new(vec![7, 10], (0..70).map(|_| rng.next_gaussian()).collect());
        let (y, flags) = encode_value(&p.video, &x).unwrap();
        for i in 0..7 {
            if flags[i] {
                continue;
            }
            let norm: f64 = y.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9, "row {i} norm {norm}");
        }
    }

    #[test]
    fn encode_matches_per_row_loop_oracle() {
        let p = init_params(13, 9, 7, 5);
        let mut rng = Rng::new(21);
        let x = Tensor::new(vec![4, 9], (0..36).map(|_| rng.next_gaussian()).collect());
        let (y, _) = encode_value(&p.text, &x).unwrap();
        // Independent per-row oracle.
        for i in 0..4 {
            let xi = x.row(i);
            let mut hidden = vec![0.0; 7];
            for (h, hv) in hidden.iter_mut().enumerate() {
                let mut acc = p.text.b1.data()[h];
                for (j, &xv) in xi.iter().enumerate() {
                    acc += xv * p.text.w1.data()[j * 7 + h];
                }
                *hv = acc.max(0.0);
            }
            let mut out = vec![0.0; 5];
            for (o, ov) in out.iter_mut().enumerate() {
                let mut acc = p.text.b2.data()[o];
                for (h, &hv) in hidden.iter().enumerate() {
                    acc += hv * p.text.w2.data()[h * 5 + o];
                }
                *ov = acc;
            }
            let norm: f64 = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in out.iter_mut() {
                *v /= norm.max(NORM_EPS);
            }
            for (a, b) in y.row(i).iter().zip(out.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tape_encode_agrees_with_value_encode() {
        let p = init_params(19, 8, 6, 4);
        let mut rng = Rng::new(2);
        let x = Tensor::new(vec![3, 8], (0..24).map(|_| rng.next_gaussian()).collect());
        let (yv, _) = encode_value(&p.video, &x).unwrap();
        let mut tape = GradTape::new();
        let tp = register_params(&mut tape, &p).unwrap();
        let xc = tape.constant(x).unwrap();
        let (yn, _) = encode_on_tape(&mut tape, &tp.video, xc).unwrap();
        assert_eq!(tape.value(yn), &yv);
    }

    #[test]
    fn named_roundtrip() {
        let p = init_params(1, 6, 5, 4);
        let map: BTreeMap<String, Tensor> = p
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        let q = ModelParams::from_named(&map).unwrap();
        assert_eq!(p, q);
    }
}
