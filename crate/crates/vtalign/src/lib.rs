//! Desk-scale laboratory for localization-oriented video-text contrastive
//! training.
//!
//! The crate trains tiny two-layer encoders on a synthetic scripted-video
//! corpus with known clip-word ground truth, using three InfoNCE-style
//! objectives: a coarse video-sentence loss, a fine clip-word loss over
//! discovered correspondences, and a temporal loss driven by a context
//! warping head that reconstructs a clip's embedding from a neighboring
//! clip plus the signed temporal offset. Everything is deterministic given
//! a seed, and every gradient path is verifiable against central finite
//! differences.
//!
//! # Modules
//!
//! - [`diffmath`] - dense f64 tensors, the reverse-mode gradient tape, and
//!   the finite-difference checker.
//! - [`rng`] - the xorshift64* generator and stream splitting all
//!   randomness flows through.
//! - [`corpus`] - synthetic scripted videos with ground-truth clip-word
//!   alignment, plus the `LVTP` container format.
//! - [`encoders`] - per-modality two-layer encoders, the warp matrix, and
//!   the `LVCK` checkpoint format.
//! - [`objectives`] - pooling, the three contrastive losses,
//!   correspondence discovery, offset sampling, and the warp head.
//! - [`trainer`] - Adam, coarse-weight schedules, the deterministic
//!   training loop, and checkpoint resume.
//! - [`probes`] - correspondence precision, temporal linear probes,
//!   similarity distributions, and toy retrieval.
//! - [`cli`] - the `vtalign` binary surface: `gen-data`, `train`, `eval`,
//!   `ablate`, `gradcheck`.
//!
//! # Runnable examples
//!
//! One per major capability:
//!
//! ```bash
//! cargo run -p vtalign --example generate_corpus      # corpus + container round trip
//! cargo run -p vtalign --example gradient_check       # losses vs finite differences
//! cargo run -p vtalign --example train_quickstart     # short run + checkpoint resume
//! cargo run -p vtalign --example correspondence_demo  # discovery strategies vs ground truth
//! cargo run -p vtalign --example warp_similarity      # reference/bias/projection cosines
//! cargo run -p vtalign --example probes_and_retrieval # temporal probes + R@k
//! cargo run -p vtalign --example ablation_mini        # one ablation suite end to end
//! ```
//!
//! The same flows are scriptable through the thin `vtalign` binary; run
//! `vtalign` with no arguments for usage.

pub mod cli;
pub mod corpus;
pub mod diffmath;
pub mod encoders;
pub mod objectives;
pub mod probes;
pub mod rng;
pub mod trainer;
