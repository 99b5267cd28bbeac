//! Decoding primitives for autoregressive generative models.
//!
//! The crate is `no_std` (it needs `alloc`) and contains the whole
//! probability-engineering path a next-token predictor goes through at
//! inference time:
//!
//! * [`prob`]: temperature softmax, argmax, entropy, renormalization and
//!   cross-entropy over a small token alphabet.
//! * [`sampler`]: the staged procedure softmax → sort → top-k → top-P →
//!   min-P → restore order → seeded inverse-CDF draw, with a per-stage
//!   [`SampleTrace`](sampler::SampleTrace).
//! * [`rng`]: the reproducible random stream behind every draw.
//! * [`ngram`]: a character n-gram model with additive smoothing and backoff.
//! * [`autoregress`]: the bounded-context generation loop that feeds each
//!   emitted token back into the model input.
//! * [`frame`]: a patch-token frame predictor that freezes under argmax
//!   decoding and drifts as `k` grows.
//!
//! File formats, the command-line tool and all IO live in the `declab` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autoregress;
pub mod error;
pub mod frame;
pub mod ngram;
pub mod prob;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
pub use prob::{LogitVector, ProbabilityDistribution, TargetDistribution, TokenAlphabet, TokenId};
pub use rng::RandomStream;
pub use sampler::{run_pipeline, SampleTrace, SamplerConfig};
